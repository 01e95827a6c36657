"""Lexical model of a C translation unit.

No real C grammar here, deliberately: a masked-text scan (comments and string
bodies blanked, offsets preserved) is enough to find top-level function
definitions, the single system assertion in main, and the complexity signals
the tier split needs. Anything deeper belongs to the backend.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import networkx as nx

from .errors import (
    MultiplePropertiesError,
    NoMainError,
    NoPropertyError,
    UnbalancedSourceError,
    WeightTableError,
)

C_KEYWORDS = {
    "if", "else", "for", "while", "do", "switch", "case", "default", "return",
    "break", "continue", "goto", "sizeof", "typedef", "struct", "union",
    "enum", "static", "extern", "const", "volatile", "inline", "register",
    "void", "int", "char", "long", "short", "float", "double", "signed",
    "unsigned", "_Bool",
}

TYPE_KEYWORDS = {
    "void", "int", "char", "long", "short", "float", "double", "signed",
    "unsigned", "_Bool", "const", "volatile", "struct", "union", "enum",
    "size_t", "ssize_t", "ptrdiff_t", "intptr_t", "uintptr_t",
    "int8_t", "int16_t", "int32_t", "int64_t",
    "uint8_t", "uint16_t", "uint32_t", "uint64_t",
    "u8", "u16", "u32", "u64", "i8", "i16", "i32", "i64", "bool",
}

ALLOC_FUNCTIONS = {"malloc", "calloc", "realloc", "aligned_alloc", "alloca"}

_WORD_RE = re.compile(r"[A-Za-z_]\w*")
_ASSERT_RE = re.compile(r"\b(__ESBMC_assert|assert)\s*\(")
_FUNC_HEAD_RE = re.compile(r"\b([A-Za-z_]\w*)\s*\(")


class Tier(str, Enum):
    MINIMAL = "minimal"
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class PropertyKind(str, Enum):
    ASSERT_CALL = "assert_call"
    ESBMC_ASSERT = "esbmc_assert"


@dataclass(frozen=True)
class WeightTable:
    loop: float = 5.0
    nesting: float = 1.0
    recursion: float = 20.0
    unbounded: float = 20.0
    alloc: float = 3.0
    branch: float = 0.5
    pointer: float = 0.5


DEFAULT_WEIGHTS = WeightTable()

# tier boundaries are half-open: score < 5 minimal, [5, 10) low,
# [10, 20) medium, >= 20 high
TIER_LOW = 5.0
TIER_MEDIUM = 10.0
TIER_HIGH = 20.0


@dataclass(frozen=True)
class ComplexityMetrics:
    loop_count: int
    max_nesting_depth: int
    has_recursion: bool
    has_unbounded_loop: bool
    dynamic_alloc_count: int
    branch_count: int
    pointer_op_count: int
    score: float
    tier: Tier


@dataclass(frozen=True)
class Param:
    name: str
    type_text: str


@dataclass(frozen=True)
class FunctionInfo:
    name: str
    signature_text: str
    body_span: Tuple[int, int]  # [start, end) of the braced block, inclusive of braces
    body_text: str
    params: Tuple[Param, ...]
    calls: Tuple[str, ...]
    is_static: bool
    is_recursive: bool
    metrics: ComplexityMetrics


@dataclass(frozen=True)
class SystemProperty:
    assertion_text: str
    location: int  # byte offset of the assert keyword, relative to main_span start
    kind: PropertyKind


@dataclass(frozen=True)
class ProgramModel:
    source_text: str
    functions: Tuple[FunctionInfo, ...]
    main_span: Tuple[int, int]
    property: SystemProperty
    global_names: Tuple[str, ...] = ()

    def function(self, name: str) -> Optional[FunctionInfo]:
        for f in self.functions:
            if f.name == name:
                return f
        return None


def mask_comments_and_strings(src: str) -> str:
    """Blank comments and string/char literal bodies, preserving length and newlines."""
    out = list(src)
    i = 0
    n = len(src)
    while i < n:
        ch = src[i]
        nxt = src[i + 1] if i + 1 < n else ""
        if ch == "/" and nxt == "/":
            while i < n and src[i] != "\n":
                out[i] = " "
                i += 1
        elif ch == "/" and nxt == "*":
            out[i] = out[i + 1] = " "
            i += 2
            while i < n and not (src[i] == "*" and i + 1 < n and src[i + 1] == "/"):
                if src[i] != "\n":
                    out[i] = " "
                i += 1
            if i + 1 < n:
                out[i] = out[i + 1] = " "
                i += 2
        elif ch in "\"'":
            quote = ch
            i += 1
            while i < n and src[i] != quote:
                if src[i] == "\\" and i + 1 < n:
                    out[i] = out[i + 1] = " "
                    i += 2
                    continue
                if src[i] != "\n":
                    out[i] = " "
                i += 1
            i += 1
        else:
            i += 1
    return "".join(out)


def _match_brace(masked: str, open_pos: int) -> int:
    """Index just past the brace matching masked[open_pos] == '{'."""
    depth = 0
    for i in range(open_pos, len(masked)):
        c = masked[i]
        if c == "{":
            depth += 1
        elif c == "}":
            depth -= 1
            if depth == 0:
                return i + 1
    raise UnbalancedSourceError("unmatched '{' at offset %d" % open_pos)


def _match_paren(masked: str, open_pos: int) -> int:
    depth = 0
    for i in range(open_pos, len(masked)):
        c = masked[i]
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                return i + 1
    raise UnbalancedSourceError("unmatched '(' at offset %d" % open_pos)


def _parse_params(param_text: str) -> Tuple[Param, ...]:
    inner = param_text.strip()
    if inner in ("", "void"):
        return ()
    parts: List[str] = []
    depth = 0
    start = 0
    for i, c in enumerate(inner):
        if c in "([":
            depth += 1
        elif c in ")]":
            depth -= 1
        elif c == "," and depth == 0:
            parts.append(inner[start:i])
            start = i + 1
    parts.append(inner[start:])
    params: List[Param] = []
    for part in parts:
        words = _WORD_RE.findall(part)
        names = [w for w in words if w not in TYPE_KEYWORDS and w not in C_KEYWORDS]
        if not names:
            continue  # unnamed parameter in a prototype-style definition
        params.append(Param(name=names[-1], type_text=part.strip()))
    return tuple(params)


@dataclass(frozen=True)
class _RawFunction:
    name: str
    signature_text: str
    sig_start: int
    body_span: Tuple[int, int]
    params: Tuple[Param, ...]
    is_static: bool


def _scan_functions(src: str, masked: str) -> List[_RawFunction]:
    raws: List[_RawFunction] = []
    depth = 0
    i = 0
    n = len(masked)
    last_boundary = 0  # start of the current top-level chunk
    while i < n:
        c = masked[i]
        if c == "{":
            depth += 1
            i += 1
            continue
        if c == "}":
            depth -= 1
            if depth < 0:
                raise UnbalancedSourceError("unmatched '}' at offset %d" % i)
            if depth == 0:
                last_boundary = i + 1
            i += 1
            continue
        if depth == 0:
            if c == ";":
                last_boundary = i + 1
                i += 1
                continue
            if c == "#":  # preprocessor line
                while i < n and masked[i] != "\n":
                    i += 1
                last_boundary = i + 1
                i += 1
                continue
            m = _FUNC_HEAD_RE.match(masked, i)
            if m and m.group(1) not in C_KEYWORDS:
                close = _match_paren(masked, m.end() - 1)
                j = close
                while j < n and masked[j].isspace():
                    j += 1
                if j < n and masked[j] == "{":
                    sig_start = last_boundary
                    while sig_start < i and masked[sig_start].isspace():
                        sig_start += 1
                    body_end = _match_brace(masked, j)
                    sig_text = " ".join(src[sig_start:close].split())
                    head_words = _WORD_RE.findall(masked[sig_start:i + len(m.group(1))])
                    raws.append(_RawFunction(
                        name=m.group(1),
                        signature_text=sig_text,
                        sig_start=sig_start,
                        body_span=(j, body_end),
                        params=_parse_params(src[m.end():close - 1]),
                        is_static="static" in head_words,
                    ))
                    i = body_end
                    depth = 0
                    last_boundary = body_end
                    continue
            i = m.end() if m else i + 1
            continue
        i += 1
    if depth != 0:
        raise UnbalancedSourceError("source has %d unclosed brace(s)" % depth)
    return raws


def _scan_globals(masked: str, src: str, raws: Sequence[_RawFunction]) -> Tuple[str, ...]:
    """Names declared at file scope outside any function definition."""
    spans = [(r.sig_start, r.body_span[1]) for r in raws]

    def inside_function(pos: int) -> bool:
        return any(a <= pos < b for a, b in spans)

    names: List[str] = []
    for m in re.finditer(r"[^;{}#\n][^;{}#]*;", masked):
        seg_start, seg = m.start(), m.group(0)
        if inside_function(seg_start):
            continue
        if "(" in seg:  # prototype or call, not a variable
            continue
        words = _WORD_RE.findall(seg)
        if not words or words[0] in ("typedef", "return", "goto", "break", "continue"):
            continue
        if not any(w in TYPE_KEYWORDS for w in words):
            continue
        head = seg.split("=", 1)[0]
        cand = [w for w in _WORD_RE.findall(head) if w not in TYPE_KEYWORDS and w not in C_KEYWORDS]
        if cand and cand[-1] not in names:
            names.append(cand[-1])
    return tuple(names)


def _loop_keyword_positions(masked_body: str) -> List[Tuple[int, str]]:
    """(offset, keyword) for each loop keyword; do-while tails excluded."""
    hits: List[Tuple[int, str]] = []
    for m in re.finditer(r"\b(for|while|do)\b", masked_body):
        kw = m.group(1)
        if kw == "while" and _is_do_while_tail(masked_body, m.start(), m.end()):
            continue
        hits.append((m.start(), kw))
    return hits


def _is_do_while_tail(masked_body: str, start: int, end: int) -> bool:
    """`} while (cond);` closes a do-while; a new while loop can also open
    right after a block, so the deciding mark is the semicolon after the
    condition, not the brace before the keyword."""
    k = start - 1
    while k >= 0 and masked_body[k].isspace():
        k -= 1
    if k < 0 or masked_body[k] != "}":
        return False
    open_paren = masked_body.find("(", end)
    if open_paren < 0:
        return True
    close = _match_paren(masked_body, open_paren)
    j = close
    while j < len(masked_body) and masked_body[j].isspace():
        j += 1
    return j < len(masked_body) and masked_body[j] == ";"


def _loop_condition(masked_body: str, pos: int, kw: str) -> str:
    """Raw condition text of the loop starting at pos (empty for do, for(;;))."""
    if kw == "do":
        return "1"  # treated as bounded only if the trailing while references a counter;
        # the trailing while is scanned as part of the body text below
    open_paren = masked_body.find("(", pos)
    if open_paren < 0:
        return ""
    close = _match_paren(masked_body, open_paren)
    inner = masked_body[open_paren + 1:close - 1]
    if kw == "for":
        parts = inner.split(";")
        return parts[1].strip() if len(parts) >= 2 else ""
    return inner.strip()


_MUTATION_RE = re.compile(
    r"([A-Za-z_]\w*)\s*(\+\+|--|=[^=]|\+=|-=|\*=|/=|%=|&=|\|=|\^=|<<=|>>=)"
)
_PREFIX_MUT_RE = re.compile(r"(\+\+|--)\s*([A-Za-z_]\w*)")


def _mutated_names(masked_body: str) -> set:
    names = {m.group(1) for m in _MUTATION_RE.finditer(masked_body)}
    names |= {m.group(2) for m in _PREFIX_MUT_RE.finditer(masked_body)}
    return names


def _loop_is_unbounded(masked_body: str, pos: int, kw: str) -> bool:
    cond = _loop_condition(masked_body, pos, kw)
    if kw == "do":
        # pair the do with its trailing while condition if one is in the body slice
        m = re.search(r"\}\s*while\s*\(", masked_body[pos:])
        if m:
            open_paren = pos + m.end() - 1
            cond = masked_body[open_paren + 1:_match_paren(masked_body, open_paren) - 1]
        else:
            cond = "1"
    cond = cond.strip()
    if cond == "":
        return True  # for (;;)
    if re.fullmatch(r"\(*\s*(1|true)\s*\)*", cond):
        return True
    cond_vars = [w for w in _WORD_RE.findall(cond) if w not in C_KEYWORDS]
    if not cond_vars:
        return True  # constant condition
    # bounded iff the condition mentions something the loop itself changes
    open_paren = masked_body.find("(", pos) if kw != "do" else -1
    scan_from = _match_paren(masked_body, open_paren) if open_paren >= 0 else pos
    brace = masked_body.find("{", scan_from)
    if brace >= 0:
        loop_slice = masked_body[pos:_match_brace(masked_body, brace)]
    else:
        semi = masked_body.find(";", scan_from)
        loop_slice = masked_body[pos:semi + 1 if semi >= 0 else len(masked_body)]
    mutated = _mutated_names(loop_slice)
    return not any(v in mutated for v in cond_vars)


def _max_loop_nesting(masked_body: str, loop_positions: Sequence[Tuple[int, str]]) -> int:
    """Depth of the deepest loop keyword, counting enclosing loop bodies."""
    if not loop_positions:
        return 0
    loop_body_spans: List[Tuple[int, int]] = []
    for pos, kw in loop_positions:
        if kw == "do":
            brace = masked_body.find("{", pos)
        else:
            open_paren = masked_body.find("(", pos)
            if open_paren < 0:
                continue
            after = _match_paren(masked_body, open_paren)
            brace = after
            while brace < len(masked_body) and masked_body[brace].isspace():
                brace += 1
            if brace >= len(masked_body) or masked_body[brace] != "{":
                continue  # braceless body: cannot nest further, depth handled below
        if brace >= 0 and brace < len(masked_body) and masked_body[brace] == "{":
            loop_body_spans.append((brace, _match_brace(masked_body, brace)))
    best = 1
    for pos, _ in loop_positions:
        depth = 1 + sum(1 for a, b in loop_body_spans if a < pos < b)
        best = max(best, depth)
    return best


def _pointer_op_count(masked_body: str) -> int:
    tokens: List[Tuple[str, int]] = []
    for m in re.finditer(r"->|\+\+|--|&&|\|\||<<|>>|[A-Za-z_]\w*|\d[\w.]*|[^\s]", masked_body):
        tokens.append((m.group(0), m.start()))
    count = 0
    for idx, (tok, _) in enumerate(tokens):
        if tok == "->":
            count += 1
            continue
        if tok not in ("*", "&"):
            continue
        prev = tokens[idx - 1][0] if idx > 0 else None
        if prev is not None and (_WORD_RE.fullmatch(prev) or prev[0].isdigit() or prev in (")", "]")):
            if prev in TYPE_KEYWORDS:
                continue  # declarator star: int *p
            continue  # binary context: multiplication / bitwise and
        if prev in TYPE_KEYWORDS:
            continue
        count += 1
    return count


def analyze_body(masked_body: str) -> Dict[str, int]:
    loops = _loop_keyword_positions(masked_body)
    unbounded = any(_loop_is_unbounded(masked_body, pos, kw) for pos, kw in loops)
    allocs = sum(
        1 for m in re.finditer(r"\b([A-Za-z_]\w*)\s*\(", masked_body)
        if m.group(1) in ALLOC_FUNCTIONS
    )
    branches = len(re.findall(r"\bif\b", masked_body))
    branches += len(re.findall(r"\bcase\b", masked_body))
    branches += masked_body.count("?")
    return {
        "loop_count": len(loops),
        "max_nesting_depth": _max_loop_nesting(masked_body, loops),
        "has_unbounded_loop": int(unbounded),
        "dynamic_alloc_count": allocs,
        "branch_count": branches,
        "pointer_op_count": _pointer_op_count(masked_body),
    }


def compute_score(counts: Dict[str, int], has_recursion: bool, weights: WeightTable) -> float:
    return (
        weights.loop * counts["loop_count"]
        + weights.nesting * counts["max_nesting_depth"]
        + weights.recursion * (1 if has_recursion else 0)
        + weights.unbounded * (1 if counts["has_unbounded_loop"] else 0)
        + weights.alloc * counts["dynamic_alloc_count"]
        + weights.branch * counts["branch_count"]
        + weights.pointer * counts["pointer_op_count"]
    )


def tier_for(score: float) -> Tier:
    if score < TIER_LOW:
        return Tier.MINIMAL
    if score < TIER_MEDIUM:
        return Tier.LOW
    if score < TIER_HIGH:
        return Tier.MEDIUM
    return Tier.HIGH


def score_complexity(f: FunctionInfo, weights: WeightTable = DEFAULT_WEIGHTS) -> ComplexityMetrics:
    """Re-score f's raw counts under a different weight table."""
    m = f.metrics
    counts = {
        "loop_count": m.loop_count,
        "max_nesting_depth": m.max_nesting_depth,
        "has_unbounded_loop": int(m.has_unbounded_loop),
        "dynamic_alloc_count": m.dynamic_alloc_count,
        "branch_count": m.branch_count,
        "pointer_op_count": m.pointer_op_count,
    }
    score = compute_score(counts, m.has_recursion, weights)
    return replace(m, score=score, tier=tier_for(score))


def _extract_property(masked_main: str, src_main: str) -> SystemProperty:
    hits = list(_ASSERT_RE.finditer(masked_main))
    if not hits:
        raise NoPropertyError("main() asserts nothing")
    if len(hits) > 1:
        raise MultiplePropertiesError("main() asserts %d properties, want exactly 1" % len(hits))
    m = hits[0]
    open_paren = m.end() - 1
    close = _match_paren(masked_main, open_paren)
    inner_masked = masked_main[open_paren + 1:close - 1]
    inner_src = src_main[open_paren + 1:close - 1]
    kind = PropertyKind.ESBMC_ASSERT if m.group(1) == "__ESBMC_assert" else PropertyKind.ASSERT_CALL
    if kind is PropertyKind.ESBMC_ASSERT:
        # first top-level argument only; the second is a message string
        depth = 0
        cut = len(inner_masked)
        for i, c in enumerate(inner_masked):
            if c in "([":
                depth += 1
            elif c in ")]":
                depth -= 1
            elif c == "," and depth == 0:
                cut = i
                break
        inner_src = inner_src[:cut]
    return SystemProperty(
        assertion_text=inner_src.strip(),
        location=m.start(),
        kind=kind,
    )


def parse_program(source_text: str, weights: WeightTable = DEFAULT_WEIGHTS) -> ProgramModel:
    """Build the model. Raises on missing main, zero or multiple assertions,
    and brace imbalance."""
    masked = mask_comments_and_strings(source_text)
    raws = _scan_functions(source_text, masked)

    main_raw = next((r for r in raws if r.name == "main"), None)
    if main_raw is None:
        raise NoMainError("no main() definition found")

    global_names = _scan_globals(masked, source_text, raws)

    call_names: Dict[str, set] = {}
    defined = {r.name for r in raws}
    for r in raws:
        body_masked = masked[r.body_span[0]:r.body_span[1]]
        calls = {
            m.group(1)
            for m in re.finditer(r"\b([A-Za-z_]\w*)\s*\(", body_masked)
            if m.group(1) not in C_KEYWORDS
        }
        call_names[r.name] = calls & defined

    graph = nx.DiGraph()
    graph.add_nodes_from(defined)
    for caller, callees in call_names.items():
        for callee in callees:
            graph.add_edge(caller, callee)
    recursive = set()
    for scc in nx.strongly_connected_components(graph):
        if len(scc) > 1:
            recursive |= scc
    recursive |= {n for n in defined if graph.has_edge(n, n)}

    functions: List[FunctionInfo] = []
    for r in raws:
        if r.name == "main":
            continue
        body_masked = masked[r.body_span[0]:r.body_span[1]]
        counts = analyze_body(body_masked)
        is_rec = r.name in recursive
        score = compute_score(counts, is_rec, weights)
        metrics = ComplexityMetrics(
            loop_count=counts["loop_count"],
            max_nesting_depth=counts["max_nesting_depth"],
            has_recursion=is_rec,
            has_unbounded_loop=bool(counts["has_unbounded_loop"]),
            dynamic_alloc_count=counts["dynamic_alloc_count"],
            branch_count=counts["branch_count"],
            pointer_op_count=counts["pointer_op_count"],
            score=score,
            tier=tier_for(score),
        )
        functions.append(FunctionInfo(
            name=r.name,
            signature_text=r.signature_text,
            body_span=r.body_span,
            body_text=source_text[r.body_span[0]:r.body_span[1]],
            params=r.params,
            calls=tuple(sorted(call_names[r.name])),
            is_static=r.is_static,
            is_recursive=is_rec,
            metrics=metrics,
        ))

    prop = _extract_property(
        masked[main_raw.body_span[0]:main_raw.body_span[1]],
        source_text[main_raw.body_span[0]:main_raw.body_span[1]],
    )

    return ProgramModel(
        source_text=source_text,
        functions=tuple(functions),
        main_span=main_raw.body_span,
        property=prop,
        global_names=global_names,
    )


def partition_functions(
    model: ProgramModel, tau: float = 10.0
) -> Tuple[Tuple[FunctionInfo, ...], Tuple[FunctionInfo, ...]]:
    """(low, high) split on the complexity threshold; score < tau is low."""
    low = tuple(f for f in model.functions if f.metrics.score < tau)
    high = tuple(f for f in model.functions if f.metrics.score >= tau)
    return low, high


_WEIGHT_KEYS = set(WeightTable.__dataclass_fields__)


def load_weight_table(path: str) -> WeightTable:
    """Parse a weights file: one `name = value` per line, '#' comments."""
    values: Dict[str, float] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, val = line.partition("=")
            else:
                key, _, val = line.partition(" ")
            key = key.strip()
            if key not in _WEIGHT_KEYS:
                raise WeightTableError(f"{path}:{lineno}: unknown weight {key!r}")
            try:
                values[key] = float(val.strip())
            except ValueError:
                raise WeightTableError(
                    f"{path}:{lineno}: weight {key!r} needs a number, got {val.strip()!r}"
                ) from None
    return WeightTable(**values)
