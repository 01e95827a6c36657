"""Contracts and source instrumentation.

A contract is (requires, ensures, assigns) plus optional loop invariants.
Rendering injects backend annotation statements into the program text and
records every insertion, so stripping is exact by construction: remove the
recorded segments and the original bytes come back.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Sequence, Tuple

from . import cexpr
from .errors import LoopOrdinalError, QuantifierShapeError, UnknownFunctionError
from .program_model import C_KEYWORDS, FunctionInfo, ProgramModel, mask_comments_and_strings

REQUIRES_KW = "__ESBMC_requires"
ENSURES_KW = "__ESBMC_ensures"
ASSIGNS_KW = "__ESBMC_assigns"
INVARIANT_KW = "__ESBMC_loop_invariant"
RETURN_VALUE = "__ESBMC_return_value"

# identifiers a clause may always use, beyond params and globals
BUILTIN_NAMES = {
    RETURN_VALUE, "NULL", "INT_MAX", "INT_MIN", "UINT_MAX",
    "LONG_MAX", "LONG_MIN", "SIZE_MAX", "CHAR_MAX", "CHAR_MIN",
}

ILLEGAL_LITERALS = {"true", "false"}


class ContractOrigin(str, Enum):
    LLM_PRECISE = "llm_precise"
    LLM_ABSTRACTION = "llm_abstraction"
    HEURISTIC_FALLBACK = "heuristic_fallback"
    DELTA_REDUCED = "delta_reduced"
    CEGIS = "cegis"


@dataclass(frozen=True)
class Contract:
    function: str
    requires: Tuple[str, ...]
    ensures: Tuple[str, ...]
    assigns: Tuple[str, ...]
    loop_invariants: Tuple[Tuple[int, str], ...] = ()
    origin: ContractOrigin = ContractOrigin.LLM_PRECISE

    def __post_init__(self):
        object.__setattr__(self, "requires", tuple(self.requires))
        object.__setattr__(self, "ensures", tuple(self.ensures))
        object.__setattr__(self, "assigns", tuple(self.assigns))
        object.__setattr__(self, "loop_invariants", tuple(self.loop_invariants))

    def text_key(self) -> str:
        """Canonical text form, used for stagnation comparison."""
        parts = ["R:" + ";".join(self.requires), "E:" + ";".join(self.ensures),
                 "A:" + ";".join(self.assigns)]
        parts += [f"I{n}:{e}" for n, e in self.loop_invariants]
        return "|".join(parts)


class ParseFailureReason(str, Enum):
    NO_CLAUSES = "no_clauses"
    ILLEGAL_LITERAL = "illegal_literal"
    UNKNOWN_IDENTIFIER = "unknown_identifier"
    UNBALANCED = "unbalanced"
    QUANTIFIED = "quantified"


@dataclass(frozen=True)
class ParseFailure:
    """Parsing a model reply did not yield a usable contract. A value, not an
    exception: the refinement loop classifies and routes these."""
    reason: ParseFailureReason
    detail: str = ""
    raw_text: str = ""


@dataclass(frozen=True)
class Mode:
    kind: str  # "replace" | "enforce"
    function: Optional[str] = None

    @staticmethod
    def replace() -> "Mode":
        return Mode(kind="replace")

    @staticmethod
    def enforce(function: str) -> "Mode":
        return Mode(kind="enforce", function=function)


@dataclass(frozen=True)
class Injection:
    offset: int  # insertion offset into the ORIGINAL source
    text: str
    kind: str  # requires | ensures | assigns | loop_invariant
    function: str
    clause: str


@dataclass(frozen=True)
class InstrumentedSource:
    text: str
    mode: Mode
    functions: Tuple[str, ...]  # functions carrying annotations
    injections: Tuple[Injection, ...] = ()
    original_text: str = ""

    @property
    def provenance(self) -> Tuple[Tuple[str, str], ...]:
        """(annotation line, originating clause) pairs in emission order."""
        return tuple((inj.text.strip(), inj.clause) for inj in self.injections)


def strip_annotations(instr: InstrumentedSource) -> str:
    """Undo every recorded insertion; returns the original bytes."""
    text = instr.text
    # rebuild by replaying insertions against the original offsets, back to front
    pieces: List[str] = []
    cursor = 0
    shift = 0
    for inj in sorted(instr.injections, key=lambda j: j.offset):
        insert_at = inj.offset + shift
        pieces.append(text[cursor:insert_at])
        cursor = insert_at + len(inj.text)
        shift += len(inj.text)
    pieces.append(text[cursor:])
    return "".join(pieces)


def _indent_of_line(src: str, pos: int) -> str:
    line_start = src.rfind("\n", 0, pos) + 1
    m = re.match(r"[ \t]*", src[line_start:])
    return m.group(0) if m else ""


def _contract_lines(c: Contract) -> List[Tuple[str, str, str]]:
    """(line, kind, clause) triples in emission order: requires, assigns, ensures."""
    out: List[Tuple[str, str, str]] = []
    for e in c.requires:
        out.append((f"{REQUIRES_KW}({e});", "requires", e))
    for t in c.assigns:
        out.append((f"{ASSIGNS_KW}({t});", "assigns", t))
    for e in c.ensures:
        out.append((f"{ENSURES_KW}({e});", "ensures", e))
    return out


def _function_loops(model: ProgramModel, f: FunctionInfo) -> List[Tuple[int, str]]:
    """Loop keyword offsets (absolute) in textual order."""
    masked = mask_comments_and_strings(model.source_text)
    body = masked[f.body_span[0]:f.body_span[1]]
    hits: List[Tuple[int, str]] = []
    for m in re.finditer(r"\b(for|while|do)\b", body):
        kw = m.group(1)
        if kw == "while":
            k = m.start() - 1
            while k >= 0 and body[k].isspace():
                k -= 1
            if k >= 0 and body[k] == "}":
                continue
        hits.append((f.body_span[0] + m.start(), kw))
    return hits


def _loop_body_open_brace(model: ProgramModel, loop_pos: int, kw: str) -> int:
    masked = mask_comments_and_strings(model.source_text)
    if kw == "do":
        brace = loop_pos + len("do")
    else:
        open_paren = masked.find("(", loop_pos)
        if open_paren < 0:
            raise LoopOrdinalError("loop header has no parenthesis")
        depth = 0
        brace = open_paren
        for i in range(open_paren, len(masked)):
            if masked[i] == "(":
                depth += 1
            elif masked[i] == ")":
                depth -= 1
                if depth == 0:
                    brace = i + 1
                    break
    while brace < len(masked) and masked[brace].isspace():
        brace += 1
    if brace >= len(masked) or masked[brace] != "{":
        raise LoopOrdinalError("loop body is not braced; cannot lead with an invariant")
    return brace


def _apply_injections(original: str, injections: Sequence[Injection]) -> str:
    pieces: List[str] = []
    cursor = 0
    for inj in sorted(injections, key=lambda j: j.offset):
        pieces.append(original[cursor:inj.offset])
        pieces.append(inj.text)
        cursor = inj.offset
    pieces.append(original[cursor:])
    return "".join(pieces)


def _injections_for(model: ProgramModel, c: Contract) -> List[Injection]:
    f = model.function(c.function)
    if f is None:
        raise UnknownFunctionError(c.function)
    src = model.source_text
    open_brace = f.body_span[0]
    anchor_indent = _indent_of_line(src, open_brace)
    lines = _contract_lines(c)
    injections: List[Injection] = []
    if lines:
        # one Injection per annotation line, all anchored just past the brace
        offset = open_brace + 1
        for ln, kind, clause in lines:
            seg = "\n" + anchor_indent + "    " + ln
            injections.append(Injection(offset=offset, text=seg, kind=kind,
                                        function=c.function, clause=clause))
    if c.loop_invariants:
        loops = _function_loops(model, f)
        for ordinal, expr in c.loop_invariants:
            if ordinal < 0 or ordinal >= len(loops):
                raise LoopOrdinalError(
                    f"{c.function}: loop ordinal {ordinal} out of range (have {len(loops)})"
                )
            loop_pos, kw = loops[ordinal]
            brace = _loop_body_open_brace(model, loop_pos, kw)
            loop_indent = _indent_of_line(src, loop_pos)
            seg = "\n" + loop_indent + "    " + f"{INVARIANT_KW}({expr});"
            injections.append(Injection(offset=brace + 1, text=seg, kind="loop_invariant",
                                        function=c.function, clause=expr))
    return injections


def render_enforce(model: ProgramModel, c: Contract) -> InstrumentedSource:
    """Annotate exactly one function for an enforce-mode check; everything else
    stays untouched."""
    injections = _injections_for(model, c)
    text = _apply_injections(model.source_text, injections)
    return InstrumentedSource(
        text=text,
        mode=Mode.enforce(c.function),
        functions=(c.function,),
        injections=tuple(injections),
        original_text=model.source_text,
    )


def render_replace(model: ProgramModel, contracts: Iterable[Contract]) -> InstrumentedSource:
    """Annotate every contracted function for a system-level check; calls to them
    get substituted by their contract stubs, uncontracted functions stay concrete."""
    ordered = sorted(contracts, key=lambda c: c.function)
    injections: List[Injection] = []
    for c in ordered:
        injections.extend(_injections_for(model, c))
    text = _apply_injections(model.source_text, injections)
    return InstrumentedSource(
        text=text,
        mode=Mode.replace(),
        functions=tuple(c.function for c in ordered),
        injections=tuple(injections),
        original_text=model.source_text,
    )


def sanitize_assigns(targets: Sequence[str]) -> Tuple[Tuple[str, ...], Tuple[str, ...]]:
    """Drop targets the backend's assigns clause cannot take (dereferences,
    arrow paths). Returns (kept, stripped). Idempotent, order preserved."""
    kept: List[str] = []
    stripped: List[str] = []
    for t in targets:
        t = t.strip()
        if not t:
            continue
        if t.startswith("*") or "->" in t:
            stripped.append(t)
        elif t in kept:
            continue
        else:
            kept.append(t)
    return tuple(kept), tuple(stripped)


_FORALL_RE = re.compile(
    r"(?:\\forall|∀)\s*(?:[A-Za-z_]\w*\s+)*?([A-Za-z_]\w*)\s*[;,.]\s*(.*)",
    re.DOTALL,
)
# bound/body separator: ==> in the formal style, a bare colon informally
_BOUND_RE = re.compile(
    r"^\s*0\s*<=\s*(?P<var>[A-Za-z_]\w*)\s*<\s*(?P<bound>[^=].*?)\s*(?:==>|⇒|:)\s*(?P<body>.*)$"
    r"|^\s*(?P<var2>[A-Za-z_]\w*)\s*<\s*(?P<bound2>.*?)\s*(?:==>|⇒|:)\s*(?P<body2>.*)$",
    re.DOTALL,
)


@dataclass(frozen=True)
class UniversalEncoding:
    declaration: str
    assumption: str
    assertion: str
    index_name: str

    @property
    def text(self) -> str:
        return "\n".join([self.declaration, self.assumption, self.assertion])


def _fresh_index_name(taken_text: str) -> str:
    if not re.search(r"\bidx\b", taken_text):
        return "idx"
    n = 2
    while re.search(r"\bidx%d\b" % n, taken_text):
        n += 1
    return "idx%d" % n


def encode_universal_property(
    property_text: str,
    bound_var: str,
    bound_expr: str,
    index_type: str = "u32",
) -> UniversalEncoding:
    """Lower a bounded forall to the nondet-index form the backend can check:

        u32 idx;
        __ESBMC_assume(idx < len);
        if (ret == 0) assert(buf[idx] <= 0x7f);

    An outer `guard ==>` before the forall becomes the if-guard. The quantified
    variable is substituted by a fresh index name throughout the body.
    """
    text = property_text.strip()
    guard = None
    fa = _FORALL_RE.search(text)
    if fa is None:
        raise QuantifierShapeError("no \\forall quantifier found")
    head = text[:fa.start()].strip()
    if head:
        m = re.match(r"^(.*?)(?:==>|⇒)\s*$", head, re.DOTALL)
        if not m:
            raise QuantifierShapeError(f"unsupported prefix before quantifier: {head!r}")
        guard = m.group(1).strip()
    qvar = fa.group(1)
    rest = fa.group(2).strip().rstrip(";")
    if qvar != bound_var:
        raise QuantifierShapeError(
            f"quantified variable {qvar!r} does not match declared {bound_var!r}"
        )
    bm = _BOUND_RE.match(rest)
    if not bm:
        raise QuantifierShapeError(f"bound is not of the 0 <= {bound_var} < N shape: {rest!r}")
    var = bm.group("var") or bm.group("var2")
    bound = (bm.group("bound") or bm.group("bound2")).strip()
    body = (bm.group("body") or bm.group("body2")).strip()
    if var != bound_var:
        raise QuantifierShapeError(f"bound constrains {var!r}, not {bound_var!r}")
    if bound != bound_expr.strip():
        raise QuantifierShapeError(
            f"declared bound {bound_expr!r} does not match property bound {bound!r}"
        )
    idx = _fresh_index_name(property_text + " " + (guard or ""))
    body_idx = re.sub(r"\b%s\b" % re.escape(bound_var), idx, body)
    assertion = f"assert({body_idx});"
    if guard:
        assertion = f"if ({guard}) " + assertion
    return UniversalEncoding(
        declaration=f"{index_type} {idx};",
        assumption=f"__ESBMC_assume({idx} < {bound_expr.strip()});",
        assertion=assertion,
        index_name=idx,
    )


_ANNOT_RE = re.compile(
    r"\b(__ESBMC_requires|__ESBMC_ensures|__ESBMC_assigns|__ESBMC_loop_invariant)\s*\(",
)
_FENCE_RE = re.compile(r"```[^\n]*\n(.*?)```", re.DOTALL)
_QUANT_RE = re.compile(r"\\forall|\\exists|∀|∃")


def _balanced_argument(text: str, open_paren: int) -> Optional[str]:
    depth = 0
    for i in range(open_paren, len(text)):
        c = text[i]
        if c == "(":
            depth += 1
        elif c == ")":
            depth -= 1
            if depth == 0:
                return text[open_paren + 1:i]
    return None


def _validate_clause(
    expr: str,
    allowed: set,
    kind: str,
) -> Optional[ParseFailure]:
    expr = expr.strip()
    if not expr:
        return ParseFailure(ParseFailureReason.NO_CLAUSES, f"empty {kind} clause")
    # quantifier check first: ACSL-style binders carry ';' and would
    # otherwise misreport as unbalanced
    if _QUANT_RE.search(expr):
        return ParseFailure(ParseFailureReason.QUANTIFIED, expr)
    if expr.count("(") != expr.count(")") or expr.count("[") != expr.count("]"):
        return ParseFailure(ParseFailureReason.UNBALANCED, expr)
    if ";" in expr:
        return ParseFailure(ParseFailureReason.UNBALANCED, f"statement in {kind}: {expr}")
    for name in cexpr.identifiers(expr):
        if name in ILLEGAL_LITERALS:
            return ParseFailure(
                ParseFailureReason.ILLEGAL_LITERAL,
                f"boolean literal {name!r} in {kind}: {expr}",
            )
        if name in C_KEYWORDS or name in BUILTIN_NAMES:
            continue
        if name not in allowed:
            return ParseFailure(
                ParseFailureReason.UNKNOWN_IDENTIFIER,
                f"{name!r} in {kind}: {expr}",
            )
    return None


def parse_contract_text(
    raw: str,
    f: FunctionInfo,
    known_globals: Iterable[str] = (),
):
    """Extract a Contract from a model reply (fenced code or bare annotation
    lines). Returns Contract or ParseFailure; never raises on bad replies.

    requires/ensures/assigns may reference parameters, globals, and the return
    value placeholder; loop invariants may additionally use body locals. The
    literals true/false are rejected outright: the backend has no stdbool in
    scope and a bare `true` produces a silently wrong check.
    """
    fences = _FENCE_RE.findall(raw)
    search_space = "\n".join(fences) if fences else raw

    base_allowed = {p.name for p in f.params} | set(known_globals)
    body_idents = set(cexpr.identifiers(f.body_text))
    inv_allowed = base_allowed | body_idents

    requires: List[str] = []
    ensures: List[str] = []
    assigns: List[str] = []
    invariants: List[str] = []
    for m in _ANNOT_RE.finditer(search_space):
        arg = _balanced_argument(search_space, m.end() - 1)
        if arg is None:
            return ParseFailure(ParseFailureReason.UNBALANCED, m.group(1), raw_text=raw)
        arg = " ".join(arg.split())
        kw = m.group(1)
        if kw == REQUIRES_KW:
            requires.append(arg)
        elif kw == ENSURES_KW:
            ensures.append(arg)
        elif kw == ASSIGNS_KW:
            assigns.append(arg)
        else:
            invariants.append(arg)

    if not (requires or ensures or assigns or invariants):
        return ParseFailure(ParseFailureReason.NO_CLAUSES, "no annotation clauses found",
                            raw_text=raw)

    for expr in requires:
        bad = _validate_clause(expr, base_allowed, "requires")
        if bad:
            return ParseFailure(bad.reason, bad.detail, raw_text=raw)
    for expr in ensures:
        bad = _validate_clause(expr, base_allowed, "ensures")
        if bad:
            return ParseFailure(bad.reason, bad.detail, raw_text=raw)
    for expr in invariants:
        bad = _validate_clause(expr, inv_allowed, "loop invariant")
        if bad:
            return ParseFailure(bad.reason, bad.detail, raw_text=raw)
    for t in assigns:
        t = t.strip()
        if not t:
            return ParseFailure(ParseFailureReason.NO_CLAUSES, "empty assigns target",
                                raw_text=raw)

    return Contract(
        function=f.name,
        requires=tuple(requires),
        ensures=tuple(ensures),
        assigns=tuple(assigns),
        loop_invariants=tuple(enumerate(invariants)),
    )
