"""Counterexample triage and the example database.

Failures are classified before anything touches the database:

    tool level      timeout, internal error, backend parse rejection
    syntax_error    the model reply never parsed into clauses
    unparsed        backend failed but emitted no usable counterexample
    unconstrained_init
                    violation driven by a nondet input nothing assumed over
    semantic        a real behavioural mismatch

Only the last two may enter the negative set. Tool-level noise is recorded by
the run log and never mutates the database; the reason: one bad backend run
polluting E- poisons every later synthesis prompt. Admissions that
clash with the opposite polarity go to the conflict log instead, keeping
E+ and E- disjoint at all times.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

from .contracts import Contract, ParseFailure
from .errors import NoResponsibleFunctionError
from .program_model import ProgramModel, mask_comments_and_strings
from .verifier import ParsedCounterexample, Status, VerificationResult

DIAGNOSTIC_EXAMPLE_LIMIT = 10

POSITIVE_SECTION = "Known-good states (E+):"
NEGATIVE_SECTION = "Known-bad states (E-):"
IMPLICATION_SECTION = "Implication pairs:"
CONFLICT_SECTION = "Conflicts:"


class Level(str, Enum):
    TOOL = "tool_level"
    SEMANTIC = "semantic_level"


class Category(str, Enum):
    SYNTAX_ERROR = "syntax_error"
    UNPARSED = "unparsed"
    TOOL_ERROR = "tool_error"
    UNCONSTRAINED_INIT = "unconstrained_init"
    SEMANTIC = "semantic"


ADMISSIBLE_CATEGORIES = (Category.UNCONSTRAINED_INIT, Category.SEMANTIC)


@dataclass(frozen=True)
class Classification:
    level: Level
    category: Category


def normalize_value(text: str) -> str:
    """Canonical value text: trailing parenthetical annotations dropped,
    integers in canonical decimal, whitespace collapsed."""
    s = text.strip()
    s = re.sub(r"\s*\([^()]*\)\s*$", "", s).strip() or s
    for base in (10, 16):
        try:
            if base == 16 and not re.match(r"[+-]?0[xX]", s):
                continue
            return str(int(s, base))
        except ValueError:
            pass
    return " ".join(s.split())


@dataclass(frozen=True)
class StateExample:
    function: str
    items: Tuple[Tuple[str, str], ...]  # sorted (name, normalized value)
    provenance: str = ""

    @staticmethod
    def make(function: str, valuation: Mapping[str, str], provenance: str = "") -> "StateExample":
        items = tuple(sorted((k, normalize_value(v)) for k, v in valuation.items()))
        return StateExample(function=function, items=items, provenance=provenance)

    @property
    def valuation(self) -> Dict[str, str]:
        return dict(self.items)

    def same_state(self, other: "StateExample") -> bool:
        return self.function == other.function and self.items == other.items

    def render(self) -> str:
        return ", ".join(f"{k}={v}" for k, v in self.items)


@dataclass(frozen=True)
class ConflictRecord:
    polarity: str  # polarity that was REFUSED: "positive" | "negative"
    candidate: StateExample
    existing: StateExample


@dataclass
class IceDatabase:
    positives: List[StateExample] = field(default_factory=list)
    negatives: List[StateExample] = field(default_factory=list)
    implications: List[Tuple[StateExample, StateExample]] = field(default_factory=list)
    conflicts: List[ConflictRecord] = field(default_factory=list)

    def _find(self, pool: List[StateExample], ex: StateExample) -> Optional[StateExample]:
        for member in pool:
            if member.same_state(ex):
                return member
        return None

    def positive_for(self, function: str) -> List[StateExample]:
        return [e for e in self.positives if e.function == function]

    def negative_for(self, function: str) -> List[StateExample]:
        return [e for e in self.negatives if e.function == function]

    def functions(self) -> List[str]:
        names = {e.function for e in self.positives} | {e.function for e in self.negatives}
        names |= {a.function for a, _ in self.implications}
        return sorted(names)

    def is_empty(self) -> bool:
        return not (self.positives or self.negatives or self.implications)


def classify(result: Union[VerificationResult, ParseFailure]) -> Classification:
    """Total over failures. Passing results are a caller bug, not a category."""
    if isinstance(result, ParseFailure):
        return Classification(Level.SEMANTIC, Category.SYNTAX_ERROR)
    if result.status in (Status.TIMEOUT, Status.TOOL_ERROR):
        return Classification(Level.TOOL, Category.TOOL_ERROR)
    if result.status is not Status.FAIL:
        raise ValueError("classify() is defined over failing results only")
    parsed = result.parsed
    if parsed is None:
        return Classification(Level.SEMANTIC, Category.UNPARSED)
    if _has_unconstrained_nondet(parsed):
        return Classification(Level.SEMANTIC, Category.UNCONSTRAINED_INIT)
    return Classification(Level.SEMANTIC, Category.SEMANTIC)


def _has_unconstrained_nondet(parsed: ParsedCounterexample) -> bool:
    relevant = {n.split("[")[0] for n, _ in parsed.key_variables}
    relevant |= set(re.findall(r"[A-Za-z_]\w*", parsed.violated_property))
    assumed_so_far: set = set()
    for step in parsed.trace:
        if step.kind == "assume":
            assumed_so_far |= set(re.findall(r"[A-Za-z_]\w*", step.note))
            continue
        for name, value in step.assignments:
            base = name.split("[")[0]
            if "nondet" in value and base in relevant and base not in assumed_so_far:
                return True
    return False


def admit(db: IceDatabase, classification: Classification, example: StateExample) -> IceDatabase:
    """Negative-side gate. Returns the same database object for chaining."""
    if classification.level is Level.TOOL:
        return db
    if classification.category not in ADMISSIBLE_CATEGORIES:
        return db
    clash = db._find(db.positives, example)
    if clash is not None:
        db.conflicts.append(ConflictRecord("negative", example, clash))
        return db
    if db._find(db.negatives, example) is None:
        db.negatives.append(example)
    return db


def record_positive(db: IceDatabase, example: StateExample) -> IceDatabase:
    clash = db._find(db.negatives, example)
    if clash is not None:
        db.conflicts.append(ConflictRecord("positive", example, clash))
        return db
    if db._find(db.positives, example) is None:
        db.positives.append(example)
    return db


def valuation_for(parsed: ParsedCounterexample, function: str) -> Dict[str, str]:
    """Final valuation of the trace restricted to one function's steps."""
    final: Dict[str, str] = {}
    for step in parsed.trace:
        if step.function != function:
            continue
        for name, value in step.assignments:
            final[name] = value
    return final


def extract_implications(
    parsed: ParsedCounterexample, function: str
) -> List[Tuple[StateExample, StateExample]]:
    """Loop-carried (pre, post) state pairs: consecutive steps of the function
    where the later one re-assigns something already bound."""
    steps = [s for s in parsed.trace if s.function == function and s.kind == "assign"]
    pairs: List[Tuple[StateExample, StateExample]] = []
    running: Dict[str, str] = {}
    prev_snapshot: Optional[Dict[str, str]] = None
    for step in steps:
        known = set(running)
        reassigns = any(name in known for name, _ in step.assignments)
        for name, value in step.assignments:
            running[name] = value
        snapshot = dict(running)
        if prev_snapshot is not None and reassigns:
            pre = StateExample.make(function, prev_snapshot, provenance="implication")
            post = StateExample.make(function, snapshot, provenance="implication")
            if not any(a.same_state(pre) and b.same_state(post) for a, b in pairs):
                pairs.append((pre, post))
        prev_snapshot = snapshot
    return pairs


def _clause_mentions(clause: str, name: str) -> bool:
    return re.search(r"\b%s\b" % re.escape(name), clause) is not None


def _contract_mentions(c: Contract, name: str) -> bool:
    for clause in list(c.requires) + list(c.ensures) + list(c.assigns):
        if _clause_mentions(clause, name):
            return True
    return any(_clause_mentions(expr, name) for _, expr in c.loop_invariants)


def weakest_link(
    parsed: ParsedCounterexample,
    contracts: Mapping[str, Contract],
    model: ProgramModel,
) -> str:
    """The contracted function most suspect for a system-level failure.

    Each key variable maps to the functions whose contracts mention it, plus
    the function that produced it at a call site (`v = f(...)`). Gap score per
    function: mapped variables over (1 + ensures clauses touching any key
    variable); the highest gap is the least-constrained responsible function.
    Ties break lexicographically so reruns pick the same target.
    """
    key_names: List[str] = []
    for name, _ in parsed.key_variables:
        base = name.split("[")[0]
        if base not in key_names:
            key_names.append(base)

    masked = mask_comments_and_strings(model.source_text)
    mapped: Dict[str, set] = {fname: set() for fname in contracts}
    for var in key_names:
        for fname, c in contracts.items():
            if _contract_mentions(c, var):
                mapped[fname].add(var)
        for m in re.finditer(r"\b%s\s*=\s*([A-Za-z_]\w*)\s*\(" % re.escape(var), masked):
            producer = m.group(1)
            if producer in contracts:
                mapped[producer].add(var)

    candidates = {f: vars_ for f, vars_ in mapped.items() if vars_}
    if not candidates:
        raise NoResponsibleFunctionError(
            "no key variable maps to any contracted function: %s" % ", ".join(key_names)
        )

    def gap(fname: str) -> float:
        relevant_ensures = sum(
            1 for clause in contracts[fname].ensures
            if any(_clause_mentions(clause, v) for v in key_names)
        )
        return len(candidates[fname]) / (1.0 + relevant_ensures)

    best = max(sorted(candidates), key=gap)  # sorted() first => lexicographic tie-break
    return best


def render_trace(parsed: ParsedCounterexample) -> str:
    lines = [f"Violated property: {parsed.violated_property}"]
    lines.append("Trace:")
    if not parsed.trace:
        lines.append("  (no steps)")
    for i, step in enumerate(parsed.trace, 1):
        where = f"{step.function or '?'} line {step.line}"
        if step.kind == "assume":
            lines.append(f"  {i}. [{where}] assume({step.note})")
        elif step.kind in ("call", "return"):
            lines.append(f"  {i}. [{where}] {step.kind} {step.note}")
        else:
            body = "; ".join(f"{n} = {v}" for n, v in step.assignments)
            lines.append(f"  {i}. [{where}] {body}")
    return "\n".join(lines)


def _render_example_pool(
    pool: Sequence[StateExample],
    limit: int = DIAGNOSTIC_EXAMPLE_LIMIT,
) -> List[str]:
    lines: List[str] = []
    by_fn: Dict[str, List[StateExample]] = {}
    for ex in pool:
        by_fn.setdefault(ex.function, []).append(ex)
    for fn in sorted(by_fn):
        examples = by_fn[fn]
        omitted = len(examples) - limit
        if omitted > 0:
            lines.append(f"  {fn}: ({omitted} earlier omitted)")
        for ex in examples[-limit:]:
            lines.append(f"  {fn}: {ex.render()}")
    if not lines:
        lines.append("  (none)")
    return lines


def render_diagnostics(
    db: IceDatabase,
    parsed: Optional[ParsedCounterexample],
    classification: Classification,
) -> str:
    """Deterministic diagnostics block for synthesis prompts: same inputs,
    same bytes. Most recent examples win when a pool overflows the cap."""
    lines = [f"Failure category: {classification.category.value}"]
    if parsed is not None:
        lines.append(render_trace(parsed))
    else:
        lines.append("Violated property: (no counterexample available)")
    lines.append(POSITIVE_SECTION)
    lines += _render_example_pool(db.positives)
    lines.append(NEGATIVE_SECTION)
    lines += _render_example_pool(db.negatives)
    lines.append(IMPLICATION_SECTION)
    if db.implications:
        for pre, post in db.implications[-DIAGNOSTIC_EXAMPLE_LIMIT:]:
            lines.append(f"  {pre.function}: {{{pre.render()}}} -> {{{post.render()}}}")
    else:
        lines.append("  (none)")
    lines.append(CONFLICT_SECTION)
    if db.conflicts:
        for rec in db.conflicts[-DIAGNOSTIC_EXAMPLE_LIMIT:]:
            lines.append(
                f"  refused {rec.polarity} for {rec.candidate.function}: {rec.candidate.render()}"
            )
    else:
        lines.append("  (none)")
    return "\n".join(lines)


def to_text(db: IceDatabase) -> str:
    """Line format: one record per line.
       + fn a=1;b=2        positive
       - fn a=0            negative
       > fn {a=0} => {a=1} implication
       ! negative fn a=1   refused admission (conflict log)
    """
    def pairs(ex: StateExample) -> str:
        return ";".join(f"{k}={v}" for k, v in ex.items)

    lines: List[str] = []
    for ex in db.positives:
        lines.append(f"+ {ex.function} {pairs(ex)}")
    for ex in db.negatives:
        lines.append(f"- {ex.function} {pairs(ex)}")
    for pre, post in db.implications:
        lines.append(f"> {pre.function} {{{pairs(pre)}}} => {{{pairs(post)}}}")
    for rec in db.conflicts:
        lines.append(f"! {rec.polarity} {rec.candidate.function} {pairs(rec.candidate)}")
    return "\n".join(lines) + ("\n" if lines else "")


def _parse_pairs(text: str) -> Dict[str, str]:
    out: Dict[str, str] = {}
    for part in text.split(";"):
        part = part.strip()
        if not part:
            continue
        name, _, value = part.partition("=")
        out[name.strip()] = value.strip()
    return out


def from_text(text: str) -> IceDatabase:
    db = IceDatabase()
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        tag, _, rest = line.partition(" ")
        if tag == "+":
            fn, _, pairs = rest.partition(" ")
            db.positives.append(StateExample.make(fn, _parse_pairs(pairs), "loaded"))
        elif tag == "-":
            fn, _, pairs = rest.partition(" ")
            db.negatives.append(StateExample.make(fn, _parse_pairs(pairs), "loaded"))
        elif tag == ">":
            fn, _, pairs = rest.partition(" ")
            m = re.match(r"\{(.*)\}\s*=>\s*\{(.*)\}", pairs)
            if m:
                db.implications.append((
                    StateExample.make(fn, _parse_pairs(m.group(1)), "loaded"),
                    StateExample.make(fn, _parse_pairs(m.group(2)), "loaded"),
                ))
        elif tag == "!":
            polarity, _, tail = rest.partition(" ")
            fn, _, pairs = tail.partition(" ")
            ex = StateExample.make(fn, _parse_pairs(pairs), "loaded")
            db.conflicts.append(ConflictRecord(polarity, ex, ex))
    return db
