"""The refinement pipeline.

Top-down flow: synthesize a contract per function, check the system with
calls replaced by contract stubs, check every implementation against its own
contract, and refine on failure. Function-level failures weaken that contract;
system-level failures strengthen the weakest responsible one. Two identical
iterations in a row count as stagnation, which triggers ensures-clause
reduction and an escalation to example-guided synthesis.

The verdict is `verified` only when one single contract set passes the system
check and every function's own check at once. `falsified` needs a system
counterexample against fully concrete code (no stubs left to blame).
Everything else, including budget exhaustion, is `inconclusive`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple, Union

from .contracts import (
    Contract,
    ContractOrigin,
    ParseFailure,
    render_enforce,
    render_replace,
    sanitize_assigns,
)
from .errors import (
    ClientUnavailableError,
    DeadlineExceededError,
    IrreducibleFailureError,
    NoResponsibleFunctionError,
)
from .ice import (
    Classification,
    IceDatabase,
    Level,
    StateExample,
    admit,
    classify,
    extract_implications,
    record_positive,
    render_diagnostics,
    render_trace,
    valuation_for,
    weakest_link,
)
from .program_model import FunctionInfo, ProgramModel, partition_functions
from .runlog import RunLog
from .synthesis import (
    LlmClient,
    SynthesisIntent,
    SynthesisRequest,
    cegis_synthesize,
    overapproximate,
    synthesize,
)
from .verifier import Status, VerificationResult

STAGNATION_WINDOW = 2


class Strategy(str, Enum):
    SMART_ICE = "smart-ice"
    NO_ICE = "no-ice"
    PRE_ABSTRACTION = "pre-abstraction"


class VerdictOutcome(str, Enum):
    VERIFIED = "verified"
    FALSIFIED = "falsified"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class PipelineConfig:
    k_cegar: int = 5
    k_cegis: int = 5
    total_budget: int = 10
    tau: float = 10.0
    strategy: Strategy = Strategy.SMART_ICE
    timeout_s: float = 600.0  # wall budget for the whole program
    workers: int = 1  # concurrency for phase-1b synthesis
    retries: int = 2


@dataclass(frozen=True)
class Verdict:
    outcome: VerdictOutcome
    stage: str
    iterations_used: int
    contracts: Tuple[Tuple[str, Contract], ...]
    per_function_status: Tuple[Tuple[str, str], ...]
    system_status: Optional[str] = None
    falsified_property: Optional[str] = None

    def contract_map(self) -> Dict[str, Contract]:
        return dict(self.contracts)

    def status_map(self) -> Dict[str, str]:
        return dict(self.per_function_status)

    def to_dict(self) -> Dict:
        return {
            "outcome": self.outcome.value,
            "stage": self.stage,
            "iterations_used": self.iterations_used,
            "system_status": self.system_status,
            "falsified_property": self.falsified_property,
            "per_function_status": dict(self.per_function_status),
            "contracts": {
                name: {
                    "requires": list(c.requires),
                    "ensures": list(c.ensures),
                    "assigns": list(c.assigns),
                    "loop_invariants": [[n, e] for n, e in c.loop_invariants],
                    "origin": c.origin.value,
                }
                for name, c in self.contracts
            },
        }


class _Ctx:
    def __init__(self, model: ProgramModel, cfg: PipelineConfig, client: LlmClient,
                 verifier, log: RunLog):
        self.model = model
        self.cfg = cfg
        self.client = client
        self.verifier = verifier
        self.log = log
        self.db = IceDatabase()
        self.deadline = time.monotonic() + cfg.timeout_s
        self.stage = "initial"
        self.iterations = 0
        # last counterexample valuation seen per function, for positive snapshots
        self.last_valuation: Dict[str, Dict[str, str]] = {}
        self.last_parsed: Dict[str, object] = {}
        self.last_cls: Dict[str, Classification] = {}
        self.contracts: Dict[str, Contract] = {}
        self.fn_results: Dict[str, Optional[VerificationResult]] = {}
        self.sys_result: Optional[VerificationResult] = None

    @property
    def targets(self) -> List[FunctionInfo]:
        # static functions cannot be checked in isolation; they stay concrete
        return [f for f in self.model.functions if not f.is_static]

    def remaining(self) -> float:
        return self.deadline - time.monotonic()

    def check_deadline(self) -> None:
        if self.remaining() <= 0:
            raise _deadline_error(self)

    def set_stage(self, stage: str) -> None:
        self.stage = stage
        self.log.event("phase", stage=stage)


def _deadline_error(ctx: _Ctx) -> DeadlineExceededError:
    exc = DeadlineExceededError(f"wall budget spent at stage {ctx.stage}")
    exc.partial = _verdict(ctx, VerdictOutcome.INCONCLUSIVE)
    return exc


def _verdict(ctx: _Ctx, outcome: VerdictOutcome,
             falsified_property: Optional[str] = None) -> Verdict:
    statuses: List[Tuple[str, str]] = []
    for f in ctx.targets:
        r = ctx.fn_results.get(f.name)
        if f.name not in ctx.contracts:
            statuses.append((f.name, "no_contract"))
        elif r is None:
            statuses.append((f.name, "unchecked"))
        else:
            statuses.append((f.name, r.status.value))
    return Verdict(
        outcome=outcome,
        stage=ctx.stage,
        iterations_used=ctx.iterations,
        contracts=tuple(sorted(ctx.contracts.items())),
        per_function_status=tuple(statuses),
        system_status=ctx.sys_result.status.value if ctx.sys_result else None,
        falsified_property=falsified_property,
    )


def _sanitized(ctx: _Ctx, c: Contract) -> Contract:
    kept, stripped = sanitize_assigns(c.assigns)
    if stripped:
        ctx.log.event("assigns_stripped", function=c.function, stripped=list(stripped))
    return replace(c, assigns=kept) if stripped else c


def _request(ctx: _Ctx, f: FunctionInfo, intent: SynthesisIntent,
             current: Optional[Contract], diagnostics: str) -> SynthesisRequest:
    return SynthesisRequest(
        function=f,
        property_text=ctx.model.property.assertion_text,
        intent=intent,
        current_contract=current,
        diagnostics=diagnostics,
        known_globals=ctx.model.global_names,
    )


def _diagnostics_for(ctx: _Ctx, fname: str) -> str:
    parsed = ctx.last_parsed.get(fname)
    cls = ctx.last_cls.get(fname)
    if ctx.cfg.strategy is Strategy.SMART_ICE and cls is not None:
        return render_diagnostics(ctx.db, parsed, cls)
    if parsed is not None:
        return render_trace(parsed)
    return ""


def _synth(ctx: _Ctx, f: FunctionInfo, intent: SynthesisIntent,
           current: Optional[Contract] = None,
           diagnostics: str = "") -> Union[Contract, ParseFailure]:
    req = _request(ctx, f, intent, current, diagnostics)
    result = synthesize(req, ctx.client, retries=ctx.cfg.retries, log=ctx.log)
    if isinstance(result, Contract):
        return _sanitized(ctx, result)
    return result


def _absorb_parse_failure(ctx: _Ctx, fname: str, failure: ParseFailure) -> None:
    cls = classify(failure)
    ctx.last_cls[fname] = cls
    ctx.log.event("classification", function=fname,
                  level=cls.level.value, category=cls.category.value)


def _db_sizes(db: IceDatabase) -> Dict[str, int]:
    return {
        "positives": len(db.positives),
        "negatives": len(db.negatives),
        "implications": len(db.implications),
        "conflicts": len(db.conflicts),
    }


def _admit_negative(ctx: _Ctx, fname: str, valuation: Dict[str, str],
                    cls: Classification, provenance: str) -> None:
    if not valuation or ctx.cfg.strategy is not Strategy.SMART_ICE:
        return
    ex = StateExample.make(fname, valuation, provenance=provenance)
    before = _db_sizes(ctx.db)
    admit(ctx.db, cls, ex)
    after = _db_sizes(ctx.db)
    if after["conflicts"] > before["conflicts"]:
        action = "blocked_conflict"
    elif after["negatives"] > before["negatives"]:
        action = "admitted_negative"
    else:
        action = "rejected_or_duplicate"
    ctx.log.event("db", action=action, function=fname, **after)


def _absorb_failure(ctx: _Ctx, fname: str, result: VerificationResult,
                    provenance: str) -> Classification:
    """Classify a failing result, remember its trace, and feed the database."""
    cls = classify(result)
    ctx.last_cls[fname] = cls
    ctx.log.event("classification", function=fname, mode=result.mode,
                  level=cls.level.value, category=cls.category.value)
    if cls.level is Level.TOOL:
        ctx.log.event("tool_quarantine", function=fname, mode=result.mode,
                      status=result.status.value)
        return cls
    parsed = result.parsed
    if parsed is None:
        return cls
    ctx.last_parsed[fname] = parsed
    valuation = valuation_for(parsed, fname) or parsed.key_map()
    if valuation:
        ctx.last_valuation[fname] = valuation
    _admit_negative(ctx, fname, valuation, cls, provenance)
    if ctx.cfg.strategy is Strategy.SMART_ICE:
        pairs = extract_implications(parsed, fname)
        fresh = [
            (a, b) for a, b in pairs
            if not any(x.same_state(a) and y.same_state(b) for x, y in ctx.db.implications)
        ]
        if fresh:
            ctx.db.implications.extend(fresh)
            ctx.log.event("db", action="implications", function=fname,
                          **_db_sizes(ctx.db))
    return cls


def _absorb_system_failure(ctx: _Ctx, result: VerificationResult) -> None:
    cls = classify(result)
    ctx.last_cls["__system__"] = cls
    ctx.log.event("classification", function="__system__", mode="system",
                  level=cls.level.value, category=cls.category.value)
    if cls.level is Level.TOOL:
        ctx.log.event("tool_quarantine", function="__system__", mode="system",
                      status=result.status.value)
        return
    parsed = result.parsed
    if parsed is None:
        return
    ctx.last_parsed["__system__"] = parsed
    # stash per-function valuations for later positive snapshots
    for name in sorted(ctx.contracts):
        vals = valuation_for(parsed, name)
        if vals:
            ctx.last_valuation[name] = vals
    if ctx.cfg.strategy is not Strategy.SMART_ICE:
        return
    try:
        target = weakest_link(parsed, ctx.contracts, ctx.model)
    except NoResponsibleFunctionError:
        target = min(ctx.contracts) if ctx.contracts else None
        ctx.log.event("weakest_link", chosen=target, fallback=True)
    else:
        ctx.log.event("weakest_link", chosen=target, fallback=False)
    if target is None:
        return
    valuation = valuation_for(parsed, target) or parsed.key_map()
    _admit_negative(ctx, target, valuation, cls, provenance="system")
    for name in sorted(ctx.contracts):
        pairs = extract_implications(parsed, name)
        fresh = [
            (a, b) for a, b in pairs
            if not any(x.same_state(a) and y.same_state(b) for x, y in ctx.db.implications)
        ]
        if fresh:
            ctx.db.implications.extend(fresh)
            ctx.log.event("db", action="implications", function=name, **_db_sizes(ctx.db))


def _record_pass_snapshots(ctx: _Ctx) -> None:
    if ctx.cfg.strategy is not Strategy.SMART_ICE:
        return
    for fname in sorted(ctx.contracts):
        r = ctx.fn_results.get(fname)
        if r is None or r.status is not Status.PASS:
            continue
        valuation = ctx.last_valuation.get(fname)
        if not valuation:
            continue
        ex = StateExample.make(fname, valuation, provenance="passing_check")
        before = _db_sizes(ctx.db)
        record_positive(ctx.db, ex)
        after = _db_sizes(ctx.db)
        if after["positives"] > before["positives"]:
            ctx.log.event("db", action="recorded_positive", function=fname, **after)
        elif after["conflicts"] > before["conflicts"]:
            ctx.log.event("db", action="blocked_conflict", function=fname, **after)


def _verify_system_now(ctx: _Ctx, contracts: Dict[str, Contract]) -> VerificationResult:
    ctx.check_deadline()
    instr = render_replace(ctx.model, contracts.values())
    result = ctx.verifier.system(instr, timeout_s=ctx.remaining())
    ctx.log.event("verification", mode="system", status=result.status.value,
                  contract_set=sorted(contracts), iteration=ctx.iterations)
    return result


def _verify_function_now(ctx: _Ctx, c: Contract) -> VerificationResult:
    ctx.check_deadline()
    instr = render_enforce(ctx.model, c)
    result = ctx.verifier.function(instr, c.function, timeout_s=ctx.remaining())
    ctx.log.event("verification", mode=f"function:{c.function}",
                  status=result.status.value, iteration=ctx.iterations)
    return result


def _verify_round(ctx: _Ctx, contracts: Dict[str, Contract]) -> None:
    """System check plus every function check, under one contract set."""
    ctx.contracts = contracts
    ctx.sys_result = _verify_system_now(ctx, contracts)
    if ctx.sys_result.status is Status.FAIL:
        _absorb_system_failure(ctx, ctx.sys_result)
    ctx.fn_results = {}
    for name in sorted(contracts):
        result = _verify_function_now(ctx, contracts[name])
        ctx.fn_results[name] = result
        if result.status is Status.FAIL:
            _absorb_failure(ctx, name, result, provenance="function")
        elif result.status in (Status.TIMEOUT, Status.TOOL_ERROR):
            _absorb_failure(ctx, name, result, provenance="function")
    _record_pass_snapshots(ctx)


def _gate(ctx: _Ctx) -> bool:
    """Soundness gate: system pass plus a passing check for every target
    function, all under the contract set just verified."""
    if ctx.sys_result is None or ctx.sys_result.status is not Status.PASS:
        return False
    for f in ctx.targets:
        if f.name not in ctx.contracts:
            return False
        r = ctx.fn_results.get(f.name)
        if r is None or r.status is not Status.PASS:
            return False
    return True


def _concrete_refutation(ctx: _Ctx) -> bool:
    return (
        ctx.sys_result is not None
        and ctx.sys_result.status is Status.FAIL
        and not ctx.contracts
    )


def _falsified(ctx: _Ctx) -> Verdict:
    prop = ctx.model.property.assertion_text
    ctx.log.event("falsified", property=prop)
    return _verdict(ctx, VerdictOutcome.FALSIFIED, falsified_property=prop)


def _failing_functions(ctx: _Ctx) -> List[str]:
    """Targets whose check is not a pass under the current set, in model order."""
    out: List[str] = []
    for f in ctx.targets:
        if f.name not in ctx.contracts:
            out.append(f.name)
            continue
        r = ctx.fn_results.get(f.name)
        if r is None or r.status is not Status.PASS:
            out.append(f.name)
    return out


def _iteration_snapshot(ctx: _Ctx) -> Tuple:
    failing = _failing_functions(ctx)
    texts = tuple(
        (name, ctx.contracts[name].text_key() if name in ctx.contracts else "<none>")
        for name in failing
    )
    return (frozenset(failing), texts)


def detect_stagnation(history: List[Tuple]) -> bool:
    """Same failing set and same contract texts across the last two rounds."""
    if len(history) < STAGNATION_WINDOW:
        return False
    return history[-1] == history[-2]


def delta_debug(
    c: Contract,
    check: Callable[[Contract], bool],
    log: Optional[RunLog] = None,
) -> Contract:
    """Reduce the ensures list of a failing contract until the check passes.

    Clauses are removed from the tail one by one; once the check passes, each
    removed clause is offered back and kept only if the check still passes.
    Requires, assigns, and invariants are never touched. Worst case this
    spends 2n+2 check calls. Raises IrreducibleFailureError when even the
    empty ensures list fails, which means the problem is not in the
    postcondition at all.
    """
    ensures = list(c.ensures)
    budget = 2 * len(ensures) + 2
    calls = 0

    def attempt(indices: List[int]) -> bool:
        nonlocal calls
        calls += 1
        trial = replace(
            c,
            ensures=tuple(ensures[i] for i in sorted(indices)),
            origin=ContractOrigin.DELTA_REDUCED,
        )
        return bool(check(trial))

    if not ensures:
        raise IrreducibleFailureError(
            f"{c.function}: check fails with no ensures clauses left"
        )

    kept = list(range(len(ensures)))
    removed: List[int] = []
    passed = False
    while kept and calls < budget:
        removed.append(kept.pop())
        if attempt(kept):
            passed = True
            break
    if not passed:
        raise IrreducibleFailureError(
            f"{c.function}: check fails with no ensures clauses left"
        )

    for i in sorted(removed):
        if calls >= budget:
            break
        trial = sorted(kept + [i])
        if attempt(trial):
            kept = trial
            removed.remove(i)

    reduced = replace(
        c,
        ensures=tuple(ensures[i] for i in sorted(kept)),
        origin=ContractOrigin.DELTA_REDUCED,
    )
    if log is not None:
        log.event(
            "delta_debug",
            function=c.function,
            kept=[ensures[i] for i in sorted(kept)],
            removed=[ensures[i] for i in sorted(removed)],
            checks=calls,
        )
    return reduced


def _relax_or_reseed(ctx: _Ctx, contracts: Dict[str, Contract], fname: str) -> None:
    f = ctx.model.function(fname)
    if f is None:
        return
    current = contracts.get(fname)
    if current is None:
        result = _synth(ctx, f, SynthesisIntent.INITIAL)
    else:
        result = _synth(ctx, f, SynthesisIntent.RELAX, current,
                        _diagnostics_for(ctx, fname))
    if isinstance(result, Contract):
        contracts[fname] = result
    else:
        _absorb_parse_failure(ctx, fname, result)


def _strengthen_target(ctx: _Ctx, contracts: Dict[str, Contract]) -> None:
    if ctx.sys_result is None or ctx.sys_result.status is not Status.FAIL:
        return
    parsed = ctx.sys_result.parsed
    if parsed is None or not contracts:
        return
    try:
        target = weakest_link(parsed, contracts, ctx.model)
        fallback = False
    except NoResponsibleFunctionError:
        target = min(contracts)
        fallback = True
    ctx.log.event("strengthen_target", function=target, fallback=fallback)
    f = ctx.model.function(target)
    if f is None:
        return
    cls = ctx.last_cls.get("__system__")
    if ctx.cfg.strategy is Strategy.SMART_ICE and cls is not None:
        diagnostics = render_diagnostics(ctx.db, parsed, cls)
    else:
        diagnostics = render_trace(parsed)
    result = _synth(ctx, f, SynthesisIntent.STRENGTHEN, contracts.get(target), diagnostics)
    if isinstance(result, Contract):
        contracts[target] = result
    else:
        _absorb_parse_failure(ctx, target, result)


def _delta_debug_stagnating(ctx: _Ctx) -> None:
    for fname in sorted(ctx.contracts):
        r = ctx.fn_results.get(fname)
        if r is None or r.status is Status.PASS:
            continue
        c = ctx.contracts[fname]
        if not c.ensures:
            continue

        last_pass: Dict[str, VerificationResult] = {}

        def check(trial: Contract) -> bool:
            result = _verify_function_now(ctx, trial)
            if result.status is Status.PASS:
                last_pass["result"] = result
            return result.status is Status.PASS

        try:
            reduced = delta_debug(c, check, log=ctx.log)
        except IrreducibleFailureError:
            ctx.log.event("delta_debug", function=fname, kept=list(c.ensures),
                          removed=[], checks=0, irreducible=True)
            continue
        ctx.contracts[fname] = reduced
        if "result" in last_pass:
            ctx.fn_results[fname] = last_pass["result"]


def _run_cegar(ctx: _Ctx) -> Tuple[Optional[Verdict], bool]:
    """(verdict, escalate): verdict set on convergence or falsification."""
    ctx.set_stage("cegar")
    history: List[Tuple] = [_iteration_snapshot(ctx)]
    k = 0
    while k < ctx.cfg.k_cegar and ctx.iterations < ctx.cfg.total_budget:
        ctx.check_deadline()
        k += 1
        contracts = dict(ctx.contracts)
        for fname in _failing_functions(ctx):
            _relax_or_reseed(ctx, contracts, fname)
        _strengthen_target(ctx, contracts)
        ctx.iterations += 1
        ctx.log.event("iteration", loop="cegar", index=k,
                      failing=_failing_functions(ctx))
        _verify_round(ctx, contracts)
        if _gate(ctx):
            return _verdict(ctx, VerdictOutcome.VERIFIED), False
        if _concrete_refutation(ctx):
            return _falsified(ctx), False
        history.append(_iteration_snapshot(ctx))
        if detect_stagnation(history):
            ctx.log.event("stagnation", iteration=k,
                          failing=_failing_functions(ctx))
            _delta_debug_stagnating(ctx)
            if _gate(ctx):
                # reduction alone may finish the job when the system side
                # already passed
                return _verdict(ctx, VerdictOutcome.VERIFIED), False
            return None, True
    return None, True


def _migrate_db(ctx: _Ctx) -> IceDatabase:
    source = ctx.db
    migrated = IceDatabase(
        positives=list(source.positives),
        negatives=list(source.negatives),
        implications=list(source.implications),
        conflicts=list(source.conflicts),
    )
    ctx.log.event("cegis_migrate", **_db_sizes(migrated))
    return migrated


def _run_cegis(ctx: _Ctx) -> Optional[Verdict]:
    ctx.set_stage("cegis")
    db = _migrate_db(ctx)
    ctx.db = db
    k = 0
    while k < ctx.cfg.k_cegis and ctx.iterations < ctx.cfg.total_budget:
        ctx.check_deadline()
        k += 1
        contracts = dict(ctx.contracts)
        for fname in _failing_functions(ctx):
            f = ctx.model.function(fname)
            if f is None:
                continue
            req = _request(ctx, f, SynthesisIntent.CEGIS, contracts.get(fname),
                           _diagnostics_for(ctx, fname))
            if ctx.cfg.strategy is Strategy.SMART_ICE:
                result = cegis_synthesize(req, ctx.client, db,
                                          retries=ctx.cfg.retries, log=ctx.log)
            else:
                result = synthesize(req, ctx.client, retries=ctx.cfg.retries,
                                    log=ctx.log)
            if isinstance(result, Contract):
                contracts[fname] = _sanitized(ctx, result)
            else:
                _absorb_parse_failure(ctx, fname, result)
        ctx.iterations += 1
        ctx.log.event("iteration", loop="cegis", index=k,
                      failing=_failing_functions(ctx))
        _verify_round(ctx, contracts)
        if _gate(ctx):
            return _verdict(ctx, VerdictOutcome.VERIFIED)
        if _concrete_refutation(ctx):
            return _falsified(ctx)
    return None


def _initial_contracts(ctx: _Ctx) -> Dict[str, Contract]:
    contracts: Dict[str, Contract] = {}
    for f in ctx.targets:
        result = _synth(ctx, f, SynthesisIntent.INITIAL)
        if isinstance(result, Contract):
            contracts[f.name] = result
        else:
            _absorb_parse_failure(ctx, f.name, result)
    return contracts


def run_pipeline(
    model: ProgramModel,
    cfg: PipelineConfig,
    client: LlmClient,
    verifier,
    log: Optional[RunLog] = None,
) -> Verdict:
    """Full pipeline for one program. The caller owns the RunLog if it passes
    one in; wall-clock overrun raises DeadlineExceededError with a partial
    verdict attached."""
    ctx = _Ctx(model, cfg, client, verifier, log if log is not None else RunLog())
    ctx.set_stage("initial")
    ctx.log.event("config", strategy=cfg.strategy.value, k_cegar=cfg.k_cegar,
                  k_cegis=cfg.k_cegis, total_budget=cfg.total_budget, tau=cfg.tau)

    if cfg.strategy is Strategy.PRE_ABSTRACTION:
        return _run_pre_abstraction(ctx)

    contracts = _initial_contracts(ctx)
    _verify_round(ctx, contracts)
    if _gate(ctx):
        return _verdict(ctx, VerdictOutcome.VERIFIED)
    if _concrete_refutation(ctx):
        return _falsified(ctx)

    # drop contracts that failed their own check, re-verify the system with
    # the survivors (dropped functions stay concrete); this seeds refinement
    failed = [name for name, r in ctx.fn_results.items()
              if r is not None and r.status is not Status.PASS]
    if failed:
        survivors = {n: c for n, c in contracts.items() if n not in failed}
        ctx.log.event("drop", functions=sorted(failed),
                      survivors=sorted(survivors))
        fn_results = ctx.fn_results
        sys_res = _verify_system_now(ctx, survivors)
        if sys_res.status is Status.FAIL:
            if not survivors:
                ctx.contracts = survivors
                ctx.sys_result = sys_res
                ctx.fn_results = fn_results
                return _falsified(ctx)
            _absorb_system_failure(ctx, sys_res)
        # refinement starts from the full set; the failed contracts are what
        # the relax side works on
        ctx.contracts = contracts
        ctx.fn_results = fn_results
        ctx.sys_result = sys_res

    verdict, escalate = _run_cegar(ctx)
    if verdict is not None:
        return verdict
    if escalate:
        verdict = _run_cegis(ctx)
        if verdict is not None:
            return verdict
    ctx.log.event("budget_exhausted", iterations=ctx.iterations)
    return _verdict(ctx, VerdictOutcome.INCONCLUSIVE)


def _coverage_names(ctx: _Ctx, f: FunctionInfo) -> set:
    import re as _re
    prop_idents = set(_re.findall(r"[A-Za-z_]\w*", ctx.model.property.assertion_text))
    names = {p.name for p in f.params} | {"__ESBMC_return_value"}
    names |= prop_idents & set(ctx.model.global_names)
    return names


def _covers(c: Contract, names: set) -> bool:
    import re as _re
    for clause in c.ensures:
        for ident in _re.findall(r"[A-Za-z_]\w*", clause):
            if ident in names:
                return True
    return False


def _synthesize_low_one(
    ctx: _Ctx, f: FunctionInfo, log: RunLog
) -> Union[Contract, ParseFailure]:
    """Phase 1b worker: precise synthesis with coverage validation. Logs into
    a private RunLog so concurrent workers stay deterministic after merge."""
    req = _request(ctx, f, SynthesisIntent.INITIAL, None, "")
    result = synthesize(req, ctx.client, retries=ctx.cfg.retries, log=log)
    if not isinstance(result, Contract):
        return result
    wanted = _coverage_names(ctx, f)
    if _covers(result, wanted):
        return result
    hint = f"previous ensures mentioned none of: {', '.join(sorted(wanted))}"
    retry = synthesize(req, ctx.client, retries=0, log=log, failure_note=hint)
    if isinstance(retry, Contract) and _covers(retry, wanted):
        return retry
    accepted = retry if isinstance(retry, Contract) else result
    log.event("coverage_warning", function=f.name,
              wanted=sorted(wanted), ensures=list(accepted.ensures))
    return accepted


def _run_pre_abstraction(ctx: _Ctx) -> Verdict:
    from concurrent.futures import ThreadPoolExecutor

    low, high = partition_functions(ctx.model, ctx.cfg.tau)
    low = [f for f in low if not f.is_static]
    high = [f for f in high if not f.is_static]
    contracts: Dict[str, Contract] = {}

    ctx.set_stage("pre_abstraction:1a")
    for f in high:
        c = overapproximate(f, ctx.model.property.assertion_text, ctx.client,
                            ctx.model.global_names, retries=ctx.cfg.retries,
                            log=ctx.log)
        contracts[f.name] = _sanitized(ctx, c)

    ctx.set_stage("pre_abstraction:1b")
    side_logs = {f.name: RunLog() for f in low}
    if low:
        if ctx.cfg.workers > 1:
            with ThreadPoolExecutor(max_workers=ctx.cfg.workers) as pool:
                futures = {
                    f.name: pool.submit(_synthesize_low_one, ctx, f, side_logs[f.name])
                    for f in low
                }
                results = {name: fut.result() for name, fut in futures.items()}
        else:
            results = {f.name: _synthesize_low_one(ctx, f, side_logs[f.name])
                       for f in low}
        for f in low:  # merge worker logs in model order, not completion order
            ctx.log.events.extend(side_logs[f.name].events)
            result = results[f.name]
            if isinstance(result, Contract):
                contracts[f.name] = _sanitized(ctx, result)
            else:
                _absorb_parse_failure(ctx, f.name, result)

    ctx.set_stage("pre_abstraction:2")
    _verify_round(ctx, contracts)

    ctx.set_stage("pre_abstraction:3")
    if _gate(ctx):
        return _verdict(ctx, VerdictOutcome.VERIFIED)
    if _concrete_refutation(ctx):
        return _falsified(ctx)

    ctx.set_stage("pre_abstraction:4")
    for f in high:
        r = ctx.fn_results.get(f.name)
        if r is None or r.status is not Status.PASS:
            continue  # unverified abstraction stays in place for refinement
        precise = _synth(ctx, f, SynthesisIntent.INITIAL)
        if not isinstance(precise, Contract):
            continue
        check = _verify_function_now(ctx, precise)
        if check.status is Status.PASS:
            ctx.contracts[f.name] = precise
            ctx.fn_results[f.name] = check
            ctx.log.event("substitute", function=f.name, kept="precise")
        else:
            ctx.log.event("substitute", function=f.name, kept="abstraction")
            if check.status is Status.FAIL:
                _absorb_failure(ctx, f.name, check, provenance="phase4")

    ctx.set_stage("pre_abstraction:5")
    _verify_round(ctx, dict(ctx.contracts))
    if _gate(ctx):
        return _verdict(ctx, VerdictOutcome.VERIFIED)
    if _concrete_refutation(ctx):
        return _falsified(ctx)

    verdict, escalate = _run_cegar(ctx)
    if verdict is not None:
        return verdict
    if escalate:
        verdict = _run_cegis(ctx)
        if verdict is not None:
            return verdict
    ctx.log.event("budget_exhausted", iterations=ctx.iterations)
    return _verdict(ctx, VerdictOutcome.INCONCLUSIVE)
