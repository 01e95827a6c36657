"""Driver for the bounded-model-checker backend.

One child process per check. The backend is anything that takes an annotated
C file plus mode flags and prints a verdict marker; the bundled mock
(`contractor.mock_backend`) replays recorded transcripts and is a first-class
backend choice, not a test shim, so whole runs work offline.
"""

from __future__ import annotations

import os
import re
import subprocess
import sys
import tempfile
import time
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .contracts import InstrumentedSource
from .errors import BackendNotFoundError

DEFAULT_SUCCESS_MARKERS = ("VERIFICATION SUCCESSFUL",)
DEFAULT_FAILURE_MARKERS = ("VERIFICATION FAILED",)
DEFAULT_NOT_FOUND_MARKERS = (
    "could not find function",
    "no contract for function",
    "function not found",
)

MOCK_FIXTURES_ENV = "CONTRACTOR_MOCK_FIXTURES"


class Status(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    TIMEOUT = "timeout"
    TOOL_ERROR = "tool_error"


@dataclass(frozen=True)
class VerifierConfig:
    backend_path: str = "esbmc"
    extra_flags: Tuple[str, ...] = ()
    timeout_s: float = 600.0
    enforce_flag: str = "--enforce-contract"
    replace_flag: str = "--replace-call-with-contract"
    success_markers: Tuple[str, ...] = DEFAULT_SUCCESS_MARKERS
    failure_markers: Tuple[str, ...] = DEFAULT_FAILURE_MARKERS
    not_found_markers: Tuple[str, ...] = DEFAULT_NOT_FOUND_MARKERS
    fixtures_dir: Optional[str] = None  # forwarded to the mock backend


@dataclass(frozen=True)
class TraceStep:
    function: str
    line: int
    assignments: Tuple[Tuple[str, str], ...]  # (name, value text) pairs
    kind: str = "assign"  # assign | assume | call | return
    note: str = ""

    def assignment_map(self) -> Dict[str, str]:
        return dict(self.assignments)


@dataclass(frozen=True)
class ParsedCounterexample:
    violated_property: str
    trace: Tuple[TraceStep, ...]
    key_variables: Tuple[Tuple[str, str], ...]

    def key_map(self) -> Dict[str, str]:
        return dict(self.key_variables)


@dataclass(frozen=True)
class VerificationResult:
    status: Status
    raw_output: str
    parsed: Optional[ParsedCounterexample]
    wall_time_s: float
    mode: str  # "system" | "function:<name>"
    command: Tuple[str, ...] = ()


_STATE_RE = re.compile(
    r"^State\s+\d+\s+file\s+\S+\s+line\s+(\d+)(?:\s+column\s+\d+)?"
    r"(?:\s+function\s+(\S+))?(?:\s+thread\s+\d+)?\s*$"
)
_ASSIGN_RE = re.compile(r"^\s{2,}([A-Za-z_][\w\[\]\.\->]*)\s*=\s*(.+?)\s*$")
_ASSUME_RE = re.compile(r"^\s{2,}assume\s*\((.*)\)\s*$")
_CALL_RE = re.compile(r"^\s{2,}(call|return)\s+(.*)$")


def _parse_trace(lines: Sequence[str]) -> Tuple[TraceStep, ...]:
    steps: List[TraceStep] = []
    i = 0
    while i < len(lines):
        m = _STATE_RE.match(lines[i].strip())
        if not m:
            i += 1
            continue
        line_no = int(m.group(1))
        fn = m.group(2) or ""
        i += 1
        if i < len(lines) and set(lines[i].strip()) <= {"-"} and lines[i].strip():
            i += 1  # separator rule
        assigns: List[Tuple[str, str]] = []
        kind = "assign"
        note = ""
        while i < len(lines) and lines[i].strip():
            am = _ASSUME_RE.match(lines[i])
            cm = _CALL_RE.match(lines[i])
            xm = _ASSIGN_RE.match(lines[i])
            if am:
                kind = "assume"
                note = am.group(1).strip()
            elif cm:
                kind = cm.group(1)
                note = cm.group(2).strip()
            elif xm:
                assigns.append((xm.group(1), xm.group(2)))
            i += 1
        if assigns or kind != "assign":
            steps.append(TraceStep(
                function=fn, line=line_no,
                assignments=tuple(assigns), kind=kind, note=note,
            ))
    return tuple(steps)


def _parse_violated(lines: Sequence[str]) -> str:
    """The expression on the last populated line of the violated-property block."""
    expr = ""
    for ln in lines:
        text = ln.strip()
        if not text:
            break
        if text.lower().startswith(("file ", "assertion")):
            tail = text[len("assertion"):].strip() if text.lower().startswith("assertion") else ""
            if tail:
                expr = tail
            continue
        expr = text
    return expr


def parse_verifier_output(
    raw: str,
    success_markers: Sequence[str] = DEFAULT_SUCCESS_MARKERS,
    failure_markers: Sequence[str] = DEFAULT_FAILURE_MARKERS,
) -> Tuple[Status, Optional[ParsedCounterexample]]:
    """Map backend text to a status; on failure, pull out the counterexample.
    Unknown or empty output is a tool error, never a pass."""
    if any(m in raw for m in success_markers):
        return Status.PASS, None
    if not any(m in raw for m in failure_markers):
        return Status.TOOL_ERROR, None

    lines = raw.splitlines()
    trace = _parse_trace(lines)
    violated = ""
    for i, ln in enumerate(lines):
        if ln.strip().lower().startswith("violated property"):
            violated = _parse_violated(lines[i + 1:])
            break

    final: Dict[str, str] = {}
    for step in trace:
        for name, value in step.assignments:
            final[name] = value
    prop_idents = set(re.findall(r"[A-Za-z_]\w*", violated))
    keyed = {n: v for n, v in final.items() if n.split("[")[0] in prop_idents}
    if not keyed:
        keyed = final
    parsed = ParsedCounterexample(
        violated_property=violated,
        trace=trace,
        key_variables=tuple(sorted(keyed.items())),
    )
    return Status.FAIL, parsed


def _backend_command(cfg: VerifierConfig) -> List[str]:
    if cfg.backend_path == "mock":
        cmd = [sys.executable, "-m", "contractor.mock_backend"]
        if cfg.fixtures_dir:
            cmd += ["--fixtures", cfg.fixtures_dir]
        return cmd
    return [cfg.backend_path]


def mode_key(src: InstrumentedSource) -> str:
    if src.mode.kind == "enforce":
        return f"function:{src.mode.function}"
    return "system"


def _run_backend(
    src: InstrumentedSource,
    mode_flags: Sequence[str],
    cfg: VerifierConfig,
    mode: str,
    timeout_s: Optional[float],
) -> VerificationResult:
    budget = cfg.timeout_s if timeout_s is None else min(cfg.timeout_s, timeout_s)
    budget = max(budget, 0.05)
    with tempfile.TemporaryDirectory(prefix="contractor-") as tmp:
        src_path = os.path.join(tmp, "program.c")
        with open(src_path, "w", encoding="utf-8") as fh:
            fh.write(src.text)
        cmd = _backend_command(cfg) + list(mode_flags) + list(cfg.extra_flags) + [src_path]
        env = dict(os.environ)
        if cfg.fixtures_dir:
            env[MOCK_FIXTURES_ENV] = cfg.fixtures_dir
        started = time.monotonic()
        try:
            proc = subprocess.run(
                cmd,
                stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT,
                timeout=budget,
                env=env,
            )
            raw = proc.stdout.decode("utf-8", errors="replace")
        except FileNotFoundError as exc:
            raise BackendNotFoundError(f"backend executable not found: {cmd[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            elapsed = time.monotonic() - started
            partial = (exc.stdout or b"").decode("utf-8", errors="replace") \
                if isinstance(exc.stdout, bytes) else (exc.stdout or "")
            return VerificationResult(
                status=Status.TIMEOUT,
                raw_output=partial,
                parsed=None,
                wall_time_s=elapsed,
                mode=mode,
                command=tuple(cmd),
            )
        elapsed = time.monotonic() - started
    if any(marker in raw for marker in cfg.not_found_markers):
        return VerificationResult(
            status=Status.TOOL_ERROR, raw_output=raw, parsed=None,
            wall_time_s=elapsed, mode=mode, command=tuple(cmd),
        )
    status, parsed = parse_verifier_output(raw, cfg.success_markers, cfg.failure_markers)
    return VerificationResult(
        status=status, raw_output=raw, parsed=parsed,
        wall_time_s=elapsed, mode=mode, command=tuple(cmd),
    )


def verify_system(
    src: InstrumentedSource,
    cfg: VerifierConfig,
    timeout_s: Optional[float] = None,
) -> VerificationResult:
    """Replace-mode check of the whole program: every annotated function's call
    sites use the contract stub instead of the body."""
    if src.mode.kind != "replace":
        raise ValueError("verify_system needs a replace-mode instrumentation")
    flags: List[str] = []
    for name in src.functions:
        flags += [cfg.replace_flag, name]
    return _run_backend(src, flags, cfg, "system", timeout_s)


def verify_function(
    src: InstrumentedSource,
    function: str,
    cfg: VerifierConfig,
    timeout_s: Optional[float] = None,
) -> VerificationResult:
    """Enforce-mode check of one function body against its own contract."""
    if src.mode.kind != "enforce" or src.mode.function != function:
        raise ValueError(f"instrumentation does not enforce {function!r}")
    flags = [cfg.enforce_flag, function]
    return _run_backend(src, flags, cfg, f"function:{function}", timeout_s)


class SubprocessVerifier:
    """The protocol object the refinement loop drives."""

    def __init__(self, cfg: VerifierConfig):
        self.cfg = cfg

    def system(self, src: InstrumentedSource, timeout_s: Optional[float] = None) -> VerificationResult:
        return verify_system(src, self.cfg, timeout_s)

    def function(self, src: InstrumentedSource, name: str,
                 timeout_s: Optional[float] = None) -> VerificationResult:
        return verify_function(src, name, self.cfg, timeout_s)
