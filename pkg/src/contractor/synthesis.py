"""Contract synthesis through a language model.

Three interchangeable clients: live HTTP, transcript replay, and scripted
replies. Prompts are versioned text assets with straight {placeholder}
substitution; each intent's template carries a directive marker so a relax
prompt can never quietly ask for strengthening. Temperature is pinned to 0
everywhere, reproducibility beats creativity here. Parse failures are values;
the driver retries twice with the failure reason appended, then gives up and
hands the failure back.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import requests

from . import cexpr
from .contracts import Contract, ContractOrigin, ParseFailure, parse_contract_text
from .errors import ClientUnavailableError
from .ice import IceDatabase, StateExample
from .program_model import FunctionInfo
from .runlog import RunLog

PARSE_RETRIES = 2

LLM_URL_ENV = "CONTRACTOR_LLM_URL"
LLM_MODEL_ENV = "CONTRACTOR_LLM_MODEL"
LLM_TOKEN_ENV = "CONTRACTOR_LLM_TOKEN"


class SynthesisIntent(str, Enum):
    INITIAL = "initial"
    OVERAPPROXIMATE = "overapproximate"
    RELAX = "relax"
    STRENGTHEN = "strengthen"
    CEGIS = "cegis"


# every template must contain its marker; relax and strengthen must not
# contain each other's
TEMPLATE_MARKERS: Dict[SynthesisIntent, str] = {
    SynthesisIntent.INITIAL: "Objective: initial contract derivation.",
    SynthesisIntent.OVERAPPROXIMATE: "Objective: conservative over-approximation.",
    SynthesisIntent.RELAX: "Direction: weaken the failing clauses.",
    SynthesisIntent.STRENGTHEN: "Direction: strengthen the contract.",
    SynthesisIntent.CEGIS: "Objective: example-guided contract repair.",
}

_INTENT_ORIGIN: Dict[SynthesisIntent, ContractOrigin] = {
    SynthesisIntent.INITIAL: ContractOrigin.LLM_PRECISE,
    SynthesisIntent.OVERAPPROXIMATE: ContractOrigin.LLM_ABSTRACTION,
    SynthesisIntent.RELAX: ContractOrigin.LLM_PRECISE,
    SynthesisIntent.STRENGTHEN: ContractOrigin.LLM_PRECISE,
    SynthesisIntent.CEGIS: ContractOrigin.CEGIS,
}


def load_template(intent: SynthesisIntent) -> str:
    text = resources.files("contractor").joinpath(f"prompts/{intent.value}.txt").read_text("utf-8")
    marker = TEMPLATE_MARKERS[intent]
    if marker not in text:
        raise RuntimeError(f"template {intent.value} lost its directive marker {marker!r}")
    return text


@dataclass(frozen=True)
class SynthesisRequest:
    function: FunctionInfo
    property_text: str
    intent: SynthesisIntent
    current_contract: Optional[Contract] = None
    diagnostics: str = ""
    examples: str = ""
    known_globals: Tuple[str, ...] = ()


def _contract_as_text(c: Optional[Contract]) -> str:
    if c is None:
        return "(none yet)"
    lines = [f"__ESBMC_requires({e});" for e in c.requires]
    lines += [f"__ESBMC_assigns({t});" for t in c.assigns]
    lines += [f"__ESBMC_ensures({e});" for e in c.ensures]
    lines += [f"__ESBMC_loop_invariant({e});  /* loop {n} */" for n, e in c.loop_invariants]
    return "\n".join(lines) if lines else "(empty contract)"


def render_prompt(req: SynthesisRequest, failure_note: str = "") -> str:
    template = load_template(req.intent)
    note = ""
    if failure_note:
        note = (
            "\nYour previous reply could not be used: "
            + failure_note
            + "\nReply again, following the format rules exactly."
        )
    fields = {
        "function_name": req.function.name,
        "signature": req.function.signature_text,
        "body": req.function.body_text,
        "property": req.property_text,
        "current_contract": _contract_as_text(req.current_contract),
        "diagnostics": req.diagnostics or "(none)",
        "examples": req.examples or "(no examples yet)",
        "failure_note": note,
    }
    text = template
    # plain replacement, not str.format: substituted C code is full of braces
    for key, value in fields.items():
        text = text.replace("{" + key + "}", value)
    return text


class LlmClient:
    """Interface: complete(prompt, tags) -> reply text.
    tags carry routing metadata (function, intent); clients may ignore them."""

    backend_id = "unset"

    def complete(self, prompt: str, tags: Optional[Mapping[str, str]] = None) -> str:
        raise NotImplementedError


class HttpLlmClient(LlmClient):
    """OpenAI-style chat endpoint; credentials from the environment unless
    given explicitly."""

    def __init__(
        self,
        url: Optional[str] = None,
        model: Optional[str] = None,
        token: Optional[str] = None,
        timeout_s: float = 120.0,
    ):
        self.url = url or os.environ.get(LLM_URL_ENV, "")
        self.model = model or os.environ.get(LLM_MODEL_ENV, "")
        self.token = token or os.environ.get(LLM_TOKEN_ENV, "")
        self.timeout_s = timeout_s
        self.backend_id = f"http:{self.model or 'unknown'}"

    def complete(self, prompt: str, tags: Optional[Mapping[str, str]] = None) -> str:
        if not self.url:
            raise ClientUnavailableError(f"no endpoint configured ({LLM_URL_ENV} unset)")
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        payload = {
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        }
        try:
            resp = requests.post(self.url, json=payload, headers=headers,
                                 timeout=self.timeout_s)
            resp.raise_for_status()
            data = resp.json()
            return data["choices"][0]["message"]["content"]
        except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
            raise ClientUnavailableError(f"live endpoint failed: {exc}") from exc


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class LlmTranscript:
    request_digest: str
    prompt: str
    reply: str
    backend_id: str
    timestamp: str


class ReplayLlmClient(LlmClient):
    """Deterministic playback from a transcript store keyed by prompt digest."""

    backend_id = "replay"

    def __init__(self, store_dir: str):
        self.store_dir = store_dir

    def complete(self, prompt: str, tags: Optional[Mapping[str, str]] = None) -> str:
        path = os.path.join(self.store_dir, prompt_digest(prompt) + ".json")
        if not os.path.exists(path):
            raise ClientUnavailableError(f"no transcript for prompt digest {prompt_digest(prompt)[:16]}")
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        return data["reply"]


class RecordingLlmClient(LlmClient):
    """Wrap a live client and persist every exchange for later replay."""

    def __init__(self, inner: LlmClient, store_dir: str):
        self.inner = inner
        self.store_dir = store_dir
        self.backend_id = inner.backend_id

    def complete(self, prompt: str, tags: Optional[Mapping[str, str]] = None) -> str:
        reply = self.inner.complete(prompt, tags)
        os.makedirs(self.store_dir, exist_ok=True)
        digest = prompt_digest(prompt)
        record = LlmTranscript(
            request_digest=digest,
            prompt=prompt,
            reply=reply,
            backend_id=self.inner.backend_id,
            timestamp=time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        )
        tmp = os.path.join(self.store_dir, digest + ".json.tmp")
        final = os.path.join(self.store_dir, digest + ".json")
        with open(tmp, "w", encoding="utf-8") as fh:
            json.dump(record.__dict__, fh, indent=2)
        os.replace(tmp, final)
        return reply


class ScriptedLlmClient(LlmClient):
    """Canned replies for tests and offline CLI runs.

    Accepts either a sequence (global reply queue, last one repeats) or a
    mapping keyed by "function|intent", "function", "intent", or "*"; mapping
    values may be a string or a list consumed call by call.
    """

    backend_id = "scripted"

    def __init__(self, script: Union[Sequence[str], Mapping[str, object]]):
        self._lock = threading.Lock()
        if isinstance(script, Mapping):
            self._map: Optional[Dict[str, object]] = {k: (list(v) if isinstance(v, (list, tuple)) else v)
                                                      for k, v in script.items()}
            self._queue: Optional[List[str]] = None
        else:
            self._map = None
            self._queue = list(script)
        self.calls: List[Dict[str, str]] = []

    def _next_from(self, value: object) -> str:
        if isinstance(value, list):
            if not value:
                raise ClientUnavailableError("scripted reply list exhausted")
            return value.pop(0) if len(value) > 1 else value[0]
        return str(value)

    def complete(self, prompt: str, tags: Optional[Mapping[str, str]] = None) -> str:
        tags = dict(tags or {})
        with self._lock:
            self.calls.append({"function": tags.get("function", ""),
                               "intent": tags.get("intent", "")})
            if self._queue is not None:
                if not self._queue:
                    raise ClientUnavailableError("scripted reply queue exhausted")
                return self._queue.pop(0) if len(self._queue) > 1 else self._queue[0]
            for key in (
                f"{tags.get('function', '')}|{tags.get('intent', '')}",
                tags.get("function", ""),
                tags.get("intent", ""),
                "*",
            ):
                if key and key in self._map:
                    return self._next_from(self._map[key])
            raise ClientUnavailableError(
                "no scripted reply for %s" % (tags.get("function") or "<unknown>")
            )


def make_client(kind: str, transcripts_dir: Optional[str] = None) -> LlmClient:
    """CLI factory. live records into the transcript dir when one is given;
    scripted loads <transcripts>/scripts.json."""
    if kind == "live":
        live = HttpLlmClient()
        if transcripts_dir:
            return RecordingLlmClient(live, transcripts_dir)
        return live
    if kind == "replay":
        if not transcripts_dir:
            raise ClientUnavailableError("replay needs --transcripts <dir>")
        return ReplayLlmClient(transcripts_dir)
    if kind == "scripted":
        if not transcripts_dir:
            raise ClientUnavailableError("scripted needs --transcripts <dir> with scripts.json")
        path = os.path.join(transcripts_dir, "scripts.json")
        with open(path, "r", encoding="utf-8") as fh:
            return ScriptedLlmClient(json.load(fh))
    raise ValueError(f"unknown client kind {kind!r}")


def _with_origin(c: Contract, intent: SynthesisIntent) -> Contract:
    from dataclasses import replace
    return replace(c, origin=_INTENT_ORIGIN[intent])


def synthesize(
    req: SynthesisRequest,
    client: LlmClient,
    retries: int = PARSE_RETRIES,
    log: Optional[RunLog] = None,
    failure_note: str = "",
) -> Union[Contract, ParseFailure]:
    """One synthesis round: prompt, parse, retry on parse failure with the
    reason appended. A caller-supplied failure_note seeds the first prompt,
    which is how a rejected earlier reply gets explained to the model.
    Raises ClientUnavailableError only if the client does."""
    tags = {"function": req.function.name, "intent": req.intent.value}
    last_failure: Optional[ParseFailure] = None
    for attempt in range(retries + 1):
        prompt = render_prompt(req, failure_note)
        reply = client.complete(prompt, tags)
        result = parse_contract_text(reply, req.function, req.known_globals)
        if log is not None:
            log.event(
                "synthesis",
                function=req.function.name,
                intent=req.intent.value,
                attempt=attempt,
                prompt=prompt,
                outcome="parsed" if isinstance(result, Contract) else "parse_failure",
                reason=None if isinstance(result, Contract) else result.reason.value,
            )
        if isinstance(result, Contract):
            return _with_origin(result, req.intent)
        last_failure = result
        failure_note = f"{result.reason.value}: {result.detail}"
    return last_failure  # type: ignore[return-value]


_ASSIGN_TARGET_RE = re.compile(
    r"(\*\s*[A-Za-z_]\w*|[A-Za-z_]\w*\s*->\s*[A-Za-z_]\w*|[A-Za-z_]\w*)"
    r"\s*(?:=(?!=)|\+=|-=|\*=|/=|%=|\|=|&=|\^=|<<=|>>=|\+\+|--)"
)
_PREFIX_TARGET_RE = re.compile(r"(?:\+\+|--)\s*([A-Za-z_]\w*)")


def heuristic_fallback(f: FunctionInfo, known_globals: Iterable[str] = ()) -> Contract:
    """Most conservative contract we can write without thinking: no
    precondition, trivially true postcondition, assigns from a body scan
    (globals written, plus writes through pointer parameters; the latter get
    stripped later by assigns sanitization, which is the point: they are
    recorded for the log, not for the backend)."""
    globals_set = set(known_globals)
    pointer_params = {p.name for p in f.params if "*" in p.type_text or "[" in p.type_text}
    targets: List[str] = []

    def add(t: str) -> None:
        t = " ".join(t.split())
        if t and t not in targets:
            targets.append(t)

    for m in _ASSIGN_TARGET_RE.finditer(f.body_text):
        raw = m.group(1).strip()
        if raw.startswith("*"):
            base = raw.lstrip("* \t")
            if base in pointer_params or base in globals_set:
                add("*" + base)
        elif "->" in raw:
            base = raw.split("->")[0].strip()
            if base in pointer_params or base in globals_set:
                add(" ".join(raw.split()))
        elif raw in globals_set:
            add(raw)
    for m in _PREFIX_TARGET_RE.finditer(f.body_text):
        if m.group(1) in globals_set:
            add(m.group(1))

    return Contract(
        function=f.name,
        requires=(),
        ensures=("1",),
        assigns=tuple(targets),
        origin=ContractOrigin.HEURISTIC_FALLBACK,
    )


def overapproximate(
    f: FunctionInfo,
    property_text: str,
    client: LlmClient,
    known_globals: Tuple[str, ...] = (),
    retries: int = PARSE_RETRIES,
    log: Optional[RunLog] = None,
) -> Contract:
    """Loose contract for a function too complex to treat precisely. Always
    returns a contract: when the model is unreachable or keeps misformatting,
    the scan-based fallback takes over."""
    req = SynthesisRequest(
        function=f,
        property_text=property_text,
        intent=SynthesisIntent.OVERAPPROXIMATE,
        known_globals=known_globals,
    )
    try:
        result = synthesize(req, client, retries=retries, log=log)
    except ClientUnavailableError:
        result = None
    if isinstance(result, Contract):
        return result
    fallback = heuristic_fallback(f, known_globals)
    if log is not None:
        log.event("synthesis", function=f.name, intent=SynthesisIntent.OVERAPPROXIMATE.value,
                  attempt=-1, prompt="", outcome="fallback", reason=None)
    return fallback


def render_examples(db: IceDatabase, function: str) -> str:
    """Full example sets for a cegis prompt. All functions' examples are shown;
    the target function's own come first."""
    lines: List[str] = []

    def pool(title: str, pool_list: List[StateExample]) -> None:
        lines.append(title)
        ordered = [e for e in pool_list if e.function == function]
        ordered += [e for e in pool_list if e.function != function]
        if not ordered:
            lines.append("  (none)")
        for ex in ordered:
            lines.append(f"  {ex.function}: {ex.render()}")

    pool("Known-good states (E+):", db.positives)
    pool("Known-bad states (E-):", db.negatives)
    lines.append("Implication pairs:")
    if db.implications:
        for pre, post in db.implications:
            lines.append(f"  {pre.function}: {{{pre.render()}}} -> {{{post.render()}}}")
    else:
        lines.append("  (none)")
    return "\n".join(lines)


def _example_env(ex: StateExample) -> Dict[str, int]:
    env: Dict[str, int] = {}
    for name, value in ex.items:
        try:
            env[name] = int(value, 10)
        except ValueError:
            continue
    return env


def check_example_consistency(c: Contract, db: IceDatabase) -> List[str]:
    """Best-effort warnings: a contract clause evaluating false on a known-good
    state, or every clause true on a known-bad one. Non-evaluable clauses are
    skipped; this is advice for the log, not a gate."""
    warnings: List[str] = []
    clauses = list(c.requires) + list(c.ensures)
    for ex in db.positive_for(c.function):
        env = _example_env(ex)
        for clause in clauses:
            verdict = cexpr.try_evaluate_bool(clause, env)
            if verdict is False:
                warnings.append(
                    f"clause ({clause}) excludes known-good state {{{ex.render()}}}"
                )
    for ex in db.negative_for(c.function):
        env = _example_env(ex)
        verdicts = [cexpr.try_evaluate_bool(cl, env) for cl in clauses]
        if verdicts and all(v is True for v in verdicts):
            warnings.append(
                f"contract admits known-bad state {{{ex.render()}}}"
            )
    return warnings


def cegis_synthesize(
    req: SynthesisRequest,
    client: LlmClient,
    db: IceDatabase,
    retries: int = PARSE_RETRIES,
    log: Optional[RunLog] = None,
) -> Union[Contract, ParseFailure]:
    """Example-conditioned synthesis. Example-inconsistent replies are accepted
    but flagged in the log; the verifier has the final word anyway."""
    from dataclasses import replace as dc_replace
    full_req = dc_replace(req, intent=SynthesisIntent.CEGIS,
                          examples=render_examples(db, req.function.name))
    result = synthesize(full_req, client, retries=retries, log=log)
    if isinstance(result, Contract) and log is not None:
        for warning in check_example_consistency(result, db):
            log.event("example_inconsistency", function=req.function.name, detail=warning)
    return result
