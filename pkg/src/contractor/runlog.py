"""Append-only event log for one pipeline run.

Events carry logical fields only; wall-clock numbers stay out so that a replay
run (replay client + mock backend) serializes to identical bytes every time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Dict, List


@dataclass
class RunLog:
    events: List[Dict[str, Any]] = field(default_factory=list)

    def event(self, kind: str, **fields: Any) -> None:
        entry: Dict[str, Any] = {"event": kind}
        entry.update(fields)
        self.events.append(entry)

    def of_kind(self, kind: str) -> List[Dict[str, Any]]:
        return [e for e in self.events if e["event"] == kind]

    def to_jsonl(self) -> str:
        return "\n".join(
            json.dumps(e, sort_keys=True, ensure_ascii=False) for e in self.events
        ) + ("\n" if self.events else "")

    def to_list(self) -> List[Dict[str, Any]]:
        return list(self.events)
