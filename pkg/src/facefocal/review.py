"""Human refinement of machine-generated region descriptions.

State machine per item: machine_generated -> {human_approved | human_edited |
human_rejected}; nothing else. Decisions land in an append-only audit log
that is replayed into memory at startup, and the dataset builder consumes
only non-rejected items.
"""

from __future__ import annotations

import json
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path

from .errors import ConflictError, FaceFocalError

PENDING = "machine_generated"
APPROVED = "human_approved"
EDITED = "human_edited"
REJECTED = "human_rejected"
STATUSES = (PENDING, APPROVED, EDITED, REJECTED)

ACTIONS = {"approve": APPROVED, "edit": EDITED, "reject": REJECTED}


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance; recorded with each edit for later policy calls."""
    if a == b:
        return 0
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


@dataclass
class AnnotationItem:
    region_id: str
    image_id: str
    region: tuple[float, float, float, float]
    task: str
    label: str | None
    description: str
    image_path: str
    status: str = PENDING


class AnnotationStore:
    """Annotations plus their decision log, replayed at startup.

    Writes are serialized by a lock; a decision on an already-decided item
    raises ConflictError (first write wins).
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.annotations_path = self.root / "annotations.jsonl"
        self.audit_path = self.root / "decisions.log"
        self._items: dict[str, AnnotationItem] = {}
        self._lock = threading.Lock()
        self._seq = 0
        self._load()

    def _load(self):
        if self.annotations_path.exists():
            with open(self.annotations_path) as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    row = json.loads(line)
                    row["region"] = tuple(row["region"])
                    item = AnnotationItem(**row)
                    self._items[item.region_id] = item
        if self.audit_path.exists():
            with open(self.audit_path) as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    entry = json.loads(line)
                    self._seq = max(self._seq, entry["seq"])
                    item = self._items.get(entry["region_id"])
                    if item is None:
                        continue
                    item.status = entry["new_status"]
                    if entry["action"] == "edit":
                        item.description = entry["edited_text"]

    def add(self, items: list[AnnotationItem], replace: bool = False):
        """Register machine-generated annotations and persist them."""
        with self._lock:
            for item in items:
                if item.region_id in self._items and not replace:
                    continue
                self._items[item.region_id] = item
            with open(self.annotations_path, "w") as fh:
                for rid in sorted(self._items):
                    fh.write(json.dumps(asdict(self._items[rid])) + "\n")

    def get(self, region_id: str) -> AnnotationItem:
        try:
            return self._items[region_id]
        except KeyError:
            raise FaceFocalError(f"unknown annotation {region_id!r}") from None

    def queue(self, limit: int | None = None) -> list[AnnotationItem]:
        pending = [self._items[r] for r in sorted(self._items) if self._items[r].status == PENDING]
        return pending[:limit] if limit else pending

    def stats(self) -> dict[str, int]:
        counts = {s: 0 for s in STATUSES}
        for item in self._items.values():
            counts[item.status] += 1
        return counts

    def decide(self, region_id: str, action: str, edited_text: str | None = None) -> AnnotationItem:
        if action not in ACTIONS:
            raise ValueError(f"unknown action {action!r}")
        if action == "edit" and not edited_text:
            raise ValueError("edit requires edited_text")
        with self._lock:
            item = self.get(region_id)
            if item.status != PENDING:
                raise ConflictError(
                    f"{region_id} already decided ({item.status}); refresh and retry"
                )
            new_status = ACTIONS[action]
            self._seq += 1
            entry = {
                "seq": self._seq,
                "region_id": region_id,
                "action": action,
                "prev_status": item.status,
                "new_status": new_status,
                "ts": time.time(),
            }
            if action == "edit":
                entry["edited_text"] = edited_text
                entry["edit_distance"] = edit_distance(item.description, edited_text)
            with open(self.audit_path, "a") as fh:
                fh.write(json.dumps(entry) + "\n")
                fh.flush()
            item.status = new_status
            if action == "edit":
                item.description = edited_text
            return item

    def audit_entries(self) -> list[dict]:
        if not self.audit_path.exists():
            return []
        with open(self.audit_path) as fh:
            return [json.loads(line) for line in fh if line.strip()]

    def usable_descriptions(self) -> dict[str, str]:
        """Descriptions the dataset builder may consume (non-rejected)."""
        return {
            rid: item.description
            for rid, item in self._items.items()
            if item.status != REJECTED
        }
