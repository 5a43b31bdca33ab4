"""Correction sub-task instances, label ingestion, and agreement statistics.

Three sub-tasks per hierarchy: (1) judge each parent-child category link,
(2) judge whether each multi-child sibling group is coherent, and (3) judge
every (claim, category) pair for relevance. Instance keys are stable digests
of the identifying fields so label files survive re-emission.
"""

from __future__ import annotations

import hashlib
import json
import threading
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .core import Claim, Hierarchy, iter_nodes, normalize_path
from .errors import DegenerateAgreement, NoOverlap

TASK_PARENT_CHILD = 1
TASK_SIBLING_GROUP = 2
TASK_CLAIM_CATEGORY = 3
TASKS = (TASK_PARENT_CHILD, TASK_SIBLING_GROUP, TASK_CLAIM_CATEGORY)


class Task1Label(str, Enum):
    HYPERNYM_HYPONYM = "hypernym_hyponym"
    USEFUL_BREAKDOWN = "useful_breakdown"
    UNRELATED = "unrelated"


# Positive task-1 labels: the link is valid either as true hypernymy or as a
# useful decomposition of the parent.
POSITIVE_TASK1_LABELS = frozenset(
    {Task1Label.HYPERNYM_HYPONYM.value, Task1Label.USEFUL_BREAKDOWN.value}
)


def instance_key(
    task: int,
    hierarchy_id: str,
    path: Sequence[str],
    claim_index: int | None = None,
) -> str:
    """Stable digest of (task, hierarchy, canonical path[, claim index])."""
    payload: list[Any] = [task, hierarchy_id, list(normalize_path(path))]
    if claim_index is not None:
        payload.append(claim_index)
    canonical = json.dumps(payload, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ParentChildInstance:
    """One tree edge: is the child a valid sub-category of the parent?"""

    hierarchy_id: str
    parent_path: tuple[str, ...]
    child: str

    @property
    def key(self) -> str:
        return instance_key(
            TASK_PARENT_CHILD, self.hierarchy_id, self.parent_path + (self.child,)
        )

    def to_dict(self) -> dict:
        return {
            "task": TASK_PARENT_CHILD,
            "instance_key": self.key,
            "hierarchy_id": self.hierarchy_id,
            "parent_path": list(self.parent_path),
            "child": self.child,
        }


@dataclass(frozen=True)
class SiblingGroupInstance:
    """All children of one parent: do they form a coherent peer group?"""

    hierarchy_id: str
    parent_path: tuple[str, ...]
    children: tuple[str, ...]

    @property
    def key(self) -> str:
        return instance_key(TASK_SIBLING_GROUP, self.hierarchy_id, self.parent_path)

    def to_dict(self) -> dict:
        return {
            "task": TASK_SIBLING_GROUP,
            "instance_key": self.key,
            "hierarchy_id": self.hierarchy_id,
            "parent_path": list(self.parent_path),
            "children": list(self.children),
        }


@dataclass(frozen=True)
class ClaimCategoryInstance:
    """One (claim, category) pair; the category path starts at the root so
    annotators see the full context."""

    hierarchy_id: str
    claim_index: int
    category_path: tuple[str, ...]

    @property
    def key(self) -> str:
        return instance_key(
            TASK_CLAIM_CATEGORY, self.hierarchy_id, self.category_path, self.claim_index
        )

    def to_dict(self) -> dict:
        return {
            "task": TASK_CLAIM_CATEGORY,
            "instance_key": self.key,
            "hierarchy_id": self.hierarchy_id,
            "claim_index": self.claim_index,
            "category_path": list(self.category_path),
        }


def emit_task1(hierarchy: Hierarchy) -> list[ParentChildInstance]:
    """One instance per tree edge, pre-order; count = node count - 1."""
    instances = []
    for path, node in iter_nodes(hierarchy):
        for child in node.children:
            instances.append(
                ParentChildInstance(
                    hierarchy_id=hierarchy.id, parent_path=path, child=child.name
                )
            )
    return instances


def emit_task2(hierarchy: Hierarchy) -> list[SiblingGroupInstance]:
    """One instance per internal node with at least two children;
    single-child parents are excluded."""
    instances = []
    for path, node in iter_nodes(hierarchy):
        if len(node.children) >= 2:
            instances.append(
                SiblingGroupInstance(
                    hierarchy_id=hierarchy.id,
                    parent_path=path,
                    children=tuple(child.name for child in node.children),
                )
            )
    return instances


def emit_task3(
    hierarchy: Hierarchy, claims: Sequence[Claim]
) -> list[ClaimCategoryInstance]:
    """|claims| x |non-root categories| instances, claim-major order.

    The root is the hierarchy's topic frame, not an assignable category, so
    it is excluded as a target; it still prefixes every category path.
    """
    category_paths = [path for path, _ in iter_nodes(hierarchy)][1:]
    return [
        ClaimCategoryInstance(
            hierarchy_id=hierarchy.id, claim_index=claim.index, category_path=path
        )
        for claim in claims
        for path in category_paths
    ]


# --- label records and store -------------------------------------------------


@dataclass(frozen=True)
class LabelRecord:
    task: int
    instance_key: str
    annotator: str
    label: Any  # task 1: str; task 2: {child: bool}; task 3: bool
    timestamp: str | None = None

    def to_dict(self) -> dict:
        data = {
            "task": self.task,
            "instance_key": self.instance_key,
            "annotator": self.annotator,
            "label": self.label,
        }
        if self.timestamp:
            data["timestamp"] = self.timestamp
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "LabelRecord":
        return cls(
            task=int(data["task"]),
            instance_key=str(data["instance_key"]),
            annotator=str(data["annotator"]),
            label=data["label"],
            timestamp=data.get("timestamp"),
        )


def validate_label_shape(task: int, label: Any) -> bool:
    if task == TASK_PARENT_CHILD:
        return label in {item.value for item in Task1Label}
    if task == TASK_SIBLING_GROUP:
        return (
            isinstance(label, Mapping)
            and len(label) > 0
            and all(isinstance(v, bool) for v in label.values())
        )
    if task == TASK_CLAIM_CATEGORY:
        return isinstance(label, bool)
    return False


@dataclass(frozen=True)
class Rejection:
    record: LabelRecord
    reason: str  # duplicate | unknown_instance | malformed_label | unknown_task


@dataclass
class IngestReport:
    accepted: int = 0
    rejections: list[Rejection] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": [
                {
                    "instance_key": r.record.instance_key,
                    "annotator": r.record.annotator,
                    "reason": r.reason,
                }
                for r in self.rejections
            ],
        }


class LabelStore:
    """Append-only store of label records, at most one per
    (task, instance, annotator). Writes are serialized by a lock; when a
    path is set, accepted records are flushed to disk before ingest returns.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._records: list[LabelRecord] = []
        self._by_key: dict[tuple[int, str, str], LabelRecord] = {}
        self._known: dict[int, set[str]] = {task: set() for task in TASKS}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        self._admit(LabelRecord.from_dict(json.loads(line)))

    def _admit(self, record: LabelRecord) -> None:
        self._records.append(record)
        self._by_key[(record.task, record.instance_key, record.annotator)] = record

    def register_instances(self, task: int, keys: Iterable[str]) -> None:
        self._known[task].update(keys)

    @property
    def records(self) -> tuple[LabelRecord, ...]:
        return tuple(self._records)

    def known_keys(self, task: int) -> frozenset[str]:
        return frozenset(self._known[task])

    def get(self, task: int, key: str, annotator: str) -> LabelRecord | None:
        return self._by_key.get((task, key, annotator))

    def labels_for(self, task: int, key: str) -> dict[str, Any]:
        return {
            record.annotator: record.label
            for record in self._records
            if record.task == task and record.instance_key == key
        }

    def annotator_labels(self, task: int, annotator: str) -> dict[str, Any]:
        return {
            record.instance_key: record.label
            for record in self._records
            if record.task == task and record.annotator == annotator
        }

    def labeled_keys(self, task: int, annotator: str | None = None) -> set[str]:
        return {
            record.instance_key
            for record in self._records
            if record.task == task
            and (annotator is None or record.annotator == annotator)
        }

    def progress(self) -> dict:
        per_annotator: Counter[str] = Counter(r.annotator for r in self._records)
        return {
            "tasks": {
                str(task): {
                    "labeled": len(self.labeled_keys(task)),
                    "total": len(self._known[task]),
                }
                for task in TASKS
            },
            "annotators": dict(sorted(per_annotator.items())),
        }

    def ingest(self, records: Iterable[LabelRecord]) -> IngestReport:
        """Validate and append records; duplicates and unknown instances are
        rejected and reported, never raised."""
        report = IngestReport()
        with self._lock:
            accepted: list[LabelRecord] = []
            for record in records:
                if record.task not in TASKS:
                    report.rejections.append(Rejection(record, "unknown_task"))
                    continue
                if not validate_label_shape(record.task, record.label):
                    report.rejections.append(Rejection(record, "malformed_label"))
                    continue
                if record.instance_key not in self._known[record.task]:
                    report.rejections.append(Rejection(record, "unknown_instance"))
                    continue
                if (record.task, record.instance_key, record.annotator) in self._by_key:
                    report.rejections.append(Rejection(record, "duplicate"))
                    continue
                self._admit(record)
                accepted.append(record)
                report.accepted += 1
            if accepted and self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    for record in accepted:
                        fh.write(json.dumps(record.to_dict(), ensure_ascii=False) + "\n")
                    fh.flush()
        return report


# --- agreement statistics ------------------------------------------------------


def match_rate(labels_a: Mapping[str, Any], labels_b: Mapping[str, Any]) -> float:
    """Fraction of jointly labeled instances with identical labels."""
    common = labels_a.keys() & labels_b.keys()
    if not common:
        raise NoOverlap("annotators share no labeled instances")
    matches = sum(1 for key in common if labels_a[key] == labels_b[key])
    return matches / len(common)


def fleiss_kappa(rating_matrix: Sequence[Sequence[int]]) -> float:
    """Multi-rater chance-corrected agreement over an items x categories
    count matrix with a constant number of raters per item."""
    if not rating_matrix:
        raise ValueError("rating matrix must have at least one item")
    widths = {len(row) for row in rating_matrix}
    if len(widths) != 1:
        raise ValueError("all rows must have the same number of categories")
    if any(count < 0 for row in rating_matrix for count in row):
        raise ValueError("rating counts must be non-negative")
    raters = {sum(row) for row in rating_matrix}
    if len(raters) != 1:
        raise ValueError("rater count must be constant across items")
    r = raters.pop()
    if r < 2:
        raise ValueError("at least two raters per item are required")

    n = len(rating_matrix)
    k = len(rating_matrix[0])
    per_item = [
        (sum(count * count for count in row) - r) / (r * (r - 1))
        for row in rating_matrix
    ]
    observed = sum(per_item) / n
    proportions = [sum(row[j] for row in rating_matrix) / (n * r) for j in range(k)]
    expected = sum(p * p for p in proportions)
    if expected == 1.0:
        raise DegenerateAgreement(
            "every rating falls in one category; chance agreement is 1"
        )
    return (observed - expected) / (1.0 - expected)


def majority_label(values: Sequence[Any], negative: Any) -> Any:
    """Majority vote; any tie for the top count resolves to `negative`
    (false positives are cheaper to fix downstream than recall errors)."""
    counts = Counter(_hashable(v) for v in values)
    top = counts.most_common()
    if len(top) > 1 and top[0][1] == top[1][1]:
        return negative
    winner = top[0][0]
    for value in values:
        if _hashable(value) == winner:
            return value
    return negative


def _hashable(value: Any) -> Any:
    if isinstance(value, Mapping):
        return tuple(sorted(value.items()))
    return value


def resolve_task1_gold(store: LabelStore) -> dict[str, str]:
    return {
        key: majority_label(
            list(store.labels_for(TASK_PARENT_CHILD, key).values()),
            Task1Label.UNRELATED.value,
        )
        for key in store.labeled_keys(TASK_PARENT_CHILD)
    }


def resolve_task2_gold(store: LabelStore) -> dict[str, dict[str, bool]]:
    """Per-child majority over annotators; ties resolve to incoherent."""
    resolved: dict[str, dict[str, bool]] = {}
    for key in store.labeled_keys(TASK_SIBLING_GROUP):
        flag_maps = list(store.labels_for(TASK_SIBLING_GROUP, key).values())
        children = sorted({child for flags in flag_maps for child in flags})
        resolved[key] = {
            child: majority_label(
                [flags[child] for flags in flag_maps if child in flags], False
            )
            for child in children
        }
    return resolved


def resolve_task3_gold(store: LabelStore) -> dict[str, bool]:
    return {
        key: majority_label(
            list(store.labels_for(TASK_CLAIM_CATEGORY, key).values()), False
        )
        for key in store.labeled_keys(TASK_CLAIM_CATEGORY)
    }
