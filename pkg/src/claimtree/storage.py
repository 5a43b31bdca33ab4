"""On-disk layout: one directory per topic.

    <data_dir>/<topic_id>/
        review.json          topic id + title
        studies.jsonl        one study per line
        claims.jsonl         one claim per line
        hierarchies/*.json   one document per hierarchy (+ .outline.txt audit)
        feedback/task{1,2,3}.jsonl   exported instances
        labels.jsonl         ingested label records
        reports/*.json       machine-readable reports
        manifest.json        run manifest (config + input digests, warnings)

All JSON is written deterministically (sorted keys) so replayed pipeline
runs are byte-identical.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable

from .core import Claim, Hierarchy, ReviewSet, SCHEMA_VERSION, Study, dumps_hierarchy, loads_hierarchy
from .errors import ConfigError, UnknownTopic
from .feedback import LabelStore, TASKS


def dumps_canonical(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_canonical(obj), encoding="utf-8")


def read_json(path: Path) -> Any:
    return json.loads(path.read_text(encoding="utf-8"))


def write_jsonl(path: Path, rows: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True, ensure_ascii=False) + "\n")


def read_jsonl(path: Path) -> list[dict]:
    rows = []
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class TopicDir:
    """Paths and load/save helpers for one topic directory."""

    def __init__(self, root: Path):
        self.root = Path(root)
        self.topic_id = self.root.name

    @property
    def review_file(self) -> Path:
        return self.root / "review.json"

    @property
    def studies_file(self) -> Path:
        return self.root / "studies.jsonl"

    @property
    def claims_file(self) -> Path:
        return self.root / "claims.jsonl"

    @property
    def hierarchies_dir(self) -> Path:
        return self.root / "hierarchies"

    @property
    def feedback_dir(self) -> Path:
        return self.root / "feedback"

    @property
    def labels_file(self) -> Path:
        return self.root / "labels.jsonl"

    @property
    def reports_dir(self) -> Path:
        return self.root / "reports"

    @property
    def manifest_file(self) -> Path:
        return self.root / "manifest.json"

    def instance_file(self, task: int) -> Path:
        return self.feedback_dir / f"task{task}.jsonl"

    def exists(self) -> bool:
        return self.studies_file.exists()

    def load_review_set(self) -> ReviewSet:
        if not self.studies_file.exists():
            raise ConfigError(f"no studies.jsonl under {self.root}")
        meta = {}
        if self.review_file.exists():
            meta = read_json(self.review_file)
        studies = tuple(Study.from_dict(row) for row in read_jsonl(self.studies_file))
        claims: tuple[Claim, ...] = ()
        if self.claims_file.exists():
            claims = tuple(Claim.from_dict(row) for row in read_jsonl(self.claims_file))
        return ReviewSet(
            id=meta.get("id", self.topic_id),
            title=meta.get("title", self.topic_id),
            studies=studies,
            claims=claims,
        )

    def save_review_meta(self, review_set: ReviewSet) -> None:
        write_json(
            self.review_file,
            {"schema_version": SCHEMA_VERSION, "id": review_set.id, "title": review_set.title},
        )

    def save_studies(self, review_set: ReviewSet) -> None:
        write_jsonl(self.studies_file, (s.to_dict() for s in review_set.studies))

    def save_claims(self, review_set: ReviewSet) -> None:
        write_jsonl(self.claims_file, (c.to_dict() for c in review_set.claims))

    def save_hierarchy(self, hierarchy: Hierarchy, outline_text: str | None = None) -> Path:
        self.hierarchies_dir.mkdir(parents=True, exist_ok=True)
        path = self.hierarchies_dir / f"{hierarchy.id}.json"
        path.write_text(dumps_hierarchy(hierarchy), encoding="utf-8")
        if outline_text is not None:
            (self.hierarchies_dir / f"{hierarchy.id}.outline.txt").write_text(
                outline_text, encoding="utf-8"
            )
        return path

    def load_hierarchies(self) -> list[Hierarchy]:
        if not self.hierarchies_dir.exists():
            return []
        return [
            loads_hierarchy(path.read_text(encoding="utf-8"))
            for path in sorted(self.hierarchies_dir.glob("*.json"))
        ]

    def save_instances(self, task: int, instances: Iterable) -> None:
        write_jsonl(self.instance_file(task), (inst.to_dict() for inst in instances))

    def load_instance_rows(self, task: int) -> list[dict]:
        path = self.instance_file(task)
        return read_jsonl(path) if path.exists() else []

    def open_label_store(self) -> LabelStore:
        store = LabelStore(path=self.labels_file)
        for task in TASKS:
            store.register_instances(
                task, (row["instance_key"] for row in self.load_instance_rows(task))
            )
        return store

    def save_report(self, name: str, report: dict) -> Path:
        path = self.reports_dir / f"{name}.json"
        write_json(path, report)
        return path


class Workspace:
    """All topic directories under one data directory."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        if not self.data_dir.is_dir():
            raise ConfigError(f"data directory {self.data_dir} does not exist")

    def topic_ids(self) -> list[str]:
        return sorted(
            child.name
            for child in self.data_dir.iterdir()
            if child.is_dir() and TopicDir(child).exists()
        )

    def topic(self, topic_id: str) -> TopicDir:
        topic = TopicDir(self.data_dir / topic_id)
        if not topic.root.is_dir():
            raise UnknownTopic(topic_id)
        return topic

    def topics(self, topic_ids: Iterable[str] | None = None) -> list[TopicDir]:
        ids = list(topic_ids) if topic_ids else self.topic_ids()
        return [self.topic(topic_id) for topic_id in ids]
