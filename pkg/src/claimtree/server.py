"""HTTP annotation API backing the browser review UI.

Endpoints:
    GET  /api/tasks/{task}/next?annotator=ID   next instance that annotator
                                               has not labeled yet
    POST /api/labels                           one label record
    GET  /api/progress                         per-task labeled/total counts
    GET  /api/hierarchies/{id}                 hierarchy JSON for context

Labels are persisted before the 200 response is sent; all writes funnel
through one lock, so an acknowledged label is never lost.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .core import Hierarchy, ReviewSet
from .feedback import LabelRecord, LabelStore, TASKS, validate_label_shape
from .storage import Workspace


@dataclass
class _InstanceEntry:
    topic_id: str
    task: int
    key: str
    payload: dict


@dataclass
class AnnotationState:
    """Everything the API serves: exported instances in a stable global
    order, one label store per topic, and hierarchy/claim lookups."""

    stores: dict[str, LabelStore] = field(default_factory=dict)
    instances: dict[int, list[_InstanceEntry]] = field(
        default_factory=lambda: {task: [] for task in TASKS}
    )
    key_to_topic: dict[tuple[int, str], str] = field(default_factory=dict)
    hierarchies: dict[str, Hierarchy] = field(default_factory=dict)
    write_lock: threading.Lock = field(default_factory=threading.Lock)

    @classmethod
    def from_workspace(cls, workspace: Workspace) -> "AnnotationState":
        state = cls()
        for topic in workspace.topics():
            review_set = topic.load_review_set()
            claim_text = {claim.index: claim.text for claim in review_set.claims}
            state.stores[topic.topic_id] = topic.open_label_store()
            for hierarchy in topic.load_hierarchies():
                state.hierarchies[hierarchy.id] = hierarchy
            for task in TASKS:
                for row in topic.load_instance_rows(task):
                    payload = dict(row)
                    if task == 3:
                        payload["claim_text"] = claim_text.get(row["claim_index"], "")
                    key = row["instance_key"]
                    state.instances[task].append(
                        _InstanceEntry(topic.topic_id, task, key, payload)
                    )
                    state.key_to_topic[(task, key)] = topic.topic_id
        return state

    def progress(self) -> dict:
        tasks = {
            str(task): {"labeled": 0, "total": 0} for task in TASKS
        }
        annotators: dict[str, int] = {}
        for store in self.stores.values():
            part = store.progress()
            for task, counts in part["tasks"].items():
                tasks[task]["labeled"] += counts["labeled"]
                tasks[task]["total"] += counts["total"]
            for annotator, count in part["annotators"].items():
                annotators[annotator] = annotators.get(annotator, 0) + count
        return {"tasks": tasks, "annotators": dict(sorted(annotators.items()))}


def create_app(state: AnnotationState) -> FastAPI:
    app = FastAPI(title="claimtree annotation API")

    @app.get("/api/tasks/{task}/next")
    def next_instance(task: int, annotator: str = ""):
        if task not in TASKS:
            return JSONResponse({"error": "unknown_task"}, status_code=404)
        if not annotator:
            return JSONResponse({"error": "annotator_required"}, status_code=400)
        pending = [
            entry
            for entry in state.instances[task]
            if state.stores[entry.topic_id].get(task, entry.key, annotator) is None
        ]
        if not pending:
            return {"task": task, "done": True, "remaining": 0, "instance": None}
        entry = pending[0]
        return {
            "task": task,
            "done": False,
            "remaining": len(pending),
            "instance_key": entry.key,
            "hierarchy_id": entry.payload.get("hierarchy_id"),
            "instance": entry.payload,
        }

    @app.post("/api/labels")
    async def post_label(request: Request):
        try:
            body = await request.json()
        except Exception:
            return JSONResponse({"error": "invalid_json"}, status_code=400)
        if not isinstance(body, dict):
            return JSONResponse({"error": "invalid_body"}, status_code=400)
        missing = [k for k in ("task", "instance_key", "annotator", "label") if k not in body]
        if missing:
            return JSONResponse(
                {"error": "missing_fields", "fields": missing}, status_code=400
            )
        try:
            task = int(body["task"])
        except (TypeError, ValueError):
            return JSONResponse({"error": "bad_task"}, status_code=400)
        if task not in TASKS or not validate_label_shape(task, body["label"]):
            return JSONResponse({"error": "malformed_label"}, status_code=400)

        key = str(body["instance_key"])
        topic_id = state.key_to_topic.get((task, key))
        if topic_id is None:
            return JSONResponse({"error": "unknown_instance"}, status_code=404)
        record = LabelRecord(
            task=task,
            instance_key=key,
            annotator=str(body["annotator"]),
            label=body["label"],
        )
        with state.write_lock:
            report = state.stores[topic_id].ingest([record])
        if report.accepted == 1:
            return {"status": "ok", "instance_key": key}
        reason = report.rejections[0].reason
        if reason == "duplicate":
            return JSONResponse({"error": "duplicate", "instance_key": key}, status_code=409)
        if reason == "unknown_instance":
            return JSONResponse({"error": "unknown_instance"}, status_code=404)
        return JSONResponse({"error": reason}, status_code=400)

    @app.get("/api/progress")
    def progress():
        return state.progress()

    @app.get("/api/hierarchies/{hierarchy_id}")
    def hierarchy(hierarchy_id: str):
        found = state.hierarchies.get(hierarchy_id)
        if found is None:
            return JSONResponse({"error": "unknown_hierarchy"}, status_code=404)
        return found.to_dict()

    return app
