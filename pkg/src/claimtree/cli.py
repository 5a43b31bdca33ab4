"""Command-line entry points for every pipeline stage.

Exit codes: 0 success, 1 config/input error, 2 incomplete labels,
3 backend failure.
"""

from __future__ import annotations

import functools
import hashlib
import json
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import click

from . import corrector, evaluation, feedback, pregen, proposal
from .backend import (
    Backend,
    HttpBackend,
    RecordingBackend,
    ReplayBackend,
    ReplayStore,
)
from .core import ReviewSet, SCHEMA_VERSION, dumps_hierarchy, normalize_path
from .errors import (
    BackendError,
    ClaimTreeError,
    ConfigError,
    MissingLabel,
    UnparseableResponse,
    ValidationFailed,
)
from .storage import Workspace, file_digest, read_json, write_json, write_jsonl

EXIT_CONFIG = 1
EXIT_INCOMPLETE_LABELS = 2
EXIT_BACKEND = 3


@dataclass
class ProjectConfig:
    data_dir: Path
    backend_id: str = "default"
    replay_store: Path | None = None
    record: bool = False
    coverage_threshold: float = proposal.DEFAULT_COVERAGE_THRESHOLD
    entailment_threshold: float = 0.6
    verifier: str = "stub"  # stub | none | http:<url>
    split_config: Path | None = None
    max_in_flight: int = 4

    def __post_init__(self):
        if not 0 <= self.coverage_threshold <= 1:
            raise ConfigError("coverage_threshold must be in [0, 1]")
        if not 0 <= self.entailment_threshold <= 1:
            raise ConfigError("entailment_threshold must be in [0, 1]")
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if not self.data_dir.is_dir():
            raise ConfigError(f"data_dir {self.data_dir} does not exist")

    @classmethod
    def from_file(cls, path: str | Path) -> "ProjectConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} does not exist")
        try:
            raw = read_json(path)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from exc
        base = path.parent
        return cls(
            data_dir=(base / raw["data_dir"]).resolve(),
            backend_id=raw.get("backend_id", "default"),
            replay_store=(base / raw["replay_store"]).resolve() if raw.get("replay_store") else None,
            record=bool(raw.get("record", False)),
            coverage_threshold=float(raw.get("coverage_threshold", proposal.DEFAULT_COVERAGE_THRESHOLD)),
            entailment_threshold=float(raw.get("entailment_threshold", 0.6)),
            verifier=raw.get("verifier", "stub"),
            split_config=(base / raw["split_config"]).resolve() if raw.get("split_config") else None,
            max_in_flight=int(raw.get("max_in_flight", 4)),
        )

    def digest(self) -> str:
        canonical = json.dumps(
            {
                "backend_id": self.backend_id,
                "coverage_threshold": self.coverage_threshold,
                "entailment_threshold": self.entailment_threshold,
                "verifier": self.verifier,
                "max_in_flight": self.max_in_flight,
            },
            sort_keys=True,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


def build_backend(config: ProjectConfig) -> Backend:
    """Replay store without --record replays; with --record it wraps the
    remote backend; otherwise the remote is hit directly."""
    if config.replay_store is not None and not config.record:
        return ReplayBackend(ReplayStore(config.replay_store))
    remote = HttpBackend(config.backend_id)
    if config.replay_store is not None:
        return RecordingBackend(remote, ReplayStore(config.replay_store))
    return remote


def build_verifier(config: ProjectConfig):
    if config.verifier == "none":
        return None
    if config.verifier == "stub":
        return pregen.OverlapVerifier(threshold=config.entailment_threshold)
    if config.verifier.startswith("http"):
        return pregen.HttpVerifier(config.verifier)
    raise ConfigError(f"unknown verifier {config.verifier!r}")


def build_predictor(spec: str, config: ProjectConfig) -> corrector.Predictor:
    if spec == "constant:relevant":
        return corrector.ConstantPredictor(corrector.RELEVANT)
    if spec == "constant:irrelevant":
        return corrector.ConstantPredictor(corrector.IRRELEVANT)
    if spec.startswith("http:") or spec.startswith("https:"):
        return corrector.HttpPredictor(spec)
    if spec == "llm":
        return corrector.CotPredictor(build_backend(config), backend_id=config.backend_id)
    raise ConfigError(f"unknown predictor {spec!r}")


# --- pipeline runs -----------------------------------------------------------


def run_generate(
    config: ProjectConfig,
    topic_ids: Sequence[str] | None = None,
    backend: Backend | None = None,
    reuse_claims: bool = False,
) -> dict:
    """Pre-generation, hierarchy proposal, and the coverage filter for each
    topic; everything written is captured by a per-topic run manifest."""
    backend = backend or build_backend(config)
    verifier = build_verifier(config)
    workspace = Workspace(config.data_dir)
    # Wall-clock provenance only when recording; replayed runs must be
    # byte-identical.
    created_at = (
        datetime.now(timezone.utc).isoformat(timespec="seconds")
        if config.record
        else None
    )
    summary: dict = {"topics": {}}

    for topic in workspace.topics(topic_ids):
        review_set = topic.load_review_set()
        manifest: dict = {
            "schema_version": SCHEMA_VERSION,
            "topic": topic.topic_id,
            "config_digest": config.digest(),
            "input_digest": file_digest(topic.studies_file),
            "created_at": created_at,
        }
        decision = pregen.filter_review_set(review_set)
        manifest["filter"] = {
            "keep": decision.keep,
            "reason": decision.reason,
            "study_count": decision.study_count,
        }
        if not decision.keep:
            write_json(topic.manifest_file, manifest)
            summary["topics"][topic.topic_id] = {"skipped": decision.reason}
            continue

        if reuse_claims and review_set.claims:
            flagged: list[pregen.FlaggedStudy] = []
        else:
            review_set, flagged = pregen.generate_review_claims(
                review_set,
                backend,
                max_in_flight=config.max_in_flight,
                backend_id=config.backend_id,
            )
        manifest["flagged_studies"] = sorted(
            [{"study_id": f.study_id, "reason": f.reason} for f in flagged],
            key=lambda row: row["study_id"],
        )
        if not review_set.claims:
            # nothing to build on: a dead backend is fatal, parse noise is a
            # recorded per-topic failure
            backend_errors = [f.error for f in flagged if f.error is not None]
            if backend_errors:
                raise backend_errors[0]
            manifest["failures"] = [{"error": "no claims generated"}]
            write_json(topic.manifest_file, manifest)
            summary["topics"][topic.topic_id] = {"failed": "no_claims"}
            continue

        if verifier is not None:
            review_set, entailment = pregen.verify_review_entailment(review_set, verifier)
            manifest["entailment"] = entailment.to_dict()
        topic.save_review_meta(review_set)
        topic.save_claims(review_set)

        entities = pregen.extract_frequent_entities(review_set.studies)
        roots = proposal.generate_root_categories(
            review_set.title,
            review_set.claims,
            entities,
            backend,
            backend_id=config.backend_id,
        )
        manifest["root_categories"] = [root.name for root in roots]

        # Hierarchies are pipeline output; clear stale files before rewriting.
        if topic.hierarchies_dir.exists():
            for stale in topic.hierarchies_dir.iterdir():
                stale.unlink()

        results = []
        failures = []
        for i, root in enumerate(roots, start=1):
            hierarchy_id = f"{topic.topic_id}-h{i}"
            try:
                result = proposal.complete_hierarchy(
                    root,
                    review_set.claims,
                    backend,
                    review_id=review_set.id,
                    hierarchy_id=hierarchy_id,
                    backend_id=config.backend_id,
                    created_at=created_at,
                )
            except (UnparseableResponse, ValidationFailed) as exc:
                failures.append({"hierarchy_id": hierarchy_id, "error": str(exc)})
                continue
            results.append(result)
        kept = proposal.filter_low_coverage(
            [r.hierarchy for r in results],
            review_set.claims,
            threshold=config.coverage_threshold,
        )
        kept_ids = {h.id for h in kept}
        manifest["hierarchies"] = [
            {
                "id": r.hierarchy.id,
                "coverage": proposal.coverage(r.hierarchy, review_set.claims),
                "kept": r.hierarchy.id in kept_ids,
                "warnings": list(r.warnings),
            }
            for r in results
        ]
        manifest["failures"] = failures
        for result in results:
            if result.hierarchy.id in kept_ids:
                topic.save_hierarchy(result.hierarchy, result.outline_text)
        write_json(topic.manifest_file, manifest)
        summary["topics"][topic.topic_id] = {
            "claims": len(review_set.claims),
            "hierarchies_kept": len(kept),
            "hierarchies_dropped": len(results) - len(kept),
            "failures": len(failures),
        }
    return summary


def run_feedback_export(
    config: ProjectConfig, topic_ids: Sequence[str] | None = None
) -> dict:
    workspace = Workspace(config.data_dir)
    summary: dict = {}
    for topic in workspace.topics(topic_ids):
        review_set = topic.load_review_set()
        task1, task2, task3 = [], [], []
        for hierarchy in topic.load_hierarchies():
            task1.extend(feedback.emit_task1(hierarchy))
            task2.extend(feedback.emit_task2(hierarchy))
            task3.extend(feedback.emit_task3(hierarchy, review_set.claims))
        topic.save_instances(1, task1)
        topic.save_instances(2, task2)
        topic.save_instances(3, task3)
        summary[topic.topic_id] = {
            "task1": len(task1),
            "task2": len(task2),
            "task3": len(task3),
        }
    return summary


def run_feedback_ingest(
    config: ProjectConfig, topic_id: str, labels_path: Path
) -> feedback.IngestReport:
    workspace = Workspace(config.data_dir)
    topic = workspace.topic(topic_id)
    store = topic.open_label_store()
    records = []
    report = feedback.IngestReport()
    with labels_path.open(encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(feedback.LabelRecord.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                placeholder = feedback.LabelRecord(
                    task=0, instance_key=f"line {line_no}", annotator="", label=None
                )
                report.rejections.append(
                    feedback.Rejection(placeholder, f"malformed line {line_no}")
                )
    ingested = store.ingest(records)
    report.accepted = ingested.accepted
    report.rejections.extend(ingested.rejections)
    return report


def _task3_label_map(hierarchy, claims, resolved: dict) -> evaluation.LabelMap:
    label_map: dict = {}
    for instance in feedback.emit_task3(hierarchy, claims):
        if instance.key in resolved:
            label_map[(instance.claim_index, normalize_path(instance.category_path))] = resolved[
                instance.key
            ]
    return label_map


def run_eval(config: ProjectConfig, topic_ids: Sequence[str] | None = None) -> dict:
    """Corpus metrics for the three sub-tasks from resolved gold labels."""
    workspace = Workspace(config.data_dir)
    task1_labels: dict = {}
    task1_expected: set = set()
    task2_labels: dict = {}
    task2_expected: set = set()
    tp = fp = fn = 0

    for topic in workspace.topics(topic_ids):
        review_set = topic.load_review_set()
        hierarchies = topic.load_hierarchies()
        store = topic.open_label_store()
        gold1 = feedback.resolve_task1_gold(store)
        gold2 = feedback.resolve_task2_gold(store)
        gold3 = feedback.resolve_task3_gold(store)
        task1_labels.update(gold1)
        task2_labels.update(gold2)
        for hierarchy in hierarchies:
            task1_expected.update(i.key for i in feedback.emit_task1(hierarchy))
            task2_expected.update(i.key for i in feedback.emit_task2(hierarchy))
            label_map = _task3_label_map(hierarchy, review_set.claims, gold3)
            prf = evaluation.score_claim_assignment(hierarchy, review_set.claims, label_map)
            tp += prf.tp
            fp += prf.fp
            fn += prf.fn

    task1 = evaluation.score_task1(task1_labels, expected_keys=task1_expected)
    task2 = evaluation.score_task2(task2_labels, expected_keys=task2_expected)
    task3 = evaluation.PRF.from_counts(tp, fp, fn)
    report = {
        "task1": task1.to_dict(),
        "task2": task2.to_dict(),
        "task3": task3.to_dict(),
    }
    reports_dir = Path(config.data_dir) / "reports"
    write_json(reports_dir / "eval.json", report)
    return report


def run_stats(config: ProjectConfig, topic_ids: Sequence[str] | None = None) -> dict:
    workspace = Workspace(config.data_dir)
    review_sets: list[ReviewSet] = []
    hierarchies = []
    repeats: dict = {}
    for topic in workspace.topics(topic_ids):
        review_set = topic.load_review_set()
        topic_hierarchies = topic.load_hierarchies()
        review_sets.append(review_set)
        hierarchies.extend(topic_hierarchies)
        if len(topic_hierarchies) >= 2:
            repeated = evaluation.repeated_categories(topic_hierarchies)
            if repeated:
                repeats[topic.topic_id] = repeated
    stats = evaluation.structural_stats(hierarchies, review_sets)
    report = stats.to_dict()
    report["repeated_categories"] = repeats
    write_json(Path(config.data_dir) / "reports" / "stats.json", report)
    return report


def run_correct(
    config: ProjectConfig,
    predictor: corrector.Predictor,
    topic_ids: Sequence[str] | None = None,
) -> dict:
    workspace = Workspace(config.data_dir)
    summary: dict = {}
    for topic in workspace.topics(topic_ids):
        review_set = topic.load_review_set()
        store = topic.open_label_store()
        gold3 = feedback.resolve_task3_gold(store)
        reports = {}
        for hierarchy in topic.load_hierarchies():
            label_map = _task3_label_map(hierarchy, review_set.claims, gold3) or None
            result = corrector.apply_corrector(
                hierarchy, review_set.claims, predictor, gold=label_map
            )
            corrected_dir = topic.root / "corrected"
            corrected_dir.mkdir(parents=True, exist_ok=True)
            (corrected_dir / f"{hierarchy.id}.json").write_text(
                dumps_hierarchy(result.hierarchy), encoding="utf-8"
            )
            reports[hierarchy.id] = result.report.to_dict()
        topic.save_report("correct", reports)
        summary[topic.topic_id] = reports
    return summary


def run_noise(
    config: ProjectConfig,
    topic_id: str,
    foreign_topic_ids: Sequence[str],
    n: int = 5,
    apply: bool = False,
) -> dict:
    workspace = Workspace(config.data_dir)
    topic = workspace.topic(topic_id)
    review_set = topic.load_review_set()
    foreign = []
    for other_id in foreign_topic_ids:
        if other_id == topic_id:
            raise ConfigError("foreign claims must come from other topics")
        foreign.extend(workspace.topic(other_id).load_review_set().claims)
    augmented = evaluation.inject_noise(review_set, foreign, n=n)
    rows = [claim.to_dict() for claim in augmented.claims]
    target = topic.claims_file if apply else topic.root / "claims.noisy.jsonl"
    write_jsonl(target, rows)
    report = evaluation.injected_assignment_report(augmented, topic.load_hierarchies())
    topic.save_report("noise", report)
    return report


def run_split(config: ProjectConfig, split_path: Path | None = None) -> dict:
    path = split_path or config.split_config
    if path is None:
        raise ConfigError("no split config given (--split or config.split_config)")
    split_config = evaluation.SplitConfig.from_file(path)
    workspace = Workspace(config.data_dir)
    topics = {}
    for topic in workspace.topics():
        review_set = topic.load_review_set()
        topics[topic.topic_id] = (review_set, topic.load_hierarchies())
    counts = evaluation.split_dataset(topics, split_config)
    write_json(Path(config.data_dir) / "reports" / "splits.json", counts)
    return counts


# --- click wiring ------------------------------------------------------------


def _exit_code(exc: ClaimTreeError) -> int:
    if isinstance(exc, MissingLabel):
        return EXIT_INCOMPLETE_LABELS
    if isinstance(exc, BackendError):
        return EXIT_BACKEND
    return EXIT_CONFIG


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ClaimTreeError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(_exit_code(exc))

    return wrapper


config_option = click.option(
    "--config", "config_path", required=True, type=click.Path(), help="Project config JSON."
)


def _load(config_path: str, **overrides) -> ProjectConfig:
    config = ProjectConfig.from_file(config_path)
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    return config


@click.group()
def main():
    """Organize related studies into labeled concept hierarchies, collect
    expert corrections, and evaluate or repair the results.

    Remote backends read credentials from the environment:
    CLAIMTREE_<BACKEND_ID>_URL and CLAIMTREE_<BACKEND_ID>_KEY.
    """


@main.command()
@config_option
@click.argument("topics", nargs=-1)
@click.option("--backend", "backend_id", default=None, help="Backend id override.")
@click.option("--replay", type=click.Path(), default=None, help="Replay store path.")
@click.option("--record", is_flag=True, default=None, help="Record remote responses.")
@click.option("--coverage-threshold", type=float, default=None)
@click.option("--reuse-claims", is_flag=True, help="Keep existing claims.jsonl.")
@handle_errors
def generate(config_path, topics, backend_id, replay, record, coverage_threshold, reuse_claims):
    """Generate claims and hierarchies for topics (all topics by default)."""
    config = _load(
        config_path,
        backend_id=backend_id,
        replay_store=Path(replay) if replay else None,
        record=record,
        coverage_threshold=coverage_threshold,
    )
    summary = run_generate(config, topics or None, reuse_claims=reuse_claims)
    for topic_id, info in summary["topics"].items():
        click.echo(f"{topic_id}: {json.dumps(info, sort_keys=True)}")


@main.command("feedback-export")
@config_option
@click.argument("topics", nargs=-1)
@handle_errors
def feedback_export(config_path, topics):
    """Write the three per-task instance files for each topic."""
    summary = run_feedback_export(_load(config_path), topics or None)
    for topic_id, counts in summary.items():
        click.echo(
            f"{topic_id}: task1={counts['task1']} task2={counts['task2']} task3={counts['task3']}"
        )


@main.command("feedback-ingest")
@config_option
@click.argument("topic")
@click.argument("labels_file", type=click.Path(exists=True))
@handle_errors
def feedback_ingest(config_path, topic, labels_file):
    """Validate and append label records from a JSONL file."""
    report = run_feedback_ingest(_load(config_path), topic, Path(labels_file))
    click.echo(f"accepted: {report.accepted}")
    for rejection in report.rejections:
        click.echo(
            f"rejected ({rejection.reason}): {rejection.record.instance_key}", err=True
        )


@main.command("eval")
@config_option
@click.argument("topics", nargs=-1)
@handle_errors
def eval_command(config_path, topics):
    """Score the pipeline against expert labels (Tasks 1-3)."""
    try:
        report = run_eval(_load(config_path), topics or None)
    except MissingLabel as exc:
        click.echo(f"incomplete labels: {exc}", err=True)
        sys.exit(EXIT_INCOMPLETE_LABELS)
    click.echo(f"{'':10}{'precision':>10}{'recall':>10}{'f1':>10}")
    click.echo(f"{'task 1':10}{report['task1']['precision']:>10.3f}{'-':>10}{'-':>10}")
    click.echo(f"{'task 2':10}{report['task2']['precision']:>10.3f}{'-':>10}{'-':>10}")
    click.echo(
        f"{'task 3':10}{report['task3']['precision']:>10.3f}"
        f"{report['task3']['recall']:>10.3f}{report['task3']['f1']:>10.3f}"
    )


@main.command()
@config_option
@click.argument("topics", nargs=-1)
@handle_errors
def stats(config_path, topics):
    """Structural and semantic complexity statistics."""
    report = run_stats(_load(config_path), topics or None)

    def fmt(value):
        return "-" if value is None else (f"{value:.2f}" if isinstance(value, float) else str(value))

    click.echo(f"topics: {report['n_topics']}  hierarchies: {report['n_hierarchies']}")
    click.echo(f"depth  mean {fmt(report['depth']['mean'])}  max {fmt(report['depth']['max'])}")
    click.echo(f"arity  mean {fmt(report['arity']['mean'])}  max {fmt(report['arity']['max'])}")
    click.echo(f"claims/hierarchy mean {fmt(report['claims_per_hierarchy_mean'])}")
    click.echo(f"uncategorized/topic mean {fmt(report['uncategorized_per_topic_mean'])}")
    if report["repeated_categories"]:
        click.echo(f"repeated categories: {json.dumps(report['repeated_categories'])}")


@main.command()
@config_option
@click.argument("topics", nargs=-1)
@click.option(
    "--predictor",
    "predictor_spec",
    default="constant:relevant",
    help="constant:relevant | constant:irrelevant | http://... | llm",
)
@handle_errors
def correct(config_path, topics, predictor_spec):
    """Apply a relevance predictor to repair claim assignments."""
    config = _load(config_path)
    predictor = build_predictor(predictor_spec, config)
    summary = run_correct(config, predictor, topics or None)
    for topic_id, reports in summary.items():
        for hierarchy_id, report in reports.items():
            rate = report["flip_rate"]
            click.echo(f"{hierarchy_id}: {report['flips']}/{report['total']} flips ({rate:.1%})")


@main.command()
@config_option
@click.argument("topic")
@click.option("--from", "foreign", multiple=True, required=True, help="Donor topic id.")
@click.option("-n", "count", type=int, default=5, show_default=True)
@click.option("--apply", "apply_", is_flag=True, help="Replace claims.jsonl in place.")
@handle_errors
def noise(config_path, topic, foreign, count, apply_):
    """Inject foreign claims into a topic to probe robustness."""
    report = run_noise(_load(config_path), topic, foreign, n=count, apply=apply_)
    click.echo(json.dumps(report, sort_keys=True))


@main.command()
@config_option
@click.option("--split", "split_path", type=click.Path(exists=True), default=None)
@handle_errors
def split(config_path, split_path):
    """Per-split instance counts for the three sub-tasks."""
    counts = run_split(_load(config_path), Path(split_path) if split_path else None)
    click.echo(f"{'split':12}{'task1':>8}{'task2':>8}{'task3':>8}")
    for name, row in counts.items():
        click.echo(f"{name:12}{row['task1']:>8}{row['task2']:>8}{row['task3']:>8}")


@main.command()
@config_option
@click.option("--port", type=int, default=8000, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@handle_errors
def serve(config_path, port, host):
    """Serve the annotation API (and the review UI against it)."""
    import uvicorn

    from .server import AnnotationState, create_app

    config = _load(config_path)
    state = AnnotationState.from_workspace(Workspace(config.data_dir))
    uvicorn.run(create_app(state), host=host, port=port)


if __name__ == "__main__":
    main()
