"""Evaluation layer: AND-over-path label aggregation, per-task metrics,
corpus complexity statistics, dataset splitting, and the noise probe.

Gold labels for claim categorization are judged per (claim, category) pair
but scored after conjoining every label on the root-to-category path: one
negative ancestor makes the whole assignment negative.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from statistics import mean
from typing import Any, Iterable, Mapping, Sequence

from .core import (
    Claim,
    Hierarchy,
    ReviewSet,
    attach_claims,
    depth,
    iter_nodes,
    normalize_name,
    normalize_path,
)
from .errors import (
    InsufficientForeignClaims,
    InvalidSplitConfig,
    MissingLabel,
    UnknownTopic,
)
from .feedback import (
    POSITIVE_TASK1_LABELS,
    emit_task1,
    emit_task2,
    emit_task3,
)

# Gold label map for claim categorization: (claim index, normalized category
# path from root) -> pair label.
LabelMap = Mapping[tuple[int, tuple[str, ...]], bool]


@dataclass(frozen=True)
class PRF:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "PRF":
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(precision=precision, recall=recall, f1=f1, tp=tp, fp=fp, fn=fn)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
        }


def aggregate_path_label(
    claim_index: int, category_path: Sequence[str], labels: LabelMap
) -> bool:
    """Conjoin pair labels from the shallowest labeled ancestor down to the
    target category. The root is context, not a labeled pair, so prefixes
    start at length 2. Raises MissingLabel naming the first unlabeled pair."""
    path = normalize_path(category_path)
    result = True
    for end in range(2, len(path) + 1):
        pair = (claim_index, path[:end])
        if pair not in labels:
            raise MissingLabel(pair)
        result = result and labels[pair]
    return result


def predicted_assignments(hierarchy: Hierarchy) -> set[tuple[int, tuple[str, ...]]]:
    """(claim, category) pairs the pipeline explicitly assigned: the claim
    index sits in that node's own refs (no propagation to ancestors)."""
    pairs: set[tuple[int, tuple[str, ...]]] = set()
    for path, node in iter_nodes(hierarchy):
        if len(path) == 1:
            continue
        for index in node.claim_refs:
            pairs.add((index, normalize_path(path)))
    return pairs


def category_paths(hierarchy: Hierarchy) -> list[tuple[str, ...]]:
    """Display-name paths of every non-root category, pre-order."""
    return [path for path, _ in iter_nodes(hierarchy)][1:]


def score_claim_assignment(
    hierarchy: Hierarchy, claims: Sequence[Claim], labels: LabelMap
) -> PRF:
    """Precision/recall/F1 of the hierarchy's claim assignments against
    path-aggregated gold labels over every (claim, category) pair."""
    predicted = predicted_assignments(hierarchy)
    tp = fp = fn = 0
    for path in category_paths(hierarchy):
        for claim in claims:
            gold = aggregate_path_label(claim.index, path, labels)
            pred = (claim.index, normalize_path(path)) in predicted
            if pred and gold:
                tp += 1
            elif pred and not gold:
                fp += 1
            elif gold:
                fn += 1
    return PRF.from_counts(tp, fp, fn)


@dataclass(frozen=True)
class Task1Score:
    precision: float
    n_links: int
    positives: int
    hypernym_fraction: float  # of positive links
    breakdown_fraction: float

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "n_links": self.n_links,
            "positives": self.positives,
            "composition": {
                "hypernym_hyponym": self.hypernym_fraction,
                "useful_breakdown": self.breakdown_fraction,
            },
        }


def score_task1(
    labels: Mapping[str, str], expected_keys: Iterable[str] | None = None
) -> Task1Score:
    """Fraction of parent-child links labeled positive, plus how the
    positives split between hypernymy and useful breakdowns."""
    _check_complete(labels, expected_keys)
    if not labels:
        raise MissingLabel("task 1 has no labels")
    values = list(labels.values())
    positives = sum(1 for v in values if v in POSITIVE_TASK1_LABELS)
    hypernym = sum(1 for v in values if v == "hypernym_hyponym")
    breakdown = sum(1 for v in values if v == "useful_breakdown")
    return Task1Score(
        precision=positives / len(values),
        n_links=len(values),
        positives=positives,
        hypernym_fraction=hypernym / positives if positives else 0.0,
        breakdown_fraction=breakdown / positives if positives else 0.0,
    )


@dataclass(frozen=True)
class Task2Score:
    precision: float
    n_groups: int
    coherent: int

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "n_groups": self.n_groups,
            "coherent": self.coherent,
        }


def score_task2(
    labels: Mapping[str, Mapping[str, bool]],
    expected_keys: Iterable[str] | None = None,
) -> Task2Score:
    """Fraction of sibling groups that are coherent: a group counts only
    when every per-child flag is positive."""
    _check_complete(labels, expected_keys)
    if not labels:
        raise MissingLabel("task 2 has no labels")
    coherent = sum(1 for flags in labels.values() if all(flags.values()))
    return Task2Score(
        precision=coherent / len(labels), n_groups=len(labels), coherent=coherent
    )


def _check_complete(labels: Mapping[str, Any], expected_keys: Iterable[str] | None) -> None:
    if expected_keys is None:
        return
    missing = set(expected_keys) - labels.keys()
    if missing:
        raise MissingLabel(sorted(missing)[0])


# --- corpus statistics ----------------------------------------------------------


@dataclass(frozen=True)
class StructuralStats:
    n_topics: int
    n_hierarchies: int
    mean_depth: float | None
    max_depth: int | None
    mean_arity: float | None
    max_arity: int | None
    mean_claims_per_hierarchy: float | None
    mean_uncategorized_per_topic: float | None

    def to_dict(self) -> dict:
        return {
            "n_topics": self.n_topics,
            "n_hierarchies": self.n_hierarchies,
            "depth": {"mean": self.mean_depth, "max": self.max_depth},
            "arity": {"mean": self.mean_arity, "max": self.max_arity},
            "claims_per_hierarchy_mean": self.mean_claims_per_hierarchy,
            "uncategorized_per_topic_mean": self.mean_uncategorized_per_topic,
        }


def structural_stats(
    hierarchies: Sequence[Hierarchy], review_sets: Sequence[ReviewSet]
) -> StructuralStats:
    """Corpus-level shape statistics.

    Arity is averaged over internal nodes only; claims per hierarchy counts
    unique referenced claims (a claim assigned to several categories counts
    once); uncategorized counts a topic's claims referenced by none of its
    hierarchies.
    """
    reviews = {rs.id: rs for rs in review_sets}
    unknown = [h.id for h in hierarchies if h.review_id not in reviews]
    if unknown:
        raise UnknownTopic(unknown[0])

    depths = [depth(h) for h in hierarchies]
    arities: list[int] = []
    claims_per_hierarchy: list[int] = []
    referenced_by_topic: dict[str, set[int]] = {rid: set() for rid in reviews}
    for hierarchy in hierarchies:
        refs: set[int] = set()
        for _, node in iter_nodes(hierarchy):
            if node.children:
                arities.append(len(node.children))
            refs.update(node.claim_refs)
        claims_per_hierarchy.append(len(refs))
        referenced_by_topic[hierarchy.review_id].update(refs)

    uncategorized = [
        sum(1 for claim in review.claims if claim.index not in referenced_by_topic[rid])
        for rid, review in reviews.items()
    ]
    return StructuralStats(
        n_topics=len(reviews),
        n_hierarchies=len(hierarchies),
        mean_depth=mean(depths) if depths else None,
        max_depth=max(depths) if depths else None,
        mean_arity=mean(arities) if arities else None,
        max_arity=max(arities) if arities else None,
        mean_claims_per_hierarchy=mean(claims_per_hierarchy) if claims_per_hierarchy else None,
        mean_uncategorized_per_topic=mean(uncategorized) if uncategorized else None,
    )


def repeated_categories(topic_hierarchies: Sequence[Hierarchy]) -> list[str]:
    """Normalized category names appearing in more than one hierarchy of the
    same topic (the paper's diversity probe found none)."""
    if len(topic_hierarchies) < 2:
        raise ValueError("need at least two hierarchies to compare")
    seen_in: dict[str, set[str]] = {}
    for hierarchy in topic_hierarchies:
        for _, node in iter_nodes(hierarchy):
            seen_in.setdefault(normalize_name(node.name), set()).add(hierarchy.id)
    return sorted(name for name, owners in seen_in.items() if len(owners) > 1)


# --- dataset splitting ----------------------------------------------------------

SPLIT_NAMES = ("train", "validation", "test_id", "test_ood")


@dataclass(frozen=True)
class SplitConfig:
    train: tuple[str, ...] = ()
    validation: tuple[str, ...] = ()
    test_id: tuple[str, ...] = ()
    test_ood: tuple[str, ...] = ()

    def __post_init__(self):
        seen: set[str] = set()
        for split in SPLIT_NAMES:
            for topic in getattr(self, split):
                if topic in seen:
                    raise InvalidSplitConfig(f"topic {topic!r} appears in two splits")
                seen.add(topic)

    def splits(self) -> dict[str, tuple[str, ...]]:
        return {name: getattr(self, name) for name in SPLIT_NAMES}

    @classmethod
    def from_dict(cls, data: Mapping[str, Sequence[str]]) -> "SplitConfig":
        return cls(**{name: tuple(data.get(name, ())) for name in SPLIT_NAMES})

    @classmethod
    def from_file(cls, path: str | Path) -> "SplitConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def split_dataset(
    topics: Mapping[str, tuple[ReviewSet, Sequence[Hierarchy]]],
    config: SplitConfig,
) -> dict[str, dict[str, int]]:
    """Instance counts per correction sub-task, per split; topics are routed
    whole (every hierarchy of a topic lands in its split)."""
    counts: dict[str, dict[str, int]] = {}
    for split_name, topic_ids in config.splits().items():
        task1 = task2 = task3 = 0
        for topic_id in topic_ids:
            if topic_id not in topics:
                raise UnknownTopic(topic_id)
            review_set, hierarchies = topics[topic_id]
            for hierarchy in hierarchies:
                task1 += len(emit_task1(hierarchy))
                task2 += len(emit_task2(hierarchy))
                task3 += len(emit_task3(hierarchy, review_set.claims))
        counts[split_name] = {"task1": task1, "task2": task2, "task3": task3}
    return counts


# --- noise injection -------------------------------------------------------------


def inject_noise(
    review_set: ReviewSet, foreign_claims: Sequence[Claim], n: int = 5
) -> ReviewSet:
    """Append n claims from other topics with fresh contiguous indices and
    an injected mark, for probing whether generation ignores them."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(foreign_claims) < n:
        raise InsufficientForeignClaims(
            f"need {n} foreign claims, got {len(foreign_claims)}"
        )
    own_ids = {claim.id for claim in review_set.claims}
    next_index = len(review_set.claims) + 1
    injected = []
    for offset, claim in enumerate(foreign_claims[:n]):
        if claim.id in own_ids:
            raise InsufficientForeignClaims(
                f"claim {claim.id} already belongs to this review set"
            )
        injected.append(
            replace(claim, id=f"noise:{claim.id}", index=next_index + offset, injected=True)
        )
    return attach_claims(review_set, tuple(review_set.claims) + tuple(injected))


def injected_assignment_report(
    review_set: ReviewSet, hierarchies: Sequence[Hierarchy]
) -> dict:
    """How many injected claims ended up assigned to any category."""
    injected = [claim.index for claim in review_set.claims if claim.injected]
    referenced: set[int] = set()
    for hierarchy in hierarchies:
        for _, node in iter_nodes(hierarchy):
            referenced.update(node.claim_refs)
    assigned = sorted(index for index in injected if index in referenced)
    return {
        "injected": len(injected),
        "assigned": len(assigned),
        "assigned_indices": assigned,
        "assignment_rate": len(assigned) / len(injected) if injected else 0.0,
    }
