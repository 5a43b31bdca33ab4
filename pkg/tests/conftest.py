"""Shared fixtures: a small exercise-and-cancer topic with two hierarchies
(mirroring the worked example the tooling was designed around) and helpers
for building random trees."""

from __future__ import annotations

import random

import pytest

from claimtree.core import CategoryNode, Claim, Hierarchy, ReviewSet, Study


def node(name, children=(), refs=()):
    return CategoryNode(
        name=name, children=tuple(children), claim_refs=frozenset(refs)
    )


@pytest.fixture
def fig1_review():
    studies = tuple(
        Study(
            id=f"s{i}",
            title=f"Trial {i}",
            abstract=f"Abstract text for trial {i} on exercise and cancer outcomes.",
            review_id="exercise-cancer",
        )
        for i in range(1, 4)
    )
    claims = tuple(
        Claim(id=f"s{(i - 1) % 3 + 1}:{i}", study_id=f"s{(i - 1) % 3 + 1}", index=i, text=text)
        for i, text in enumerate(
            [
                "Aerobic exercise reduced fatigue in breast cancer survivors.",
                "Resistance training improved muscle strength during chemotherapy.",
                "Walking programs increased weekly activity in breast cancer patients.",
                "Flexibility routines did not change reported pain levels.",
                "Aerobic training improved cardiovascular fitness in prostate cancer patients.",
                "Exercise adherence dropped after cancer recurrence.",
            ],
            start=1,
        )
    )
    return ReviewSet(
        id="exercise-cancer",
        title="Exercise interventions for cancer survivors",
        studies=studies,
        claims=claims,
    )


@pytest.fixture
def hierarchy_one():
    """Root with five siblings, one of which nests a more specific child."""
    root = node(
        "Exercise modalities",
        children=[
            node("Aerobic", children=[node("Walking", refs=[1, 3])], refs=[1, 5]),
            node("Resistance", refs=[2]),
            node("Flexibility", refs=[4]),
            node("Weight training", refs=[2]),
            node("Team sports"),
        ],
    )
    return Hierarchy(id="exercise-cancer-h1", review_id="exercise-cancer", root=root)


@pytest.fixture
def hierarchy_two():
    root = node(
        "Cancer types",
        children=[
            node("Breast", refs=[2, 3]),
            node("Prostate", refs=[5]),
            node("Metastasis"),
            node("Recurrence", refs=[6]),
        ],
    )
    return Hierarchy(id="exercise-cancer-h2", review_id="exercise-cancer", root=root)


def random_tree(
    rng: random.Random,
    max_depth: int = 5,
    max_children: int = 4,
    claim_count: int = 8,
    hierarchy_id: str = "rand",
) -> Hierarchy:
    """Random hierarchy with globally unique node names and random refs."""
    counter = [0]

    def build(level: int) -> CategoryNode:
        counter[0] += 1
        name = f"cat{counter[0]}"
        children = []
        if level < max_depth:
            for _ in range(rng.randint(0, max_children)):
                if rng.random() < 0.6:
                    children.append(build(level + 1))
        refs = frozenset(
            i for i in range(1, claim_count + 1) if rng.random() < 0.25
        )
        return CategoryNode(name=name, children=tuple(children), claim_refs=refs)

    return Hierarchy(id=hierarchy_id, review_id="rand-review", root=build(0))


def make_claims(count: int, review_id: str = "rand-review") -> tuple[Claim, ...]:
    return tuple(
        Claim(id=f"{review_id}:c{i}", study_id="s1", index=i, text=f"Finding number {i}.")
        for i in range(1, count + 1)
    )


def build_topic_dir(data_dir, review_set, hierarchies, export_feedback=True):
    """Materialize a full topic directory (studies, claims, hierarchies and,
    optionally, the exported instance files)."""
    from claimtree import feedback
    from claimtree.storage import TopicDir

    topic = TopicDir(data_dir / review_set.id)
    topic.root.mkdir(parents=True, exist_ok=True)
    topic.save_review_meta(review_set)
    topic.save_studies(review_set)
    topic.save_claims(review_set)
    for hierarchy in hierarchies:
        topic.save_hierarchy(hierarchy)
    if export_feedback:
        task1, task2, task3 = [], [], []
        for hierarchy in hierarchies:
            task1.extend(feedback.emit_task1(hierarchy))
            task2.extend(feedback.emit_task2(hierarchy))
            task3.extend(feedback.emit_task3(hierarchy, review_set.claims))
        topic.save_instances(1, task1)
        topic.save_instances(2, task2)
        topic.save_instances(3, task3)
    return topic
