"""Pluggable relevance predictors that repair claim-category assignments,
plus the zero-shot reasoning prompts for LLM-backed prediction.

A predictor judges raw (claim, category) pairs; final labels come from the
same AND-over-path aggregation the evaluation layer uses, and the hierarchy
is rewritten so each category's refs match the final labels. Structure
(names, edges) never changes - sibling coherence repair stays with experts.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .backend import Backend, CompletionRequest
from .core import CategoryNode, Claim, Hierarchy, iter_nodes, normalize_path
from .errors import (
    PredictorUnavailable,
    StructureMismatch,
    UnparseableVerdict,
    UnsupportedTask,
)
from .evaluation import LabelMap, category_paths, predicted_assignments
from .feedback import SiblingGroupInstance

RELEVANT = "relevant"
IRRELEVANT = "irrelevant"

TASK_SIBLING_COHERENCE = "sibling_coherence"
TASK_CLAIM_ASSIGNMENT = "claim_assignment"

SIBLING_PROMPT_TEMPLATE = """\
A concept hierarchy organizes research findings. The category "{parent}" \
(full path: {path}) has these child categories:
{children}

Do all of these children form a coherent sibling group, at the same level \
of granularity and with a consistent focus? Think step by step, then end \
your reply with a single line reading exactly "ANSWER: YES" if the group \
is coherent or "ANSWER: NO" if it is not.
"""

CLAIM_PROMPT_TEMPLATE = """\
A concept hierarchy organizes research findings. One of its categories is:
{path}

Claim: {claim}

Does the claim contain any information relevant to that category (read the \
category in the context of its full path)? Think step by step, then end \
your reply with a single line reading exactly "ANSWER: YES" if it does or \
"ANSWER: NO" if it does not.
"""


@dataclass(frozen=True)
class Verdict:
    label: str  # relevant | irrelevant
    confidence: float | None = None

    @property
    def positive(self) -> bool:
        return self.label == RELEVANT


@dataclass(frozen=True)
class ClaimAssignmentQuery:
    """Prompt view of one (claim, category) pair."""

    claim_text: str
    category_path: tuple[str, ...]


def _path_text(path: Sequence[str]) -> str:
    return " -> ".join(path)


def build_cot_prompt(task: str, instance) -> str:
    """Deterministic template fill for the two automatable sub-tasks."""
    if task == TASK_SIBLING_COHERENCE:
        if not isinstance(instance, SiblingGroupInstance):
            raise UnsupportedTask(f"{task} expects a SiblingGroupInstance")
        children = "\n".join(f"- {child}" for child in instance.children)
        return SIBLING_PROMPT_TEMPLATE.format(
            parent=instance.parent_path[-1],
            path=_path_text(instance.parent_path),
            children=children,
        )
    if task == TASK_CLAIM_ASSIGNMENT:
        if not isinstance(instance, ClaimAssignmentQuery):
            raise UnsupportedTask(f"{task} expects a ClaimAssignmentQuery")
        return CLAIM_PROMPT_TEMPLATE.format(
            path=_path_text(instance.category_path), claim=instance.claim_text
        )
    raise UnsupportedTask(task)


def parse_cot_verdict(text: str) -> bool:
    """The last non-empty line must read ANSWER: YES or ANSWER: NO
    (case-insensitive); anything else is unparseable so the caller can fail
    safe toward no change."""
    lines = [line.strip() for line in text.splitlines() if line.strip()]
    if lines:
        parts = lines[-1].upper().replace(" ", "")
        if parts == "ANSWER:YES":
            return True
        if parts == "ANSWER:NO":
            return False
    raise UnparseableVerdict(f"no final verdict line in {text[-80:]!r}")


class Predictor(Protocol):
    def judge(self, claim_text: str, category_path: Sequence[str]) -> Verdict:
        ...


class ConstantPredictor:
    def __init__(self, label: str = RELEVANT):
        if label not in (RELEVANT, IRRELEVANT):
            raise ValueError(f"label must be {RELEVANT!r} or {IRRELEVANT!r}")
        self.label = label

    def judge(self, claim_text: str, category_path: Sequence[str]) -> Verdict:
        return Verdict(label=self.label)


class ScriptedPredictor:
    """Deterministic verdicts from a mapping keyed by
    (claim text, path text); used for fixtures and replayed predictions."""

    def __init__(self, verdicts: Mapping[tuple[str, str], str], default: str | None = None):
        self._verdicts = dict(verdicts)
        self.default = default

    def judge(self, claim_text: str, category_path: Sequence[str]) -> Verdict:
        key = (claim_text, _path_text(category_path))
        label = self._verdicts.get(key, self.default)
        if label is None:
            raise PredictorUnavailable(f"no scripted verdict for {key!r}")
        return Verdict(label=label)


class RulePredictor:
    """Wraps a plain function (claim_text, path) -> bool."""

    def __init__(self, rule: Callable[[str, tuple[str, ...]], bool]):
        self._rule = rule

    def judge(self, claim_text: str, category_path: Sequence[str]) -> Verdict:
        positive = self._rule(claim_text, tuple(category_path))
        return Verdict(label=RELEVANT if positive else IRRELEVANT)


class HttpPredictor:
    """External predictor adapter: POST {claim, category_path} ->
    {label, confidence}, same local-HTTP convention as the NLI verifier."""

    def __init__(self, url: str, timeout: float = 60.0):
        self.url = url
        self.timeout = timeout

    def judge(self, claim_text: str, category_path: Sequence[str]) -> Verdict:
        try:
            response = httpx.post(
                self.url,
                json={"claim": claim_text, "category_path": _path_text(category_path)},
                timeout=self.timeout,
            )
            response.raise_for_status()
            data = response.json()
            label = str(data["label"]).lower()
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise PredictorUnavailable(f"predictor at {self.url}: {exc}") from exc
        return Verdict(
            label=RELEVANT if label in (RELEVANT, "yes", "positive", "true") else IRRELEVANT,
            confidence=data.get("confidence"),
        )


class CotPredictor:
    """LLM-backed predictor using the zero-shot reasoning prompt; verdict
    parsing failures propagate as UnparseableVerdict."""

    def __init__(self, backend: Backend, backend_id: str = "default", max_output_tokens: int = 1024):
        self.backend = backend
        self.backend_id = backend_id
        self.max_output_tokens = max_output_tokens

    def judge(self, claim_text: str, category_path: Sequence[str]) -> Verdict:
        prompt = build_cot_prompt(
            TASK_CLAIM_ASSIGNMENT,
            ClaimAssignmentQuery(claim_text=claim_text, category_path=tuple(category_path)),
        )
        response = self.backend.complete(
            CompletionRequest(
                prompt=prompt,
                backend_id=self.backend_id,
                max_output_tokens=self.max_output_tokens,
            )
        )
        return Verdict(label=RELEVANT if parse_cot_verdict(response) else IRRELEVANT)


# --- judging and application ------------------------------------------------------


@dataclass(frozen=True)
class PairJudgements:
    """Raw per-pair verdicts plus the AND-aggregated final labels. Pairs on
    a path containing an unparseable verdict have no final label and are
    left as they were."""

    raw: dict[tuple[int, tuple[str, ...]], bool]
    final: dict[tuple[int, tuple[str, ...]], bool]
    unparsed: frozenset[tuple[int, tuple[str, ...]]]


def judge_pairs(
    predictor: Predictor, hierarchy: Hierarchy, claims: Sequence[Claim]
) -> PairJudgements:
    """One raw verdict per (claim, non-root category); final labels conjoin
    raw verdicts along each root-to-category path."""
    paths = category_paths(hierarchy)
    raw: dict[tuple[int, tuple[str, ...]], bool] = {}
    unparsed: set[tuple[int, tuple[str, ...]]] = set()
    for claim in claims:
        for path in paths:
            pair = (claim.index, normalize_path(path))
            try:
                raw[pair] = predictor.judge(claim.text, path).positive
            except UnparseableVerdict:
                unparsed.add(pair)

    final: dict[tuple[int, tuple[str, ...]], bool] = {}
    for claim in claims:
        for path in paths:
            norm = normalize_path(path)
            verdict = True
            computable = True
            for end in range(2, len(norm) + 1):
                prefix_pair = (claim.index, norm[:end])
                if prefix_pair not in raw:
                    computable = False
                    break
                verdict = verdict and raw[prefix_pair]
            if computable:
                final[(claim.index, norm)] = verdict
    return PairJudgements(raw=raw, final=final, unparsed=frozenset(unparsed))


@dataclass(frozen=True)
class FlipReport:
    total: int
    flips: int
    additions: int
    removals: int
    additions_to_empty: int = 0
    unparsed: int = 0
    correct_flips: int | None = None
    correct_flip_rate: float | None = None

    @property
    def flip_rate(self) -> float:
        return self.flips / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "flips": self.flips,
            "flip_rate": self.flip_rate,
            "additions": self.additions,
            "removals": self.removals,
            "additions_to_empty": self.additions_to_empty,
            "unparsed": self.unparsed,
            "correct_flips": self.correct_flips,
            "correct_flip_rate": self.correct_flip_rate,
        }

    def summary(self) -> str:
        line = (
            f"{self.flips}/{self.total} assignments flipped "
            f"({self.flip_rate:.1%}; +{self.additions}/-{self.removals})"
        )
        if self.correct_flip_rate is not None:
            line += f", {self.correct_flip_rate:.1%} of flips correct"
        return line


@dataclass(frozen=True)
class CorrectionResult:
    hierarchy: Hierarchy
    report: FlipReport


def _score_flips(
    flipped_to: Mapping[tuple[int, tuple[str, ...]], bool], gold: LabelMap | None
) -> tuple[int | None, float | None]:
    if gold is None:
        return None, None
    with_gold = {pair: value for pair, value in flipped_to.items() if pair in gold}
    if not with_gold:
        return 0, None
    correct = sum(1 for pair, value in with_gold.items() if gold[pair] == value)
    return correct, correct / len(with_gold)


def apply_corrector(
    hierarchy: Hierarchy,
    claims: Sequence[Claim],
    predictor: Predictor,
    gold: LabelMap | None = None,
) -> CorrectionResult:
    """Rewrite claim refs so every (claim, non-root category) matches the
    predictor's final label; pairs without a computable final label keep
    their prior assignment. Deterministic predictors make this idempotent."""
    judgements = judge_pairs(predictor, hierarchy, claims)

    additions = removals = additions_to_empty = 0
    flipped_to: dict[tuple[int, tuple[str, ...]], bool] = {}

    def rebuild(node: CategoryNode, path: tuple[str, ...]) -> CategoryNode:
        nonlocal additions, removals, additions_to_empty
        children = tuple(
            rebuild(child, path + (child.name,)) for child in node.children
        )
        if len(path) == 1:  # root keeps its refs untouched
            return replace(node, children=children)
        norm = normalize_path(path)
        refs = set(node.claim_refs)
        was_empty = not refs
        added_here = 0
        for claim in claims:
            pair = (claim.index, norm)
            if pair not in judgements.final:
                continue
            want = judgements.final[pair]
            have = claim.index in refs
            if want and not have:
                refs.add(claim.index)
                additions += 1
                added_here += 1
                flipped_to[pair] = True
            elif have and not want:
                refs.discard(claim.index)
                removals += 1
                flipped_to[pair] = False
        if was_empty and added_here:
            additions_to_empty += added_here
        return replace(node, children=children, claim_refs=frozenset(refs))

    corrected_root = rebuild(hierarchy.root, (hierarchy.root.name,))
    total = len(claims) * len(category_paths(hierarchy))
    correct_flips, correct_flip_rate = _score_flips(flipped_to, gold)
    report = FlipReport(
        total=total,
        flips=additions + removals,
        additions=additions,
        removals=removals,
        additions_to_empty=additions_to_empty,
        unparsed=len(judgements.unparsed),
        correct_flips=correct_flips,
        correct_flip_rate=correct_flip_rate,
    )
    return CorrectionResult(
        hierarchy=replace(hierarchy, root=corrected_root), report=report
    )


def _structure_signature(hierarchy: Hierarchy) -> list[tuple[str, ...]]:
    return [normalize_path(path) for path, _ in iter_nodes(hierarchy)]


def flip_stats(
    before: Hierarchy,
    after: Hierarchy,
    claims: Sequence[Claim],
    gold: LabelMap | None = None,
) -> FlipReport:
    """Audit two same-structure hierarchies: flips are exactly the symmetric
    difference of their assignment sets."""
    if _structure_signature(before) != _structure_signature(after):
        raise StructureMismatch("hierarchies differ in names or edges")
    before_set = predicted_assignments(before)
    after_set = predicted_assignments(after)
    added = after_set - before_set
    removed = before_set - after_set
    flipped_to = {pair: True for pair in added}
    flipped_to.update({pair: False for pair in removed})
    correct_flips, correct_flip_rate = _score_flips(flipped_to, gold)
    return FlipReport(
        total=len(claims) * len(category_paths(before)),
        flips=len(added) + len(removed),
        additions=len(added),
        removals=len(removed),
        correct_flips=correct_flips,
        correct_flip_rate=correct_flip_rate,
    )
