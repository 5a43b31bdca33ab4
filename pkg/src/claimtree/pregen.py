"""Pre-generation stage: review filtering, claim extraction from abstracts,
entailment verification hooks, and frequent-entity counting.

Claim texts come back from the model as numbered lists; indices are assigned
serially at the review-set level so they stay contiguous regardless of how
many studies run concurrently.
"""

from __future__ import annotations

import hashlib
import json
import re
from collections import Counter
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import httpx

from .backend import Backend, BackendError, CompletionRequest, complete_many
from .core import (
    Claim,
    ReviewSet,
    Study,
    VERDICT_ENTAILED,
    VERDICT_NOT_ENTAILED,
    attach_claims,
)
from .errors import UnparseableResponse, VerifierUnavailable

MIN_STUDIES = 15
MAX_STUDIES = 50

CLAIM_PROMPT_TEMPLATE = """\
You are given the title and abstract of a research study.

Title: {title}

Abstract: {abstract}

Extract concise claim statements covering every finding discussed in the \
abstract. Each claim must be one self-contained sentence. Respond with a \
numbered list only, one claim per line:
1. <first claim>
2. <second claim>
"""


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reason: str | None = None
    study_count: int = 0


def filter_review_set(
    review_set: ReviewSet,
    min_studies: int = MIN_STUDIES,
    max_studies: int = MAX_STUDIES,
) -> FilterDecision:
    """Keep only topics whose study count makes a tree worth building: too
    few and the organization adds nothing, too many and the model input gets
    unwieldy."""
    count = len(review_set.studies)
    if count < min_studies:
        return FilterDecision(keep=False, reason="too_few", study_count=count)
    if count > max_studies:
        return FilterDecision(keep=False, reason="too_many", study_count=count)
    return FilterDecision(keep=True, study_count=count)


def build_claim_prompt(study: Study) -> str:
    return CLAIM_PROMPT_TEMPLATE.format(title=study.title, abstract=study.abstract)


# Accepts "1.", "1)", or "-" markers; anything after the marker is the item.
_LIST_ITEM = re.compile(r"^\s*(?:\d+[.)]|-)\s+(.*\S)\s*$")


def parse_list_items(text: str) -> list[str]:
    items = []
    for line in text.splitlines():
        match = _LIST_ITEM.match(line)
        if match:
            items.append(match.group(1))
    return items


def generate_claims(
    study: Study,
    backend: Backend,
    start_index: int = 1,
    backend_id: str = "default",
) -> list[Claim]:
    """Prompt for claims covering the study's findings and parse the
    numbered-list response; indices run from `start_index`."""
    if not study.abstract.strip():
        raise ValueError(f"study {study.id} has an empty abstract")
    request = CompletionRequest(prompt=build_claim_prompt(study), backend_id=backend_id)
    response = backend.complete(request)
    texts = parse_list_items(response)
    if not texts:
        raise UnparseableResponse(
            f"no numbered list in claim response for study {study.id}"
        )
    return [
        Claim(
            id=f"{study.id}:{offset + 1}",
            study_id=study.id,
            index=start_index + offset,
            text=text,
        )
        for offset, text in enumerate(texts)
    ]


@dataclass(frozen=True)
class FlaggedStudy:
    study_id: str
    reason: str  # empty_abstract | backend_error | unparseable
    error: Exception | None = None


def generate_review_claims(
    review_set: ReviewSet,
    backend: Backend,
    max_in_flight: int = 4,
    backend_id: str = "default",
) -> tuple[ReviewSet, list[FlaggedStudy]]:
    """Generate claims for every study; studies whose completion failed or
    did not parse are flagged with the reason, and the pipeline continues.

    Completions run concurrently but index assignment happens serially in
    study order, so indices are contiguous and deterministic.
    """
    studies = [s for s in review_set.studies if s.abstract.strip()]
    requests = [
        CompletionRequest(prompt=build_claim_prompt(s), backend_id=backend_id)
        for s in studies
    ]
    outcomes = complete_many(backend, requests, max_in_flight=max_in_flight)

    claims: list[Claim] = []
    flagged = [
        FlaggedStudy(s.id, "empty_abstract")
        for s in review_set.studies
        if not s.abstract.strip()
    ]
    next_index = 1
    for study, outcome in zip(studies, outcomes):
        if isinstance(outcome, BackendError):
            flagged.append(FlaggedStudy(study.id, "backend_error", outcome))
            continue
        texts = parse_list_items(outcome)
        if not texts:
            flagged.append(FlaggedStudy(study.id, "unparseable"))
            continue
        for offset, text in enumerate(texts):
            claims.append(
                Claim(
                    id=f"{study.id}:{offset + 1}",
                    study_id=study.id,
                    index=next_index,
                    text=text,
                )
            )
            next_index += 1
    return attach_claims(review_set, claims), flagged


# --- entailment verification ---------------------------------------------------


class EntailmentVerifier(Protocol):
    name: str
    is_stub: bool

    def verify(self, premise: str, hypothesis: str) -> str:
        """Returns 'entailed' or 'not_entailed'."""
        ...


_TOKEN = re.compile(r"[a-z0-9]+")


def content_words(text: str, stopwords: frozenset[str]) -> set[str]:
    return {tok for tok in _TOKEN.findall(text.lower()) if tok not in stopwords}


class OverlapVerifier:
    """Declared stub: content-word overlap between claim and abstract.

    Not a real entailment check; production runs should plug in an external
    predictor through HttpVerifier. Kept so the pipeline works offline.
    """

    name = "stub-lexical-overlap"
    is_stub = True

    def __init__(self, threshold: float = 0.6, stopwords: frozenset[str] | None = None):
        if not 0 <= threshold <= 1:
            raise ValueError("threshold must be in [0, 1]")
        self.threshold = threshold
        self.stopwords = STOPWORDS if stopwords is None else stopwords

    def verify(self, premise: str, hypothesis: str) -> str:
        hypothesis_words = content_words(hypothesis, self.stopwords)
        if not hypothesis_words:
            return VERDICT_NOT_ENTAILED
        premise_words = content_words(premise, self.stopwords)
        ratio = len(hypothesis_words & premise_words) / len(hypothesis_words)
        return VERDICT_ENTAILED if ratio >= self.threshold else VERDICT_NOT_ENTAILED


class HttpVerifier:
    """External NLI predictor over local HTTP: one request per pair,
    POST {premise, hypothesis} -> {label, score}."""

    name = "http"
    is_stub = False

    def __init__(self, url: str, timeout: float = 60.0):
        self.url = url
        self.timeout = timeout

    def verify(self, premise: str, hypothesis: str) -> str:
        try:
            response = httpx.post(
                self.url,
                json={"premise": premise, "hypothesis": hypothesis},
                timeout=self.timeout,
            )
            response.raise_for_status()
            label = str(response.json()["label"]).lower()
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise VerifierUnavailable(f"verifier at {self.url}: {exc}") from exc
        return VERDICT_ENTAILED if label in ("entailed", "entailment") else VERDICT_NOT_ENTAILED


def _pair_digest(premise: str, hypothesis: str) -> str:
    canonical = json.dumps([premise, hypothesis], ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ReplayVerifier:
    """Replays recorded verdicts keyed by (premise, hypothesis) digest."""

    name = "replay"
    is_stub = False

    def __init__(self, verdicts: Mapping[str, str] | str | Path):
        if isinstance(verdicts, (str, Path)):
            loaded: dict[str, str] = {}
            with Path(verdicts).open(encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if line:
                        entry = json.loads(line)
                        loaded[entry["digest"]] = entry["label"]
            self._verdicts = loaded
        else:
            self._verdicts = dict(verdicts)

    @staticmethod
    def digest(premise: str, hypothesis: str) -> str:
        return _pair_digest(premise, hypothesis)

    def verify(self, premise: str, hypothesis: str) -> str:
        digest = _pair_digest(premise, hypothesis)
        if digest not in self._verdicts:
            raise VerifierUnavailable(f"no replayed verdict for digest {digest}")
        label = self._verdicts[digest].lower()
        return VERDICT_ENTAILED if label in ("entailed", "entailment") else VERDICT_NOT_ENTAILED


def verify_entailment(abstract: str, claim: Claim, verifier: EntailmentVerifier) -> Claim:
    """Record the verifier's verdict on the claim; the text never changes and
    non-entailed claims are flagged, not dropped."""
    verdict = verifier.verify(abstract, claim.text)
    return replace(claim, entailment_verdict=verdict)


@dataclass(frozen=True)
class EntailmentReport:
    total: int
    entailed: int
    verifier: str
    verifier_is_stub: bool

    @property
    def rate(self) -> float:
        return self.entailed / self.total if self.total else 0.0

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "entailed": self.entailed,
            "rate": self.rate,
            "verifier": self.verifier,
            "verifier_is_stub": self.verifier_is_stub,
        }


def verify_review_entailment(
    review_set: ReviewSet, verifier: EntailmentVerifier
) -> tuple[ReviewSet, EntailmentReport]:
    abstracts = {study.id: study.abstract for study in review_set.studies}
    checked = [
        verify_entailment(abstracts.get(claim.study_id, ""), claim, verifier)
        for claim in review_set.claims
    ]
    report = EntailmentReport(
        total=len(checked),
        entailed=sum(1 for c in checked if c.entailment_verdict == VERDICT_ENTAILED),
        verifier=verifier.name,
        verifier_is_stub=verifier.is_stub,
    )
    return attach_claims(review_set, checked), report


# --- frequent entities ----------------------------------------------------------

# Compact English stopword list; enough to keep function words out of the
# keyword candidates. Domain NER can be plugged in upstream instead.
STOPWORDS = frozenset(
    """a about above after again against all am an and any are as at be because
    been before being below between both but by can cannot could did do does
    doing down during each few for from further had has have having he her here
    hers him his how i if in into is it its itself just me more most my no nor
    not of off on once only or other our ours out over own same she should so
    some such than that the their theirs them then there these they this those
    through to too under until up very was we were what when where which while
    who whom why will with would you your yours""".split()
)


@dataclass(frozen=True)
class EntityCount:
    surface: str
    count: int

    def to_dict(self) -> dict:
        return {"surface": self.surface, "count": self.count}


def extract_frequent_entities(
    studies: Iterable[Study],
    k: int = 20,
    stopwords: frozenset[str] | None = None,
) -> list[EntityCount]:
    """Top-k candidate entities across all abstracts.

    Candidates are n-grams (n in 1..3) over runs of consecutive non-stopword
    tokens, lowercased with punctuation stripped. Ranked by count, ties
    broken lexicographically; fewer than k candidates yields a shorter list.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    stop = STOPWORDS if stopwords is None else stopwords
    counts: Counter[str] = Counter()
    for study in studies:
        tokens = _TOKEN.findall(study.abstract.lower())
        run: list[str] = []
        for token in tokens + [""]:  # sentinel flushes the last run
            if token and token not in stop:
                run.append(token)
                continue
            for n in (1, 2, 3):
                for i in range(len(run) - n + 1):
                    counts[" ".join(run[i : i + n])] += 1
            run = []
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    return [EntityCount(surface=s, count=c) for s, c in ranked[:k]]
