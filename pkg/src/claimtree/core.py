"""Domain model for research topics, claims, and category hierarchies.

All types are immutable values; trees are rebuilt rather than mutated, so
they are safe to share across threads. A node is addressed by its name path
from the root (names compared after normalization, display form preserved).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

from .errors import NodeNotFound

SCHEMA_VERSION = 1

# The generation pipeline is expected to stay shallow; anything deeper than
# this is treated as a runaway parse.
DEFAULT_MAX_DEPTH = 6

_WS_RUN = re.compile(r"\s+")


def normalize_name(name: str) -> str:
    """Canonical form used for name equality: trim, collapse internal
    whitespace, casefold. Display strings keep their original form."""
    return _WS_RUN.sub(" ", name.strip()).casefold()


def normalize_path(path: Sequence[str]) -> tuple[str, ...]:
    return tuple(normalize_name(part) for part in path)


@dataclass(frozen=True)
class Study:
    id: str
    title: str
    abstract: str
    review_id: str

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "title": self.title,
            "abstract": self.abstract,
            "review_id": self.review_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Study":
        return cls(
            id=data["id"],
            title=data.get("title", ""),
            abstract=data.get("abstract", ""),
            review_id=data.get("review_id", ""),
        )


VERDICT_ENTAILED = "entailed"
VERDICT_NOT_ENTAILED = "not_entailed"
VERDICT_UNCHECKED = "unchecked"


@dataclass(frozen=True)
class Claim:
    """One finding extracted from a study abstract, 1-indexed within its
    review set so hierarchies can reference it numerically."""

    id: str
    study_id: str
    index: int
    text: str
    entailment_verdict: str = VERDICT_UNCHECKED
    injected: bool = False

    def to_dict(self) -> dict:
        data = {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "study_id": self.study_id,
            "index": self.index,
            "text": self.text,
            "entailment_verdict": self.entailment_verdict,
        }
        if self.injected:
            data["injected"] = True
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "Claim":
        return cls(
            id=data["id"],
            study_id=data.get("study_id", ""),
            index=int(data["index"]),
            text=data["text"],
            entailment_verdict=data.get("entailment_verdict", VERDICT_UNCHECKED),
            injected=bool(data.get("injected", False)),
        )


@dataclass(frozen=True)
class ReviewSet:
    """A research topic with its curated studies and extracted claims."""

    id: str
    title: str
    studies: tuple[Study, ...] = ()
    claims: tuple[Claim, ...] = ()

    def claim_by_index(self, index: int) -> Claim:
        for claim in self.claims:
            if claim.index == index:
                return claim
        raise KeyError(index)

    def valid_claim_indices(self) -> frozenset[int]:
        return frozenset(claim.index for claim in self.claims)


def attach_claims(review_set: ReviewSet, claims: Iterable[Claim]) -> ReviewSet:
    """Return a copy of the review set carrying `claims`; indices must be
    contiguous 1..n."""
    ordered = tuple(sorted(claims, key=lambda c: c.index))
    indices = [c.index for c in ordered]
    if indices != list(range(1, len(ordered) + 1)):
        raise ValueError(f"claim indices not contiguous 1..n: {indices}")
    return replace(review_set, claims=ordered)


@dataclass(frozen=True)
class CategoryNode:
    """A named category; non-root nodes carry numeric claim references.

    `tags` is free text for human annotations (e.g. which review framing
    element the category captures); the toolkit never fills it.
    """

    name: str
    children: tuple["CategoryNode", ...] = ()
    claim_refs: frozenset[int] = frozenset()
    tags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        data: dict = {
            "name": self.name,
            "claim_refs": sorted(self.claim_refs),
            "children": [child.to_dict() for child in self.children],
        }
        if self.tags:
            data["tags"] = list(self.tags)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "CategoryNode":
        return cls(
            name=data["name"],
            children=tuple(cls.from_dict(c) for c in data.get("children", ())),
            claim_refs=frozenset(int(i) for i in data.get("claim_refs", ())),
            tags=tuple(data.get("tags", ())),
        )


@dataclass(frozen=True)
class Provenance:
    backend_id: str = ""
    prompt_digest: str = ""
    created_at: str | None = None

    def to_dict(self) -> dict:
        return {
            "backend_id": self.backend_id,
            "prompt_digest": self.prompt_digest,
            "created_at": self.created_at,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Provenance":
        return cls(
            backend_id=data.get("backend_id", ""),
            prompt_digest=data.get("prompt_digest", ""),
            created_at=data.get("created_at"),
        )


@dataclass(frozen=True)
class Hierarchy:
    """One tree of categories over a review set's claims."""

    id: str
    review_id: str
    root: CategoryNode
    provenance: Provenance = field(default_factory=Provenance)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "id": self.id,
            "review_id": self.review_id,
            "provenance": self.provenance.to_dict(),
            "root": self.root.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Hierarchy":
        return cls(
            id=data["id"],
            review_id=data.get("review_id", ""),
            root=CategoryNode.from_dict(data["root"]),
            provenance=Provenance.from_dict(data.get("provenance", {})),
        )


def dumps_hierarchy(hierarchy: Hierarchy) -> str:
    return json.dumps(hierarchy.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def loads_hierarchy(text: str) -> Hierarchy:
    return Hierarchy.from_dict(json.loads(text))


# --- tree walks ---------------------------------------------------------------

def iter_nodes(hierarchy: Hierarchy) -> Iterator[tuple[tuple[str, ...], CategoryNode]]:
    """Pre-order walk yielding (display-name path from root, node)."""

    def walk(node: CategoryNode, path: tuple[str, ...]):
        yield path, node
        for child in node.children:
            yield from walk(child, path + (child.name,))

    yield from walk(hierarchy.root, (hierarchy.root.name,))


def node_count(hierarchy: Hierarchy) -> int:
    return sum(1 for _ in iter_nodes(hierarchy))


def find_node(hierarchy: Hierarchy, node_path: Sequence[str]) -> CategoryNode:
    """Resolve a name path (root name first); raises NodeNotFound."""
    target = normalize_path(node_path)
    if not target or target[0] != normalize_name(hierarchy.root.name):
        raise NodeNotFound(node_path)
    node = hierarchy.root
    for part in target[1:]:
        for child in node.children:
            if normalize_name(child.name) == part:
                node = child
                break
        else:
            raise NodeNotFound(node_path)
    return node


def path_to_root(hierarchy: Hierarchy, node_path: Sequence[str]) -> list[CategoryNode]:
    """Nodes from the root down to the addressed node, inclusive."""
    target = normalize_path(node_path)
    if not target or target[0] != normalize_name(hierarchy.root.name):
        raise NodeNotFound(node_path)
    nodes = [hierarchy.root]
    for part in target[1:]:
        for child in nodes[-1].children:
            if normalize_name(child.name) == part:
                nodes.append(child)
                break
        else:
            raise NodeNotFound(node_path)
    return nodes


def depth(hierarchy: Hierarchy) -> int:
    """Edges on the longest root-to-leaf path (single node -> 0)."""

    def node_depth(node: CategoryNode) -> int:
        if not node.children:
            return 0
        return 1 + max(node_depth(child) for child in node.children)

    return node_depth(hierarchy.root)


# --- validation ---------------------------------------------------------------

RULE_EMPTY_NAME = "EmptyName"
RULE_DUPLICATE_SIBLING = "DuplicateSibling"
RULE_DANGLING_CLAIM_REF = "DanglingClaimRef"
RULE_MAX_DEPTH = "MaxDepthExceeded"


@dataclass(frozen=True)
class Violation:
    path: tuple[str, ...]
    rule: str
    detail: str = ""

    def __str__(self) -> str:
        where = " / ".join(self.path)
        return f"{self.rule} at [{where}]" + (f": {self.detail}" if self.detail else "")


def validate(
    hierarchy: Hierarchy,
    review_set: ReviewSet | None = None,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> list[Violation]:
    """Check every tree invariant; violations are data, not failures.

    Claim-reference range checks run only when `review_set` is given.
    """
    violations: list[Violation] = []
    valid_refs = review_set.valid_claim_indices() if review_set is not None else None

    for path, node in iter_nodes(hierarchy):
        if not node.name.strip():
            violations.append(Violation(path, RULE_EMPTY_NAME))
        seen: dict[str, str] = {}
        for child in node.children:
            key = normalize_name(child.name)
            if key in seen:
                violations.append(
                    Violation(
                        path + (child.name,),
                        RULE_DUPLICATE_SIBLING,
                        f"{child.name!r} collides with {seen[key]!r}",
                    )
                )
            else:
                seen[key] = child.name
        if valid_refs is not None:
            dangling = sorted(node.claim_refs - valid_refs)
            if dangling:
                violations.append(
                    Violation(path, RULE_DANGLING_CLAIM_REF, f"refs {dangling}")
                )
        if len(path) - 1 > max_depth:
            violations.append(
                Violation(path, RULE_MAX_DEPTH, f"depth {len(path) - 1} > {max_depth}")
            )

    return violations
