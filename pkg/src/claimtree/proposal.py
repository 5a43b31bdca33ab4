"""Hierarchy proposal stage: root-category generation, hierarchy completion,
and the bullet-outline grammar the model output is parsed with.

The grammar is deliberately a superset of what models emit: "-" or "*"
bullets, an auto-detected indent unit, and trailing bracketed claim
references like "[1, 4, 12]". Mismatches degrade to recorded warnings, not
guesses.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from typing import Sequence

from .backend import Backend, CompletionRequest, request_digest
from .core import (
    CategoryNode,
    Claim,
    Hierarchy,
    Provenance,
    ReviewSet,
    normalize_name,
    validate,
)
from .errors import (
    IndentJump,
    MalformedRefs,
    MultipleRoots,
    NoRoot,
    OutlineParseError,
    UnparseableResponse,
    ValidationFailed,
)
from .pregen import EntityCount, parse_list_items

MAX_ROOT_CATEGORIES = 5
DEFAULT_COVERAGE_THRESHOLD = 0.30

ROOT_PROMPT_TEMPLATE = """\
A literature review covers the research topic below. Each study's findings \
have been compressed into the numbered claims listed after the topic.

Topic: {topic}

Claims:
{claims}

Frequently mentioned terms: {entities}

Propose up to five top-level aspects, each usable as the root category of a \
separate hierarchy organizing these claims (different aspects should slice \
the claims differently). Respond with a numbered list of category names \
only, one per line.
"""

HIERARCHY_PROMPT_TEMPLATE = """\
Build one hierarchy of categories that organizes the numbered claims below \
under the root category "{root}".

Claims:
{claims}

Respond with an indented bullet outline only. The first line must be \
"- {root}" with no indentation. Indent each level by two extra spaces. \
After every category name below the root, list the claims assigned to it \
as bracketed numbers, e.g. "  - Subgroup [1, 4]". A claim may appear under \
several categories or under none.
"""


@dataclass(frozen=True)
class RootCategory:
    name: str
    rationale: str | None = None


@dataclass(frozen=True)
class OutlineGrammar:
    bullets: tuple[str, ...] = ("-", "*")
    indent_unit: int | None = None  # None = auto-detect from the first indented line
    tab_width: int = 4

    def __post_init__(self):
        if self.indent_unit is not None and self.indent_unit < 1:
            raise ValueError("indent_unit must be >= 1 space")


DEFAULT_GRAMMAR = OutlineGrammar()

_TRAILING_REFS = re.compile(r"\[([^\[\]]*)\]\s*$")
_REF_LIST = re.compile(r"^\s*\d+(?:\s*,\s*\d+)*\s*$")


def _format_claims(claims: Sequence[Claim]) -> str:
    return "\n".join(f"{claim.index}. {claim.text}" for claim in claims)


def build_root_prompt(
    topic_title: str, claims: Sequence[Claim], entities: Sequence[EntityCount]
) -> str:
    return ROOT_PROMPT_TEMPLATE.format(
        topic=topic_title,
        claims=_format_claims(claims),
        entities=", ".join(e.surface for e in entities) or "(none)",
    )


def build_hierarchy_prompt(root_name: str, claims: Sequence[Claim]) -> str:
    return HIERARCHY_PROMPT_TEMPLATE.format(root=root_name, claims=_format_claims(claims))


def generate_root_categories(
    topic_title: str,
    claims: Sequence[Claim],
    entities: Sequence[EntityCount],
    backend: Backend,
    backend_id: str = "default",
) -> list[RootCategory]:
    """Ask for up to five top-level aspects; duplicates are dropped (order
    preserved) and anything past the cap truncated."""
    if not claims:
        raise ValueError("at least one claim is required")
    request = CompletionRequest(
        prompt=build_root_prompt(topic_title, claims, entities), backend_id=backend_id
    )
    names = parse_list_items(backend.complete(request))
    if not names:
        raise UnparseableResponse("no list of root categories in response")
    seen: set[str] = set()
    roots: list[RootCategory] = []
    for name in names:
        key = normalize_name(name)
        if key and key not in seen:
            seen.add(key)
            roots.append(RootCategory(name=name.strip()))
        if len(roots) == MAX_ROOT_CATEGORIES:
            break
    return roots


# --- outline parsing ------------------------------------------------------------


@dataclass(frozen=True)
class ParsedOutline:
    root: CategoryNode
    warnings: tuple[str, ...] = ()
    indent_unit: int | None = None


class _Draft:
    __slots__ = ("name", "refs", "children")

    def __init__(self, name: str, refs: frozenset[int]):
        self.name = name
        self.refs = refs
        self.children: list[_Draft] = []

    def freeze(self) -> CategoryNode:
        return CategoryNode(
            name=self.name,
            children=tuple(child.freeze() for child in self.children),
            claim_refs=self.refs,
        )


def _split_refs(text: str, line_no: int) -> tuple[str, frozenset[int]]:
    match = _TRAILING_REFS.search(text)
    if not match:
        return text.strip(), frozenset()
    inside = match.group(1)
    name = text[: match.start()].strip()
    if not inside.strip():
        return name, frozenset()
    if not _REF_LIST.match(inside):
        raise MalformedRefs(f"cannot parse claim refs {inside!r}", line=line_no)
    return name, frozenset(int(part) for part in inside.split(","))


def parse_outline(text: str, grammar: OutlineGrammar | None = None) -> ParsedOutline:
    """Parse a bullet outline into a category tree.

    The first bullet must sit at indent 0 and becomes the root; every later
    bullet attaches to the nearest shallower predecessor. Indent unit is
    taken from the grammar or auto-detected from the first indented line;
    inconsistent indents round down to the nearest level with a warning.
    """
    if not text.strip():
        raise NoRoot("empty outline")
    grammar = grammar or DEFAULT_GRAMMAR
    bullet_re = re.compile(
        r"^([ \t]*)([" + re.escape("".join(grammar.bullets)) + r"])\s*(\S.*)$"
    )

    warnings: list[str] = []
    unit = grammar.indent_unit
    stack: list[_Draft] = []  # stack[i] = open node at level i
    root: _Draft | None = None

    for line_no, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        match = bullet_re.match(raw)
        if not match:
            if root is None:
                raise NoRoot(f"expected an outline bullet, got {raw!r}", line=line_no)
            warnings.append(f"line {line_no}: not an outline bullet, ignored")
            continue
        indent_str, _bullet, rest = match.groups()
        indent = len(indent_str.expandtabs(grammar.tab_width))
        name, refs = _split_refs(rest, line_no)

        if root is None:
            if indent != 0:
                raise NoRoot("first outline line must start at indent 0", line=line_no)
            root = _Draft(name, refs)
            stack = [root]
            continue

        if indent == 0:
            raise MultipleRoots(f"second top-level entry {name!r}", line=line_no)
        if unit is None:
            unit = indent  # first indented line fixes the unit
        level = max(indent // unit, 1)
        if indent % unit:
            warnings.append(
                f"line {line_no}: indent {indent} not a multiple of {unit}, "
                f"rounded down to level {level}"
            )
        if level > len(stack):
            raise IndentJump(
                f"level jumps from {len(stack) - 1} to {level}", line=line_no
            )
        node = _Draft(name, refs)
        stack[level - 1].children.append(node)
        del stack[level:]
        stack.append(node)

    if root is None:
        raise NoRoot("no outline bullets found")
    return ParsedOutline(root=root.freeze(), warnings=tuple(warnings), indent_unit=unit)


def format_outline(root: CategoryNode, grammar: OutlineGrammar | None = None) -> str:
    """Serialize a category tree back to outline text; parse_outline of the
    result reproduces the tree."""
    grammar = grammar or DEFAULT_GRAMMAR
    unit = grammar.indent_unit or 2
    bullet = grammar.bullets[0]
    lines: list[str] = []

    def emit(node: CategoryNode, level: int) -> None:
        refs = f" [{', '.join(str(i) for i in sorted(node.claim_refs))}]" if node.claim_refs else ""
        lines.append(f"{' ' * (unit * level)}{bullet} {node.name}{refs}")
        for child in node.children:
            emit(child, level + 1)

    emit(root, 0)
    return "\n".join(lines) + "\n"


# --- hierarchy completion ---------------------------------------------------------


@dataclass(frozen=True)
class ProposalResult:
    hierarchy: Hierarchy
    outline_text: str
    warnings: tuple[str, ...] = ()


def _drop_dangling_refs(
    node: CategoryNode, valid: frozenset[int], path: tuple[str, ...], warnings: list[str]
) -> CategoryNode:
    dangling = sorted(node.claim_refs - valid)
    refs = node.claim_refs
    if dangling:
        warnings.append(f"DanglingClaimRef at [{' / '.join(path)}]: dropped {dangling}")
        refs = node.claim_refs & valid
    children = tuple(
        _drop_dangling_refs(child, valid, path + (child.name,), warnings)
        for child in node.children
    )
    return replace(node, claim_refs=refs, children=children)


def complete_hierarchy(
    root_category: RootCategory,
    claims: Sequence[Claim],
    backend: Backend,
    review_id: str = "",
    hierarchy_id: str | None = None,
    grammar: OutlineGrammar | None = None,
    backend_id: str = "default",
    created_at: str | None = None,
    max_depth: int = 6,
) -> ProposalResult:
    """Generate and parse one hierarchy for a root category.

    Out-of-range claim references are dropped with a recorded warning (model
    output is noisy; later correction passes deal with content errors), but
    structural invariant violations raise ValidationFailed so no invalid
    tree escapes.
    """
    prompt = build_hierarchy_prompt(root_category.name, claims)
    request = CompletionRequest(prompt=prompt, backend_id=backend_id)
    outline_text = backend.complete(request)

    try:
        parsed = parse_outline(outline_text, grammar)
    except OutlineParseError as exc:
        raise UnparseableResponse(f"outline for {root_category.name!r}: {exc}") from exc

    warnings = list(parsed.warnings)
    root = parsed.root
    if normalize_name(root.name) != normalize_name(root_category.name):
        warnings.append(
            f"root renamed from {root.name!r} to requested {root_category.name!r}"
        )
        root = replace(root, name=root_category.name)

    valid = frozenset(claim.index for claim in claims)
    root = _drop_dangling_refs(root, valid, (root.name,), warnings)
    if not root.children:
        warnings.append("EmptyHierarchy: outline contained only the root line")

    hierarchy = Hierarchy(
        id=hierarchy_id or f"{review_id}-{normalize_name(root_category.name).replace(' ', '-')}",
        review_id=review_id,
        root=root,
        provenance=Provenance(
            backend_id=backend_id,
            prompt_digest=request_digest(request),
            created_at=created_at,
        ),
    )
    review_probe = ReviewSet(id=review_id, title="", claims=tuple(claims))
    violations = validate(hierarchy, review_probe, max_depth=max_depth)
    if violations:
        raise ValidationFailed(violations)
    return ProposalResult(
        hierarchy=hierarchy, outline_text=outline_text, warnings=tuple(warnings)
    )


# --- claim coverage ---------------------------------------------------------------


def referenced_claims(hierarchy: Hierarchy) -> frozenset[int]:
    refs: set[int] = set()

    def walk(node: CategoryNode) -> None:
        refs.update(node.claim_refs)
        for child in node.children:
            walk(child)

    walk(hierarchy.root)
    return frozenset(refs)


def coverage(hierarchy: Hierarchy, claims: Sequence[Claim]) -> float:
    """Fraction of the topic's claims referenced anywhere in the tree."""
    if not claims:
        return 0.0
    return len(referenced_claims(hierarchy)) / len(claims)


def filter_low_coverage(
    hierarchies: Sequence[Hierarchy],
    claims: Sequence[Claim],
    threshold: float = DEFAULT_COVERAGE_THRESHOLD,
) -> list[Hierarchy]:
    """Keep hierarchies with coverage >= threshold. The boundary is
    inclusive: only strictly lower coverage is filtered out."""
    if not 0 <= threshold <= 1:
        raise ValueError("threshold must be in [0, 1]")
    return [h for h in hierarchies if coverage(h, claims) >= threshold]
