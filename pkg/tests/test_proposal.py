import random

import pytest
from hypothesis import given, settings, strategies as st

from claimtree.backend import ScriptedBackend
from claimtree.core import CategoryNode, depth, normalize_name
from claimtree.errors import (
    IndentJump,
    MalformedRefs,
    MultipleRoots,
    NoRoot,
    UnparseableResponse,
    ValidationFailed,
)
from claimtree.proposal import (
    OutlineGrammar,
    RootCategory,
    build_hierarchy_prompt,
    build_root_prompt,
    complete_hierarchy,
    coverage,
    filter_low_coverage,
    format_outline,
    generate_root_categories,
    parse_outline,
)

from conftest import make_claims, node


class TestParseOutline:
    def test_basic_tree_with_refs(self):
        parsed = parse_outline("- A\n  - B [1, 2]\n  - C [2]")
        root = parsed.root
        assert root.name == "A"
        assert [c.name for c in root.children] == ["B", "C"]
        assert root.children[0].claim_refs == {1, 2}
        assert root.children[1].claim_refs == {2}

    def test_auto_detected_indent_unit(self):
        parsed = parse_outline("- A\n    - B")
        assert parsed.indent_unit == 4
        assert [c.name for c in parsed.root.children] == ["B"]

    def test_indented_first_line_is_no_root(self):
        with pytest.raises(NoRoot):
            parse_outline("  - A")

    def test_empty_text_is_no_root(self):
        with pytest.raises(NoRoot):
            parse_outline("   \n  ")

    def test_level_jump_rejected(self):
        with pytest.raises(IndentJump):
            parse_outline("- A\n  - B\n      - C")

    def test_second_top_level_entry_rejected(self):
        with pytest.raises(MultipleRoots):
            parse_outline("- A\n- B")

    def test_malformed_refs_rejected(self):
        with pytest.raises(MalformedRefs):
            parse_outline("- A\n  - B [1, x]")

    def test_empty_brackets_mean_no_refs(self):
        parsed = parse_outline("- A\n  - B []")
        assert parsed.root.children[0].claim_refs == frozenset()

    def test_non_bullet_lines_ignored_with_warning(self):
        parsed = parse_outline("- A\nHere is my hierarchy:\n  - B")
        assert [c.name for c in parsed.root.children] == ["B"]
        assert any("ignored" in w for w in parsed.warnings)

    def test_inconsistent_indent_rounds_down_with_warning(self):
        parsed = parse_outline("- A\n  - B\n   - C")
        # 3 spaces with unit 2 rounds down to level 1 (sibling of B)
        assert [c.name for c in parsed.root.children] == ["B", "C"]
        assert any("rounded down" in w for w in parsed.warnings)

    def test_deep_nesting_and_star_bullets(self):
        parsed = parse_outline("* A\n  * B\n    * C [3]\n  * D")
        root = parsed.root
        assert root.children[0].children[0].name == "C"
        assert root.children[0].children[0].claim_refs == {3}
        assert root.children[1].name == "D"


def random_outline_tree(rng, max_depth=4, max_children=3):
    counter = [0]

    def build(level):
        counter[0] += 1
        name = f"Category {counter[0]}"
        children = []
        if level < max_depth and rng.random() < 0.7:
            for _ in range(rng.randint(1, max_children)):
                children.append(build(level + 1))
        refs = frozenset(i for i in range(1, 9) if rng.random() < 0.3)
        return CategoryNode(name=name, children=tuple(children), claim_refs=refs)

    return build(0)


class TestOutlineRoundTrip:
    def test_handmade_tree(self):
        tree = node(
            "Root",
            children=[
                node("Left", children=[node("Deep", refs=[1, 4])], refs=[2]),
                node("Right", refs=[3]),
            ],
        )
        assert parse_outline(format_outline(tree)).root == tree

    def test_random_trees(self):
        rng = random.Random(3)
        for _ in range(100):
            tree = random_outline_tree(rng)
            text = format_outline(tree)
            assert parse_outline(text).root == tree

    def test_round_trip_with_custom_unit(self):
        tree = node("Root", children=[node("A", refs=[1])])
        grammar = OutlineGrammar(indent_unit=4)
        assert parse_outline(format_outline(tree, grammar), grammar).root == tree

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=50, deadline=None)
    def test_round_trip_property(self, seed):
        tree = random_outline_tree(random.Random(seed))
        assert parse_outline(format_outline(tree)).root == tree


class TestGenerateRootCategories:
    def claims(self):
        return make_claims(4)

    def test_fig1_roots_present(self):
        backend = ScriptedBackend(
            lambda r: "1. Exercise modalities\n2. Cancer types\n3. Outcome measures"
        )
        roots = generate_root_categories("Exercise and cancer", self.claims(), [], backend)
        names = [root.name for root in roots]
        assert "Exercise modalities" in names
        assert "Cancer types" in names

    def test_seven_aspects_truncated_to_five(self):
        backend = ScriptedBackend(
            lambda r: "\n".join(f"{i}. Aspect {i}" for i in range(1, 8))
        )
        roots = generate_root_categories("topic", self.claims(), [], backend)
        assert len(roots) == 5
        assert roots[-1].name == "Aspect 5"

    def test_duplicates_removed_order_preserved(self):
        backend = ScriptedBackend(lambda r: "1. Alpha\n2. Beta\n3. alpha \n4. Gamma")
        roots = generate_root_categories("topic", self.claims(), [], backend)
        assert [root.name for root in roots] == ["Alpha", "Beta", "Gamma"]

    def test_unparseable_response(self):
        backend = ScriptedBackend(lambda r: "I would rather not answer.")
        with pytest.raises(UnparseableResponse):
            generate_root_categories("topic", self.claims(), [], backend)

    def test_requires_claims(self):
        with pytest.raises(ValueError):
            generate_root_categories("topic", [], [], ScriptedBackend(lambda r: "1. A"))


class TestCompleteHierarchy:
    def claims(self):
        return make_claims(6)

    def test_parses_fig1_style_outline(self):
        outline = (
            "- Cancer types\n"
            "  - Breast [2, 3]\n"
            "  - Prostate [5]\n"
            "  - Metastasis\n"
            "  - Recurrence [6]\n"
        )
        result = complete_hierarchy(
            RootCategory("Cancer types"),
            self.claims(),
            ScriptedBackend(lambda r: outline),
            review_id="rand-review",
            hierarchy_id="h2",
        )
        root = result.hierarchy.root
        assert root.name == "Cancer types"
        breast = root.children[0]
        assert breast.name == "Breast"
        assert breast.claim_refs == {2, 3}

    def test_out_of_range_refs_dropped_with_warning(self):
        outline = "- Root\n  - A [0, 2, 7]\n"
        result = complete_hierarchy(
            RootCategory("Root"), self.claims(), ScriptedBackend(lambda r: outline)
        )
        assert result.hierarchy.root.children[0].claim_refs == {2}
        assert any("DanglingClaimRef" in w for w in result.warnings)

    def test_root_only_outline_warns_empty(self):
        result = complete_hierarchy(
            RootCategory("Root"), self.claims(), ScriptedBackend(lambda r: "- Root")
        )
        assert depth(result.hierarchy) == 0
        assert any("EmptyHierarchy" in w for w in result.warnings)

    def test_root_renamed_to_requested(self):
        result = complete_hierarchy(
            RootCategory("Wanted"),
            self.claims(),
            ScriptedBackend(lambda r: "- Something else\n  - A [1]"),
        )
        assert result.hierarchy.root.name == "Wanted"
        assert any("renamed" in w for w in result.warnings)

    def test_duplicate_siblings_fail_validation(self):
        outline = "- Root\n  - Twin [1]\n  - twin [2]\n"
        with pytest.raises(ValidationFailed):
            complete_hierarchy(
                RootCategory("Root"), self.claims(), ScriptedBackend(lambda r: outline)
            )

    def test_prose_response_unparseable(self):
        with pytest.raises(UnparseableResponse):
            complete_hierarchy(
                RootCategory("Root"),
                self.claims(),
                ScriptedBackend(lambda r: "Sorry, I cannot produce an outline."),
            )

    def test_validates_against_core_rules(self):
        # normalization-equal names at the same level must be rejected even
        # when refs differ
        result = complete_hierarchy(
            RootCategory("Root"),
            self.claims(),
            ScriptedBackend(lambda r: "- Root\n  - A [1]\n    - B [2]\n  - C"),
        )
        assert depth(result.hierarchy) == 2


class TestCoverage:
    def hierarchy(self, refs_by_name):
        children = [node(name, refs=refs) for name, refs in refs_by_name.items()]
        from claimtree.core import Hierarchy

        return Hierarchy(id="h", review_id="r", root=node("Root", children=children))

    def test_three_of_ten(self):
        h = self.hierarchy({"A": [1, 2], "B": [2, 3]})
        assert coverage(h, make_claims(10)) == 0.3

    def test_no_refs(self):
        assert coverage(self.hierarchy({"A": []}), make_claims(10)) == 0.0

    def test_twelve_of_twentyfive(self):
        h = self.hierarchy({"A": list(range(1, 13))})
        assert coverage(h, make_claims(25)) == 0.48

    def test_monotone_in_refs(self):
        claims = make_claims(10)
        smaller = self.hierarchy({"A": [1, 2]})
        larger = self.hierarchy({"A": [1, 2], "B": [5]})
        assert coverage(larger, claims) >= coverage(smaller, claims)

    def test_filter_boundary_inclusive(self):
        claims = make_claims(1000)
        at_threshold = self.hierarchy({"A": list(range(1, 301))})  # 0.300
        below = self.hierarchy({"A": list(range(1, 300))})  # 0.299
        kept = filter_low_coverage([at_threshold, below], claims, threshold=0.30)
        assert kept == [at_threshold]

    def test_filter_threshold_validation(self):
        with pytest.raises(ValueError):
            filter_low_coverage([], make_claims(2), threshold=1.5)


def test_prompts_embed_inputs():
    claims = make_claims(2)
    root_prompt = build_root_prompt("My topic", claims, [])
    assert "My topic" in root_prompt
    assert "1. Finding number 1." in root_prompt
    hier_prompt = build_hierarchy_prompt("Chosen root", claims)
    assert "Chosen root" in hier_prompt
    assert "2. Finding number 2." in hier_prompt
