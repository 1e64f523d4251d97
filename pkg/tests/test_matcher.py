import json
import random

import pytest

from stlforge import (
    MatchConfig,
    StlNode,
    atom,
    format_accuracy,
    formula_accuracy,
    mask_tree,
    serialize_stl_json,
    tree_match,
)
from stlforge.matcher import MatchArityError, evaluate_batch

from _support import random_tree


def test_identity_scores_one():
    rng = random.Random(21)
    for _ in range(100):
        tree = random_tree(rng, depth=4)
        score = tree_match(tree, tree)
        assert score.value == 1.0 and score.exact


def _shuffle_commutative(node: StlNode, rng: random.Random) -> StlNode:
    if node.is_atom():
        return node
    children = tuple(_shuffle_commutative(c, rng) for c in node.children)
    if node.operation in ("and", "or"):
        children = tuple(rng.sample(children, len(children)))
    return StlNode(
        node.operation,
        time=node.time,
        left=_shuffle_commutative(node.left, rng) if node.left is not None else None,
        right=_shuffle_commutative(node.right, rng) if node.right is not None else None,
        children=children,
    )


def test_commutative_children_order_irrelevant():
    rng = random.Random(22)
    for _ in range(100):
        tree = random_tree(rng, depth=4)
        shuffled = _shuffle_commutative(tree, rng)
        assert tree_match(shuffled, tree).exact


def test_noncommutative_order_matters():
    a, b = atom("speed", ">", 1.0), atom("temp", "<", 2.0)
    ref = StlNode("Until", time=(0.0, 5.0), left=a, right=b)
    swapped = StlNode("Until", time=(0.0, 5.0), left=b, right=a)
    assert tree_match(swapped, ref).value == 0.0
    imp = StlNode("imply", left=a, right=b)
    imp_swapped = StlNode("imply", left=b, right=a)
    assert tree_match(imp_swapped, imp).value == 0.0


def test_wrong_root_operator_zeroes_everything():
    ref = StlNode("Globally", time=(0.0, 5.0), right=atom("speed", ">", 1.0))
    pred = StlNode("Finally", time=(0.0, 5.0), right=atom("speed", ">", 1.0))
    assert tree_match(pred, ref).value == 0.0


def test_interval_mismatch_zeroes_subtree():
    a = atom("speed", ">", 1.0)
    ref = StlNode(
        "and",
        children=(a, StlNode("Globally", time=(0.0, 5.0), right=a)),
    )
    pred = StlNode(
        "and",
        children=(a, StlNode("Globally", time=(0.0, 7.0), right=a)),
    )
    score = tree_match(pred, ref)
    # root matches, one of two children fully matches, the other is zeroed
    assert score.value == 0.5 and not score.exact


@pytest.mark.parametrize(
    "delta,expected_exact",
    [(0.0, True), (0.05, True), (0.1, True), (0.100001, False), (1.0, False)],
)
def test_threshold_tolerance_boundary(delta, expected_exact):
    ref = atom("speed", ">", 0.0)
    pred = atom("speed", ">", delta)
    score = tree_match(pred, ref)
    assert score.exact is expected_exact
    assert score.value == (1.0 if expected_exact else 0.0)


@pytest.mark.parametrize(
    "delta,expected_exact",
    [(0.0, True), (0.05, True), (0.100001, False), (1.0, False)],
)
def test_interval_tolerance_boundary(delta, expected_exact):
    ref = StlNode("Finally", time=(0.0, 10.0), right=atom("speed", ">", 1.0))
    pred = StlNode("Finally", time=(0.0, 10.0 + delta), right=atom("speed", ">", 1.0))
    assert tree_match(pred, ref).exact is expected_exact


def test_signal_and_comparator_must_match_exactly():
    ref = atom("speed", ">", 1.0)
    assert tree_match(atom("velocity", ">", 1.0), ref).value == 0.0
    assert tree_match(atom("speed", ">=", 1.0), ref).value == 0.0


def test_commutative_arity_mismatch_partial_credit():
    a, b, c = atom("speed", ">", 1.0), atom("temp", "<", 2.0), atom("load", ">=", 3.0)
    ref = StlNode("and", children=(a, b, c))
    pred = StlNode("and", children=(b, a))
    score = tree_match(pred, ref)
    assert score.value == pytest.approx(2.0 / 3.0)
    assert not score.exact


def test_commutative_alignment_maximizes_credit():
    # the greedy pairing by position would miss both matches here
    a, b = atom("speed", ">", 1.0), atom("temp", "<", 2.0)
    ref = StlNode("or", children=(a, b))
    pred = StlNode("or", children=(b, a))
    assert tree_match(pred, ref).value == 1.0


def test_commutative_arity_cap():
    atoms = tuple(atom("speed", ">", float(i)) for i in range(9))
    ref = StlNode("and", children=atoms)
    with pytest.raises(MatchArityError):
        tree_match(ref, ref)


def test_aggregation_is_mean_of_children():
    a, b = atom("speed", ">", 1.0), atom("temp", "<", 2.0)
    ref = StlNode("Until", time=(0.0, 5.0), left=a, right=b)
    pred = StlNode("Until", time=(0.0, 5.0), left=a, right=atom("temp", "<", 9.0))
    assert tree_match(pred, ref).value == 0.5


def test_deep_partial_score():
    leaf_ref = atom("speed", ">", 1.0)
    leaf_bad = atom("speed", ">", 9.0)
    inner_ref = StlNode("and", children=(leaf_ref, atom("temp", "<", 2.0)))
    inner_pred = StlNode("and", children=(leaf_bad, atom("temp", "<", 2.0)))
    ref = StlNode("Globally", time=(0.0, 5.0), right=inner_ref)
    pred = StlNode("Globally", time=(0.0, 5.0), right=inner_pred)
    assert tree_match(pred, ref).value == 0.5


def test_mask_tree_idempotent_and_skeleton_equal():
    rng = random.Random(23)
    for _ in range(100):
        tree = random_tree(rng, depth=4)
        masked = mask_tree(tree)
        assert mask_tree(masked) == masked
        # numeric and predicate details never survive masking
        perturbed = _perturb_numbers(tree)
        assert mask_tree(perturbed) == masked


def _perturb_numbers(node: StlNode) -> StlNode:
    if node.is_atom():
        p = node.predicate
        return atom(p.signal, p.comparator, p.threshold + 50.0)
    return StlNode(
        node.operation,
        time=(node.time[0], node.time[1] + 17.0) if node.time is not None else None,
        left=_perturb_numbers(node.left) if node.left is not None else None,
        right=_perturb_numbers(node.right) if node.right is not None else None,
        children=tuple(_perturb_numbers(c) for c in node.children),
    )


def test_format_and_formula_accuracy():
    ref = StlNode("Globally", time=(0.0, 5.0), right=atom("speed", ">", 1.0))
    exact = serialize_stl_json(ref)
    skeleton_only = serialize_stl_json(
        StlNode("Globally", time=(0.0, 99.0), right=atom("temp", ">", 1.0))
    )
    wrong_shape = serialize_stl_json(atom("speed", ">", 1.0))
    invalid = "{not json"
    pairs = [(exact, ref), (skeleton_only, ref), (wrong_shape, ref), (invalid, ref)]
    assert format_accuracy(pairs) == 0.5
    assert formula_accuracy(pairs) == 0.25


def test_formula_accuracy_never_exceeds_format_accuracy():
    rng = random.Random(24)
    refs = [random_tree(rng, depth=3) for _ in range(50)]
    pairs = []
    for ref in refs:
        roll = rng.random()
        if roll < 0.4:
            pairs.append((serialize_stl_json(ref), ref))
        elif roll < 0.7:
            pairs.append((serialize_stl_json(_perturb_numbers(ref)), ref))
        elif roll < 0.9:
            pairs.append((serialize_stl_json(random_tree(rng, depth=3)), ref))
        else:
            pairs.append(("garbage", ref))
    assert formula_accuracy(pairs) <= format_accuracy(pairs)


def test_evaluate_batch_report():
    ref = StlNode("Globally", time=(0.0, 5.0), right=atom("speed", ">", 1.0))
    records = [
        {"id": "a", "prediction": serialize_stl_json(ref), "reference": ref},
        {"id": "b", "prediction": "nope", "reference": serialize_stl_json(ref)},
        {
            "id": "c",
            "prediction": serialize_stl_json(
                StlNode("Globally", time=(0.0, 5.0), right=atom("speed", ">", 77.0))
            ),
            "reference": json.loads(serialize_stl_json(ref)),
        },
    ]
    report = evaluate_batch(records)
    assert report["format_accuracy"] == pytest.approx(2 / 3)
    assert report["formula_accuracy"] == pytest.approx(1 / 3)
    by_id = {r["id"]: r for r in report["per_sample"]}
    assert by_id["a"]["formula_match"] and by_id["a"]["format_match"]
    assert not by_id["b"]["valid"] and by_id["b"]["score"] == 0.0
    assert by_id["c"]["format_match"] and not by_id["c"]["formula_match"]


def test_rejects_negative_tolerance():
    with pytest.raises(ValueError):
        MatchConfig(numeric_tolerance=-0.1)


def test_custom_tolerance_widens_match():
    ref = atom("speed", ">", 0.0)
    pred = atom("speed", ">", 0.4)
    assert not tree_match(pred, ref).exact
    assert tree_match(pred, ref, MatchConfig(numeric_tolerance=0.5)).exact
