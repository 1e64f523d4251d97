"""Tolerance-aware recursive tree matching, skeleton masking, and accuracy metrics.

Credit is assigned top-down: a node whose operator kind (or interval, or
predicate) does not match contributes nothing, and neither does anything below
it.  Children of ``and``/``or`` are matched under the alignment maximizing the
total child score, so conjunct/disjunct order never matters.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .stl_ast import (
    BINARY_TEMPORAL,
    MULTI_ARY,
    Predicate,
    SchemaError,
    StlNode,
    parse_stl_json,
)

MAX_COMMUTATIVE_ARITY = 8

_MASK_PREDICATE = Predicate("signal", ">", 0.0)
_MASK_INTERVAL = (0.0, 0.0)


class MatchArityError(ValueError):
    """Commutative node has too many children for exact alignment search."""


@dataclass(frozen=True)
class MatchConfig:
    numeric_tolerance: float = 0.1
    commutative_ops: frozenset = frozenset(MULTI_ARY)

    def __post_init__(self):
        if self.numeric_tolerance < 0:
            raise ValueError("numeric_tolerance must be >= 0")


@dataclass(frozen=True)
class MatchScore:
    value: float
    exact: bool


def _close(x: float, y: float, tol: float) -> bool:
    return abs(float(x) - float(y)) <= tol


def _interval_match(a, b, tol: float) -> bool:
    if (a is None) != (b is None):
        return False
    if a is None:
        return True
    return _close(a[0], b[0], tol) and _close(a[1], b[1], tol)


def _atom_score(p: Predicate, r: Predicate, tol: float) -> float:
    ok = (
        p.signal == r.signal
        and p.comparator == r.comparator
        and _close(p.threshold, r.threshold, tol)
    )
    return 1.0 if ok else 0.0


def _best_alignment(matrix, n: int, m: int) -> float:
    """Maximum-sum assignment of min(n, m) pairs via exhaustive search."""
    if n <= m:
        rows, cols, swap = n, m, False
    else:
        rows, cols, swap = m, n, True
    best = 0.0
    for perm in itertools.permutations(range(cols), rows):
        total = 0.0
        for i, j in enumerate(perm):
            total += matrix[j][i] if swap else matrix[i][j]
        if total > best:
            best = total
    return best


def _score(pred: StlNode, ref: StlNode, cfg: MatchConfig) -> float:
    if pred.operation != ref.operation:
        return 0.0
    if pred.operation == "Atom":
        return _atom_score(pred.predicate, ref.predicate, cfg.numeric_tolerance)
    if not _interval_match(pred.time, ref.time, cfg.numeric_tolerance):
        return 0.0
    if pred.operation in cfg.commutative_ops:
        n, m = len(pred.children), len(ref.children)
        if max(n, m) > MAX_COMMUTATIVE_ARITY:
            raise MatchArityError(
                f"{pred.operation} arity {max(n, m)} exceeds {MAX_COMMUTATIVE_ARITY}"
            )
        matrix = [[_score(pc, rc, cfg) for rc in ref.children] for pc in pred.children]
        return _best_alignment(matrix, n, m) / max(n, m)
    pred_children = pred.child_nodes()
    ref_children = ref.child_nodes()
    total = sum(_score(pc, rc, cfg) for pc, rc in zip(pred_children, ref_children))
    return total / len(ref_children)


def tree_match(predicted: StlNode, reference: StlNode, cfg: MatchConfig = MatchConfig()) -> MatchScore:
    """Recursive top-down similarity in [0, 1]; exact iff every node matches."""
    value = _score(predicted, reference, cfg)
    return MatchScore(value=value, exact=value == 1.0)


def mask_tree(node: StlNode) -> StlNode:
    """Replace predicates, intervals, and thresholds with fixed placeholders."""
    if node.is_atom():
        return StlNode("Atom", predicate=_MASK_PREDICATE)
    return StlNode(
        node.operation,
        time=_MASK_INTERVAL if node.time is not None else None,
        left=mask_tree(node.left) if node.left is not None else None,
        right=mask_tree(node.right) if node.right is not None else None,
        children=tuple(mask_tree(c) for c in node.children),
    )


def _try_parse(raw: str) -> StlNode | None:
    try:
        return parse_stl_json(raw)
    except SchemaError:
        return None


def format_accuracy(pairs, cfg: MatchConfig = MatchConfig()) -> float:
    """Fraction of pairs whose parsed skeleton matches the reference skeleton."""
    if not pairs:
        return 0.0
    hits = 0
    for raw, reference in pairs:
        parsed = _try_parse(raw)
        if parsed is None:
            continue
        if tree_match(mask_tree(parsed), mask_tree(reference), cfg).exact:
            hits += 1
    return hits / len(pairs)


def formula_accuracy(pairs, cfg: MatchConfig = MatchConfig()) -> float:
    """Fraction of pairs whose full canonical tree matches the reference."""
    if not pairs:
        return 0.0
    hits = 0
    for raw, reference in pairs:
        parsed = _try_parse(raw)
        if parsed is None:
            continue
        if tree_match(parsed, reference, cfg).exact:
            hits += 1
    return hits / len(pairs)


def evaluate_batch(records, cfg: MatchConfig = MatchConfig()) -> dict:
    """Score a batch of {id, prediction, reference} records into a metrics report."""
    per_sample = []
    pairs = []
    for rec in records:
        reference = rec["reference"]
        if not isinstance(reference, StlNode):
            import json as _json

            reference = parse_stl_json(
                reference if isinstance(reference, str) else _json.dumps(reference)
            )
        raw = rec.get("prediction", "")
        pairs.append((raw, reference))
        parsed = _try_parse(raw)
        if parsed is None:
            per_sample.append(
                {"id": rec.get("id"), "valid": False, "score": 0.0,
                 "format_match": False, "formula_match": False}
            )
            continue
        score = tree_match(parsed, reference, cfg)
        skeleton = tree_match(mask_tree(parsed), mask_tree(reference), cfg)
        per_sample.append(
            {
                "id": rec.get("id"),
                "valid": True,
                "score": score.value,
                "format_match": skeleton.exact,
                "formula_match": score.exact,
            }
        )
    n = len(per_sample)
    return {
        "format_accuracy": sum(s["format_match"] for s in per_sample) / n if n else 0.0,
        "formula_accuracy": sum(s["formula_match"] for s in per_sample) / n if n else 0.0,
        "per_sample": per_sample,
    }
