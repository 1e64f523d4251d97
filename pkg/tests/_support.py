"""Shared test helpers: random tree/trace generation and an independent
brute-force satisfaction oracle used to cross-check the evaluator."""

from __future__ import annotations

import math
import random

from stlforge import StlNode, Trace, atom
from stlforge.stl_ast import CANONICAL_SIGNALS

SIGNAL_POOL = sorted(CANONICAL_SIGNALS)
COMPARATOR_POOL = [">", ">=", "<", "<=", "=="]


def random_predicate(rng: random.Random, signals=None) -> StlNode:
    signal = rng.choice(signals or SIGNAL_POOL)
    comparator = rng.choice(COMPARATOR_POOL)
    threshold = round(rng.uniform(-100, 100), 2)
    return atom(signal, comparator, threshold)


def random_interval(rng: random.Random, horizon: int = 2000) -> tuple:
    a = rng.randrange(0, horizon)
    b = rng.randrange(a, horizon + 1)
    return (float(a), float(b))


def random_tree(
    rng: random.Random, depth: int = 4, signals=None, allow_events: bool = True
) -> StlNode:
    """Well-formed canonical tree of the given maximum depth."""
    if depth <= 0 or rng.random() < 0.25:
        return random_predicate(rng, signals)
    ops = ["Globally", "Finally", "Until", "Since", "Historically", "Once",
           "imply", "and", "or", "Not"]
    if allow_events:
        ops += ["Rise", "Fall"]
    op = rng.choice(ops)
    if op in ("Globally", "Finally", "Historically", "Once"):
        return StlNode(op, time=random_interval(rng),
                       right=random_tree(rng, depth - 1, signals, allow_events))
    if op in ("Until", "Since"):
        return StlNode(op, time=random_interval(rng),
                       left=random_tree(rng, depth - 1, signals, allow_events),
                       right=random_tree(rng, depth - 1, signals, allow_events))
    if op == "imply":
        return StlNode(op,
                       left=random_tree(rng, depth - 1, signals, allow_events),
                       right=random_tree(rng, depth - 1, signals, allow_events))
    if op in ("and", "or"):
        n = rng.randrange(2, 5)
        return StlNode(op, children=tuple(
            random_tree(rng, depth - 1, signals, allow_events) for _ in range(n)
        ))
    if op == "Not":
        return StlNode(op, right=random_tree(rng, depth - 1, signals, allow_events))
    return StlNode(op, right=random_predicate(rng, signals))  # Rise / Fall


def random_trace(rng: random.Random, signals, length: int) -> Trace:
    return Trace({
        s: [round(rng.uniform(-5, 5), 3) for _ in range(length)] for s in signals
    })


def _pred_holds(pred, trace: Trace, k: int) -> bool:
    v = trace.sample(pred.signal, k)
    t = pred.threshold
    return {
        ">": v > t,
        ">=": v >= t,
        "<": v < t,
        "<=": v <= t,
        "==": abs(v - t) <= 1e-9,
    }[pred.comparator]


def oracle_sat(phi: StlNode, trace: Trace, k: int) -> bool:
    """Literal quantifier expansion of the operator definitions."""
    T = trace.length - 1
    op = phi.operation
    if op == "Atom":
        return _pred_holds(phi.predicate, trace, k)
    if op == "Not":
        return not oracle_sat(phi.right, trace, k)
    if op == "and":
        return all(oracle_sat(c, trace, k) for c in phi.children)
    if op == "or":
        return any(oracle_sat(c, trace, k) for c in phi.children)
    if op == "imply":
        return oracle_sat(phi.right, trace, k) if oracle_sat(phi.left, trace, k) else True
    if op == "Rise":
        return k >= 1 and not _pred_holds(phi.right.predicate, trace, k - 1) \
            and _pred_holds(phi.right.predicate, trace, k)
    if op == "Fall":
        return k >= 1 and _pred_holds(phi.right.predicate, trace, k - 1) \
            and not _pred_holds(phi.right.predicate, trace, k)
    a, b = phi.time
    if op in ("Finally", "Globally", "Until"):
        candidates = [
            kp for kp in range(int(math.ceil(k + a)), int(math.floor(k + b)) + 1)
            if 0 <= kp <= T
        ]
    else:
        candidates = [
            kp for kp in range(int(math.ceil(k - b)), int(math.floor(k - a)) + 1)
            if 0 <= kp <= T
        ]
    if op == "Finally":
        return any(oracle_sat(phi.right, trace, kp) for kp in candidates)
    if op == "Globally":
        return all(oracle_sat(phi.right, trace, kp) for kp in candidates)
    if op == "Until":
        for kp in candidates:
            if oracle_sat(phi.right, trace, kp):
                if all(oracle_sat(phi.left, trace, kpp) for kpp in range(k, kp)):
                    return True
        return False
    if op == "Once":
        return any(oracle_sat(phi.right, trace, kp) for kp in candidates)
    if op == "Historically":
        return all(oracle_sat(phi.right, trace, kp) for kp in candidates)
    if op == "Since":
        for kp in candidates:
            if oracle_sat(phi.right, trace, kp):
                if all(oracle_sat(phi.left, trace, kpp) for kpp in range(kp + 1, k + 1)):
                    return True
        return False
    raise AssertionError(f"oracle cannot handle {op}")
