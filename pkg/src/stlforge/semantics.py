"""Boolean satisfaction of STL formulas over finite discrete-time traces.

One trace sample corresponds to one canonical time unit, so formula intervals
index samples directly.  Quantifier ranges are intersected with [0, T]: an
existential over an empty range is false, a universal vacuously true.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

from .stl_ast import MULTI_ARY, StlNode

EQ_TOLERANCE = 1e-9


class EvalError(ValueError):
    UNKNOWN_SIGNAL = "unknown_signal"
    INDEX_OUT_OF_RANGE = "index_out_of_range"

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind}: {detail}" if detail else kind)


@dataclass(frozen=True)
class Trace:
    """Named signals sampled at a shared discrete clock; immutable."""

    signals: dict

    def __post_init__(self):
        lengths = {len(v) for v in self.signals.values()}
        if not self.signals or lengths == {0}:
            raise EvalError(EvalError.INDEX_OUT_OF_RANGE, "empty trace")
        if len(lengths) != 1:
            raise EvalError(EvalError.INDEX_OUT_OF_RANGE, "ragged signal arrays")
        object.__setattr__(
            self, "signals", {k: tuple(float(x) for x in v) for k, v in self.signals.items()}
        )

    @property
    def length(self) -> int:
        return len(next(iter(self.signals.values())))

    @property
    def last_index(self) -> int:
        return self.length - 1

    def sample(self, signal: str, k: int) -> float:
        try:
            series = self.signals[signal]
        except KeyError:
            raise EvalError(EvalError.UNKNOWN_SIGNAL, signal) from None
        return series[k]

    @classmethod
    def from_json(cls, text: str) -> "Trace":
        return cls(json.loads(text))

    @classmethod
    def from_csv(cls, text: str) -> "Trace":
        reader = csv.DictReader(io.StringIO(text))
        columns: dict = {name: [] for name in reader.fieldnames or ()}
        for row in reader:
            for name in columns:
                columns[name].append(float(row[name]))
        return cls(columns)


def _holds_atom(pred, trace: Trace, k: int) -> bool:
    value = trace.sample(pred.signal, k)
    t = pred.threshold
    if pred.comparator == ">":
        return value > t
    if pred.comparator == ">=":
        return value >= t
    if pred.comparator == "<":
        return value < t
    if pred.comparator == "<=":
        return value <= t
    return abs(value - t) <= EQ_TOLERANCE


def _window(trace: Trace, lo: float, hi: float) -> range:
    """Integer indices of [lo, hi] intersected with [0, T]."""
    start = max(0, math.ceil(lo))
    stop = min(trace.last_index, math.floor(hi))
    return range(start, stop + 1)


def satisfies(formula: StlNode, trace: Trace, k: int = 0) -> bool:
    """Whether the trace satisfies the formula at time index k."""
    if not 0 <= k <= trace.last_index:
        raise EvalError(EvalError.INDEX_OUT_OF_RANGE, f"k={k}, T={trace.last_index}")
    return _sat(formula, trace, k)


def satisfies_trace(formula: StlNode, trace: Trace) -> bool:
    return satisfies(formula, trace, 0)


def _sat(phi: StlNode, trace: Trace, k: int) -> bool:
    op = phi.operation
    if op == "Atom":
        return _holds_atom(phi.predicate, trace, k)
    if op == "Not":
        return not _sat(phi.right, trace, k)
    if op == "and":
        return all(_sat(c, trace, k) for c in phi.children)
    if op == "or":
        return any(_sat(c, trace, k) for c in phi.children)
    if op == "imply":
        return (not _sat(phi.left, trace, k)) or _sat(phi.right, trace, k)
    if op == "Rise":
        # No predecessor sample at k=0: a transition cannot be witnessed.
        if k == 0:
            return False
        return (not _holds_atom(phi.right.predicate, trace, k - 1)) and _holds_atom(
            phi.right.predicate, trace, k
        )
    if op == "Fall":
        if k == 0:
            return False
        return _holds_atom(phi.right.predicate, trace, k - 1) and not _holds_atom(
            phi.right.predicate, trace, k
        )
    a, b = phi.time
    if op == "Finally":
        return any(_sat(phi.right, trace, j) for j in _window(trace, k + a, k + b))
    if op == "Globally":
        return all(_sat(phi.right, trace, j) for j in _window(trace, k + a, k + b))
    if op == "Until":
        for j in _window(trace, k + a, k + b):
            if _sat(phi.right, trace, j) and all(
                _sat(phi.left, trace, i) for i in range(k, j)
            ):
                return True
        return False
    if op == "Historically":
        return all(_sat(phi.right, trace, j) for j in _window(trace, k - b, k - a))
    if op == "Once":
        return any(_sat(phi.right, trace, j) for j in _window(trace, k - b, k - a))
    if op == "Since":
        for j in _window(trace, k - b, k - a):
            if _sat(phi.right, trace, j) and all(
                _sat(phi.left, trace, i) for i in range(j + 1, k + 1)
            ):
                return True
        return False
    raise EvalError(EvalError.UNKNOWN_SIGNAL, f"unsupported operator {op}")
