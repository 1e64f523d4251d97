"""In-process bindings over stlforge for training loops.

A thin shim: no scoring logic lives here. Callers get plain tuples, lists,
and BoundReport records whose token arrays always match the supplied token
count, so any tensor framework can consume them directly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from stlforge import (
    MatchConfig,
    RewardConfig,
    StlNode,
    group_advantages,
    parse_stl_json,
    process_rewards,
    score_group,
    score_outcome,
    token_labels,
    tree_match,
)
from stlforge.rollout import default_token_spans
from stlforge.stl_ast import SchemaError, parse_stl_object

__all__ = [
    "BindingError",
    "BoundReport",
    "bound_tree_match",
    "bound_score_group",
    "make_config",
    "score_outcome",
    "process_rewards",
    "group_advantages",
    "token_labels",
]

__version__ = "0.1.0"


class BindingError(ValueError):
    """Raised when inputs cannot be decoded into STL trees or a config."""


@dataclass
class BoundReport:
    r_fmt: int
    s_tree: float
    r_cnt: float
    r_out: float
    c_final: int
    stage_roles: list
    stage_verdicts: list
    r_proc: list
    a_out: float
    a_proc: list
    token_advantages: list
    token_mask: list
    truncated: bool

    def to_json(self) -> dict:
        return dict(self.__dict__)


def make_config(
    tau: float = 0.5,
    kappa: float = 0.3,
    tolerance: float = 0.1,
    epsilon: float = 1e-8,
    group_size: int = 8,
) -> RewardConfig:
    try:
        return RewardConfig(
            tau=tau, kappa=kappa, tolerance=tolerance,
            epsilon=epsilon, group_size=group_size,
        )
    except ValueError as exc:
        raise BindingError(str(exc)) from exc


def _decode_tree(value) -> StlNode:
    try:
        if isinstance(value, StlNode):
            return value
        if isinstance(value, dict):
            return parse_stl_object(value)
        return parse_stl_json(value)
    except SchemaError as exc:
        raise BindingError(str(exc)) from exc


def bound_tree_match(predicted_json, reference_json, tolerance: float = 0.1):
    """Tolerance-aware tree similarity; returns (score, exact)."""
    predicted = _decode_tree(predicted_json)
    reference = _decode_tree(reference_json)
    try:
        cfg = MatchConfig(numeric_tolerance=tolerance)
    except ValueError as exc:
        raise BindingError(str(exc)) from exc
    score = tree_match(predicted, reference, cfg)
    return (score.value, score.exact)


def bound_score_group(transcripts, token_spans, references, config: RewardConfig | None = None):
    """Score one rollout group; returns one BoundReport per transcript."""
    if not isinstance(config, (RewardConfig, type(None))):
        raise BindingError(f"bad config: {config!r}")
    cfg = config or RewardConfig()
    transcripts = list(transcripts)
    references = [_decode_tree(r) for r in references]
    if token_spans is None:
        token_spans = [None] * len(transcripts)
    if not (len(transcripts) == len(references) == len(token_spans)):
        raise BindingError("transcripts, token_spans, and references must align")
    spans_list = [
        default_token_spans(t) if spans is None else [tuple(s) for s in spans]
        for t, spans in zip(transcripts, token_spans)
    ]
    reports = score_group(transcripts, references, cfg, token_spans_list=spans_list)
    out = []
    for report, spans in zip(reports, spans_list):
        doc = report.to_json()
        bound = BoundReport(
            r_fmt=doc["r_fmt"],
            s_tree=doc["s_tree"],
            r_cnt=doc["r_cnt"],
            r_out=doc["r_out"],
            c_final=doc["c_final"],
            stage_roles=doc["stage_roles"],
            stage_verdicts=doc["stage_verdicts"],
            r_proc=doc["r_proc"],
            a_out=doc["a_out"],
            a_proc=doc["a_proc"],
            token_advantages=doc["token_advantages"],
            token_mask=doc["token_mask"],
            truncated=doc["truncated"],
        )
        assert len(bound.token_advantages) == len(spans)
        assert len(bound.token_mask) == len(spans)
        out.append(bound)
    return out
