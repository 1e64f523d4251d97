"""Tool-augmented transcript parsing, stage validation, and reward labeling.

A transcript alternates <think>, <tool_call>, and <tool_result> blocks and ends
with a final segment containing the structured STL JSON answer.  Each tool call
forms one intermediate stage; event grounding and final-value incorporation are
validated as virtual stages so they can be aligned across a rollout group.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

from .matcher import MatchConfig, tree_match
from .stl_ast import SchemaError, StlNode, iter_nodes, parse_stl_json, tree_numbers
from .tools import (
    TOOL_NAMES,
    ToolArgsError,
    ToolCall,
    UnknownToolError,
    execute_tool,
    parse_tool_call,
)

REASONING = "reasoning"
TOOL_CALL = "tool_call"
TOOL_RESULT = "tool_result"
FINAL = "final"

FAIL_BAD_TOOL_NAME = "BadToolName"
FAIL_BAD_ARGS = "BadArgs"
FAIL_EXEC_FAILED = "ExecFailed"
FAIL_INCONSISTENT = "Inconsistent"
FAIL_BAD_PREDICATE_GROUNDING = "BadPredicateGrounding"
FAIL_UNJUSTIFIED_EVENT_OP = "UnjustifiedEventOp"


class RolloutParseError(ValueError):
    UNBALANCED_TAGS = "unbalanced_tags"
    NO_FINAL_ANSWER = "no_final_answer"

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind}: {detail}" if detail else kind)


class DegenerateGroup(ValueError):
    """Group-relative advantages need at least two rollouts."""


@dataclass(frozen=True)
class Segment:
    kind: str
    text: str
    span: tuple  # (start, end) character offsets over the full transcript


@dataclass(frozen=True)
class StageVerdict:
    correct: bool
    failure: str | None = None

    def __post_init__(self):
        assert self.correct == (self.failure is None)


@dataclass
class Stage:
    index: int  # 1-based
    role: tuple  # (category, tool name or "", ordinal of this role)
    segment_indices: tuple = ()
    call: ToolCall | None = None
    call_text: str = ""
    reported_result: float | None = None
    verdict: StageVerdict | None = None


@dataclass
class Rollout:
    transcript: str
    segments: list
    stages: list
    parsed_final: StlNode | None
    final_segment_index: int


@dataclass
class RewardConfig:
    tau: float = 0.5
    kappa: float = 0.3
    tolerance: float = 0.1
    epsilon: float = 1e-8
    group_size: int = 8

    def __post_init__(self):
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if not 0 < self.kappa < 1:
            raise ValueError("kappa must lie in (0, 1)")

    def match_config(self) -> MatchConfig:
        return MatchConfig(numeric_tolerance=self.tolerance)


@dataclass
class RewardReport:
    r_fmt: int = 0
    s_tree: float = 0.0
    r_cnt: float = 0.0
    r_out: float = 0.0
    c_final: int = 0
    stage_roles: list = field(default_factory=list)
    stage_verdicts: list = field(default_factory=list)
    r_proc: list = field(default_factory=list)
    a_out: float = 0.0
    a_proc: list = field(default_factory=list)
    token_advantages: list | None = None
    token_mask: list | None = None
    truncated: bool = False

    def to_json(self) -> dict:
        return {
            "r_fmt": self.r_fmt,
            "s_tree": self.s_tree,
            "r_cnt": self.r_cnt,
            "r_out": self.r_out,
            "c_final": self.c_final,
            "stage_roles": [list(r) for r in self.stage_roles],
            "stage_verdicts": [
                {"correct": v.correct, "failure": v.failure} for v in self.stage_verdicts
            ],
            "r_proc": self.r_proc,
            "a_out": self.a_out,
            "a_proc": self.a_proc,
            "token_advantages": self.token_advantages,
            "token_mask": self.token_mask,
            "truncated": self.truncated,
        }


_TAG_RE = re.compile(r"<(think|tool_call|tool_result)>(.*?)</\1>", re.DOTALL)
_TAG_TOKEN_RE = re.compile(r"</?(think|tool_call|tool_result)>")


def _extract_final_tree(text: str) -> StlNode | None:
    """Last parseable STL JSON object embedded in the text, if any."""
    best = None
    for m in re.finditer(r"\{", text):
        depth = 0
        for j in range(m.start(), len(text)):
            if text[j] == "{":
                depth += 1
            elif text[j] == "}":
                depth -= 1
                if depth == 0:
                    candidate = text[m.start() : j + 1]
                    try:
                        best = parse_stl_json(candidate)
                    except SchemaError:
                        pass
                    break
    return best


def split_segments(transcript: str) -> list:
    """Split a transcript into ordered segments; checks tag balance and order."""
    matched_spans = []
    segments = []
    pos = 0
    pending_call = False
    for m in _TAG_RE.finditer(transcript):
        if m.start() > pos and transcript[pos : m.start()].strip():
            segments.append(
                Segment(REASONING, transcript[pos : m.start()], (pos, m.start()))
            )
        kind = {"think": REASONING, "tool_call": TOOL_CALL, "tool_result": TOOL_RESULT}[
            m.group(1)
        ]
        if kind == TOOL_RESULT:
            if not pending_call:
                raise RolloutParseError(
                    RolloutParseError.UNBALANCED_TAGS, "tool_result before tool_call"
                )
            pending_call = False
        elif kind == TOOL_CALL:
            pending_call = True
        segments.append(Segment(kind, m.group(2), (m.start(), m.end())))
        matched_spans.append(m.span())
        pos = m.end()
    if transcript[pos:].strip():
        segments.append(Segment(REASONING, transcript[pos:], (pos, len(transcript))))
    # Any tag token outside a matched pair means the markup is unbalanced.
    for tok in _TAG_TOKEN_RE.finditer(transcript):
        if not any(s <= tok.start() < e for s, e in matched_spans):
            raise RolloutParseError(
                RolloutParseError.UNBALANCED_TAGS, f"stray tag {tok.group(0)!r}"
            )
    return segments


def parse_rollout(transcript: str, reference=None) -> Rollout:
    """Parse a transcript into segments, the final tree, and classified stages."""
    segments = split_segments(transcript)
    if not segments or segments[-1].kind in (TOOL_CALL, TOOL_RESULT):
        raise RolloutParseError(RolloutParseError.NO_FINAL_ANSWER)
    final_idx = len(segments) - 1
    final_seg = segments[final_idx]
    segments[final_idx] = Segment(FINAL, final_seg.text, final_seg.span)
    parsed_final = _extract_final_tree(final_seg.text)

    stages = []
    tool_counts: dict = {}
    pending: list = []
    i = 0
    while i < final_idx:
        seg = segments[i]
        if seg.kind == REASONING:
            pending.append(i)
            i += 1
            continue
        if seg.kind == TOOL_CALL:
            indices = pending + [i]
            pending = []
            call = None
            call_name = ""
            try:
                call = parse_tool_call(seg.text)
                call_name = call.name
            except ToolArgsError:
                pass
            reported = None
            if i + 1 < final_idx and segments[i + 1].kind == TOOL_RESULT:
                indices.append(i + 1)
                try:
                    reported = float(segments[i + 1].text.strip())
                except ValueError:
                    reported = None
                i += 2
            else:
                i += 1
            ordinal = tool_counts.get(call_name, 0) + 1
            tool_counts[call_name] = ordinal
            stages.append(
                Stage(
                    index=len(stages) + 1,
                    role=("tool", call_name, ordinal),
                    segment_indices=tuple(indices),
                    call=call,
                    call_text=seg.text,
                    reported_result=reported,
                )
            )
            continue
        i += 1  # stray tool_result is impossible past split_segments

    has_tools = bool(stages)
    if parsed_final is not None:
        if any(n.operation in ("Rise", "Fall") for n in iter_nodes(parsed_final)):
            stages.append(
                Stage(index=len(stages) + 1, role=("event_grounding", "", 1))
            )
        if has_tools:
            stages.append(
                Stage(index=len(stages) + 1, role=("final_value", "", 1))
            )
    return Rollout(
        transcript=transcript,
        segments=segments,
        stages=stages,
        parsed_final=parsed_final,
        final_segment_index=final_idx,
    )


def _value_in_tree(value: float, tree: StlNode, tolerance: float) -> bool:
    return any(abs(value - x) <= tolerance for x in tree_numbers(tree))


def _atom_shapes(tree: StlNode):
    shapes = []
    for n in iter_nodes(tree):
        if n.predicate is not None:
            shapes.append((n.predicate.signal, n.predicate.comparator))
    return sorted(shapes)


def _successful_tool_values(rollout: Rollout):
    values = []
    for stage in rollout.stages:
        if stage.role[0] != "tool" or stage.call is None:
            continue
        try:
            result = execute_tool(stage.call)
        except (ToolArgsError, UnknownToolError):
            continue
        if result.ok:
            values.append(result.value)
    return values


def validate_stage(
    stage: Stage, rollout: Rollout, reference: StlNode, tolerance: float = 0.1
) -> StageVerdict:
    """Binary per-stage correctness with the reason for the first failed check."""
    category = stage.role[0]
    if category == "tool":
        if stage.call is None:
            return StageVerdict(False, FAIL_BAD_ARGS)
        if stage.call.name not in TOOL_NAMES:
            return StageVerdict(False, FAIL_BAD_TOOL_NAME)
        try:
            result = execute_tool(stage.call)
        except ToolArgsError:
            return StageVerdict(False, FAIL_BAD_ARGS)
        except UnknownToolError:
            return StageVerdict(False, FAIL_BAD_TOOL_NAME)
        if not result.ok:
            return StageVerdict(False, FAIL_EXEC_FAILED)
        if stage.reported_result is None:
            return StageVerdict(False, FAIL_INCONSISTENT)
        if (
            abs(stage.reported_result - result.value) > tolerance
            and abs(stage.reported_result - (result.raw_value or result.value)) > tolerance
        ):
            return StageVerdict(False, FAIL_INCONSISTENT)
        return StageVerdict(True)
    if category == "event_grounding":
        predicted = rollout.parsed_final
        justified = any(
            n.operation in ("Rise", "Fall") for n in iter_nodes(reference)
        )
        if predicted is not None and not justified:
            return StageVerdict(False, FAIL_UNJUSTIFIED_EVENT_OP)
        return StageVerdict(True)
    if category == "final_value":
        predicted = rollout.parsed_final
        if predicted is None:
            return StageVerdict(False, FAIL_INCONSISTENT)
        for value in _successful_tool_values(rollout):
            if not _value_in_tree(value, predicted, tolerance):
                return StageVerdict(False, FAIL_INCONSISTENT)
        if _atom_shapes(predicted) != _atom_shapes(reference):
            return StageVerdict(False, FAIL_BAD_PREDICATE_GROUNDING)
        return StageVerdict(True)
    # Reasoning-only roles carry no checkable rule; default to correct.
    return StageVerdict(True)


def score_outcome(rollout: Rollout, reference: StlNode, cfg: RewardConfig = RewardConfig()):
    """Outcome reward tuple (r_fmt, s_tree, r_cnt, r_out, c_final)."""
    if rollout.parsed_final is None:
        return (0, 0.0, 0.0, 0.0, 0)
    r_fmt = 1
    s_tree = tree_match(rollout.parsed_final, reference, cfg.match_config()).value
    r_cnt = 1.0 if s_tree == 1.0 else cfg.kappa * s_tree
    r_out = r_fmt * r_cnt
    c_final = 1 if s_tree == 1.0 else 0
    return (r_fmt, s_tree, r_cnt, r_out, c_final)


def process_rewards(stage_verdicts, c_final: int, cfg: RewardConfig = RewardConfig()):
    """Prefix-masked, outcome-bounded per-stage rewards; each in {0, tau, 1}."""
    bound = c_final + cfg.tau * (1 - c_final)
    rewards = []
    prefix = 1
    for verdict in stage_verdicts:
        c_k = 1 if (verdict.correct if isinstance(verdict, StageVerdict) else verdict) else 0
        rewards.append(prefix * bound * c_k)
        prefix *= c_k
    return rewards


def _mean(xs):
    return sum(xs) / len(xs)


def _pstd(xs):
    mu = _mean(xs)
    return math.sqrt(sum((x - mu) ** 2 for x in xs) / len(xs))


def _normalize(values, epsilon):
    mu = _mean(values)
    sd = _pstd(values)
    return [(v - mu) / (sd + epsilon) for v in values]


def group_advantages(reports, cfg: RewardConfig = RewardConfig()):
    """Fill a_out and a_proc with group-relative (population-std) advantages."""
    if len(reports) < 2:
        raise DegenerateGroup(f"group of {len(reports)} rollouts")
    outs = _normalize([r.r_out for r in reports], cfg.epsilon)
    for report, a in zip(reports, outs):
        report.a_out = a
        report.a_proc = [0.0] * len(report.r_proc)
    role_members: dict = {}
    for gi, report in enumerate(reports):
        for si, role in enumerate(report.stage_roles):
            role_members.setdefault(tuple(role), []).append((gi, si))
    for members in role_members.values():
        if len(members) < 2:
            continue  # singleton stage group: centered value is zero
        values = [reports[gi].r_proc[si] for gi, si in members]
        for (gi, si), a in zip(members, _normalize(values, cfg.epsilon)):
            reports[gi].a_proc[si] = a
    return reports


def default_token_spans(transcript: str):
    """Whitespace tokenization fallback when the caller supplies no spans."""
    return [m.span() for m in re.finditer(r"\S+", transcript)]


def token_labels(rollout: Rollout | None, report: RewardReport, token_spans, cfg: RewardConfig = RewardConfig()):
    """Per-token advantages and policy-update mask for caller-supplied spans."""
    n = len(token_spans)
    advantages = [0.0] * n
    mask = [0] * n
    if rollout is None or report.truncated:
        report.token_advantages = advantages
        report.token_mask = mask
        return advantages, mask

    # Map segment index -> stage position (for segments owned by a stage).
    seg_to_stage: dict = {}
    for si, stage in enumerate(rollout.stages):
        for idx in stage.segment_indices:
            seg_to_stage[idx] = si

    blocked = []
    prefix = 1
    for verdict in report.stage_verdicts:
        blocked.append(prefix == 0)
        prefix *= 1 if verdict.correct else 0

    spans = [seg.span for seg in rollout.segments]
    for ti, (start, _end) in enumerate(token_spans):
        seg_idx = None
        for si, (s, e) in enumerate(spans):
            if s <= start < e:
                seg_idx = si
                break
            if start < s:
                seg_idx = si  # token in a gap binds to the following segment
                break
        if seg_idx is None:
            seg_idx = rollout.final_segment_index
        seg = rollout.segments[seg_idx]
        if seg.kind == TOOL_RESULT:
            continue  # environment-produced: masked, zero advantage
        if seg_idx == rollout.final_segment_index or seg_idx not in seg_to_stage:
            advantages[ti] = report.a_out
            mask[ti] = 0 if report.r_fmt == 0 else 1
            continue
        stage_pos = seg_to_stage[seg_idx]
        advantages[ti] = report.a_proc[stage_pos] if report.a_proc else 0.0
        mask[ti] = 0 if blocked[stage_pos] else 1
    report.token_advantages = advantages
    report.token_mask = mask
    return advantages, mask


def score_rollout(transcript: str, reference: StlNode, cfg: RewardConfig = RewardConfig()):
    """Parse and score one rollout; parse failures yield a zero, truncated report."""
    try:
        rollout = parse_rollout(transcript)
    except RolloutParseError:
        return None, RewardReport(truncated=True)
    verdicts = [
        validate_stage(stage, rollout, reference, cfg.tolerance)
        for stage in rollout.stages
    ]
    for stage, verdict in zip(rollout.stages, verdicts):
        stage.verdict = verdict
    r_fmt, s_tree, r_cnt, r_out, c_final = score_outcome(rollout, reference, cfg)
    report = RewardReport(
        r_fmt=r_fmt,
        s_tree=s_tree,
        r_cnt=r_cnt,
        r_out=r_out,
        c_final=c_final,
        stage_roles=[stage.role for stage in rollout.stages],
        stage_verdicts=verdicts,
        r_proc=process_rewards(verdicts, c_final, cfg),
    )
    return rollout, report


def score_group(transcripts, references, cfg: RewardConfig = RewardConfig(), token_spans_list=None):
    """Score one group of rollouts answering the same requirement."""
    if len(transcripts) != len(references):
        raise ValueError("transcripts and references must align")
    rollouts = []
    reports = []
    for transcript, reference in zip(transcripts, references):
        rollout, report = score_rollout(transcript, reference, cfg)
        rollouts.append(rollout)
        reports.append(report)
    if len(reports) >= 2:
        group_advantages(reports, cfg)
    if token_spans_list is None:
        token_spans_list = [default_token_spans(t) for t in transcripts]
    for rollout, report, spans in zip(rollouts, reports, token_spans_list):
        token_labels(rollout, report, spans, cfg)
    return reports
