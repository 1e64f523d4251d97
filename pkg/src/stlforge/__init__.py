"""Deterministic toolkit for structured Signal Temporal Logic specifications."""

from .stl_ast import (
    CANONICAL_SIGNALS,
    DEFAULT_VOCABULARY,
    Predicate,
    SchemaError,
    SignalVocabulary,
    StlNode,
    atom,
    canonicalize,
    parse_predicate,
    parse_stl_json,
    serialize_stl_json,
)
from .semantics import EvalError, Trace, satisfies, satisfies_trace
from .matcher import (
    MatchConfig,
    MatchScore,
    format_accuracy,
    formula_accuracy,
    mask_tree,
    tree_match,
)
from .tools import (
    MAX_TOOL_ROUNDS,
    TOOL_NAMES,
    ToolCall,
    ToolResult,
    calc_time_diff,
    convert_unit,
    eval_math_expr,
    execute_tool,
    parse_duration,
    parse_tool_call,
)
from .rollout import (
    RewardConfig,
    RewardReport,
    Rollout,
    RolloutParseError,
    Stage,
    StageVerdict,
    group_advantages,
    parse_rollout,
    process_rewards,
    score_group,
    score_outcome,
    score_rollout,
    token_labels,
    validate_stage,
)
from .bench import (
    Sample,
    TemplateSpec,
    ToolAnnotation,
    Violation,
    generate_samples,
    make_splits,
    symbolic_dedup,
    validate_sample,
)

__version__ = "0.1.0"
