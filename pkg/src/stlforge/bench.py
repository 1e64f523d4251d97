"""Dataset handling: validation, symbolic deduplication, splits, and generation.

Samples are stored one-per-line as JSON.  The generator instantiates the
reference tree and its tool annotations first and only then fills a
deterministic natural-language pattern, so formal labels never depend on text.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field

from .stl_ast import (
    DEFAULT_VOCABULARY,
    atom,
    SchemaError,
    StlNode,
    iter_nodes,
    parse_stl_object,
    serialize_stl_object,
    tree_numbers,
    validate_node,
)
from .tools import ToolArgsError, ToolCall, UnknownToolError, execute_tool

NL_MIN_LEN = 10
NL_MAX_LEN = 400
LANGUAGES = ("en", "zh")
SPLITS = ("train", "val", "test")

DOMAIN_SCENARIOS = {
    "autonomous_driving": (
        "AEB", "ACC", "lane_keeping", "parking", "fuel_monitoring", "traction_control",
    ),
    "robotics": (
        "pick_and_place", "welding", "collision_avoidance", "assembly", "mobile_navigation",
    ),
    "industrial_control": (
        "reactor_control", "cnc_machining", "conveyor_belt", "hydraulic_press",
        "boiler_system", "structural_monitoring",
    ),
    "environmental_monitoring": (
        "indoor_climate", "water_quality", "air_quality", "greenhouse", "noise_monitoring",
    ),
    "electrical_systems": (
        "battery_management", "motor_drive", "power_grid", "solar_panel", "signal_processing",
    ),
    "aerospace_systems": (
        "altitude_hold", "takeoff_landing", "drone_survey", "satellite_attitude",
        "flight_envelope", "uav_delivery",
    ),
}

# Default sampling ratio per complexity level.
LEVEL_RATIOS = {1: 0.25, 2: 0.25, 3: 0.20, 4: 0.15, 5: 0.10, 6: 0.05}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ToolAnnotation:
    tool: str
    args: tuple
    expected_output: float
    target_field: str  # "Time" or "threshold"

    def to_json(self) -> dict:
        return {
            "tool": self.tool,
            "args": list(self.args),
            "expected_output": self.expected_output,
            "target_field": self.target_field,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ToolAnnotation":
        return cls(
            tool=doc["tool"],
            args=tuple(doc["args"]),
            expected_output=float(doc["expected_output"]),
            target_field=doc["target_field"],
        )


@dataclass
class Sample:
    id: str
    language: str
    domain: str
    scenario: str
    nl_text: str
    reference: StlNode
    complexity: int
    tool_annotations: list = field(default_factory=list)
    split: str | None = None

    def to_json(self) -> dict:
        doc = {
            "id": self.id,
            "language": self.language,
            "domain": self.domain,
            "scenario": self.scenario,
            "nl_text": self.nl_text,
            "reference": serialize_stl_object(self.reference),
            "complexity": self.complexity,
            "tool_annotations": [a.to_json() for a in self.tool_annotations],
        }
        if self.split is not None:
            doc["split"] = self.split
        return doc

    @classmethod
    def from_json(cls, doc: dict) -> "Sample":
        return cls(
            id=str(doc["id"]),
            language=doc["language"],
            domain=doc["domain"],
            scenario=doc["scenario"],
            nl_text=doc["nl_text"],
            reference=parse_stl_object(doc["reference"]),
            complexity=int(doc["complexity"]),
            tool_annotations=[
                ToolAnnotation.from_json(a) for a in doc.get("tool_annotations", [])
            ],
            split=doc.get("split"),
        )


@dataclass(frozen=True)
class Violation:
    kind: str
    detail: str = ""
    sample_id: str | None = None


def _annotation_values(tree: StlNode, target_field: str):
    if target_field.lower() in ("time", "time bound", "interval"):
        for n in iter_nodes(tree):
            if n.time is not None:
                yield float(n.time[0])
                yield float(n.time[1])
    elif target_field.lower() in ("threshold", "predicate threshold", "predicate"):
        for n in iter_nodes(tree):
            if n.predicate is not None:
                yield float(n.predicate.threshold)
    else:
        yield from tree_numbers(tree)


def validate_sample(s: Sample, tolerance: float = 0.1) -> list:
    """Run the full rule checklist; an empty list means the sample is valid."""
    out = []

    def bad(kind, detail=""):
        out.append(Violation(kind, detail, s.id))

    if s.language not in LANGUAGES:
        bad("BadLanguage", s.language)
    if not NL_MIN_LEN <= len(s.nl_text) <= NL_MAX_LEN:
        bad("BadNlLength", str(len(s.nl_text)))
    if not 1 <= s.complexity <= 6:
        bad("BadComplexity", str(s.complexity))
    try:
        validate_node(s.reference)
    except SchemaError as exc:
        bad("BadStl", str(exc))
        return out
    for n in iter_nodes(s.reference):
        if n.predicate is not None and not DEFAULT_VOCABULARY.is_canonical(n.predicate.signal):
            bad("UnknownSignal", n.predicate.signal)
    for ann in s.tool_annotations:
        try:
            result = execute_tool(ToolCall(name=ann.tool, args=ann.args))
        except (ToolArgsError, UnknownToolError) as exc:
            bad("ToolNotExecutable", f"{ann.tool}: {exc}")
            continue
        if not result.ok:
            bad("ToolNotExecutable", f"{ann.tool}: {result.error_detail}")
            continue
        if abs(result.value - ann.expected_output) > tolerance:
            bad("ToolOutputMismatch", f"{ann.tool}: {result.value} != {ann.expected_output}")
            continue
        if not any(
            abs(ann.expected_output - v) <= tolerance
            for v in _annotation_values(s.reference, ann.target_field)
        ):
            bad("ToolFormulaMismatch", f"{ann.tool}: {ann.expected_output} not in {ann.target_field}")
    return out


def _nl_key(text: str) -> str:
    return " ".join(text.lower().split())


def _tree_key(tree: StlNode) -> str:
    wire = json.dumps(serialize_stl_object(tree), sort_keys=True)
    return hashlib.sha256(wire.encode("utf-8")).hexdigest()


def symbolic_dedup(samples) -> list:
    """Drop exact duplicates by normalized NL text or by structural tree hash."""
    seen_nl = set()
    seen_tree = set()
    kept = []
    for s in samples:
        nl = _nl_key(s.nl_text)
        tk = _tree_key(s.reference)
        if nl in seen_nl or tk in seen_tree:
            continue
        seen_nl.add(nl)
        seen_tree.add(tk)
        kept.append(s)
    return kept


def apply_similarity_clusters(samples, clusters) -> list:
    """Retention rule for externally computed near-duplicate clusters:
    keep the highest-complexity member of each cluster (first on ties)."""
    by_id = {s.id: s for s in samples}
    drop = set()
    for cluster in clusters:
        members = [by_id[i] for i in cluster if i in by_id]
        if len(members) < 2:
            continue
        keep = max(members, key=lambda s: s.complexity)
        drop.update(m.id for m in members if m.id != keep.id)
    return [s for s in samples if s.id not in drop]


def _tool_use_type(s: Sample) -> tuple:
    return tuple(sorted({a.tool for a in s.tool_annotations})) or ("none",)


def _allocate(n: int, fractions) -> list:
    base = [math.floor(n * f) for f in fractions]
    remainder = n - sum(base)
    fracs = sorted(
        range(len(fractions)),
        key=lambda i: (n * fractions[i]) - math.floor(n * fractions[i]),
        reverse=True,
    )
    for i in range(remainder):
        base[fracs[i % len(fracs)]] += 1
    return base


def make_splits(samples, mode: str = "standard", seed: int = 0, held_out_scenarios=None) -> dict:
    """Assign every sample to exactly one of train/val/test."""
    rng = random.Random(seed)
    assignment: dict = {}
    if mode == "scenario_held_out":
        if held_out_scenarios is None:
            held_out_scenarios = {
                scenarios[-1] for scenarios in DOMAIN_SCENARIOS.values()
            }
        held_out_scenarios = set(held_out_scenarios)
        for domain in {s.domain for s in samples}:
            domain_scenarios = {s.scenario for s in samples if s.domain == domain}
            if domain_scenarios and domain_scenarios <= held_out_scenarios:
                raise ConfigError(f"held-out set empties training for domain {domain}")
        held = [s for s in samples if s.scenario in held_out_scenarios]
        rest = [s for s in samples if s.scenario not in held_out_scenarios]
        shuffled = list(held)
        rng.shuffle(shuffled)
        for i, s in enumerate(shuffled):
            assignment[s.id] = "val" if i % 2 == 0 else "test"
        assignment.update(make_splits(rest, "standard", seed=rng.randrange(2**32)))
        return assignment
    if mode != "standard":
        raise ConfigError(f"unknown split mode {mode!r}")

    strata: dict = {}
    for s in samples:
        key = (s.language, s.domain, s.complexity, _tool_use_type(s))
        strata.setdefault(key, []).append(s)
    for key in sorted(strata, key=repr):
        bucket = list(strata[key])
        rng.shuffle(bucket)
        n_train, n_val, n_test = _allocate(len(bucket), (0.8, 0.1, 0.1))
        for s, split in zip(
            bucket,
            ["train"] * n_train + ["val"] * n_val + ["test"] * n_test,
        ):
            assignment[s.id] = split
    return assignment


# ------------------------------------------------------------------ generator

_DEFAULT_SIGNALS = {
    "autonomous_driving": (
        {"name": "velocity", "low": 5, "high": 40, "unit": "m/s", "alt_unit": "km/h"},
        {"name": "distance", "low": 2, "high": 120, "unit": "m", "alt_unit": "ft"},
        {"name": "brake", "low": 0, "high": 100},
        {"name": "accel", "low": 0, "high": 8},
    ),
    "robotics": (
        {"name": "torque", "low": 1, "high": 50},
        {"name": "dist", "low": 0, "high": 5, "unit": "m", "alt_unit": "cm"},
        {"name": "x_pos", "low": 0, "high": 10},
        {"name": "y_pos", "low": 0, "high": 10},
    ),
    "industrial_control": (
        {"name": "pressure", "low": 50, "high": 800, "unit": "kpa", "alt_unit": "psi"},
        {"name": "temperature", "low": 20, "high": 400},
        {"name": "flow_rate", "low": 1, "high": 90},
        {"name": "load", "low": 10, "high": 95},
    ),
    "environmental_monitoring": (
        {"name": "humidity", "low": 20, "high": 90},
        {"name": "co2_level", "low": 300, "high": 2000},
        {"name": "noise_level", "low": 30, "high": 110},
        {"name": "ph_level", "low": 4, "high": 10},
    ),
    "electrical_systems": (
        {"name": "voltage", "low": 3, "high": 480},
        {"name": "current", "low": 1, "high": 120},
        {"name": "frequency", "low": 40, "high": 70},
        {"name": "power", "low": 10, "high": 900},
    ),
    "aerospace_systems": (
        {"name": "altitude", "low": 100, "high": 12000, "unit": "m", "alt_unit": "ft"},
        {"name": "speed", "low": 30, "high": 250, "unit": "m/s", "alt_unit": "kn"},
        {"name": "pitch", "low": 0, "high": 30},
        {"name": "roll", "low": 0, "high": 45},
    ),
}


@dataclass
class TemplateSpec:
    scenario: str
    domain: str
    language: str = "en"
    signals: tuple = ()
    level_ratios: dict = field(default_factory=lambda: dict(LEVEL_RATIOS))
    tools: tuple = ("parse_duration", "convert_unit", "eval_math_expr", "calc_time_diff")
    allow_events: bool = True
    max_minutes: int = 60

    def __post_init__(self):
        if self.domain not in DOMAIN_SCENARIOS:
            raise ConfigError(f"unknown domain {self.domain!r}")
        if self.scenario not in DOMAIN_SCENARIOS[self.domain]:
            raise ConfigError(f"unknown scenario {self.scenario!r} for {self.domain}")
        if not self.signals:
            self.signals = _DEFAULT_SIGNALS[self.domain]
        if not self.signals:
            raise ConfigError("template needs at least one signal")
        total = sum(self.level_ratios.values())
        if not self.level_ratios or abs(total - 1.0) > 1e-6:
            raise ConfigError("level ratios must sum to 1")

    @classmethod
    def from_json(cls, doc: dict) -> "TemplateSpec":
        kwargs = dict(doc)
        if "signals" in kwargs:
            kwargs["signals"] = tuple(kwargs["signals"])
        if "tools" in kwargs:
            kwargs["tools"] = tuple(kwargs["tools"])
        if "level_ratios" in kwargs:
            kwargs["level_ratios"] = {int(k): float(v) for k, v in kwargs["level_ratios"].items()}
        return cls(**kwargs)


_CMP_PHRASES = {
    ">": "stay above",
    ">=": "stay at or above",
    "<": "stay below",
    "<=": "stay at or below",
}


class _SampleBuilder:
    def __init__(self, spec: TemplateSpec, rng: random.Random):
        self.spec = spec
        self.rng = rng
        self.annotations: list = []
        self.clauses: list = []

    def _threshold(self, sig) -> float:
        lo, hi = float(sig["low"]), float(sig["high"])
        raw = lo + (hi - lo) * self.rng.random()
        return round(raw, 1)

    def make_atom(self, allow_conversion: bool = True) -> StlNode:
        sig = self.rng.choice(list(self.spec.signals))
        comparator = self.rng.choice(list(_CMP_PHRASES))
        use_conversion = (
            allow_conversion
            and "convert_unit" in self.spec.tools
            and sig.get("alt_unit")
            and self.rng.random() < 0.5
        )
        if use_conversion:
            alt_value = float(self.rng.randrange(1, 200) * 50)
            result = execute_tool(
                ToolCall("convert_unit", (alt_value, sig["alt_unit"], sig["unit"]))
            )
            threshold = result.value
            self.annotations.append(
                ToolAnnotation(
                    "convert_unit",
                    (alt_value, sig["alt_unit"], sig["unit"]),
                    threshold,
                    "threshold",
                )
            )
            phrase = (
                f"the {sig['name']} must {_CMP_PHRASES[comparator]} "
                f"{int(alt_value)} {sig['alt_unit']}"
            )
        else:
            threshold = self._threshold(sig)
            phrase = f"the {sig['name']} must {_CMP_PHRASES[comparator]} {threshold}"
        self.clauses.append(phrase)
        return atom(sig["name"], comparator, threshold)

    def make_interval(self) -> tuple:
        """Temporal window [0, b] in seconds with a tool-grounded surface form."""
        choice = [t for t in ("parse_duration", "eval_math_expr", "calc_time_diff") if t in self.spec.tools]
        tool = self.rng.choice(choice) if choice and self.rng.random() < 0.8 else None
        if tool == "parse_duration":
            minutes = self.rng.randrange(1, self.spec.max_minutes + 1)
            text = f"{minutes} minutes" if minutes != 1 else "1 minute"
            seconds = float(minutes * 60)
            self.annotations.append(
                ToolAnnotation("parse_duration", (text,), seconds, "Time")
            )
            self.clauses.append(f"within {text}")
            return (0.0, seconds)
        if tool == "eval_math_expr":
            a = self.rng.randrange(2, 10)
            b = self.rng.randrange(10, 200)
            expr = f"{a}*{b}"
            seconds = float(a * b)
            self.annotations.append(
                ToolAnnotation("eval_math_expr", (expr,), seconds, "Time")
            )
            self.clauses.append(f"within {expr} seconds")
            return (0.0, seconds)
        if tool == "calc_time_diff":
            start_min = self.rng.randrange(0, 40)
            span_min = self.rng.randrange(1, 20)
            start = f"2025-08-01 08:{start_min:02d}:00"
            end = f"2025-08-01 08:{start_min + span_min:02d}:00"
            text = f"between {start} and {end}"
            seconds = float(span_min * 60)
            self.annotations.append(
                ToolAnnotation("calc_time_diff", (text,), seconds, "Time")
            )
            self.clauses.append(text)
            return (0.0, seconds)
        seconds = float(self.rng.randrange(10, 600))
        self.clauses.append(f"within {int(seconds)} seconds")
        return (0.0, seconds)

    def make_event(self) -> StlNode:
        sig = self.rng.choice(list(self.spec.signals))
        threshold = self._threshold(sig)
        kind = self.rng.choice(("Rise", "Fall"))
        direction = (
            "transitions from below to above"
            if kind == "Rise"
            else "transitions from above to below"
        )
        self.clauses.append(f"whenever the {sig['name']} {direction} {threshold}")
        return StlNode(kind, right=atom(sig["name"], ">", threshold))


def _build_tree(builder: _SampleBuilder, level: int) -> StlNode:
    rng = builder.rng
    spec = builder.spec
    temporal = rng.choice(("Globally", "Finally"))
    if level == 1:
        return StlNode(temporal, time=builder.make_interval(), right=builder.make_atom())
    if level == 2:
        boolean = rng.choice(("and", "or"))
        kids = tuple(builder.make_atom() for _ in range(rng.choice((2, 3))))
        return StlNode(temporal, time=builder.make_interval(), right=StlNode(boolean, children=kids))
    if level == 3:
        trigger = (
            builder.make_event()
            if spec.allow_events and rng.random() < 0.3
            else builder.make_atom()
        )
        inner_kids = tuple(builder.make_atom() for _ in range(rng.choice((1, 2))))
        inner = inner_kids[0] if len(inner_kids) == 1 else StlNode("and", children=inner_kids)
        return StlNode(
            "Globally",
            time=builder.make_interval(),
            right=StlNode(
                "imply",
                left=trigger,
                right=StlNode("Finally", time=builder.make_interval(), right=inner),
            ),
        )
    if level == 4:
        op = rng.choice(("Until", "Since"))
        left = StlNode("and", children=(builder.make_atom(), builder.make_atom()))
        right = StlNode("and", children=(builder.make_atom(), builder.make_atom()))
        return StlNode(
            "Globally",
            time=builder.make_interval(),
            right=StlNode(op, time=builder.make_interval(), left=left, right=right),
        )
    if level == 5:
        trigger = StlNode("and", children=(builder.make_atom(), builder.make_atom()))
        branch_a = StlNode("Finally", time=builder.make_interval(), right=builder.make_atom())
        branch_b = StlNode("Once", time=builder.make_interval(), right=builder.make_atom())
        consequent = StlNode("or", children=(branch_a, branch_b, builder.make_atom()))
        return StlNode(
            "Globally",
            time=builder.make_interval(),
            right=StlNode("imply", left=trigger, right=consequent),
        )
    # level 6: widest formulas with chained computations
    trigger = StlNode("and", children=tuple(builder.make_atom() for _ in range(3)))
    branch_a = StlNode("Finally", time=builder.make_interval(), right=StlNode(
        "and", children=(builder.make_atom(), builder.make_atom())
    ))
    branch_b = StlNode(
        "Historically", time=builder.make_interval(), right=builder.make_atom()
    )
    consequent = StlNode("or", children=(branch_a, branch_b, StlNode("Not", right=builder.make_atom())))
    return StlNode(
        "Globally",
        time=builder.make_interval(),
        right=StlNode("imply", left=trigger, right=consequent),
    )


def _render_nl(spec: TemplateSpec, clauses) -> str:
    scenario = spec.scenario.replace("_", " ")
    body = "; ".join(clauses)
    text = f"In the {scenario} scenario, {body}."
    if len(text) > NL_MAX_LEN:
        text = text[: NL_MAX_LEN - 1] + "."
    if len(text) < NL_MIN_LEN:
        text = text + " This requirement applies at all times."
    return text


def generate_samples(spec: TemplateSpec, count: int, seed: int = 0) -> list:
    """Deterministically generate `count` samples that all pass validate_sample."""
    rng = random.Random(seed)
    levels = sorted(spec.level_ratios)
    weights = [spec.level_ratios[l] for l in levels]
    samples = []
    for i in range(count):
        level = rng.choices(levels, weights=weights, k=1)[0]
        builder = _SampleBuilder(spec, rng)
        tree = _build_tree(builder, level)
        sample = Sample(
            id=f"{spec.scenario}-{seed}-{i:06d}",
            language=spec.language,
            domain=spec.domain,
            scenario=spec.scenario,
            nl_text=_render_nl(spec, builder.clauses),
            reference=tree,
            complexity=level,
            tool_annotations=builder.annotations,
        )
        violations = validate_sample(sample)
        if violations:  # generator soundness: never emit an invalid sample
            raise ConfigError(f"generated invalid sample: {violations}")
        samples.append(sample)
    return samples


def read_dataset(path) -> list:
    samples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                samples.append(Sample.from_json(json.loads(line)))
    return samples


def write_dataset(samples, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(s.to_json()) + "\n")
