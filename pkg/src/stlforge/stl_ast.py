"""STL tree data model, JSON wire schema, parsing, serialization, canonicalization.

The wire format is a JSON object with a single top-level key ``STL``.  A node is
either an object with ``Operation`` / ``Time`` / ``Leftaction`` / ``Rightaction`` /
``SubQueries`` fields, or a bare predicate string such as ``"altitude>3048.0"``.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field

# Operator kinds, grouped by structural shape.
UNARY_TEMPORAL = frozenset({"Globally", "Finally", "Historically", "Once"})
BINARY_TEMPORAL = frozenset({"Until", "Since"})
UNARY_PLAIN = frozenset({"Not", "Rise", "Fall"})
MULTI_ARY = frozenset({"and", "or"})
TIMED_OPS = UNARY_TEMPORAL | BINARY_TEMPORAL
UNARY_OPS = UNARY_TEMPORAL | UNARY_PLAIN
OPERATORS = TIMED_OPS | UNARY_PLAIN | MULTI_ARY | frozenset({"imply", "Atom"})

_OP_ALIASES = {op.lower(): op for op in OPERATORS}
_OP_ALIASES.update(
    {
        "g": "Globally",
        "always": "Globally",
        "f": "Finally",
        "eventually": "Finally",
        "u": "Until",
        "s": "Since",
        "h": "Historically",
        "o": "Once",
        "implies": "imply",
        "->": "imply",
        "neg": "Not",
        "!": "Not",
    }
)

COMPARATORS = (">=", "<=", "==", ">", "<")

# Canonical signal vocabulary shared by all datasets (41 identifiers).
CANONICAL_SIGNALS = frozenset(
    {
        "accel", "acceleration", "altitude", "amplitude", "brake",
        "brightness", "co2_level", "concentration", "current", "density",
        "dist", "distance", "flow_rate", "frequency", "fuel_level",
        "heading", "humidity", "load", "noise_level", "oxygen",
        "ph_level", "phase", "pitch", "power", "pressure",
        "roll", "rpm", "speed", "steering", "strain",
        "stress", "temp", "temperature", "throttle", "torque",
        "velocity", "voltage", "x_pos", "y_pos", "yaw", "z_pos",
    }
)


class SchemaError(ValueError):
    """Raised when text cannot be parsed into a well-formed STL tree."""

    JSON = "json"
    MISSING_FIELD = "missing_field"
    BAD_OPERATION = "bad_operation"
    BAD_ARITY = "bad_arity"
    BAD_INTERVAL = "bad_interval"
    BAD_PREDICATE = "bad_predicate"

    def __init__(self, kind: str, detail: str = ""):
        self.kind = kind
        self.detail = detail
        super().__init__(f"{kind}: {detail}" if detail else kind)


@dataclass(frozen=True)
class SignalVocabulary:
    names: frozenset = CANONICAL_SIGNALS
    aliases: dict = field(default_factory=dict)

    def resolve(self, name: str) -> str:
        """Map a signal identifier to its canonical form where possible."""
        key = name.strip()
        if key in self.names:
            return key
        folded = key.lower()
        if folded in self.names:
            return folded
        if folded in self.aliases:
            return self.aliases[folded]
        return key

    def is_canonical(self, name: str) -> bool:
        return self.resolve(name) in self.names


DEFAULT_VOCABULARY = SignalVocabulary(
    aliases={"co2": "co2_level", "ph": "ph_level", "temperatures": "temperature"}
)


@dataclass(frozen=True)
class Predicate:
    """Atomic constraint: signal comparator threshold, e.g. altitude>3048.0."""

    signal: str
    comparator: str
    threshold: float

    def __post_init__(self):
        if self.comparator not in COMPARATORS:
            raise SchemaError(SchemaError.BAD_PREDICATE, f"comparator {self.comparator!r}")
        if not math.isfinite(self.threshold):
            raise SchemaError(SchemaError.BAD_PREDICATE, "non-finite threshold")

    def text(self) -> str:
        """Serialized leaf form: no whitespace, threshold with a decimal point."""
        return f"{self.signal}{self.comparator}{format_number(self.threshold)}"


def format_number(x: float) -> str:
    """Shortest round-trip decimal with a forced decimal point."""
    s = repr(float(x))
    return s


_COMPARATOR_RE = re.compile("|".join(re.escape(c) for c in COMPARATORS))


def parse_predicate(text: str) -> Predicate:
    """Parse ``signal comparator number`` with longest-match comparator split."""
    if not isinstance(text, str):
        raise SchemaError(SchemaError.BAD_PREDICATE, f"not a string: {text!r}")
    m = _COMPARATOR_RE.search(text)
    if m is None:
        raise SchemaError(SchemaError.BAD_PREDICATE, f"no comparator in {text!r}")
    signal = text[: m.start()].strip()
    rhs = text[m.end() :].strip()
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_]*", signal):
        raise SchemaError(
            SchemaError.BAD_PREDICATE, f"bad signal {signal!r} at position 0"
        )
    try:
        threshold = float(rhs)
    except ValueError:
        raise SchemaError(
            SchemaError.BAD_PREDICATE, f"bad threshold {rhs!r} at position {m.end()}"
        ) from None
    if not math.isfinite(threshold):
        raise SchemaError(SchemaError.BAD_PREDICATE, f"non-finite threshold {rhs!r}")
    return Predicate(signal, m.group(0), threshold)


@dataclass(frozen=True)
class StlNode:
    """One node of a structured STL tree; immutable after construction."""

    operation: str
    time: tuple | None = None
    left: "StlNode | None" = None
    right: "StlNode | None" = None
    children: tuple = ()
    predicate: Predicate | None = None

    def is_atom(self) -> bool:
        return self.operation == "Atom"

    def child_nodes(self) -> tuple:
        """All direct children regardless of structural slot."""
        if self.operation in MULTI_ARY:
            return self.children
        if self.operation in BINARY_TEMPORAL or self.operation == "imply":
            return (self.left, self.right)
        if self.operation in UNARY_OPS:
            return (self.right,)
        return ()


def atom(signal: str, comparator: str, threshold: float) -> StlNode:
    return StlNode("Atom", predicate=Predicate(signal, comparator, float(threshold)))


def atom_from_text(text: str) -> StlNode:
    return StlNode("Atom", predicate=parse_predicate(text))


def validate_node(node: StlNode) -> None:
    """Check all structural invariants; raises SchemaError on the first violation."""
    if not isinstance(node, StlNode):
        raise SchemaError(SchemaError.BAD_ARITY, f"not a node: {node!r}")
    op = node.operation
    if op not in OPERATORS:
        raise SchemaError(SchemaError.BAD_OPERATION, repr(op))
    if (node.time is not None) != (op in TIMED_OPS):
        raise SchemaError(
            SchemaError.BAD_ARITY,
            f"{op} {'requires' if op in TIMED_OPS else 'forbids'} a time interval",
        )
    if node.time is not None:
        _check_interval(node.time)
    if op == "Atom":
        if node.predicate is None or node.left or node.right or node.children:
            raise SchemaError(SchemaError.BAD_ARITY, "Atom takes a predicate only")
        return
    if node.predicate is not None:
        raise SchemaError(SchemaError.BAD_ARITY, f"{op} cannot carry a predicate")
    if op in MULTI_ARY:
        if node.left or node.right or len(node.children) < 2:
            raise SchemaError(SchemaError.BAD_ARITY, f"{op} needs >=2 children")
        for child in node.children:
            validate_node(child)
        return
    if op in BINARY_TEMPORAL or op == "imply":
        if node.left is None or node.right is None or node.children:
            raise SchemaError(SchemaError.BAD_ARITY, f"{op} needs left and right")
        validate_node(node.left)
        validate_node(node.right)
        return
    # unary: right only
    if node.right is None or node.left is not None or node.children:
        raise SchemaError(SchemaError.BAD_ARITY, f"{op} is unary via right")
    if op in ("Rise", "Fall") and not node.right.is_atom():
        raise SchemaError(SchemaError.BAD_ARITY, f"{op} takes a single atomic child")
    validate_node(node.right)


def _check_interval(time) -> tuple:
    if (
        not isinstance(time, (list, tuple))
        or len(time) != 2
        or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in time)
    ):
        raise SchemaError(SchemaError.BAD_INTERVAL, repr(time))
    a, b = float(time[0]), float(time[1])
    if not (math.isfinite(a) and math.isfinite(b)):
        raise SchemaError(SchemaError.BAD_INTERVAL, "non-finite bound")
    if a < 0 or b < 0 or a > b:
        raise SchemaError(SchemaError.BAD_INTERVAL, f"need 0 <= a <= b, got [{a}, {b}]")
    return (a, b)


def normalize_operation(name) -> str:
    if not isinstance(name, str):
        raise SchemaError(SchemaError.BAD_OPERATION, repr(name))
    canonical = _OP_ALIASES.get(name.strip().lower())
    if canonical is None:
        raise SchemaError(SchemaError.BAD_OPERATION, repr(name))
    return canonical


def canonicalize(node: StlNode, vocab: SignalVocabulary = DEFAULT_VOCABULARY) -> StlNode:
    """Normalize operator names, signal aliases, and numeric fields; idempotent."""
    op = normalize_operation(node.operation)
    if op == "Atom":
        pred = node.predicate
        if pred is None:
            raise SchemaError(SchemaError.BAD_PREDICATE, "Atom without predicate")
        pred = Predicate(vocab.resolve(pred.signal), pred.comparator, float(pred.threshold))
        return StlNode("Atom", predicate=pred)
    time = _check_interval(node.time) if node.time is not None else None
    return StlNode(
        op,
        time=time,
        left=canonicalize(node.left, vocab) if node.left is not None else None,
        right=canonicalize(node.right, vocab) if node.right is not None else None,
        children=tuple(canonicalize(c, vocab) for c in node.children),
    )


def _parse_node(value) -> StlNode:
    if isinstance(value, str):
        return atom_from_text(value)
    if not isinstance(value, dict):
        raise SchemaError(SchemaError.BAD_ARITY, f"node must be object or string: {value!r}")
    if "Operation" not in value:
        raise SchemaError(SchemaError.MISSING_FIELD, "Operation")
    op = normalize_operation(value["Operation"])
    time = value.get("Time")
    left = value.get("Leftaction")
    right = value.get("Rightaction")
    subs = value.get("SubQueries")

    if op in TIMED_OPS:
        if time is None:
            raise SchemaError(SchemaError.MISSING_FIELD, f"Time on {op}")
        time = _check_interval(time)
    elif time is not None:
        raise SchemaError(SchemaError.BAD_ARITY, f"{op} forbids a Time interval")

    if op == "Atom":
        pred = value.get("Predicate")
        if pred is None:
            raise SchemaError(SchemaError.MISSING_FIELD, "Predicate on Atom")
        if left is not None or right is not None or subs:
            raise SchemaError(SchemaError.BAD_ARITY, "Atom takes a predicate only")
        return atom_from_text(pred)
    if op in MULTI_ARY:
        if not isinstance(subs, list) or len(subs) < 2:
            raise SchemaError(SchemaError.BAD_ARITY, f"{op} needs SubQueries with >=2 entries")
        if left is not None or right is not None:
            raise SchemaError(SchemaError.BAD_ARITY, f"{op} uses SubQueries only")
        return StlNode(op, children=tuple(_parse_node(s) for s in subs))
    if subs is not None:
        raise SchemaError(SchemaError.BAD_ARITY, f"{op} does not take SubQueries")
    if op in BINARY_TEMPORAL or op == "imply":
        if left is None or right is None:
            raise SchemaError(SchemaError.MISSING_FIELD, f"Leftaction/Rightaction on {op}")
        return StlNode(op, time=time, left=_parse_node(left), right=_parse_node(right))
    # unary
    if right is None:
        raise SchemaError(SchemaError.MISSING_FIELD, f"Rightaction on {op}")
    if left is not None:
        raise SchemaError(SchemaError.BAD_ARITY, f"{op} is unary; Leftaction must be null")
    node = StlNode(op, time=time, right=_parse_node(right))
    if op in ("Rise", "Fall") and not node.right.is_atom():
        raise SchemaError(SchemaError.BAD_ARITY, f"{op} takes a single atomic child")
    return node


def parse_stl_json(text: str, vocab: SignalVocabulary = DEFAULT_VOCABULARY) -> StlNode:
    """Parse an STL JSON document into a canonical StlNode."""
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, TypeError) as exc:
        raise SchemaError(SchemaError.JSON, str(exc)) from None
    return parse_stl_object(doc, vocab)


def parse_stl_object(doc, vocab: SignalVocabulary = DEFAULT_VOCABULARY) -> StlNode:
    """Parse an already-decoded JSON value carrying the top-level ``STL`` key."""
    if not isinstance(doc, dict) or "STL" not in doc:
        raise SchemaError(SchemaError.MISSING_FIELD, "top-level STL key")
    node = _parse_node(doc["STL"])
    node = canonicalize(node, vocab)
    validate_node(node)
    return node


def _node_to_wire(node: StlNode, is_root: bool):
    if node.is_atom():
        text = node.predicate.text()
        if is_root:
            return {"Operation": "Atom", "Predicate": text}
        return text
    out = {"Operation": node.operation}
    if node.time is not None:
        out["Time"] = [_wire_number(v) for v in node.time]
    if node.operation in MULTI_ARY:
        out["SubQueries"] = [_node_to_wire(c, False) for c in node.children]
    elif node.operation in BINARY_TEMPORAL or node.operation == "imply":
        out["Leftaction"] = _node_to_wire(node.left, False)
        out["Rightaction"] = _node_to_wire(node.right, False)
    else:
        out["Leftaction"] = None
        out["Rightaction"] = _node_to_wire(node.right, False)
    return out


def _wire_number(v: float):
    f = float(v)
    return int(f) if f.is_integer() else f


def serialize_stl_object(node: StlNode) -> dict:
    validate_node(node)
    return {"STL": _node_to_wire(canonicalize(node), True)}


def serialize_stl_json(node: StlNode) -> str:
    """Serialize a well-formed tree; parse(serialize(n)) == canonicalize(n)."""
    return json.dumps(serialize_stl_object(node))


def iter_nodes(node: StlNode):
    """Pre-order traversal."""
    yield node
    for child in node.child_nodes():
        yield from iter_nodes(child)


def tree_numbers(node: StlNode):
    """All numeric fields of the tree: interval bounds and thresholds."""
    for n in iter_nodes(node):
        if n.time is not None:
            yield float(n.time[0])
            yield float(n.time[1])
        if n.predicate is not None:
            yield float(n.predicate.threshold)
