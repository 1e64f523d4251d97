"""Deterministic computation tools and the tool-call wire protocol.

Tools: parse_duration, convert_unit, eval_math_expr, calc_time_diff.  All are
pure functions; convert_unit additionally reports a value rounded half-up to
two decimals at the protocol boundary while keeping the unrounded result.
"""

from __future__ import annotations

import ast as _pyast
import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from decimal import ROUND_HALF_UP, Decimal

TOOL_NAMES = ("parse_duration", "convert_unit", "eval_math_expr", "calc_time_diff")
MAX_TOOL_ROUNDS = 5

TOOL_CALL_OPEN = "<tool_call>"
TOOL_CALL_CLOSE = "</tool_call>"
TOOL_RESULT_OPEN = "<tool_result>"
TOOL_RESULT_CLOSE = "</tool_result>"


class ToolArgsError(ValueError):
    """Arguments do not satisfy the tool's schema."""


class UnknownToolError(ValueError):
    """Tool name is not a member of the tool set."""


@dataclass(frozen=True)
class ToolResult:
    value: float | None
    ok: bool
    error_detail: str | None = None
    raw_value: float | None = None

    def __post_init__(self):
        assert self.ok == (self.error_detail is None)


@dataclass(frozen=True)
class ToolCall:
    name: str
    args: tuple = ()
    kwargs: dict = field(default_factory=dict)


def _ok(value: float, raw: float | None = None) -> ToolResult:
    return ToolResult(value=float(value), ok=True, raw_value=float(raw if raw is not None else value))


def _err(detail: str) -> ToolResult:
    return ToolResult(value=None, ok=False, error_detail=detail)


def _round2(x: float) -> float:
    return float(Decimal(repr(x)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


# ---------------------------------------------------------------- durations

_DURATION_UNITS = {
    "s": 1.0, "sec": 1.0, "secs": 1.0, "second": 1.0, "seconds": 1.0,
    "min": 60.0, "mins": 60.0, "minute": 60.0, "minutes": 60.0,
    "h": 3600.0, "hr": 3600.0, "hrs": 3600.0, "hour": 3600.0, "hours": 3600.0,
    "day": 86400.0, "days": 86400.0,
}

_PHRASE_RE = re.compile(
    r"^\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<half>half)(?:\s+an?)?|(?P<article>an?))\s+(?P<unit>[a-zA-Z]+)\s*$",
    re.IGNORECASE,
)


def parse_duration(text: str) -> ToolResult:
    """Normalize a duration phrase ('30 minutes', 'half an hour', sums with 'and') to seconds."""
    if not isinstance(text, str) or not text.strip():
        return _err("empty duration text")
    total = 0.0
    for phrase in re.split(r"\s*(?:\band\b|,)\s*", text.strip(), flags=re.IGNORECASE):
        if not phrase:
            continue
        m = _PHRASE_RE.match(phrase)
        if m is None:
            return _err(f"unparseable duration phrase: {phrase!r}")
        unit = _DURATION_UNITS.get(m.group("unit").lower())
        if unit is None:
            return _err(f"unrecognized unit: {m.group('unit')!r}")
        if m.group("num") is not None:
            qty = float(m.group("num"))
        elif m.group("half") is not None:
            qty = 0.5
        else:
            qty = 1.0
        total += qty * unit
    return _ok(total)


# ----------------------------------------------------------- unit conversion

_UNIT_SYNONYMS = {
    "ft": "ft", "feet": "ft", "foot": "ft",
    "m": "m", "meter": "m", "meters": "m", "metre": "m", "metres": "m",
    "mm": "mm", "millimeter": "mm", "millimeters": "mm",
    "cm": "cm", "centimeter": "cm", "centimeters": "cm",
    "km": "km", "kilometer": "km", "kilometers": "km",
    "kn": "kn", "knot": "kn", "knots": "kn", "kt": "kn", "kts": "kn",
    "m/s": "m/s", "mps": "m/s",
    "km/h": "km/h", "kph": "km/h", "kmh": "km/h",
    "mph": "mph",
    "psi": "psi",
    "kpa": "kpa",
    "pa": "pa",
    "bar": "bar",
    "s": "s", "second": "s", "seconds": "s",
    "min": "min", "minute": "min", "minutes": "min",
    "h": "h", "hr": "h", "hour": "h", "hours": "h",
    "f": "f", "°f": "f", "fahrenheit": "f",
    "c": "c", "°c": "c", "celsius": "c",
}

# Linear factors to the base unit of each dimension.
_LINEAR_UNITS = {
    "m": ("length", 1.0),
    "ft": ("length", 0.3048),
    "mm": ("length", 0.001),
    "cm": ("length", 0.01),
    "km": ("length", 1000.0),
    "m/s": ("speed", 1.0),
    "kn": ("speed", 0.514444),
    "km/h": ("speed", 1.0 / 3.6),
    "mph": ("speed", 0.44704),
    "kpa": ("pressure", 1.0),
    "psi": ("pressure", 6.894757),
    "bar": ("pressure", 100.0),
    "pa": ("pressure", 0.001),
    "s": ("time", 1.0),
    "min": ("time", 60.0),
    "h": ("time", 3600.0),
}

_TEMPERATURE_UNITS = ("c", "f")


def _normalize_unit(u: str) -> str | None:
    if not isinstance(u, str):
        return None
    return _UNIT_SYNONYMS.get(u.strip().lower())


def convert_unit(value: float, from_unit: str, to_unit: str) -> ToolResult:
    """Convert between physical units; value rounded to 2 decimals, raw kept."""
    try:
        x = float(value)
    except (TypeError, ValueError):
        return _err(f"non-numeric value: {value!r}")
    src = _normalize_unit(from_unit)
    dst = _normalize_unit(to_unit)
    if src is None or dst is None:
        return _err(f"unknown unit pair: {from_unit!r} -> {to_unit!r}")
    if src in _TEMPERATURE_UNITS or dst in _TEMPERATURE_UNITS:
        if not (src in _TEMPERATURE_UNITS and dst in _TEMPERATURE_UNITS):
            return _err(f"dimensional mismatch: {from_unit!r} -> {to_unit!r}")
        celsius = x if src == "c" else (x - 32.0) * 5.0 / 9.0
        raw = celsius if dst == "c" else celsius * 9.0 / 5.0 + 32.0
        return ToolResult(value=_round2(raw), ok=True, raw_value=raw)
    src_dim, src_factor = _LINEAR_UNITS[src]
    dst_dim, dst_factor = _LINEAR_UNITS[dst]
    if src_dim != dst_dim:
        return _err(f"dimensional mismatch: {from_unit!r} -> {to_unit!r}")
    raw = x if src == dst else x * src_factor / dst_factor
    return ToolResult(value=_round2(raw), ok=True, raw_value=raw)


# ------------------------------------------------------- arithmetic expressions

_TOKEN_RE = re.compile(r"\s*(?:(\d+(?:\.\d+)?)|([()+\-*/]))")


class _ExprParser:
    """Recursive-descent evaluator for + - * / parentheses and unary signs."""

    def __init__(self, text: str):
        self.tokens = self._tokenize(text)
        self.pos = 0

    @staticmethod
    def _tokenize(text: str):
        tokens = []
        text = text.rstrip()
        i = 0
        while i < len(text):
            m = _TOKEN_RE.match(text, i)
            if m is None:
                raise ToolArgsError(f"bad token at position {i}")
            if m.group(1) is not None:
                tokens.append(float(m.group(1)))
            else:
                tokens.append(m.group(2))
            i = m.end()
        return tokens

    def _peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self):
        tok = self._peek()
        self.pos += 1
        return tok

    def parse(self) -> float:
        value = self._expr()
        if self._peek() is not None:
            raise ToolArgsError(f"trailing token {self._peek()!r}")
        return value

    def _expr(self) -> float:
        value = self._term()
        while self._peek() in ("+", "-"):
            op = self._next()
            rhs = self._term()
            value = value + rhs if op == "+" else value - rhs
        return value

    def _term(self) -> float:
        value = self._factor()
        while self._peek() in ("*", "/"):
            op = self._next()
            rhs = self._factor()
            if op == "/":
                if rhs == 0:
                    raise ZeroDivisionError("division by zero")
                value = value / rhs
            else:
                value = value * rhs
        return value

    def _factor(self) -> float:
        tok = self._next()
        if tok == "-":
            return -self._factor()
        if tok == "+":
            return self._factor()
        if tok == "(":
            value = self._expr()
            if self._next() != ")":
                raise ToolArgsError("unbalanced parenthesis")
            return value
        if isinstance(tok, float):
            return tok
        raise ToolArgsError(f"unexpected token {tok!r}")


def eval_math_expr(expression: str) -> ToolResult:
    """Evaluate arithmetic over + - * / with a self-contained grammar."""
    if not isinstance(expression, str) or not expression.strip():
        return _err("empty expression")
    try:
        value = _ExprParser(expression).parse()
    except ToolArgsError as exc:
        return _err(str(exc))
    except ZeroDivisionError:
        return _err("division by zero")
    if not math.isfinite(value):
        return _err("non-finite result")
    return _ok(value)


# -------------------------------------------------------------- time differences

_TIMESTAMP_RE = re.compile(r"(?:(\d{4}-\d{2}-\d{2})[ T]+)?(\d{1,2}:\d{2}:\d{2})")


def _parse_timestamp(date_part: str | None, time_part: str, default_date: str) -> datetime:
    date_text = date_part or default_date
    h, mnt, sec = (int(p) for p in time_part.split(":"))
    base = datetime.strptime(date_text, "%Y-%m-%d")
    return base + timedelta(hours=h, minutes=mnt, seconds=sec)


def calc_time_diff(text_or_pair) -> ToolResult:
    """Seconds between two timestamps extracted from text or given as a pair."""
    if isinstance(text_or_pair, (tuple, list)):
        if len(text_or_pair) != 2:
            return _err("expected exactly two timestamps")
        parts = []
        for item in text_or_pair:
            m = _TIMESTAMP_RE.search(str(item))
            if m is None:
                return _err(f"unparseable timestamp: {item!r}")
            parts.append(m.groups())
    else:
        if not isinstance(text_or_pair, str):
            return _err(f"bad argument: {text_or_pair!r}")
        found = _TIMESTAMP_RE.findall(text_or_pair)
        if len(found) < 2:
            return _err("fewer than two parseable timestamps")
        parts = found[:2]
    # A date-less timestamp borrows the other side's date (same-day reading).
    default_date = parts[0][0] or parts[1][0] or "1970-01-01"
    try:
        start = _parse_timestamp(parts[0][0], parts[0][1], default_date)
        end = _parse_timestamp(parts[1][0], parts[1][1], default_date)
    except ValueError as exc:
        return _err(f"bad timestamp: {exc}")
    seconds = (end - start).total_seconds()
    if seconds < 0:
        return _err("negative time difference (timestamps reversed)")
    return _ok(seconds)


# ------------------------------------------------------------- wire protocol

_CALL_SYNTAX_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*\((.*)\)\s*$", re.DOTALL)


def parse_tool_call(text: str) -> ToolCall:
    """Parse a <tool_call> body: either ``name(args)`` or a JSON object."""
    stripped = text.strip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise ToolArgsError(f"bad tool-call JSON: {exc}") from None
        name = doc.get("name")
        if not isinstance(name, str):
            raise ToolArgsError("tool-call object missing name")
        arguments = doc.get("arguments", doc.get("args", {}))
        if isinstance(arguments, dict):
            return ToolCall(name=name, kwargs=arguments)
        if isinstance(arguments, list):
            return ToolCall(name=name, args=tuple(arguments))
        return ToolCall(name=name, args=(arguments,))
    m = _CALL_SYNTAX_RE.match(stripped)
    if m is None:
        raise ToolArgsError(f"unparseable tool call: {stripped!r}")
    name, arg_text = m.group(1), m.group(2).strip()
    if not arg_text:
        return ToolCall(name=name)
    parsed = None
    try:
        parsed = json.loads(f"[{arg_text}]")
    except json.JSONDecodeError:
        try:
            parsed = list(_pyast.literal_eval(f"({arg_text},)"))
        except (ValueError, SyntaxError):
            raise ToolArgsError(f"unparseable arguments: {arg_text!r}") from None
    if len(parsed) == 1 and isinstance(parsed[0], dict):
        return ToolCall(name=name, kwargs=parsed[0])
    return ToolCall(name=name, args=tuple(parsed))


def _one_text_arg(call: ToolCall, keys) -> str:
    if call.args and not call.kwargs and len(call.args) == 1:
        return call.args[0]
    for key in keys:
        if key in call.kwargs:
            return call.kwargs[key]
    raise ToolArgsError(f"{call.name} expects a single text argument")


def execute_tool(call: ToolCall) -> ToolResult:
    """Dispatch a parsed tool call; raises for unknown tools or bad schemas."""
    if call.name not in TOOL_NAMES:
        raise UnknownToolError(call.name)
    if call.name == "parse_duration":
        text = _one_text_arg(call, ("text", "duration", "input"))
        if not isinstance(text, str):
            raise ToolArgsError("parse_duration expects a string")
        return parse_duration(text)
    if call.name == "convert_unit":
        if call.kwargs:
            try:
                value = call.kwargs["value"]
                src = call.kwargs.get("from_unit", call.kwargs.get("from"))
                dst = call.kwargs.get("to_unit", call.kwargs.get("to"))
            except KeyError as exc:
                raise ToolArgsError(f"convert_unit missing {exc}") from None
        elif len(call.args) == 3:
            value, src, dst = call.args
        else:
            raise ToolArgsError("convert_unit expects (value, from_unit, to_unit)")
        if src is None or dst is None:
            raise ToolArgsError("convert_unit expects (value, from_unit, to_unit)")
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ToolArgsError("convert_unit value must be numeric")
        return convert_unit(value, src, dst)
    if call.name == "eval_math_expr":
        expr = _one_text_arg(call, ("expression", "expr"))
        if not isinstance(expr, str):
            raise ToolArgsError("eval_math_expr expects a string expression")
        return eval_math_expr(expr)
    # calc_time_diff
    if len(call.args) == 2:
        return calc_time_diff(tuple(call.args))
    if call.kwargs and "start" in call.kwargs and "end" in call.kwargs:
        return calc_time_diff((call.kwargs["start"], call.kwargs["end"]))
    text = _one_text_arg(call, ("text", "input"))
    if not isinstance(text, str):
        raise ToolArgsError("calc_time_diff expects text or (start, end)")
    return calc_time_diff(text)


def format_tool_result(result: ToolResult) -> str:
    """Render the numeric value as it appears inside <tool_result> blocks."""
    if not result.ok:
        return f"error: {result.error_detail}"
    v = result.value
    return str(int(v)) if float(v).is_integer() else repr(float(v))
