"""Plan DSL: parse, validate, and serialize timed generation calls.

The planner answers with a JSON envelope whose ``plan`` value is a numbered,
``;``-separated list of generate calls::

    {"plan": "1. Auffusion.generate('A clap of thunders.',start_time=2,end_time=5); ..."}

Grammar accepted by the parser (documented here because the envelope is the
engine's wire format):

* The envelope is the first fenced code block when any exists, otherwise the
  first balanced ``{...}`` object in the raw text.
* Each call is ``<receiver>.generate('<description>', start_time=<num>,
  end_time=<num>[, volume=<num>])``. The receiver name and list numbering are
  ignored; ``generate`` is matched case-insensitively; argument names are
  strict. Descriptions are single- or double-quoted with backslash escapes.
* Times and volumes are decimal numbers (integers or fractions, optional
  sign), stored as double-precision seconds / dB.

Intervals are half-open ``[start_time, end_time)``: a step ending at t and a
step starting at t do not overlap.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

from .errors import ParseError

# Volume arguments follow the gated-loudness dB convention; anything outside
# this window is either inaudible or clipping.
VOLUME_MIN_DB = -70.0
VOLUME_MAX_DB = 0.0

# Validator rule ids, stable across releases (reports and retry messages key
# on them).
RULE_TIME_ORDER = "TIME_ORDER"
RULE_DURATION_BOUND = "DURATION_BOUND"
RULE_END_COVERAGE = "END_COVERAGE"
RULE_OVERLAP_LIMIT = "OVERLAP_LIMIT"
RULE_VOLUME_RANGE = "VOLUME_RANGE"
RULE_EMPTY_DESCRIPTION = "EMPTY_DESCRIPTION"
RULE_NO_STEPS = "NO_STEPS"

MAX_CONCURRENT_STEPS = 2


@dataclass(frozen=True)
class PlanStep:
    """One atomic generation call: a caption placed on the timeline."""

    description: str
    start_time: float
    end_time: float
    volume: float | None = None

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time


@dataclass(frozen=True)
class Plan:
    """An ordered list of steps covering a timeline of total_duration seconds."""

    steps: tuple[PlanStep, ...]
    total_duration: float

    def to_json_dict(self) -> dict:
        steps = []
        for s in self.steps:
            d = {
                "description": s.description,
                "start_time": s.start_time,
                "end_time": s.end_time,
            }
            if s.volume is not None:
                d["volume"] = s.volume
            steps.append(d)
        return {"steps": steps, "total_duration": self.total_duration}

    @classmethod
    def from_json_dict(cls, data: dict) -> Plan:
        try:
            steps = tuple(
                PlanStep(
                    description=s["description"],
                    start_time=float(s["start_time"]),
                    end_time=float(s["end_time"]),
                    volume=None if s.get("volume") is None else float(s["volume"]),
                )
                for s in data["steps"]
            )
            return cls(steps=steps, total_duration=float(data["total_duration"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed plan JSON: {exc}") from exc


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    steps: tuple[int, ...] = ()


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple[Violation, ...] = ()
    notes: tuple[str, ...] = ()

    def rule_ids(self) -> list[str]:
        return [v.rule for v in self.violations]

    def to_json_dict(self) -> dict:
        return {
            "valid": self.valid,
            "violations": [
                {"rule": v.rule, "message": v.message, "steps": list(v.steps)}
                for v in self.violations
            ],
            "notes": list(self.notes),
        }


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[a-zA-Z0-9_-]*\s*\n?(.*?)```", re.DOTALL)
_CALL_HEAD_RE = re.compile(r"(?:[A-Za-z_][\w.]*\s*\.\s*)?generate\s*\(", re.IGNORECASE)
_NUMBER_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?$")


def _extract_envelope(raw: str) -> dict:
    """Pull the JSON envelope out of raw LLM output."""
    fenced = _FENCE_RE.search(raw)
    candidate = fenced.group(1) if fenced else raw
    obj_text = _first_balanced_object(candidate)
    if obj_text is None:
        raise ParseError("no plan envelope found in response")
    try:
        envelope = json.loads(obj_text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"envelope is not valid JSON: {exc}") from exc
    if not isinstance(envelope, dict):
        raise ParseError("envelope is not a JSON object")
    return envelope


def _first_balanced_object(text: str) -> str | None:
    """Return the first balanced {...} substring, respecting JSON strings."""
    start = text.find("{")
    if start < 0:
        return None
    depth = 0
    in_string = False
    escaped = False
    for i in range(start, len(text)):
        ch = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            in_string = True
        elif ch == "{":
            depth += 1
        elif ch == "}":
            depth -= 1
            if depth == 0:
                return text[start : i + 1]
    return None


def _scan_call_args(body: str, open_paren: int) -> tuple[str, int]:
    """Return the argument text inside the call starting at ``open_paren``.

    Walks to the matching close paren, honoring quotes and escapes, and
    returns (arg_text, index_after_close_paren).
    """
    depth = 0
    quote: str | None = None
    escaped = False
    for i in range(open_paren, len(body)):
        ch = body[i]
        if quote is not None:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == quote:
                quote = None
            continue
        if ch in "'\"":
            quote = ch
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                return body[open_paren + 1 : i], i + 1
    raise ParseError("unterminated generate call (missing close paren)")


def _split_args(arg_text: str) -> list[str]:
    """Split a call argument list on top-level commas."""
    parts: list[str] = []
    buf: list[str] = []
    quote: str | None = None
    escaped = False
    for ch in arg_text:
        if quote is not None:
            buf.append(ch)
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == quote:
                quote = None
            continue
        if ch in "'\"":
            quote = ch
            buf.append(ch)
        elif ch == ",":
            parts.append("".join(buf))
            buf = []
        else:
            buf.append(ch)
    if quote is not None:
        raise ParseError("unterminated quote in generate call arguments")
    parts.append("".join(buf))
    return [p.strip() for p in parts]


def _unquote(text: str) -> str:
    """Undo the quoting of a description argument."""
    if len(text) < 2 or text[0] not in "'\"" or text[-1] != text[0]:
        raise ParseError(f"description is not a quoted string: {text!r}")
    body = text[1:-1]
    out: list[str] = []
    escaped = False
    for ch in body:
        if escaped:
            out.append(ch)
            escaped = False
        elif ch == "\\":
            escaped = True
        else:
            out.append(ch)
    if escaped:
        raise ParseError("dangling escape in description")
    return "".join(out)


def _parse_number(name: str, text: str) -> float:
    if not _NUMBER_RE.match(text.strip()):
        raise ParseError(f"argument {name} is not numeric: {text!r}")
    return float(text)


def _parse_call(arg_text: str) -> PlanStep:
    parts = _split_args(arg_text)
    if not parts or not parts[0]:
        raise ParseError("generate call has no arguments")
    description = _unquote(parts[0])
    if not description.strip():
        raise ParseError("generate call has an empty description")
    named: dict[str, float] = {}
    for part in parts[1:]:
        if "=" not in part:
            raise ParseError(f"expected name=value argument, got {part!r}")
        name, _, value = part.partition("=")
        name = name.strip()
        if name not in ("start_time", "end_time", "volume"):
            raise ParseError(f"unknown argument {name!r} in generate call")
        if name in named:
            raise ParseError(f"duplicate argument {name!r} in generate call")
        named[name] = _parse_number(name, value)
    for required in ("start_time", "end_time"):
        if required not in named:
            raise ParseError(f"generate call missing required argument {required!r}")
    return PlanStep(
        description=description,
        start_time=named["start_time"],
        end_time=named["end_time"],
        volume=named.get("volume"),
    )


def parse_plan_response(raw: str, total_duration: float) -> Plan:
    """Parse raw planner output into a Plan.

    Raises ParseError when no envelope is found, the plan string is empty,
    or any call is malformed. Parsing is purely syntactic; use
    :func:`validate_plan` for the semantic rules.
    """
    envelope = _extract_envelope(raw)
    if "plan" not in envelope:
        raise ParseError('envelope has no "plan" key')
    body = envelope["plan"]
    if not isinstance(body, str) or not body.strip():
        raise ParseError("plan body is empty")

    steps: list[PlanStep] = []
    pos = 0
    while True:
        head = _CALL_HEAD_RE.search(body, pos)
        if head is None:
            break
        arg_text, pos = _scan_call_args(body, head.end() - 1)
        steps.append(_parse_call(arg_text))
    if not steps:
        raise ParseError("plan body contains no generate calls")
    return Plan(steps=tuple(steps), total_duration=float(total_duration))


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

def max_concurrency(plan: Plan) -> int:
    """Maximum number of steps active at any instant (half-open intervals).

    Event sweep over sorted boundaries; an end event at time t is processed
    before a start event at t, so abutting steps never count as concurrent.
    Empty or inverted intervals are active nowhere and are skipped.
    """
    events: list[tuple[float, int]] = []
    for s in plan.steps:
        if s.end_time > s.start_time:
            events.append((s.start_time, +1))
            events.append((s.end_time, -1))
    events.sort()
    active = 0
    peak = 0
    for _, delta in events:
        active += delta
        peak = max(peak, active)
    return peak


def validate_plan(plan: Plan) -> ValidationReport:
    """Check every plan invariant and report all violations.

    Always returns a report; never raises. Rule ids: TIME_ORDER,
    DURATION_BOUND, END_COVERAGE, OVERLAP_LIMIT, VOLUME_RANGE, plus
    EMPTY_DESCRIPTION / NO_STEPS for structurally degenerate plans built
    outside the parser.
    """
    violations: list[Violation] = []
    notes: list[str] = []

    if not plan.steps:
        violations.append(Violation(RULE_NO_STEPS, "plan has no steps"))
        return ValidationReport(valid=False, violations=tuple(violations))

    for i, s in enumerate(plan.steps):
        if not s.description.strip():
            violations.append(
                Violation(RULE_EMPTY_DESCRIPTION, f"step {i} has an empty description", (i,))
            )
        if not (s.start_time >= 0 and s.start_time < s.end_time):
            violations.append(
                Violation(
                    RULE_TIME_ORDER,
                    f"step {i} times are not ordered (start={s.start_time}, end={s.end_time})",
                    (i,),
                )
            )
        if s.end_time > plan.total_duration:
            violations.append(
                Violation(
                    RULE_DURATION_BOUND,
                    f"step {i} ends at {s.end_time}, past total duration {plan.total_duration}",
                    (i,),
                )
            )
        if s.volume is not None and not (
            VOLUME_MIN_DB <= s.volume <= VOLUME_MAX_DB and s.volume == s.volume
        ):
            violations.append(
                Violation(
                    RULE_VOLUME_RANGE,
                    f"step {i} volume {s.volume} outside [{VOLUME_MIN_DB}, {VOLUME_MAX_DB}] dB",
                    (i,),
                )
            )

    if not any(s.end_time == plan.total_duration for s in plan.steps):
        violations.append(
            Violation(
                RULE_END_COVERAGE,
                f"no step ends at total duration {plan.total_duration}",
            )
        )

    peak = max_concurrency(plan)
    if peak > MAX_CONCURRENT_STEPS:
        idx = _concurrent_step_indices(plan)
        violations.append(
            Violation(
                RULE_OVERLAP_LIMIT,
                f"{peak} steps active at once (limit {MAX_CONCURRENT_STEPS})",
                idx,
            )
        )

    # Informational only: flag likely-mergeable calls (same caption, abutting
    # intervals). The minimum-call requirement is a prompt nicety, never a
    # validation failure.
    for i, a in enumerate(plan.steps):
        for j in range(i + 1, len(plan.steps)):
            b = plan.steps[j]
            if a.description == b.description and (
                a.end_time == b.start_time or b.end_time == a.start_time
            ):
                notes.append(
                    f"MIN_CALLS: steps {i} and {j} share a description and abut; "
                    "they could be a single call"
                )

    return ValidationReport(
        valid=not violations, violations=tuple(violations), notes=tuple(notes)
    )


def _concurrent_step_indices(plan: Plan) -> tuple[int, ...]:
    """Indices of steps involved in the worst overlap (for error messages)."""
    boundaries = sorted({s.start_time for s in plan.steps if s.end_time > s.start_time})
    best: tuple[int, ...] = ()
    for t in boundaries:
        active = tuple(
            i for i, s in enumerate(plan.steps) if s.start_time <= t < s.end_time
        )
        if len(active) > len(best):
            best = active
    return best


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _format_time(value: float) -> str:
    if value == int(value):
        return str(int(value))
    return repr(value)


def _quote_description(text: str) -> str:
    return "'" + text.replace("\\", "\\\\").replace("'", "\\'") + "'"


def serialize_plan(plan: Plan) -> str:
    """Emit the exact envelope format accepted by parse_plan_response.

    parse_plan_response(serialize_plan(p), p.total_duration) is structurally
    equal to p; times round-trip exactly (integral seconds print without a
    decimal point, everything else as full-precision repr).
    """
    calls = []
    for i, s in enumerate(plan.steps, start=1):
        args = [
            _quote_description(s.description),
            f"start_time={_format_time(s.start_time)}",
            f"end_time={_format_time(s.end_time)}",
        ]
        if s.volume is not None:
            args.append(f"volume={_format_time(s.volume)}")
        calls.append(f"{i}. Auffusion.generate({','.join(args)})")
    return json.dumps({"plan": "; ".join(calls)}, ensure_ascii=False)
