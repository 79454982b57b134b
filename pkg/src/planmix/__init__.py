"""Plan-driven audio composition engine.

An LLM planner decomposes complex text conditions into atomic, timed,
volume-annotated generation calls; synthesis agents render each call; a
timeline mixer gain-stages and sums them; a session layer makes the whole
loop conversational. The codec/attention/metric math the pipeline rests on
lives in tokens, attention, and metrics.
"""

from .audioio import AudioClip
from .plan import (
    Plan,
    PlanStep,
    ValidationReport,
    max_concurrency,
    parse_plan_response,
    serialize_plan,
    validate_plan,
)

__all__ = [
    "AudioClip",
    "Plan",
    "PlanStep",
    "ValidationReport",
    "max_concurrency",
    "parse_plan_response",
    "serialize_plan",
    "validate_plan",
]

__version__ = "0.1.0"
