"""Planner client: prompt assembly, LLM backends, and plan negotiation.

Prompt templates live under ``planmix/assets`` as plain text, copied verbatim
from the engine's prompt corpus so they stay byte-auditable. Two variants
exist: ``standard`` (timed calls only) and ``volume_control`` (every call
additionally carries a loudness target in dB).

Backends speak the de-facto chat-completions shape: an ordered list of
``{"role": ..., "content": ...}`` messages. The scripted backend exists for
deterministic tests and offline use; the http_chat backend talks to any
chat-completions endpoint.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from importlib import resources

import httpx

from .errors import BackendError, NoResponse, ParseError, PlanRejected
from .plan import Plan, ValidationReport, parse_plan_response, validate_plan
from .utils import stable_digest

logger = logging.getLogger(__name__)

VARIANT_STANDARD = "standard"
VARIANT_VOLUME = "volume_control"

_ASSET_BY_VARIANT = {
    VARIANT_STANDARD: ("tta_standard_instruction.txt", "tta_standard_examples.json"),
    VARIANT_VOLUME: ("tta_volume_instruction.txt", "tta_volume_examples.json"),
}


@dataclass(frozen=True)
class PromptTemplate:
    """System instruction plus in-context example pairs for one variant."""

    system_instruction: str
    in_context_examples: tuple[tuple[str, str], ...]
    variant: str


@dataclass(frozen=True)
class ConversationTurn:
    role: str  # "user" | "assistant"
    content: str
    timestamp: float = 0.0


@dataclass
class PlannerConfig:
    """Backend selection and connection knobs.

    ``backend`` is "scripted" or "http_chat". For http_chat, ``endpoint`` is
    the chat-completions URL, ``model`` the model name, and
    ``auth_token_env`` names the environment variable holding the bearer
    token. For scripted, ``script`` holds the response registry (or
    ``script_path`` a JSON file to load it from).
    """

    backend: str = "scripted"
    endpoint: str = ""
    model: str = ""
    auth_token_env: str = ""
    temperature: float = 0.0
    max_retries: int = 2
    timeout: float = 60.0
    script: "ScriptedResponses | None" = None
    script_path: str = ""

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


def load_template(variant: str = VARIANT_STANDARD) -> PromptTemplate:
    """Load one prompt variant from the package assets."""
    try:
        instruction_name, examples_name = _ASSET_BY_VARIANT[variant]
    except KeyError:
        raise ValueError(f"unknown template variant {variant!r}") from None
    assets = resources.files("planmix") / "assets"
    instruction = (assets / instruction_name).read_text(encoding="utf-8")
    pairs = json.loads((assets / examples_name).read_text(encoding="utf-8"))
    examples = tuple((p["user"], p["assistant"]) for p in pairs)
    return PromptTemplate(
        system_instruction=instruction, in_context_examples=examples, variant=variant
    )


def build_prompt(
    template: PromptTemplate,
    history: list[ConversationTurn] | tuple[ConversationTurn, ...],
    user_request: str,
) -> list[dict]:
    """Assemble the message sequence: system, examples, history, request.

    Pure: identical inputs give byte-identical output. History roles must
    strictly alternate user/assistant starting with user.
    """
    for i, turn in enumerate(history):
        expected = "user" if i % 2 == 0 else "assistant"
        if turn.role != expected:
            raise ValueError(
                f"history roles must alternate starting with user; "
                f"turn {i} has role {turn.role!r}"
            )
    messages = [{"role": "system", "content": template.system_instruction}]
    for user_text, assistant_text in template.in_context_examples:
        messages.append({"role": "user", "content": user_text})
        messages.append({"role": "assistant", "content": assistant_text})
    for turn in history:
        messages.append({"role": turn.role, "content": turn.content})
    messages.append({"role": "user", "content": user_request})
    return messages


# ---------------------------------------------------------------------------
# Backends
# ---------------------------------------------------------------------------

@dataclass
class ScriptedResponses:
    """Pre-registered planner responses for deterministic runs.

    Exact responses are keyed by a hash of the user message; the fallback
    queue serves messages with no exact match in registration order (needed
    for retry flows, where the engine composes the follow-up message).
    """

    exact: dict[str, str] = field(default_factory=dict)
    queue: list[str] = field(default_factory=list)

    def register(self, user_message: str, response: str) -> None:
        self.exact[stable_digest(user_message)] = response

    def push(self, response: str) -> None:
        self.queue.append(response)

    def lookup(self, user_message: str) -> str:
        key = stable_digest(user_message)
        if key in self.exact:
            return self.exact[key]
        if self.queue:
            return self.queue.pop(0)
        raise NoResponse(f"no scripted response for message: {user_message[:80]!r}")

    @classmethod
    def from_file(cls, path: str) -> "ScriptedResponses":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        script = cls()
        for entry in data.get("responses", []):
            script.register(entry["match"], entry["response"])
        for response in data.get("default", []):
            script.push(response)
        return script


def _scripted_registry(config: PlannerConfig) -> ScriptedResponses:
    if config.script is None:
        if not config.script_path:
            raise BackendError("scripted backend configured without a script")
        config.script = ScriptedResponses.from_file(config.script_path)
    return config.script


def _http_chat_complete(config: PlannerConfig, messages: list[dict]) -> str:
    headers = {"Content-Type": "application/json"}
    if config.auth_token_env:
        token = os.environ.get(config.auth_token_env, "")
        if token:
            headers["Authorization"] = f"Bearer {token}"
    payload = {
        "model": config.model,
        "messages": messages,
        "temperature": config.temperature,
    }
    last_error: Exception | None = None
    for attempt in range(config.max_retries + 1):
        try:
            response = httpx.post(
                config.endpoint, json=payload, headers=headers, timeout=config.timeout
            )
            response.raise_for_status()
            body = response.json()
            return body["choices"][0]["message"]["content"]
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            last_error = exc
            logger.warning("chat backend attempt %d failed: %s", attempt + 1, exc)
            if attempt < config.max_retries:
                time.sleep(min(0.25 * 2**attempt, 2.0))
    raise BackendError(f"chat backend failed after {config.max_retries + 1} attempts: {last_error}")


def request_plan(config: PlannerConfig, messages: list[dict]) -> str:
    """Send the assembled messages to the configured backend, return raw text."""
    if not messages:
        raise ValueError("message sequence is empty")
    if config.backend == "scripted":
        last_user = next(
            (m["content"] for m in reversed(messages) if m["role"] == "user"), None
        )
        if last_user is None:
            raise ValueError("message sequence has no user message")
        return _scripted_registry(config).lookup(last_user)
    if config.backend == "http_chat":
        return _http_chat_complete(config, messages)
    raise BackendError(f"unknown planner backend {config.backend!r}")


# ---------------------------------------------------------------------------
# Negotiation: request -> parse -> validate, with one corrective retry
# ---------------------------------------------------------------------------

@dataclass
class PlanAttempt:
    user_message: str
    raw_response: str
    plan: Plan | None
    report: ValidationReport | None
    parse_error: str | None


@dataclass
class PlanNegotiation:
    plan: Plan | None
    attempts: list[PlanAttempt]

    @property
    def raw_response(self) -> str:
        return self.attempts[-1].raw_response if self.attempts else ""


def _corrective_message(attempt: PlanAttempt) -> str:
    if attempt.report is not None:
        rules = ", ".join(attempt.report.rule_ids())
        details = "; ".join(v.message for v in attempt.report.violations)
        return (
            f"Your plan violates these requirements: {rules}. ({details}) "
            "Please respond again with a corrected plan in the same JSON format."
        )
    return (
        f"Your response could not be parsed as a plan: {attempt.parse_error}. "
        "Please respond again with a corrected plan in the same JSON format."
    )


def negotiate_plan(
    config: PlannerConfig,
    template: PromptTemplate,
    history: list[ConversationTurn] | tuple[ConversationTurn, ...],
    user_request: str,
    total_duration: float,
) -> PlanNegotiation:
    """Run the plan request loop, keeping the full attempt trace.

    One corrective retry: if the first response fails to parse or validate,
    the violations (by rule id) are sent back as a user message and the
    second response is taken as final. ``plan`` is None when both attempts
    fail.
    """
    attempts: list[PlanAttempt] = []
    messages = build_prompt(template, history, user_request)
    request_text = user_request
    for _ in range(2):
        raw = request_plan(config, messages)
        attempt = PlanAttempt(
            user_message=request_text,
            raw_response=raw,
            plan=None,
            report=None,
            parse_error=None,
        )
        try:
            plan = parse_plan_response(raw, total_duration)
        except ParseError as exc:
            attempt.parse_error = str(exc)
            attempts.append(attempt)
        else:
            attempt.plan = plan
            attempt.report = validate_plan(plan)
            attempts.append(attempt)
            if attempt.report.valid:
                return PlanNegotiation(plan=plan, attempts=attempts)
        request_text = _corrective_message(attempt)
        messages = messages + [
            {"role": "assistant", "content": raw},
            {"role": "user", "content": request_text},
        ]
    return PlanNegotiation(plan=None, attempts=attempts)


def plan_from_request(
    config: PlannerConfig,
    template: PromptTemplate,
    history: list[ConversationTurn] | tuple[ConversationTurn, ...],
    user_request: str,
    total_duration: float,
) -> Plan:
    """Request, parse, and validate a plan; raise PlanRejected if it stays invalid."""
    negotiation = negotiate_plan(config, template, history, user_request, total_duration)
    if negotiation.plan is not None:
        return negotiation.plan
    last = negotiation.attempts[-1]
    if last.report is not None:
        raise PlanRejected(
            "plan still invalid after corrective retry: "
            + ", ".join(last.report.rule_ids()),
            violations=last.report.rule_ids(),
        )
    raise PlanRejected(
        f"planner output unparseable after corrective retry: {last.parse_error}"
    )
