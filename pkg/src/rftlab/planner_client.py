"""Client for an external chat-completions planner endpoint.

The planner receives the intervention state as JSON inside a chat
message and must answer with a JSON object mapping knob names to
proposed values plus an optional rationale. Anything else degrades to
the built-in rule planner, flagged as a fallback so callers can audit
how often the endpoint actually contributed.
"""
from __future__ import annotations

import json
import os
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Optional

from .remediation import (
    KNOB_NAMES,
    MAX_KNOBS_PER_ACTION,
    InterventionAction,
    InterventionState,
    clamp_knob,
    plan_action_rule,
)

TOKEN_ENV_VAR = "RFTFM_PLANNER_TOKEN"
DEFAULT_TIMEOUT = 30.0

SYSTEM_PROMPT = (
    "You tune reinforcement fine-tuning runs. Given a diagnosed fault and "
    "the current training configuration, reply with a single JSON object "
    "whose keys are knob names to change and whose values are the new "
    "settings. You may include a string field \"rationale\". Change at "
    f"most {MAX_KNOBS_PER_ACTION} knobs. Valid knobs: "
    + ", ".join(KNOB_NAMES)
    + "."
)


class EndpointUnreachable(ConnectionError):
    """The endpoint could not be reached; carries the rule fallback."""

    def __init__(self, message: str, fallback_action: InterventionAction):
        super().__init__(message)
        self.fallback_action = fallback_action


class AuthFailure(PermissionError):
    """The endpoint rejected credentials; carries the rule fallback."""

    def __init__(self, message: str, fallback_action: InterventionAction):
        super().__init__(message)
        self.fallback_action = fallback_action


@dataclass(frozen=True)
class PlannerEndpoint:
    base_url: str
    model: str = "planner"
    timeout: float = DEFAULT_TIMEOUT

    def chat_url(self) -> str:
        return self.base_url.rstrip("/") + "/chat/completions"


def _request_body(state: InterventionState) -> bytes:
    payload = {
        "model": "planner",
        "messages": [
            {"role": "system", "content": SYSTEM_PROMPT},
            {
                "role": "user",
                "content": json.dumps(state.to_dict(), sort_keys=True),
            },
        ],
    }
    return json.dumps(payload).encode("utf-8")


def _first_json_object(text: str) -> Optional[dict]:
    """Extract the first JSON object embedded anywhere in the text."""
    decoder = json.JSONDecoder()
    for start in range(len(text)):
        if text[start] != "{":
            continue
        try:
            obj, _ = decoder.raw_decode(text, start)
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def _action_from_reply(reply: str, state: InterventionState) -> InterventionAction:
    obj = _first_json_object(reply)
    if obj is None:
        fb = plan_action_rule(state)
        return InterventionAction(
            changes=fb.changes,
            rationale="planner reply unparseable; rule fallback",
            fallback=True,
        )
    rationale = obj.get("rationale")
    if not isinstance(rationale, str):
        rationale = "planner proposal"
    changes: dict[str, float | int] = {}
    for name, value in obj.items():
        if name not in KNOB_NAMES:
            continue
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            continue
        changes[name] = clamp_knob(name, value)
        if len(changes) >= MAX_KNOBS_PER_ACTION:
            break
    if not changes:
        fb = plan_action_rule(state)
        return InterventionAction(
            changes=fb.changes,
            rationale="planner proposed no recognized knobs; rule fallback",
            fallback=True,
        )
    return InterventionAction(changes=changes, rationale=rationale)


def plan_action_llm(
    state: InterventionState, endpoint: PlannerEndpoint
) -> InterventionAction:
    """Ask the endpoint for a plan; degrade to the rule planner on failure."""
    token = os.environ.get(TOKEN_ENV_VAR, "")
    request = urllib.request.Request(
        endpoint.chat_url(),
        data=_request_body(state),
        headers={
            "Content-Type": "application/json",
            "Authorization": f"Bearer {token}",
        },
        method="POST",
    )
    try:
        with urllib.request.urlopen(request, timeout=endpoint.timeout) as resp:
            body = json.loads(resp.read().decode("utf-8"))
    except urllib.error.HTTPError as exc:
        if exc.code in (401, 403):
            raise AuthFailure(
                f"planner endpoint rejected credentials (HTTP {exc.code})",
                fallback_action=plan_action_rule(state),
            ) from exc
        raise EndpointUnreachable(
            f"planner endpoint returned HTTP {exc.code}",
            fallback_action=plan_action_rule(state),
        ) from exc
    except (urllib.error.URLError, OSError, TimeoutError) as exc:
        raise EndpointUnreachable(
            f"planner endpoint unreachable: {exc}",
            fallback_action=plan_action_rule(state),
        ) from exc

    try:
        reply = body["choices"][0]["message"]["content"]
    except (KeyError, IndexError, TypeError):
        reply = ""
    if not isinstance(reply, str):
        reply = ""
    return _action_from_reply(reply, state)
