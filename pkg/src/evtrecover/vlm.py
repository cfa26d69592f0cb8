"""Chat-completion backend for the recovery pipeline.

:class:`VlmReasoner` implements the same five stages as
:class:`~evtrecover.reasoning.OracleReasoner` by asking an external model for
a JSON object per stage.  Replies are validated against a per-stage schema
and converted to domain objects; a malformed reply earns exactly one retry
with a corrective message, and anything still unusable (or any transport
failure) falls back to the oracle's answer for the same inputs.

Prompts are built only from what observations expose (relative target
polar coordinates, landmark buckets and distances, tracker heading) so no
ground-truth target position ever reaches the model.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import httpx
import jsonschema

from .reasoning import (Direction, ExecutionTrace, FailureContext, InsightTag, MovementInstruction,
                        MovementPlan, OracleReasoner, ReasoningError, RecoverySequence,
                        ReflectionInsight, Trigger)
from .world import DiscreteAction, Observation

DEFAULT_API_KEY_ENV = "VLM_API_KEY"


class ConfigError(ValueError):
    """Invalid or incomplete model endpoint configuration."""


class SchemaViolation(ValueError):
    """A model reply that does not satisfy the stage schema."""


class Stage(str, enum.Enum):
    ANALYZE = "analyze"
    SUGGEST = "suggest"
    PLAN = "plan"
    REFINE = "refine"
    REFLECT = "reflect"


@dataclass(frozen=True)
class ModelEndpointConfig:
    base_url: str
    model_name: str
    api_key: str = field(repr=False)
    timeout: float = 30.0
    max_retries: int = 1
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if not self.base_url:
            raise ConfigError("base_url is required")
        if not self.model_name:
            raise ConfigError("model_name is required")
        if not self.api_key:
            raise ConfigError("api_key is required")
        if not self.timeout > 0:
            raise ConfigError("timeout must be positive")
        if self.max_retries < 0:
            raise ConfigError("max_retries must be >= 0")
        if self.temperature != 0:
            raise ConfigError("temperature is fixed at 0 for reproducibility")

    @classmethod
    def from_env(cls, base_url: str, model_name: str, env_var: str = DEFAULT_API_KEY_ENV,
                 environ: Optional[Mapping[str, str]] = None, **kw) -> "ModelEndpointConfig":
        """Build a config reading the key from ``env_var``; fails fast when it is unset."""
        env = os.environ if environ is None else environ
        key = env.get(env_var, "")
        if not key:
            raise ConfigError(f"endpoint {base_url} configured but ${env_var} is not set")
        return cls(base_url, model_name, key, **kw)

    @property
    def url(self) -> str:
        base = self.base_url.rstrip("/")
        return base if base.endswith("/chat/completions") else base + "/chat/completions"


@dataclass(frozen=True)
class PromptBundle:
    stage: Stage
    system_text: str
    user_text: str
    images: Tuple[str, ...] = ()    # base64 PNG

    def messages(self) -> List[dict]:
        content: List[dict] = [{"type": "text", "text": self.user_text}]
        for img in self.images:
            content.append({"type": "image_url", "image_url": {"url": f"data:image/png;base64,{img}"}})
        return [{"role": "system", "content": [{"type": "text", "text": self.system_text}]},
                {"role": "user", "content": content}]


# ---------------------------------------------------------------------------
# Schemas and conversion
# ---------------------------------------------------------------------------

_ACTIONS = [a.value for a in DiscreteAction]
_SEQUENCE = {"type": "array", "items": {"enum": _ACTIONS}, "minItems": 5, "maxItems": 5}

SCHEMAS: Dict[Stage, dict] = {
    Stage.ANALYZE: {
        "type": "object",
        "properties": {"beta_occ": {"enum": [0, 1]},
                       "E_obj": {"type": ["string", "null"]},
                       "L_tgt": {"type": ["string", "null"]}},
        "required": ["beta_occ", "E_obj", "L_tgt"],
        "additionalProperties": False,
    },
    Stage.SUGGEST: {
        "type": "object",
        "properties": {"instructions": {
            "type": "array", "minItems": 1, "maxItems": 5,
            "items": {"type": "object",
                      "properties": {"D": {"enum": [d.value for d in Direction]},
                                     "C": {"enum": [t.value for t in Trigger]},
                                     "Z": {"type": ["string", "null"]}},
                      "required": ["D", "C", "Z"],
                      "additionalProperties": False}}},
        "required": ["instructions"],
        "additionalProperties": False,
    },
    Stage.PLAN: {"type": "object", "properties": {"actions": _SEQUENCE},
                 "required": ["actions"], "additionalProperties": False},
    Stage.REFINE: {"type": "object", "properties": {"actions": _SEQUENCE},
                   "required": ["actions"], "additionalProperties": False},
    Stage.REFLECT: {
        "type": "object",
        "properties": {"text": {"type": "string", "minLength": 1},
                       "canonical_tag": {"enum": [t.value for t in InsightTag]}},
        "required": ["text", "canonical_tag"],
        "additionalProperties": False,
    },
}

_FENCE_RE = re.compile(r"^```(?:json)?\s*(.*?)\s*```$", re.S)


def _to_domain(stage: Stage, obj: dict):
    if stage is Stage.ANALYZE:
        return FailureContext(obj["beta_occ"], obj["E_obj"], obj["L_tgt"])
    if stage is Stage.SUGGEST:
        return MovementPlan(tuple(MovementInstruction(Direction(i["D"]), Trigger(i["C"]), i["Z"])
                                  for i in obj["instructions"]))
    if stage in (Stage.PLAN, Stage.REFINE):
        return RecoverySequence(tuple(obj["actions"]))
    return ReflectionInsight(obj["text"], InsightTag(obj["canonical_tag"]))


def parse_reply(stage: Stage, content: str):
    """Validate a raw model reply and convert it to the stage's domain type."""
    text = content.strip()
    m = _FENCE_RE.match(text)
    if m:
        text = m.group(1)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"reply is not valid JSON ({exc.msg})") from exc
    try:
        jsonschema.validate(obj, SCHEMAS[stage])
    except jsonschema.ValidationError as exc:
        raise SchemaViolation(f"reply violates the {stage.value} schema: {exc.message}") from exc
    try:
        return _to_domain(stage, obj)
    except (ReasoningError, ValueError) as exc:
        raise SchemaViolation(f"reply is inconsistent: {exc}") from exc


def domain_to_json(stage: Stage, value) -> dict:
    """Inverse of :func:`parse_reply` for valid domain objects."""
    if stage is Stage.ANALYZE:
        return {"beta_occ": value.beta_occ, "E_obj": value.e_obj, "L_tgt": value.l_tgt}
    if stage is Stage.SUGGEST:
        return {"instructions": [{"D": i.direction.value, "C": i.trigger.value, "Z": i.landmark}
                                 for i in value.instructions]}
    if stage in (Stage.PLAN, Stage.REFINE):
        return {"actions": value.to_list()}
    return {"text": value.text, "canonical_tag": value.canonical_tag.value}


def correction_suffix(stage: Stage, error: str) -> str:
    return (f"Your previous reply was rejected: {error}. Reply again with only one JSON object "
            f"matching this schema, without any other text: {json.dumps(SCHEMAS[stage], sort_keys=True)}")


# ---------------------------------------------------------------------------
# Prompt construction
# ---------------------------------------------------------------------------

_SYSTEM = {
    Stage.ANALYZE: ("You analyse why a tracking robot lost sight of its target. Decide whether an "
                    "obstacle occludes the target. If so set beta_occ=1 and describe the occluder as "
                    "'<label> at <bucket>, <distance> m' in E_obj with L_tgt null. Otherwise set "
                    "beta_occ=0, E_obj null and describe the last known target position as "
                    "'<bucket>, <distance> m, moving <left|right|away>' in L_tgt."),
    Stage.SUGGEST: ("You suggest landmark-anchored movement instructions that would bring a lost target "
                    "back into view. Each instruction has a direction D, a trigger C and an optional "
                    "landmark label Z (required when C is not 'none')."),
    Stage.PLAN: ("You compile movement instructions into exactly five discrete robot actions. Each "
                 "move is one metre, each turn is 30 degrees; pad with Stop."),
    Stage.REFINE: ("You improve a five-action recovery sequence using insights from similar past "
                   "recoveries. Return exactly five actions."),
    Stage.REFLECT: ("You explain why a recovery attempt failed. Use one of the phrases 'wrong side', "
                    "'overshoot', 'undershoot' or 'blocked' in the text when it applies and give the "
                    "matching canonical_tag, or 'none'."),
}

_FOOTER = "Reply with a single JSON object only."


def _deg(rad: float) -> str:
    return f"{math.degrees(rad):+.1f} deg"


def describe_frame(obs: Observation, label: str) -> str:
    if obs.target_visible:
        tgt = f"target visible at {obs.rel_distance:.2f} m, bearing {_deg(obs.rel_angle)}"
    else:
        tgt = "target not visible"
    lms = ", ".join(f"{lm.label} ({lm.obstacle_id}) {lm.bucket} {lm.distance:.1f} m" for lm in obs.landmarks)
    return f"{label} (tick {obs.tick}): heading {_deg(obs.heading)}; {tgt}; landmarks: {lms or 'none'}"


def _frames_text(frames: Sequence[Observation]) -> str:
    names = [f"frame t-{5 * (len(frames) - 1 - i)}" if i < len(frames) - 1 else "frame t"
             for i in range(len(frames))]
    return "\n".join(describe_frame(f, n) for f, n in zip(frames, names))


def _schema_line(stage: Stage) -> str:
    return f"Schema: {json.dumps(SCHEMAS[stage], sort_keys=True)}\n{_FOOTER}"


def analyze_prompt(frames: Sequence[Observation], images: Sequence[str] = ()) -> PromptBundle:
    user = ("Bearings are relative to the robot heading, positive to the left. Buckets: far-left, "
            "left, center, right, far-right.\n" + _frames_text(frames) + "\n" + _schema_line(Stage.ANALYZE))
    return PromptBundle(Stage.ANALYZE, _SYSTEM[Stage.ANALYZE], user, tuple(images))


def suggest_prompt(psi: FailureContext, frames: Sequence[Observation] = ()) -> PromptBundle:
    user = (f"Failure context: {psi.to_text()}\n" + _frames_text(frames) + "\n" + _schema_line(Stage.SUGGEST))
    return PromptBundle(Stage.SUGGEST, _SYSTEM[Stage.SUGGEST], user)


def plan_prompt(psi: FailureContext, gamma: MovementPlan, frames: Sequence[Observation] = ()) -> PromptBundle:
    user = (f"Failure context: {psi.to_text()}\nMovement plan: {gamma.to_text()}\n"
            f"Allowed actions: {', '.join(_ACTIONS)}\n" + _frames_text(frames) + "\n" + _schema_line(Stage.PLAN))
    return PromptBundle(Stage.PLAN, _SYSTEM[Stage.PLAN], user)


def refine_prompt(psi: FailureContext, gamma: MovementPlan, r: RecoverySequence, retrieved) -> PromptBundle:
    cases = []
    for i, c in enumerate(retrieved, start=1):
        e = c.entry.e
        cases.append(f"case {i} (score {c.score:.3f}): context {c.entry.psi_text}; plan {c.entry.gamma_text}; "
                     f"actions {', '.join(c.entry.r.to_list())}; outcome {c.entry.meta.outcome}; "
                     f"insight {e.text if e is not None else 'none'}")
    user = (f"Failure context: {psi.to_text()}\nMovement plan: {gamma.to_text()}\n"
            f"Current actions: {', '.join(r.to_list())}\nSimilar past cases:\n"
            + ("\n".join(cases) or "none") + "\n" + _schema_line(Stage.REFINE))
    return PromptBundle(Stage.REFINE, _SYSTEM[Stage.REFINE], user)


def reflect_prompt(psi: FailureContext, gamma: MovementPlan, r: RecoverySequence,
                   trace: ExecutionTrace) -> PromptBundle:
    steps = [describe_frame(trace.observations[0], "before")]
    for i, (a, o) in enumerate(zip(trace.actions, trace.observations[1:]), start=1):
        steps.append(describe_frame(o, f"after action {i} ({a.value})"))
    user = (f"Failure context: {psi.to_text()}\nMovement plan: {gamma.to_text()}\n"
            f"Executed actions: {', '.join(r.to_list())}\nTrace:\n" + "\n".join(steps)
            + "\nThe target was not reacquired.\n" + _schema_line(Stage.REFLECT))
    return PromptBundle(Stage.REFLECT, _SYSTEM[Stage.REFLECT], user)


# ---------------------------------------------------------------------------
# Transport
# ---------------------------------------------------------------------------

class AuditLog:
    """Append-only JSONL record of every request, reply and fallback."""

    def __init__(self, path, clock: Callable[[], float] = time.time) -> None:
        self.path = Path(path)
        self._clock = clock
        self._lock = threading.Lock()

    def write(self, record: dict) -> None:
        rec = {"ts": self._clock(), **record}
        line = json.dumps(rec, sort_keys=True)
        with self._lock, open(self.path, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")


def _redact(body: dict) -> dict:
    """Request body with images replaced by their digests."""
    out = json.loads(json.dumps(body))
    for msg in out["messages"]:
        for part in msg["content"] if isinstance(msg["content"], list) else ():
            if part.get("type") == "image_url":
                url = part["image_url"]["url"]
                part["image_url"] = {"sha256": hashlib.sha256(url.encode()).hexdigest()}
    return out


class VlmClient:
    """Sends stage prompts to a chat-completion endpoint with retry and fallback.

    The only mutable shared state is the fallback counter, guarded by a lock,
    so one client may serve several episodes running in parallel.
    """

    def __init__(self, cfg: ModelEndpointConfig, transport: Optional[httpx.BaseTransport] = None,
                 audit: Optional[AuditLog] = None) -> None:
        self.cfg = cfg
        self.audit = audit
        self._http = httpx.Client(transport=transport, timeout=cfg.timeout)
        self._lock = threading.Lock()
        self._fallbacks = 0
        self.calls = 0

    @property
    def fallback_events(self) -> int:
        with self._lock:
            return self._fallbacks

    def close(self) -> None:
        self._http.close()

    def _log(self, **record) -> None:
        if self.audit is not None:
            self.audit.write(record)

    def _post(self, body: dict) -> str:
        with self._lock:
            self.calls += 1
        resp = self._http.post(self.cfg.url, json=body,
                               headers={"Authorization": f"Bearer {self.cfg.api_key}"})
        resp.raise_for_status()
        payload = resp.json()
        try:
            content = payload["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise SchemaViolation("response has no choices[0].message.content") from exc
        if not isinstance(content, str):
            raise SchemaViolation("message content is not a string")
        return content

    def call_stage(self, bundle: PromptBundle, fallback: Callable[[], Any]):
        """Ask the model for one stage result; fall back to ``fallback()`` when unusable."""
        messages = bundle.messages()
        attempts = 1 + self.cfg.max_retries
        for attempt in range(1, attempts + 1):
            body = {"model": self.cfg.model_name, "temperature": self.cfg.temperature, "messages": messages}
            self._log(event="request", stage=bundle.stage.value, attempt=attempt, body=_redact(body))
            try:
                content = self._post(body)
            except SchemaViolation as exc:
                content, error = None, str(exc)
            except (httpx.HTTPError, ValueError) as exc:
                # transport failures are not worth a retry
                self._log(event="error", stage=bundle.stage.value, attempt=attempt, error=repr(exc))
                break
            else:
                self._log(event="response", stage=bundle.stage.value, attempt=attempt, content=content)
                try:
                    return parse_reply(bundle.stage, content)
                except SchemaViolation as exc:
                    error = str(exc)
            self._log(event="invalid", stage=bundle.stage.value, attempt=attempt, error=error)
            if content is not None:
                messages = messages + [{"role": "assistant", "content": content}]
            messages = messages + [{"role": "user",
                                    "content": [{"type": "text", "text": correction_suffix(bundle.stage, error)}]}]
        with self._lock:
            self._fallbacks += 1
        result = fallback()
        self._log(event="fallback", stage=bundle.stage.value, result=domain_to_json(bundle.stage, result))
        return result


def call_stage(bundle: PromptBundle, cfg: ModelEndpointConfig, fallback: Callable[[], Any],
               transport: Optional[httpx.BaseTransport] = None):
    """One-shot helper around :meth:`VlmClient.call_stage`."""
    client = VlmClient(cfg, transport)
    try:
        return client.call_stage(bundle, fallback)
    finally:
        client.close()


# ---------------------------------------------------------------------------
# Reasoner
# ---------------------------------------------------------------------------

class VlmReasoner:
    """Recovery pipeline backed by an external model, with the oracle as fallback.

    Without a client every stage is answered by the oracle, so the reasoner
    behaves exactly like :class:`OracleReasoner`.
    """

    def __init__(self, client: Optional[VlmClient] = None, oracle: Optional[OracleReasoner] = None,
                 render_images: bool = True) -> None:
        self.client = client
        self.oracle = oracle or OracleReasoner()
        self.render_images = render_images

    @property
    def fallback_events(self) -> int:
        return 0 if self.client is None else self.client.fallback_events

    def _ask(self, bundle: PromptBundle, fallback: Callable[[], Any]):
        if self.client is None:
            return fallback()
        return self.client.call_stage(bundle, fallback)

    def analyze_failure(self, frames: Sequence[Observation], snapshots=None) -> FailureContext:
        oracle = lambda: self.oracle.analyze_failure(frames, snapshots)
        if self.client is None:
            return oracle()
        images: Tuple[str, ...] = ()
        if self.render_images and snapshots and all(s is not None for s in snapshots):
            from .render import render_frames
            images = tuple(base64.b64encode(png).decode("ascii") for png in render_frames(frames, snapshots))
        return self._ask(analyze_prompt(frames, images), oracle)

    def suggest_movement(self, psi: FailureContext, frames: Sequence[Observation] = ()) -> MovementPlan:
        return self._ask(suggest_prompt(psi, frames), lambda: self.oracle.suggest_movement(psi, frames))

    def plan_recovery(self, psi: FailureContext, gamma: MovementPlan,
                      frames: Sequence[Observation] = ()) -> RecoverySequence:
        return self._ask(plan_prompt(psi, gamma, frames), lambda: self.oracle.plan_recovery(psi, gamma, frames))

    def refine(self, psi: FailureContext, gamma: MovementPlan, r: RecoverySequence, retrieved) -> RecoverySequence:
        return self._ask(refine_prompt(psi, gamma, r, retrieved),
                         lambda: self.oracle.refine(psi, gamma, r, retrieved))

    def reflect(self, psi: FailureContext, gamma: MovementPlan, r: RecoverySequence,
                trace: ExecutionTrace, ground_truth_bearing: float) -> ReflectionInsight:
        # the ground-truth bearing is only used by the oracle fallback
        return self._ask(reflect_prompt(psi, gamma, r, trace),
                         lambda: self.oracle.reflect(psi, gamma, r, trace, ground_truth_bearing))
