"""Adapter that lets an external vision-language model drive discovery.

Speaks a minimal chat-completion wire shape: a JSON body with model,
temperature, and a role/content message list where image parts carry
base64 PNG data.  Temperature defaults to 0 so identical inputs build
identical request bodies.  Every exchange is written to disk before any
parsing is attempted; a reply the parser chokes on is still on the
audit trail.

All adapter failures raise subclasses of ProposerError, which the
discovery loop records as a failed round and survives.
"""

from __future__ import annotations

import base64
import json
import os
import re
import time
from dataclasses import dataclass, field

import httpx
import numpy as np

from .discovery import Critique, ModelProposal, ProposerError, RoundContext
from .dsl import SdeModel, print_model
from .prompts import PromptTemplate, default_template

DEFAULT_API_KEY_ENV = "NST_VLM_API_KEY"


class VlmTransportError(ProposerError):
    """Request failed after exhausting the retry budget."""


class VlmReplyError(ProposerError):
    """The reply arrived but held nothing usable."""


class VlmCalibrationError(VlmReplyError):
    """No parseable parameter assignments in a calibration reply."""


@dataclass(frozen=True)
class VlmConfig:
    endpoint: str
    model: str
    temperature: float = 0.0
    timeout: float = 60.0
    retry_budget: int = 2
    api_key_env: str = DEFAULT_API_KEY_ENV

    def __post_init__(self) -> None:
        if self.retry_budget < 0:
            raise ValueError("retry_budget must be non-negative")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")


@dataclass
class VlmExchange:
    """One request/response pair, persisted before parsing."""

    request: dict
    response_text: str
    latency: float
    path: str | None = None


def _image_part(chart_path: str) -> dict:
    with open(chart_path, "rb") as fh:
        data = base64.b64encode(fh.read()).decode("ascii")
    return {"type": "image", "media_type": "image/png", "data": data}


def _text_part(text: str) -> dict:
    return {"type": "text", "text": text}


def _extract_reply(payload: dict) -> str:
    """Reply text from any of the common response shapes."""
    try:
        content = payload["content"]
        if isinstance(content, list) and content:
            return str(content[0]["text"])
    except (KeyError, TypeError):
        pass
    try:
        return str(payload["choices"][0]["message"]["content"])
    except (KeyError, IndexError, TypeError):
        pass
    text = payload.get("output_text")
    if isinstance(text, str):
        return text
    raise VlmReplyError(f"no reply text in response keys {sorted(payload)}")


class VlmClient:
    """Blocking HTTP client with a retry budget for 5xx and transport
    failures.  A custom ``transport`` (e.g. httpx.MockTransport) makes
    the adapter fully testable offline."""

    def __init__(self, config: VlmConfig, transport: httpx.BaseTransport | None = None):
        self.config = config
        self._client = httpx.Client(timeout=config.timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict:
        headers = {"content-type": "application/json"}
        key = os.environ.get(self.config.api_key_env, "")
        if key:
            headers["authorization"] = f"Bearer {key}"
        return headers

    def request_body(self, messages: list[dict]) -> dict:
        return {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "messages": messages,
        }

    def exchange(self, messages: list[dict], persist_path: str | None = None) -> VlmExchange:
        """Send ``messages``; persist the exchange, then return it.

        Retries transport errors and 5xx responses up to the budget.
        Anything else (4xx, empty reply) fails immediately.
        """
        body = self.request_body(messages)
        attempts = self.config.retry_budget + 1
        last_error: Exception | None = None
        started = time.monotonic()
        response = None
        for _ in range(attempts):
            try:
                response = self._client.post(
                    self.config.endpoint, json=body, headers=self._headers()
                )
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if response.status_code >= 500:
                last_error = VlmTransportError(
                    f"server error {response.status_code}"
                )
                continue
            break
        else:
            raise VlmTransportError(
                f"request failed after {attempts} attempts: {last_error}"
            )
        latency = time.monotonic() - started
        if response.status_code != 200:
            raise VlmTransportError(
                f"request rejected with status {response.status_code}"
            )
        try:
            payload = response.json()
        except ValueError:
            payload = {"raw": response.text}
        # audit trail first: extraction failures must not lose the reply
        if persist_path is not None:
            _persist_exchange(body, payload, latency, persist_path)
        reply = _extract_reply(payload)
        if not reply.strip():
            raise VlmReplyError("empty reply")
        return VlmExchange(
            request=body, response_text=reply, latency=latency, path=persist_path
        )


def _persist_exchange(body: dict, payload: object, latency: float, path: str) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    record = {
        "request": body,
        "response": payload,
        "latency_seconds": latency,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(record, sort_keys=True, indent=2) + "\n")


_FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)
_ASSIGN_RE = re.compile(
    r"^\s*([A-Za-z_][A-Za-z0-9_]*)\s*=\s*([-+]?\d+(?:\.\d*)?(?:[eE][-+]?\d+)?)\s*$"
)


def extract_model_source(reply: str) -> tuple[str, str]:
    """(first fenced code block, remaining prose) from a builder reply."""
    match = _FENCE_RE.search(reply)
    if match is None:
        raise VlmReplyError("no fenced code block in reply")
    source = match.group(1)
    rationale = (reply[: match.start()] + reply[match.end():]).strip()
    return source, rationale


def parse_assignments(reply: str) -> dict[str, float]:
    """``name = value`` lines from a calibration reply."""
    out: dict[str, float] = {}
    for line in reply.splitlines():
        match = _ASSIGN_RE.match(line)
        if match:
            out[match.group(1)] = float(match.group(2))
    return out


def _exchange_path(trace_dir: str | None, round_index: int, role: str) -> str | None:
    if trace_dir is None:
        return None
    return os.path.join(trace_dir, f"exchange_{round_index}_{role}.json")


def vlm_critique(
    client: VlmClient,
    chart_path: str,
    history: list[str],
    template: PromptTemplate,
    diagnostics,
    *,
    round_index: int = 0,
    trace_dir: str | None = None,
) -> Critique:
    """Critique of the reference fit from the chart and model history."""
    if not history:
        raise ValueError("history must hold at least one model")
    listing = "\n\n".join(
        f"Model {i}:\n{src}" for i, src in enumerate(history)
    )
    parts = [
        _text_part(template.critic + "\n" + listing),
        _image_part(chart_path),
    ]
    ex = client.exchange(
        [{"role": "user", "content": parts}],
        _exchange_path(trace_dir, round_index, "critic"),
    )
    return Critique(text=ex.response_text, diagnostics=diagnostics)


def vlm_build(
    client: VlmClient,
    critique: Critique,
    template: PromptTemplate,
    *,
    round_index: int = 0,
    trace_dir: str | None = None,
) -> ModelProposal:
    """Revised model from the builder prompt plus critique text."""
    if not critique.text.strip():
        raise ValueError("critique text is empty")
    parts = [_text_part(template.builder + "\nCritique:\n" + critique.text)]
    ex = client.exchange(
        [{"role": "user", "content": parts}],
        _exchange_path(trace_dir, round_index, "builder"),
    )
    source, rationale = extract_model_source(ex.response_text)
    return ModelProposal(dsl_source=source, rationale=rationale)


def vlm_calibrate(
    client: VlmClient,
    chart_path: str,
    model: SdeModel,
    template: PromptTemplate,
    *,
    round_index: int = 0,
    trace_dir: str | None = None,
) -> np.ndarray:
    """Parameter values suggested by the model from the chart alone.

    Named parameters update; missing names keep their current values.
    A reply with no parseable assignment at all is an error, so the
    caller can fall back to gradient calibration.
    """
    prompt = template.calibration.format(model=print_model(model))
    parts = [_text_part(prompt), _image_part(chart_path)]
    ex = client.exchange(
        [{"role": "user", "content": parts}],
        _exchange_path(trace_dir, round_index, "calibrator"),
    )
    assignments = parse_assignments(ex.response_text)
    if not assignments:
        raise VlmCalibrationError("no parameter assignments in reply")
    values = []
    for decl in model.params:
        values.append(assignments.get(decl.name, decl.value))
    return np.asarray(values, dtype=float)


@dataclass
class VlmProposer:
    """Discovery proposer backed by an external vision-language model.

    Needs rendered charts (the critic looks at the fit) and a trace
    directory when exchange persistence is wanted.
    """

    client: VlmClient
    template: PromptTemplate = field(default_factory=default_template)
    trace_dir: str | None = None
    needs_charts: bool = True

    def critique(self, ctx: RoundContext) -> Critique:
        if ctx.chart_path is None:
            raise ProposerError("no chart rendered for the reference fit")
        history = [print_model(m) for m in ctx.history]
        return vlm_critique(
            self.client,
            ctx.chart_path,
            history,
            self.template,
            ctx.diagnostics,
            round_index=ctx.round_index,
            trace_dir=self.trace_dir,
        )

    def propose(self, ctx: RoundContext, critique: Critique) -> ModelProposal:
        return vlm_build(
            self.client,
            critique,
            self.template,
            round_index=ctx.round_index,
            trace_dir=self.trace_dir,
        )
