"""LLM backends: a real HTTP chat endpoint and a scripted mock.

The mock replays fixture responses keyed by (stage, window_index) and is
what makes the whole pipeline deterministic under test.  Every request
and response is appended to a JSONL audit log when one is configured.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import requests

from .errors import LlmUnavailable, MockMiss
from .schema import LlmParams

logger = logging.getLogger(__name__)

_MAX_RETRIES = 3
_BACKOFF_SECONDS = 0.5
_TRANSIENT_STATUS = {429, 500, 502, 503, 504}


def prompt_hash(messages: list[dict]) -> str:
    """Stable digest of a message list, for audit correlation."""
    canonical = json.dumps(messages, ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


@dataclass
class LlmClient:
    """Chat-completion client; ``backend`` is "http" or "scripted-mock"."""

    params: LlmParams
    backend: str = "http"
    mock_responses: dict = field(default_factory=dict)  # (stage, window) -> [texts]
    audit_path: Optional[Path] = None
    timeout: float = 60.0
    _mock_calls: dict = field(default_factory=dict)

    @classmethod
    def http(cls, params: LlmParams, audit_path: Optional[Path] = None) -> "LlmClient":
        return cls(params=params, backend="http", audit_path=audit_path)

    @classmethod
    def mock(
        cls,
        source: "dict | str | Path",
        params: Optional[LlmParams] = None,
        audit_path: Optional[Path] = None,
    ) -> "LlmClient":
        """Scripted mock from a fixture directory or an in-memory dict.

        A directory holds files named ``<stage>_<window_index>.txt``; an
        optional ``<stage>_<window_index>.retry.txt`` is served to the
        reprompt that follows a grammar violation.  A dict maps
        ``(stage, window_index)`` to a response text or list of texts
        consumed call by call (the last repeats).
        """
        responses: dict = {}
        if isinstance(source, dict):
            for key, value in source.items():
                responses[key] = list(value) if isinstance(value, (list, tuple)) else [value]
        else:
            root = Path(source)
            for path in sorted(root.glob("*.txt")):
                name = path.name
                retry = name.endswith(".retry.txt")
                stem = name[: -len(".retry.txt")] if retry else path.stem
                stage, _, idx = stem.rpartition("_")
                if not stage or not idx.isdigit():
                    continue
                key = (stage, int(idx))
                responses.setdefault(key, [None, None])
                responses[key][1 if retry else 0] = path.read_text("utf-8")
            for key, pair in list(responses.items()):
                responses[key] = [t for t in pair if t is not None]
        return cls(
            params=params or LlmParams(),
            backend="scripted-mock",
            mock_responses=responses,
            audit_path=audit_path,
        )

    def reset_mock(self) -> None:
        """Forget per-key call counts (fresh replay of the same fixtures)."""
        self._mock_calls.clear()


def _dig(payload, path):
    node = payload
    for step in path:
        node = node[step]
    return node


def _http_complete(client: LlmClient, messages: list[dict]) -> str:
    body = {
        "model": client.params.model,
        "messages": messages,
        "temperature": client.params.temperature,
        "max_tokens": client.params.max_tokens,
        "seed": client.params.seed,
    }
    headers = {"Content-Type": "application/json"}
    if client.params.api_key:
        headers["Authorization"] = f"Bearer {client.params.api_key}"
    last_error = None
    for attempt in range(1 + _MAX_RETRIES):
        if attempt:
            time.sleep(_BACKOFF_SECONDS * (2 ** (attempt - 1)))
        try:
            response = requests.post(
                client.params.endpoint, json=body, headers=headers, timeout=client.timeout
            )
        except requests.RequestException as exc:
            last_error = f"request failed: {exc}"
            logger.warning("LLM request attempt %d failed: %s", attempt + 1, exc)
            continue
        if response.status_code in _TRANSIENT_STATUS:
            last_error = f"HTTP {response.status_code}"
            logger.warning("LLM transient HTTP %d on attempt %d", response.status_code, attempt + 1)
            continue
        if response.status_code != 200:
            raise LlmUnavailable(f"LLM endpoint returned HTTP {response.status_code}")
        try:
            return str(_dig(response.json(), client.params.response_path))
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise LlmUnavailable(f"completion text missing at response path: {exc}") from exc
    raise LlmUnavailable(f"LLM endpoint unreachable after {1 + _MAX_RETRIES} attempts: {last_error}")


def _mock_complete(client: LlmClient, stage: str, window_index: int) -> str:
    key = (stage, window_index)
    texts = client.mock_responses.get(key)
    if not texts:
        raise MockMiss(stage, window_index)
    call = client._mock_calls.get(key, 0)
    client._mock_calls[key] = call + 1
    return texts[min(call, len(texts) - 1)]


def _audit(client: LlmClient, stage: str, window_index: int, messages: list[dict], response: str):
    if client.audit_path is None:
        return
    record = {
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "stage": stage,
        "window_index": window_index,
        "prompt_hash": prompt_hash(messages),
        "response": response,
    }
    with open(client.audit_path, "a", encoding="utf-8") as fh:
        fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def llm_complete(client: LlmClient, stage: str, window_index: int, messages: list[dict]) -> str:
    """One completion call; retries transient HTTP failures with backoff."""
    if not messages:
        raise ValueError("prompt must be nonempty")
    if client.backend == "scripted-mock":
        text = _mock_complete(client, stage, window_index)
    else:
        text = _http_complete(client, messages)
    _audit(client, stage, window_index, messages, text)
    return text
