"""Generation endpoints: an HTTP chat-completions client and an offline
canned stand-in.

Both expose ``complete(prompt, decode, item_id=None) -> str``.  The
``item_id`` rides along only so the canned endpoint can key responses;
the HTTP client ignores it.  Request body shape:

    {"model", "messages": [{"role": "user", "content": ...}],
     "max_tokens", "temperature", "extra": {"top_k": ...}}

Greedy decoding is expressed as temperature 0.  Transient failures are
retried with exponential backoff before giving up.
"""

from __future__ import annotations

import json
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, asdict


class EndpointError(RuntimeError):
    pass


@dataclass(frozen=True)
class DecodeSettings:
    """Recorded alongside every profile so generations are attributable."""

    strategy: str = "greedy"
    top_k: int = 30
    max_new_tokens: int = 512
    model_name: str = "llama-2-7b-chat"

    def __post_init__(self):
        if self.strategy != "greedy":
            raise ValueError(f"only greedy decoding is supported, got {self.strategy!r}")
        if self.top_k < 1 or self.max_new_tokens < 1:
            raise ValueError("top_k and max_new_tokens must be >= 1")

    def as_dict(self) -> dict:
        return asdict(self)


class HttpChatEndpoint:
    """Chat-completions client over plain urllib with bounded retries.

    ``max_attempts`` counts total tries; the delay before retry ``n`` is
    ``backoff * 2**n`` seconds.
    """

    def __init__(self, url: str, timeout: float = 30.0,
                 max_attempts: int = 3, backoff: float = 0.5):
        if max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        self.url = url
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.backoff = backoff
        self._sleep = time.sleep

    def _request_body(self, prompt: str, decode: DecodeSettings) -> bytes:
        body = {
            "model": decode.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": decode.max_new_tokens,
            "temperature": 0.0,
            "extra": {"top_k": decode.top_k},
        }
        return json.dumps(body).encode("utf-8")

    def complete(self, prompt: str, decode: DecodeSettings, item_id=None) -> str:
        data = self._request_body(prompt, decode)
        last_error = None
        for attempt in range(self.max_attempts):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            try:
                req = urllib.request.Request(
                    self.url, data=data, headers={"Content-Type": "application/json"})
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
                return payload["choices"][0]["message"]["content"]
            except (urllib.error.URLError, TimeoutError, json.JSONDecodeError,
                    KeyError, IndexError, TypeError) as err:
                last_error = err
        raise EndpointError(
            f"endpoint {self.url} failed after {self.max_attempts} attempts: {last_error}")


def _canned_response(item_id) -> str:
    tag = item_id if item_id else "this item"
    return (
        f"SUMMARY: A concise overview of {tag} drawn from its listed attributes.\n"
        f"PREFERENCE PREDICTION: Users whose history favors items sharing "
        f"{tag}'s attributes are likely to enjoy it.\n"
        f"REASONING: The attributes of {tag} match the tastes implied by that "
        f"audience's previous choices, so recommending it to them is well grounded."
    )


class CannedEndpoint:
    """Offline stand-in: responses keyed by item id, with a deterministic
    compliant default for ids that have no explicit entry.

    Lets the whole pipeline run (and be tested) without any model.
    ``calls`` records (item_id, prompt) pairs in arrival order.
    """

    def __init__(self, responses: dict[str, str] | None = None):
        self.responses = dict(responses or {})
        self.calls: list[tuple[str | None, str]] = []

    def complete(self, prompt: str, decode: DecodeSettings, item_id=None) -> str:
        self.calls.append((item_id, prompt))
        if item_id in self.responses:
            return self.responses[item_id]
        return _canned_response(item_id)
