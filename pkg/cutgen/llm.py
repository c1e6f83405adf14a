"""
Chat-completion providers.

`HTTPChatProvider` talks to any OpenAI-compatible chat-completions endpoint.  `ScriptedProvider`
answers from a YAML script and is deterministic, for tests and offline runs:

```yaml
default: "INTENT: unknown\\nINGREDIENTS:"
responses:
  - step: generate
    match: "decode"
    text: |
      ```cpp
      #include <gtest/gtest.h>
      TEST(Convert, Decode) {}
      ```
  - step: refine
    text: "```cpp\\n// refined\\n{code}```"
```

Entries are tried in order; `step` and `match` (a regex searched in the last message) are both
optional.  `{code}` is replaced by the first fenced block of the last message.
"""

from dataclasses import dataclass, field
import logging
from pathlib import Path
import re
import threading
import time
from typing import Any, Dict, List, Optional, Pattern

import requests
import yaml

from .api import LLMProvider
from .config import ProviderConfig, read_secret
from .errors import ConfigError, ProviderError
from .lexical import fenced_blocks


LOG = logging.getLogger(__name__)


@dataclass
class LLMRequest:
    step: str
    provider: str
    messages: List[Dict[str, str]]
    temperature: float = 0.0
    max_output_tokens: int = 4096
    choice_count: int = 1
    focal_id: str = ""

    @property
    def prompt(self) -> str:
        return self.messages[-1]["content"] if self.messages else ""


@dataclass
class LLMResponse:
    text: str
    usage: Dict[str, int] = field(default_factory=dict)
    metadata: Dict[str, Any] = field(default_factory=dict)


def make_request(step: str, prompt: str, provider: LLMProvider, config: ProviderConfig, focal_id: str = "") -> LLMRequest:
    return LLMRequest(
        step=step, provider=provider.name, messages=[{"role": "user", "content": prompt}],
        temperature=config.temperature, max_output_tokens=config.max_output_tokens,
        choice_count=config.choice_count, focal_id=focal_id,
    )


class Transcript:
    """
    Request and response pairs for one focal method, in call order.
    """

    def __init__(self, focal_id: str):
        self.focal_id = focal_id
        self.entries: List[Dict[str, Any]] = []

    def record(self, request: LLMRequest, response: Optional[LLMResponse], error: Optional[str] = None):
        self.entries.append({
            "step": request.step,
            "request": {
                "provider": request.provider,
                "messages": request.messages,
                "temperature": request.temperature,
                "max_output_tokens": request.max_output_tokens,
                "choice_count": request.choice_count,
            },
            "response": {"text": response.text, "usage": response.usage} if response else None,
            "error": error,
        })

    def steps(self) -> List[str]:
        return [entry["step"] for entry in self.entries]

    def to_dict(self) -> Dict[str, Any]:
        return {"focal_id": self.focal_id, "entries": self.entries}


def complete(provider: LLMProvider, request: LLMRequest, transcript: Optional[Transcript] = None) -> LLMResponse:
    """
    Send a request, recording it on `transcript` whether or not it succeeds.
    """
    LOG.debug("%s: %s request to %s", request.focal_id, request.step, provider.name)
    try:
        response = provider.complete(request)
    except ProviderError as ex:
        if transcript is not None:
            transcript.record(request, None, str(ex))
        raise
    if transcript is not None:
        transcript.record(request, response)
    return response


class HTTPChatProvider:
    """
    Client for an OpenAI-compatible `/chat/completions` endpoint.

    Connection failures, timeouts, rate limiting and server errors are retried with exponential
    backoff; other HTTP errors fail immediately.  A `requests.Session` is shared between worker
    threads, which it supports for plain requests.
    """

    def __init__(self, config: ProviderConfig, session: Optional[requests.Session] = None):
        self.config = config
        self.name = "http:{}".format(config.model)
        self.session = session or requests.Session()
        key = read_secret(config.api_key_env)
        if key:
            self.session.headers["Authorization"] = "Bearer {}".format(key)

    def __repr__(self):
        return "<{}: {} @ {}>".format(self.__class__.__name__, self.config.model, self.config.endpoint)

    def _post(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        delay = self.config.backoff
        for attempt in range(1, self.config.retries + 1):
            try:
                resp = self.session.post(self.config.endpoint, json=payload, timeout=self.config.timeout)
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise requests.ConnectionError("HTTP {}".format(resp.status_code))
            except (requests.ConnectionError, requests.Timeout) as ex:
                if attempt == self.config.retries:
                    raise ProviderError("Chat request failed after {} attempts: {}".format(attempt, ex))
                LOG.warning("Chat request failed (attempt %d): %s", attempt, ex)
                time.sleep(delay)
                delay *= 2
                continue
            try:
                resp.raise_for_status()
                return resp.json()
            except (requests.HTTPError, ValueError) as ex:
                raise ProviderError("Chat request rejected: {}".format(ex))
        raise ProviderError("Chat request not attempted")

    def complete(self, request: LLMRequest) -> LLMResponse:
        data = self._post({
            "model": self.config.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "n": request.choice_count,
        })
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError):
            raise ProviderError("Malformed chat response: no choices")
        return LLMResponse(text, dict(data.get("usage") or {}), {"model": data.get("model"), "id": data.get("id")})

    def check(self):
        """
        Cheap reachability check, raising `ProviderError` if the endpoint can't be reached at all.
        """
        try:
            self.session.head(self.config.endpoint, timeout=min(self.config.timeout, 10))
        except requests.RequestException as ex:
            raise ProviderError("Provider endpoint {} unreachable: {}".format(self.config.endpoint, ex))


@dataclass(frozen=True)
class _Entry:
    step: Optional[str]
    match: Optional[Pattern]
    text: str


class ScriptedProvider:
    """
    Deterministic provider replaying canned responses.  Every request is kept in `requests`.
    """

    name = "scripted"

    def __init__(self, entries: List[_Entry], default: Optional[str] = None):
        self.entries = entries
        self.default = default
        self.requests: List[LLMRequest] = []
        self.lock = threading.Lock()

    def __repr__(self):
        return "<{}: {} entries>".format(self.__class__.__name__, len(self.entries))

    @classmethod
    def from_data(cls, data: Dict[str, Any]):
        if not isinstance(data, dict):
            raise ConfigError("Mock provider script must be a mapping")
        entries: List[_Entry] = []
        for item in data.get("responses") or []:
            try:
                match = re.compile(item["match"]) if item.get("match") else None
            except re.error as ex:
                raise ConfigError("Invalid match pattern in mock script: {}".format(ex))
            entries.append(_Entry(item.get("step"), match, str(item.get("text", ""))))
        return cls(entries, data.get("default"))

    @classmethod
    def from_file(cls, path: Path):
        try:
            with open(path) as f:
                return cls.from_data(yaml.safe_load(f) or {})
        except OSError as ex:
            raise ConfigError("Can't read mock provider script {}: {}".format(path, ex))
        except yaml.YAMLError as ex:
            raise ConfigError("Invalid mock provider script {}: {}".format(path, ex))

    def complete(self, request: LLMRequest) -> LLMResponse:
        with self.lock:
            self.requests.append(request)
        prompt = request.prompt
        for entry in self.entries:
            if entry.step and entry.step != request.step:
                continue
            if entry.match and not entry.match.search(prompt):
                continue
            text = entry.text
            break
        else:
            if self.default is None:
                raise ProviderError("No scripted response for {} step".format(request.step))
            text = self.default
        if "{code}" in text:
            blocks = fenced_blocks(prompt)
            text = text.replace("{code}", blocks[0] if blocks else "")
        return LLMResponse(text, {"prompt_chars": len(prompt), "completion_chars": len(text)}, {"provider": self.name})
