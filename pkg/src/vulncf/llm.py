"""Optional LLM-backed counterfactual generation over an OpenAI-compatible
chat-completions endpoint. The rule engine stays the default generator;
this client is a plug-in for corpora the rules cannot rewrite."""

from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass

import httpx

from .dataset import SourceFunction

logger = logging.getLogger(__name__)

CWE_NAMES = {
    "CWE-20": "Improper Input Validation",
    "CWE-416": "Use After Free",
    "CWE-787": "Out-of-bounds Write",
}

API_KEY_ENV = "VULNCF_LLM_API_KEY"

PROMPT_TEMPLATE = """You are a security-focused code rewriting assistant.

Vulnerability class: {cwe} ({cwe_name}).
The following C function is currently labeled: {label}.

Task: minimally modify the function so that its vulnerability label flips
from {label} to {flipped}, by {action} a {cwe} flaw. Change as few tokens
as possible and keep the function compilable. Respond with the rewritten
function only, inside a single ```c code block, with no commentary.

```c
{source}
```"""


class LlmError(RuntimeError):
    pass


class Timeout(LlmError):
    pass


class HttpError(LlmError):
    def __init__(self, status: int, body: str = ""):
        self.status = status
        super().__init__(f"endpoint returned HTTP {status}")


class EmptyCompletion(LlmError):
    pass


@dataclass
class LlmClientConfig:
    endpoint_url: str
    model_tag: str = "gpt-4o-mini"
    timeout: float = 30.0
    max_retries: int = 2
    api_key_env: str = API_KEY_ENV


def build_llm_prompt(fn: SourceFunction, cwe: str | None = None) -> str:
    """Deterministic rewrite prompt carrying the source verbatim, its label,
    and the CWE id and name."""
    cwe = cwe or fn.cwe
    label = fn.label.value
    flipped = fn.label.flipped().value
    action = "introducing" if fn.label.value == "Benign" else "removing"
    return PROMPT_TEMPLATE.format(
        cwe=cwe,
        cwe_name=CWE_NAMES.get(cwe, cwe),
        label=label,
        flipped=flipped,
        action=action,
        source=fn.source.rstrip("\n"),
    )


_FENCE = re.compile(r"```(?:[a-zA-Z]*)\n(.*?)```", re.DOTALL)


def extract_code(completion: str) -> str:
    """The first fenced code block, or the whole completion when unfenced."""
    match = _FENCE.search(completion)
    body = match.group(1) if match else completion
    body = body.strip()
    if not body:
        raise EmptyCompletion("completion contained no code")
    return body + "\n"


def request_llm(
    prompt: str,
    cfg: LlmClientConfig,
    transport: httpx.BaseTransport | None = None,
) -> str:
    """One completion from the configured endpoint; the extracted code block
    is returned and the raw response is logged. Retries server errors and
    timeouts up to cfg.max_retries."""
    headers = {"Content-Type": "application/json"}
    api_key = os.environ.get(cfg.api_key_env, "")
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    body = {
        "model": cfg.model_tag,
        "messages": [{"role": "user", "content": prompt}],
    }
    last_error: LlmError | None = None
    with httpx.Client(transport=transport, timeout=cfg.timeout) as client:
        for attempt in range(cfg.max_retries + 1):
            try:
                response = client.post(cfg.endpoint_url, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last_error = Timeout(str(exc))
                continue
            if response.status_code >= 500:
                last_error = HttpError(response.status_code, response.text[:200])
                continue
            if response.status_code != 200:
                raise HttpError(response.status_code, response.text[:200])
            logger.debug("llm raw response (attempt %d): %s", attempt, response.text)
            doc = response.json()
            try:
                content = doc["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError):
                raise EmptyCompletion("response lacked choices[0].message.content") from None
            if not content or not content.strip():
                raise EmptyCompletion("empty completion text")
            return extract_code(content)
    assert last_error is not None
    raise last_error
