"""Chat-completion providers: HTTP client, scripted mock, and rule-based mock."""

from __future__ import annotations

import json
import re
from typing import TYPE_CHECKING, Callable, Protocol, Sequence, runtime_checkable

from . import jsonrepair
from .adr import split_decision_text
from .prompts import (
    DECISION_MARKER,
    JUDGE_LABEL_MARKER,
    SNIPPETS_MARKER,
    SPLIT_MARKER,
    build_splitter_prompt,
)

if TYPE_CHECKING:
    from .judge import GenerationParams


class ProviderError(RuntimeError):
    """A provider call failed (transport, HTTP status, or malformed envelope)."""


@runtime_checkable
class ChatProvider(Protocol):
    def complete(self, system: str, user: str, params: "GenerationParams") -> str: ...


class HttpChatProvider:
    """Client for a chat endpoint.

    Wire format: POST {model, system, user, temperature, top_p, top_k,
    repetition_penalty, max_tokens, seed} -> {"text": "..."}.
    """

    def __init__(self, endpoint: str, model: str, timeout: float = 300.0, session=None) -> None:
        import requests

        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self._session = session or requests.Session()
        self._requests = requests

    def complete(self, system: str, user: str, params: "GenerationParams") -> str:
        payload = {
            "model": self.model,
            "system": system,
            "user": user,
            "temperature": params.temperature,
            "top_p": params.top_p,
            "top_k": params.top_k,
            "repetition_penalty": params.repetition_penalty,
            "max_tokens": params.max_new_tokens,
            "seed": params.seed,
        }
        try:
            resp = self._session.post(self.endpoint, json=payload, timeout=self.timeout)
            resp.raise_for_status()
            body = resp.json()
        except (self._requests.RequestException, ValueError) as exc:
            raise ProviderError(f"chat request to {self.endpoint} failed: {exc}") from exc
        if not isinstance(body, dict) or "text" not in body:
            raise ProviderError(f"chat response from {self.endpoint} lacks 'text'")
        return str(body["text"])


class ScriptedChatProvider:
    """Mock that replays a fixed list of responses; used to test retry paths."""

    def __init__(self, responses: Sequence[str]) -> None:
        self._responses = list(responses)
        self.calls = 0

    def complete(self, system: str, user: str, params: "GenerationParams") -> str:
        if self.calls >= len(self._responses):
            raise ProviderError("scripted provider has no responses left")
        response = self._responses[self.calls]
        self.calls += 1
        return response


_STOPWORDS = frozenset(
    "the a an and or of to in for with will use using we our this that is are be by on".split()
)
_CIA_HINTS = frozenset(
    "team process meeting budget cost costs organization organizational hiring "
    "vendor contract license stakeholder workshop onboarding".split()
)


def _tokens(text: str) -> set[str]:
    return {
        t
        for t in re.findall(r"[a-z0-9_]+", text.lower())
        if len(t) > 2 and t not in _STOPWORDS
    }


class RuleBasedChatProvider:
    """Deterministic offline stand-in for the judge/validator/splitter models.

    Pure function of the prompt text: the judge answer comes from token overlap
    between the decision and the retrieved snippets, validators echo the
    primary label, and the splitter applies the rule-based list split.
    """

    def __init__(self, overlap_threshold: float = 0.3) -> None:
        self.overlap_threshold = overlap_threshold

    def complete(self, system: str, user: str, params: "GenerationParams") -> str:
        if SPLIT_MARKER in user:
            return self._split(user)
        if JUDGE_LABEL_MARKER in user:
            return self._validate(user)
        return self._judge(user)

    def _split(self, user: str) -> str:
        text = user.split(SPLIT_MARKER, 1)[1].strip()
        parts = split_decision_text(text) or [text]
        return json.dumps(parts, ensure_ascii=False)

    def _validate(self, user: str) -> str:
        label_line = user.split(JUDGE_LABEL_MARKER, 1)[1].splitlines()[0].strip()
        short = {"Compliant": "C", "Not Compliant": "NC", "Code is Insufficient to Answer": "CIA"}.get(
            label_line, label_line
        )
        return json.dumps(
            {
                "Judgement": "Yes",
                "Your answer": short,
                "Explain": "The primary label is consistent with the retrieved evidence.",
            },
            ensure_ascii=False,
        )

    def _judge(self, user: str) -> str:
        decision = user.split(DECISION_MARKER, 1)[-1].split(SNIPPETS_MARKER, 1)[0].strip()
        snippets = user.split(SNIPPETS_MARKER, 1)[-1]
        decision_tokens = _tokens(decision)

        if decision_tokens & _CIA_HINTS:
            label, reason = (
                "Code is Insufficient to Answer",
                "The decision concerns process or organizational aspects not visible in code.",
            )
        else:
            overlap = len(decision_tokens & _tokens(snippets))
            ratio = overlap / len(decision_tokens) if decision_tokens else 0.0
            if ratio >= self.overlap_threshold:
                label, reason = (
                    "Compliant",
                    f"Retrieved snippets share {overlap} decision terms, evidencing implementation.",
                )
            else:
                label, reason = (
                    "Not Compliant",
                    "No retrieved snippet shows a trace of the decision being applied.",
                )
        return json.dumps(
            {"Decision": decision, "Judgement": label, "Reason": reason},
            ensure_ascii=False,
        )


def make_provider_splitter(
    provider: ChatProvider, params: "GenerationParams"
) -> Callable[[str], list[str]]:
    """Adapt a chat provider into the decision-splitter callable contract."""

    def split(decision_text: str) -> list[str]:
        bundle = build_splitter_prompt(decision_text)
        raw = provider.complete(bundle.system_message, bundle.user_message, params)
        for value in jsonrepair.extract_json_candidates(raw):
            if isinstance(value, list) and value and all(isinstance(x, str) for x in value):
                return value
        raise ProviderError("splitter response contained no JSON array of strings")

    return split
