"""Primary judge: prompt construction, provider call, and verdict parsing."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from . import jsonrepair
from .adr import DecisionItem
from .labels import ComplianceLabel, parse_label
from .prompts import DEFAULT_TEMPLATES, TemplateConfig, build_judge_prompt
from .providers import ChatProvider, ProviderError
from .retrieval import DEFAULT_TOP_K, EmbeddingProvider, VectorIndex, embed, query_top_k

log = logging.getLogger(__name__)

DEFAULT_RETRY_LIMIT = 3
NO_EVIDENCE_REASON = "no relevant evidence retrieved"


@dataclass(frozen=True)
class GenerationParams:
    """Sampling knobs sent with every model call; defaults pin a reproducible run."""

    temperature: float = 0.1
    top_p: float = 0.9
    top_k: int = -1  # -1 disables top-k filtering
    repetition_penalty: float = 1.0
    max_new_tokens: int = 4096
    seed: int = 42

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


DEFAULT_PARAMS = GenerationParams()


class VerdictParseError(ValueError):
    """Model output could not be coerced into a (label, reason) verdict."""


class JudgementError(RuntimeError):
    """A decision could not be judged within the retry limit."""

    def __init__(self, decision_id: str, attempts: int, cause: Exception | None) -> None:
        super().__init__(f"judging {decision_id} failed after {attempts} attempts: {cause}")
        self.decision_id = decision_id
        self.attempts = attempts
        self.cause = cause


@dataclass(frozen=True)
class Judgement:
    """One model's verdict on one decision, with provenance."""

    decision_id: str
    model_id: str
    label: ComplianceLabel
    reason: str
    evidence_chunk_ids: tuple[str, ...]
    attempts: int
    raw_response: str


def _lookup_key(obj: Mapping, *names: str) -> object | None:
    lowered = {str(k).lower(): v for k, v in obj.items()}
    for name in names:
        if name in lowered:
            return lowered[name]
    return None


def parse_verdict(raw: str) -> tuple[ComplianceLabel, str]:
    """Parse a judge response into (label, reason).

    Accepts exact JSON plus repaired variants: code fences stripped,
    surrounding prose ignored, trailing commas removed, labels matched
    case-insensitively against both long names and short codes.
    """
    if not isinstance(raw, str):
        raise VerdictParseError("verdict must be a string")
    for candidate in jsonrepair.extract_json_candidates(raw):
        if not isinstance(candidate, dict):
            continue
        label_value = _lookup_key(candidate, "judgement", "judgment")
        if not isinstance(label_value, str):
            continue
        label = parse_label(label_value)
        if label is None:
            continue
        reason = _lookup_key(candidate, "reason")
        return label, reason if isinstance(reason, str) else ""
    raise VerdictParseError(f"no parseable verdict in response: {raw[:200]!r}")


def retrieve_snippets(
    item: DecisionItem,
    index: VectorIndex,
    chunk_texts: Mapping[str, str],
    embedder: EmbeddingProvider,
    k: int = DEFAULT_TOP_K,
) -> list[tuple[str, str]]:
    """Top-k evidence chunks for a decision; query is decision + context text."""
    query_text = f"{item.decision_text}\n{item.context_text}".strip()
    results = query_top_k(index, embed(query_text, embedder), k)
    return [(r.chunk_id, chunk_texts[r.chunk_id]) for r in results]


def judge_decision(
    item: DecisionItem,
    index: VectorIndex,
    chunk_texts: Mapping[str, str],
    provider: ChatProvider,
    params: GenerationParams = DEFAULT_PARAMS,
    k: int = DEFAULT_TOP_K,
    *,
    embedder: EmbeddingProvider,
    template_config: TemplateConfig = DEFAULT_TEMPLATES,
    retry_limit: int = DEFAULT_RETRY_LIMIT,
    model_id: str = "judge",
) -> Judgement:
    """Retrieve evidence, prompt the judge model, and parse its verdict.

    Malformed output is retried with the identical prompt up to retry_limit
    times; exhaustion raises JudgementError so the caller can log the item and
    continue. An empty index short-circuits to NC (absence of any trace).
    """
    if not item.status_accepted:
        raise ValueError(f"decision {item.decision_id} was gated out; only accepted decisions are judged")

    if len(index) == 0:
        log.warning("zero-retrieval short-circuit to NC for %s", item.decision_id)
        return Judgement(
            decision_id=item.decision_id,
            model_id=model_id,
            label=ComplianceLabel.NC,
            reason=NO_EVIDENCE_REASON,
            evidence_chunk_ids=(),
            attempts=1,
            raw_response="",
        )

    snippets = retrieve_snippets(item, index, chunk_texts, embedder, k)
    bundle = build_judge_prompt(item, snippets, template_config)

    last_error: Exception | None = None
    for attempt in range(1, retry_limit + 1):
        try:
            raw = provider.complete(bundle.system_message, bundle.user_message, params)
        except ProviderError as exc:
            log.warning("provider error judging %s (attempt %d/%d): %s", item.decision_id, attempt, retry_limit, exc)
            last_error = exc
            continue
        try:
            label, reason = parse_verdict(raw)
        except VerdictParseError as exc:
            log.warning("unparseable verdict for %s (attempt %d/%d)", item.decision_id, attempt, retry_limit)
            last_error = exc
            continue
        return Judgement(
            decision_id=item.decision_id,
            model_id=model_id,
            label=label,
            reason=reason,
            evidence_chunk_ids=tuple(cid for cid, _ in snippets),
            attempts=attempt,
            raw_response=raw,
        )
    raise JudgementError(item.decision_id, retry_limit, last_error)


# --- serialization -----------------------------------------------------------

def judgement_to_dict(j: Judgement) -> dict:
    return {
        "decision_id": j.decision_id,
        "model_id": j.model_id,
        "label": j.label.value,
        "reason": j.reason,
        "evidence_chunk_ids": list(j.evidence_chunk_ids),
        "attempts": j.attempts,
        "raw_response": j.raw_response,
    }


def judgement_from_dict(data: dict) -> Judgement:
    return Judgement(
        decision_id=data["decision_id"],
        model_id=data["model_id"],
        label=ComplianceLabel(data["label"]),
        reason=data["reason"],
        evidence_chunk_ids=tuple(data["evidence_chunk_ids"]),
        attempts=data["attempts"],
        raw_response=data["raw_response"],
    )


def judgements_to_jsonl(judgements: Sequence[Judgement]) -> str:
    return "".join(json.dumps(judgement_to_dict(j), ensure_ascii=False) + "\n" for j in judgements)


def judgements_from_jsonl(text: str) -> list[Judgement]:
    return [judgement_from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
