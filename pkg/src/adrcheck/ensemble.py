"""Validator ensemble: independent review of the judge's verdicts and aggregation."""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

from . import jsonrepair
from .adr import DecisionItem
from .judge import (
    DEFAULT_PARAMS,
    DEFAULT_RETRY_LIMIT,
    GenerationParams,
    Judgement,
    JudgementError,
    NO_EVIDENCE_REASON,
    VerdictParseError,
    _lookup_key,
    retrieve_snippets,
)
from .labels import LABEL_ORDER, ComplianceLabel, parse_label
from .prompts import DEFAULT_TEMPLATES, TemplateConfig, build_validator_prompt
from .providers import ChatProvider, ProviderError
from .retrieval import DEFAULT_TOP_K, EmbeddingProvider, VectorIndex

log = logging.getLogger(__name__)

_LONG_LABEL = {
    ComplianceLabel.C: "Compliant",
    ComplianceLabel.NC: "Not Compliant",
    ComplianceLabel.CIA: "Code is Insufficient to Answer",
}


@dataclass(frozen=True)
class ValidationVerdict:
    """One validator's review of the judge's verdict for one decision."""

    decision_id: str
    validator_id: str
    agrees: bool
    label: ComplianceLabel
    explanation: str
    attempts: int


@dataclass(frozen=True)
class EnsembleOutcome:
    """Fused view of the judge label and the three validator labels."""

    decision_id: str
    judge_label: ComplianceLabel
    validator_labels: dict[str, ComplianceLabel]
    majority_label: ComplianceLabel
    unanimous: bool
    agreement_count: int


def parse_validator_verdict(
    raw: str, judge_label: ComplianceLabel
) -> tuple[bool, ComplianceLabel, str]:
    """Parse a validator response into (agrees, label, explanation).

    Enforces the consistency rule at parse time: an agreeing validator whose
    label differs from the judge's is a parse failure, driving a retry.
    """
    for candidate in jsonrepair.extract_json_candidates(raw):
        if not isinstance(candidate, dict):
            continue
        agree_value = _lookup_key(candidate, "judgement", "judgment")
        answer_value = _lookup_key(candidate, "your answer", "answer")
        if not isinstance(agree_value, str) or not isinstance(answer_value, str):
            continue
        agree_norm = agree_value.strip().lower()
        if agree_norm not in ("yes", "no"):
            continue
        label = parse_label(answer_value)
        if label is None:
            continue
        agrees = agree_norm == "yes"
        if agrees and label != judge_label:
            raise VerdictParseError(
                f"validator agrees but answered {label.value} against judge {judge_label.value}"
            )
        explanation = _lookup_key(candidate, "explain", "exlain", "explanation")
        return agrees, label, explanation if isinstance(explanation, str) else ""
    raise VerdictParseError(f"no parseable validator verdict in response: {raw[:200]!r}")


def validate_decision(
    item: DecisionItem,
    judge_output: Judgement,
    index: VectorIndex,
    chunk_texts: Mapping[str, str],
    provider: ChatProvider,
    params: GenerationParams = DEFAULT_PARAMS,
    k: int = DEFAULT_TOP_K,
    *,
    embedder: EmbeddingProvider,
    validator_id: str,
    template_config: TemplateConfig = DEFAULT_TEMPLATES,
    retry_limit: int = DEFAULT_RETRY_LIMIT,
    blind: bool = False,
) -> ValidationVerdict:
    """Run one validator over one judged decision.

    Retrieval is re-executed with the same k and index, so validators see the
    same evidence the judge saw. The retry/repair policy mirrors the judge's.
    """
    if judge_output.decision_id != item.decision_id:
        raise ValueError("judge output does not belong to this decision")

    if len(index) == 0:
        log.warning("zero-retrieval short-circuit for validator %s on %s", validator_id, item.decision_id)
        agrees = judge_output.label == ComplianceLabel.NC
        return ValidationVerdict(
            decision_id=item.decision_id,
            validator_id=validator_id,
            agrees=agrees,
            label=ComplianceLabel.NC,
            explanation=NO_EVIDENCE_REASON,
            attempts=1,
        )

    snippets = retrieve_snippets(item, index, chunk_texts, embedder, k)
    bundle = build_validator_prompt(
        item,
        snippets,
        judge_label_text=_LONG_LABEL[judge_output.label],
        judge_reason=judge_output.reason,
        template_config=template_config,
        blind=blind,
    )

    last_error: Exception | None = None
    for attempt in range(1, retry_limit + 1):
        try:
            raw = provider.complete(bundle.system_message, bundle.user_message, params)
        except ProviderError as exc:
            log.warning("provider error validating %s with %s (attempt %d/%d): %s",
                        item.decision_id, validator_id, attempt, retry_limit, exc)
            last_error = exc
            continue
        try:
            agrees, label, explanation = parse_validator_verdict(raw, judge_output.label)
        except VerdictParseError as exc:
            log.warning("unparseable validator verdict for %s from %s (attempt %d/%d)",
                        item.decision_id, validator_id, attempt, retry_limit)
            last_error = exc
            continue
        return ValidationVerdict(
            decision_id=item.decision_id,
            validator_id=validator_id,
            agrees=agrees,
            label=label,
            explanation=explanation,
            attempts=attempt,
        )
    raise JudgementError(item.decision_id, retry_limit, last_error)


def aggregate(judge_output: Judgement, verdicts: Sequence[ValidationVerdict]) -> EnsembleOutcome:
    """Fuse the judge label with three validator labels by majority vote.

    Ties go to the judge's label when it participates in the tie, otherwise to
    the fixed label order C < NC < CIA.
    """
    if len(verdicts) != 3:
        raise ValueError(f"aggregate requires exactly 3 verdicts, got {len(verdicts)}")
    validator_ids = [v.validator_id for v in verdicts]
    if len(set(validator_ids)) != 3:
        raise ValueError("validator_ids must be distinct")
    if any(v.decision_id != judge_output.decision_id for v in verdicts):
        raise ValueError("all verdicts must target the judged decision")

    ordered = sorted(verdicts, key=lambda v: v.validator_id)
    labels = [judge_output.label] + [v.label for v in ordered]
    counts = Counter(labels)
    best = max(counts.values())
    tied = [label for label in LABEL_ORDER if counts[label] == best]
    majority = judge_output.label if judge_output.label in tied else tied[0]

    return EnsembleOutcome(
        decision_id=judge_output.decision_id,
        judge_label=judge_output.label,
        validator_labels={v.validator_id: v.label for v in ordered},
        majority_label=majority,
        unanimous=len(counts) == 1,
        agreement_count=sum(1 for v in verdicts if v.agrees),
    )


# --- serialization -----------------------------------------------------------

def verdict_to_dict(v: ValidationVerdict) -> dict:
    return {
        "decision_id": v.decision_id,
        "validator_id": v.validator_id,
        "agrees": v.agrees,
        "label": v.label.value,
        "explanation": v.explanation,
        "attempts": v.attempts,
    }


def verdict_from_dict(data: dict) -> ValidationVerdict:
    return ValidationVerdict(
        decision_id=data["decision_id"],
        validator_id=data["validator_id"],
        agrees=data["agrees"],
        label=ComplianceLabel(data["label"]),
        explanation=data["explanation"],
        attempts=data["attempts"],
    )


def outcome_to_dict(o: EnsembleOutcome) -> dict:
    return {
        "decision_id": o.decision_id,
        "judge_label": o.judge_label.value,
        "validator_labels": {k: v.value for k, v in sorted(o.validator_labels.items())},
        "majority_label": o.majority_label.value,
        "unanimous": o.unanimous,
        "agreement_count": o.agreement_count,
    }


def outcome_from_dict(data: dict) -> EnsembleOutcome:
    return EnsembleOutcome(
        decision_id=data["decision_id"],
        judge_label=ComplianceLabel(data["judge_label"]),
        validator_labels={k: ComplianceLabel(v) for k, v in data["validator_labels"].items()},
        majority_label=ComplianceLabel(data["majority_label"]),
        unanimous=data["unanimous"],
        agreement_count=data["agreement_count"],
    )


def verdicts_to_jsonl(verdicts: Sequence[ValidationVerdict]) -> str:
    return "".join(json.dumps(verdict_to_dict(v), ensure_ascii=False) + "\n" for v in verdicts)


def verdicts_from_jsonl(text: str) -> list[ValidationVerdict]:
    return [verdict_from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


def outcomes_to_jsonl(outcomes: Sequence[EnsembleOutcome]) -> str:
    return "".join(json.dumps(outcome_to_dict(o), ensure_ascii=False) + "\n" for o in outcomes)


def outcomes_from_jsonl(text: str) -> list[EnsembleOutcome]:
    return [outcome_from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
