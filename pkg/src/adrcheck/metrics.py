"""Agreement and performance statistics plus the sampling plan for human review."""

from __future__ import annotations

import csv
import logging
import math
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .labels import LABEL_ORDER, ComplianceLabel

log = logging.getLogger(__name__)

Z_SCORES = {0.90: 1.645, 0.95: 1.96, 0.99: 2.576}


# --- ratings and agreement ---------------------------------------------------

@dataclass(frozen=True)
class RatingsMatrix:
    """N items x n raters categorical label matrix; no missing cells allowed."""

    item_ids: tuple[str, ...]
    rater_ids: tuple[str, ...]
    labels: tuple[tuple[ComplianceLabel, ...], ...]  # rows=items, cols=raters

    def __post_init__(self) -> None:
        if len(self.item_ids) < 1:
            raise ValueError("ratings need at least one item")
        if len(self.rater_ids) < 2:
            raise ValueError("ratings need at least two raters")
        if len(self.labels) != len(self.item_ids):
            raise ValueError("label rows must match item_ids")
        n = len(self.rater_ids)
        for row in self.labels:
            if len(row) != n:
                raise ValueError("every item must carry a label from every rater")

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_raters(self) -> int:
        return len(self.rater_ids)

    def counts(self) -> np.ndarray:
        """n_ij matrix: raters assigning label j to item i, columns in C/NC/CIA order."""
        index = {label: j for j, label in enumerate(LABEL_ORDER)}
        out = np.zeros((self.n_items, len(LABEL_ORDER)), dtype=np.int64)
        for i, row in enumerate(self.labels):
            for label in row:
                out[i, index[label]] += 1
        return out

    def rater_column(self, rater_id: str) -> list[ComplianceLabel]:
        j = self.rater_ids.index(rater_id)
        return [row[j] for row in self.labels]


@dataclass(frozen=True)
class PairwiseJaccard:
    per_label: dict[ComplianceLabel, float]  # undefined labels omitted
    overall: float


@dataclass(frozen=True)
class AgreementReport:
    N: int
    n: int
    observed_agreement_mean: float
    expected_agreement: float
    kappa: float | None  # None marks the perfect-degenerate case
    degenerate: bool
    per_label_agreement: dict[ComplianceLabel, float]
    class_frequency: dict[ComplianceLabel, float]
    pairwise_jaccard: dict[tuple[str, str], PairwiseJaccard]


def kappa_from_agreement(p_bar: float, p_e: float) -> float:
    """Chance-corrected kappa from mean observed and expected agreement."""
    if p_e >= 1.0:
        raise ValueError("kappa is undefined when expected agreement is 1")
    return (p_bar - p_e) / (1.0 - p_e)


def per_label_agreement(ratings: RatingsMatrix) -> dict[ComplianceLabel, tuple[float, float]]:
    """Per-label (A_j, p_j): agreement contribution and class frequency.

    A_j = (1/N) * sum_i n_ij (n_ij - 1) / (n (n - 1)); the A_j sum to the mean
    observed agreement, which is why this decomposition is used.
    """
    counts = ratings.counts().astype(np.float64)
    n = ratings.n_raters
    a_j = (counts * (counts - 1)).sum(axis=0) / (ratings.n_items * n * (n - 1))
    p_j = counts.sum(axis=0) / (ratings.n_items * n)
    return {label: (float(a_j[j]), float(p_j[j])) for j, label in enumerate(LABEL_ORDER)}


def pairwise_jaccard(ratings: RatingsMatrix) -> dict[tuple[str, str], PairwiseJaccard]:
    """Jaccard similarity of the item-sets any two raters assign to each label.

    A label with empty sets for both raters is undefined and excluded; the
    overall value is the micro aggregate over the three label sets.
    """
    sets: dict[str, dict[ComplianceLabel, set[str]]] = {}
    for rater in ratings.rater_ids:
        column = ratings.rater_column(rater)
        sets[rater] = {
            label: {iid for iid, got in zip(ratings.item_ids, column) if got == label}
            for label in LABEL_ORDER
        }

    out: dict[tuple[str, str], PairwiseJaccard] = {}
    for a_idx, a in enumerate(ratings.rater_ids):
        for b in ratings.rater_ids[a_idx + 1 :]:
            per_label: dict[ComplianceLabel, float] = {}
            inter_total = union_total = 0
            for label in LABEL_ORDER:
                inter = len(sets[a][label] & sets[b][label])
                union = len(sets[a][label] | sets[b][label])
                inter_total += inter
                union_total += union
                if union > 0:
                    per_label[label] = inter / union
            overall = inter_total / union_total if union_total > 0 else 1.0
            out[(a, b)] = PairwiseJaccard(per_label=per_label, overall=overall)
    return out


def fleiss_kappa(ratings: RatingsMatrix) -> AgreementReport:
    """Fleiss' kappa with its decomposition into per-label agreement.

    When every rater assigns the single same label everywhere, expected
    agreement reaches 1 and kappa is undefined; the report then carries
    observed agreement 1 and kappa=None with the degenerate flag set.
    """
    counts = ratings.counts().astype(np.float64)
    n = ratings.n_raters
    p_i = (counts * (counts - 1)).sum(axis=1) / (n * (n - 1))
    p_bar = float(p_i.mean())
    p_j = counts.sum(axis=0) / (ratings.n_items * n)
    p_e = float((p_j * p_j).sum())

    degenerate = math.isclose(p_e, 1.0, abs_tol=1e-15)
    kappa = None if degenerate else kappa_from_agreement(p_bar, p_e)

    per_label = per_label_agreement(ratings)
    return AgreementReport(
        N=ratings.n_items,
        n=n,
        observed_agreement_mean=p_bar,
        expected_agreement=p_e,
        kappa=kappa,
        degenerate=degenerate,
        per_label_agreement={label: a for label, (a, _) in per_label.items()},
        class_frequency={label: p for label, (_, p) in per_label.items()},
        pairwise_jaccard=pairwise_jaccard(ratings),
    )


# --- classification performance ----------------------------------------------

@dataclass(frozen=True)
class ConfusionMatrix:
    labels: tuple[ComplianceLabel, ...]
    counts: np.ndarray  # rows=truth, cols=prediction

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class PerformanceReport:
    accuracy: float
    mcc: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    micro_precision: float
    micro_recall: float
    micro_f1: float
    per_label: dict[ComplianceLabel, dict[str, float]]
    confusion: ConfusionMatrix
    zero_division_labels: tuple[str, ...] = ()  # metrics forced to 0 by empty denominators


def confusion_matrix(
    truth: Sequence[ComplianceLabel], predicted: Sequence[ComplianceLabel]
) -> ConfusionMatrix:
    if len(truth) != len(predicted):
        raise ValueError("truth and predictions must have equal length")
    if not truth:
        raise ValueError("cannot evaluate zero items")
    index = {label: j for j, label in enumerate(LABEL_ORDER)}
    counts = np.zeros((len(LABEL_ORDER), len(LABEL_ORDER)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(labels=LABEL_ORDER, counts=counts)


def _safe_div(num: float, den: float) -> tuple[float, bool]:
    if den == 0:
        return 0.0, True
    return num / den, False


def performance(
    truth: Sequence[ComplianceLabel], predicted: Sequence[ComplianceLabel]
) -> PerformanceReport:
    """Accuracy, MCC, and per-label / macro / micro precision, recall, F1.

    Zero denominators substitute 0 and are flagged. MCC uses the multiclass
    covariance form; a zero denominator yields MCC = 0.
    """
    cm = confusion_matrix(truth, predicted)
    counts = cm.counts.astype(np.float64)
    s = counts.sum()
    correct = float(np.trace(counts))
    t_k = counts.sum(axis=1)  # true counts per class
    p_k = counts.sum(axis=0)  # predicted counts per class

    zero_flags: list[str] = []
    per_label: dict[ComplianceLabel, dict[str, float]] = {}
    for j, label in enumerate(LABEL_ORDER):
        tp = counts[j, j]
        precision, p_zero = _safe_div(tp, p_k[j])
        recall, r_zero = _safe_div(tp, t_k[j])
        f1, f_zero = _safe_div(2 * precision * recall, precision + recall)
        if p_zero:
            zero_flags.append(f"precision({label.value})")
        if r_zero:
            zero_flags.append(f"recall({label.value})")
        if f_zero:
            zero_flags.append(f"f1({label.value})")
        per_label[label] = {"precision": precision, "recall": recall, "f1": f1}

    macro_precision = float(np.mean([per_label[l]["precision"] for l in LABEL_ORDER]))
    macro_recall = float(np.mean([per_label[l]["recall"] for l in LABEL_ORDER]))
    macro_f1 = float(np.mean([per_label[l]["f1"] for l in LABEL_ORDER]))

    accuracy = correct / s
    # Single-label multiclass: pooled TP = correct, pooled FP = pooled FN.
    micro = accuracy

    mcc_num = correct * s - float(p_k @ t_k)
    mcc_den = math.sqrt((s * s - float(p_k @ p_k)) * (s * s - float(t_k @ t_k)))
    mcc = 0.0 if mcc_den == 0 else mcc_num / mcc_den

    return PerformanceReport(
        accuracy=accuracy,
        mcc=mcc,
        macro_precision=macro_precision,
        macro_recall=macro_recall,
        macro_f1=macro_f1,
        micro_precision=micro,
        micro_recall=micro,
        micro_f1=micro,
        per_label=per_label,
        confusion=cm,
        zero_division_labels=tuple(zero_flags),
    )


# --- sampling ----------------------------------------------------------------

@dataclass(frozen=True)
class SamplePlan:
    population_size: int
    confidence: float
    margin: float
    sample_size: int
    sampled_ids: tuple[str, ...]
    seed: int


def cochran_sample_size(population: int, confidence: float, margin: float) -> int:
    """Sample size at maximum variance (p = 0.5) with finite-population correction.

    n0 = z^2 * 0.25 / margin^2, corrected n = n0 / (1 + (n0 - 1) / population),
    rounded up and capped at the population.
    """
    if population <= 0:
        raise ValueError("population must be positive")
    if not 0 < margin < 1:
        raise ValueError("margin must be in (0, 1)")
    z = Z_SCORES.get(round(confidence, 2))
    if z is None:
        raise ValueError(f"confidence must be one of {sorted(Z_SCORES)}")
    n0 = z * z * 0.25 / (margin * margin)
    n = n0 / (1.0 + (n0 - 1.0) / population)
    return min(math.ceil(n), population)


def draw_sample(
    ids: Sequence[str],
    size: int,
    seed: int,
    confidence: float = 0.95,
    margin: float = 0.05,
) -> SamplePlan:
    """Uniform sample without replacement, reproducible for a fixed seed."""
    if size > len(ids):
        raise ValueError(f"sample size {size} exceeds population {len(ids)}")
    sampled = random.Random(seed).sample(list(ids), size)
    return SamplePlan(
        population_size=len(ids),
        confidence=confidence,
        margin=margin,
        sample_size=size,
        sampled_ids=tuple(sampled),
        seed=seed,
    )


# --- human ground-truth ingestion --------------------------------------------

class AdrCategory(str, Enum):
    InfraDeployment = "InfraDeployment"
    PrincipleIntent = "PrincipleIntent"
    SystemModuleInteraction = "SystemModuleInteraction"
    LogicCondition = "LogicCondition"
    ContextDependent = "ContextDependent"


class ErrorCategory(str, Enum):
    SemanticLogicalMisinterpretation = "SemanticLogicalMisinterpretation"
    MissingContextInference = "MissingContextInference"
    InsufficientDomainKnowledge = "InsufficientDomainKnowledge"
    Overgeneralization = "Overgeneralization"


_ADR_CATEGORY_NAMES = {
    "infrastructure and deployment-specific": AdrCategory.InfraDeployment,
    "principle-driven or intent-oriented": AdrCategory.PrincipleIntent,
    "system and module interaction": AdrCategory.SystemModuleInteraction,
    "logic or condition-intensive": AdrCategory.LogicCondition,
    "context-dependent": AdrCategory.ContextDependent,
}
_ERROR_CATEGORY_NAMES = {
    "semantic and logical misinterpretation": ErrorCategory.SemanticLogicalMisinterpretation,
    "inability to infer implicit or missing context": ErrorCategory.MissingContextInference,
    "insufficient domain and technical knowledge": ErrorCategory.InsufficientDomainKnowledge,
    "overgeneralization and unsupported inference": ErrorCategory.Overgeneralization,
}


@dataclass(frozen=True)
class HumanLabelRecord:
    decision_id: str
    expert_label: ComplianceLabel
    adr_category: AdrCategory | None = None
    error_category: ErrorCategory | None = None


@dataclass(frozen=True)
class RowError:
    line_number: int
    message: str


def _parse_category(value: str, table: dict, enum_cls) -> object | None:
    text = value.strip()
    if not text:
        return None
    hit = table.get(" ".join(text.lower().split()))
    if hit is not None:
        return hit
    try:
        return enum_cls(text)
    except ValueError:
        raise ValueError(
            f"unknown {enum_cls.__name__} {text!r}; valid values: "
            + ", ".join(sorted(repr(k) for k in table))
        )


def ingest_human_labels(path: str | Path) -> tuple[list[HumanLabelRecord], list[RowError]]:
    """Load the decision_id,expert_label,adr_category,error_category CSV.

    Malformed rows are reported with their line numbers and skipped; parsing
    continues through the file.
    """
    records: list[HumanLabelRecord] = []
    errors: list[RowError] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"decision_id", "expert_label"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ValueError("human labels CSV must have at least decision_id,expert_label columns")
        for row in reader:
            line = reader.line_num
            try:
                label_text = (row.get("expert_label") or "").strip()
                try:
                    label = ComplianceLabel(label_text.upper())
                except ValueError:
                    raise ValueError(f"expert_label must be one of C/NC/CIA, got {label_text!r}")
                adr_cat = _parse_category(row.get("adr_category") or "", _ADR_CATEGORY_NAMES, AdrCategory)
                err_cat = _parse_category(row.get("error_category") or "", _ERROR_CATEGORY_NAMES, ErrorCategory)
                decision_id = (row.get("decision_id") or "").strip()
                if not decision_id:
                    raise ValueError("decision_id must be non-empty")
                records.append(
                    HumanLabelRecord(
                        decision_id=decision_id,
                        expert_label=label,
                        adr_category=adr_cat,  # type: ignore[arg-type]
                        error_category=err_cat,  # type: ignore[arg-type]
                    )
                )
            except ValueError as exc:
                log.warning("human labels row %d rejected: %s", line, exc)
                errors.append(RowError(line_number=line, message=str(exc)))
    return records, errors
