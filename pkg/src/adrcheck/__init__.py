"""adrcheck: detect Architectural Decision Record violations in a codebase
with retrieval-augmented evidence and a judge/validator model ensemble."""

from .adr import (
    AdrDocument,
    AdrTemplate,
    DecisionItem,
    StatusMapping,
    gate_accepted,
    normalize_status,
    parse_adr,
    split_decisions,
)
from .corpus import (
    CodeChunk,
    ProjectCorpus,
    SelectionMetrics,
    SourceFile,
    chunk_corpus,
    scan_repository,
    select_projects,
)
from .ensemble import EnsembleOutcome, ValidationVerdict, aggregate, validate_decision
from .judge import GenerationParams, Judgement, judge_decision, parse_verdict
from .labels import ComplianceLabel
from .metrics import (
    AgreementReport,
    PerformanceReport,
    RatingsMatrix,
    SamplePlan,
    cochran_sample_size,
    draw_sample,
    fleiss_kappa,
    ingest_human_labels,
    pairwise_jaccard,
    per_label_agreement,
    performance,
)
from .retrieval import HashingEmbedder, VectorIndex, build_index, embed, query_top_k

__version__ = "0.1.0"
