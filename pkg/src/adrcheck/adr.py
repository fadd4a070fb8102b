"""ADR Markdown parsing, decision splitting, and status gating."""

from __future__ import annotations

import json
import logging
import re
import string
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

log = logging.getLogger(__name__)


class AdrTemplate(str, Enum):
    Nygard = "Nygard"
    MADRlike = "MADRlike"
    Unknown = "Unknown"


# Canonical section name -> accepted heading spellings (lowercased).
DEFAULT_SECTION_SYNONYMS: dict[str, frozenset[str]] = {
    "Status": frozenset({"status"}),
    "Context": frozenset({"context", "context and problem statement"}),
    "Decision": frozenset({"decision", "decision outcome"}),
    "Consequences": frozenset({"consequences", "consequence"}),
}

_HEADING_RE = re.compile(r"^(#{1,6})\s+(.+?)\s*#*\s*$")
_BULLET_RE = re.compile(r"^([-*+]|\d+[.)])\s+(.*)$")

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})


@dataclass(frozen=True)
class AdrDocument:
    """Parsed ADR file with its recognized sections."""

    path: str
    title: str
    template: AdrTemplate
    sections: dict[str, str] = field(default_factory=dict)
    status_raw: str | None = None


@dataclass(frozen=True)
class DecisionItem:
    """One atomic architectural decision extracted from an ADR."""

    decision_id: str
    adr_path: str
    decision_text: str
    context_text: str
    consequences_text: str
    status_raw: str | None
    status_accepted: bool

    def __post_init__(self) -> None:
        if not self.decision_text:
            raise ValueError("decision_text must be non-empty")


@dataclass(frozen=True)
class StatusMapping:
    """Accepted/rejected buckets for the status labels seen in the wild."""

    accepted_labels: frozenset[str]
    rejected_labels: frozenset[str]

    def __post_init__(self) -> None:
        overlap = self.accepted_labels & self.rejected_labels
        if overlap:
            raise ValueError(f"status buckets overlap: {sorted(overlap)}")


def normalize_status_text(text: str) -> str:
    """lowercase, strip punctuation, collapse whitespace."""
    return " ".join(text.lower().translate(_PUNCT_TABLE).split())


DEFAULT_STATUS_MAPPING = StatusMapping(
    accepted_labels=frozenset(
        normalize_status_text(s)
        for s in (
            "Accepted",
            "Proposed",
            "Approved",
            "Implemented",
            "Completed",
            "Decided",
            "WIP",
            "Adopted",
            "Submitted",
            "Proposal",
        )
    ),
    rejected_labels=frozenset(
        normalize_status_text(s)
        for s in (
            "Draft",
            "Superseded",
            "Pending",
            "Under review",
            "Rejected",
            "Discussing",
            "Deprecated",
            "Abandoned",
            "DRAFT Not Implemented",
            "not identify any status",
        )
    ),
)


def _stem(path: str) -> str:
    name = path.rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0] if "." in name else name


def parse_adr(
    markdown: str,
    path: str,
    section_synonyms: dict[str, frozenset[str]] | None = None,
) -> AdrDocument:
    """Parse an ADR Markdown file into titled sections.

    Headings are matched case-insensitively at any level >= 2; a heading that
    does not match a known section simply ends the current one. Unparseable
    input yields template=Unknown with empty sections.
    """
    synonyms = section_synonyms or DEFAULT_SECTION_SYNONYMS
    title: str | None = None
    sections: dict[str, list[str]] = {}
    current: str | None = None

    for line in markdown.splitlines():
        m = _HEADING_RE.match(line)
        if m:
            level, text = len(m.group(1)), m.group(2).strip()
            if level == 1:
                if title is None:
                    title = text
                current = None
                continue
            lowered = text.lower()
            current = None
            for canonical, names in synonyms.items():
                if lowered in names:
                    current = canonical
                    sections.setdefault(current, [])
                    break
            continue
        if current is not None:
            sections[current].append(line)

    cleaned = {name: "\n".join(lines).strip("\n").strip() for name, lines in sections.items()}

    if all(k in cleaned for k in ("Status", "Context", "Decision", "Consequences")):
        template = AdrTemplate.Nygard
    elif "Decision" in cleaned:
        template = AdrTemplate.MADRlike
    else:
        template = AdrTemplate.Unknown

    status_raw = cleaned.get("Status", "").strip() or None
    return AdrDocument(
        path=path,
        title=title if title is not None else _stem(path),
        template=template,
        sections=cleaned,
        status_raw=status_raw,
    )


def normalize_status(
    status_raw: str | None,
    mapping: StatusMapping = DEFAULT_STATUS_MAPPING,
) -> bool:
    """True only for statuses in the accepted bucket; absent or unknown is False."""
    if status_raw is None:
        return False
    norm = normalize_status_text(status_raw)
    if norm in mapping.accepted_labels:
        return True
    if norm in mapping.rejected_labels:
        return False
    log.warning("unknown status label %r treated as not accepted", status_raw)
    return False


def split_decision_text(text: str) -> list[str]:
    """Rule-based splitter: top-level list items become separate decisions.

    Continuation lines (anything until the next top-level item) stay attached
    to their item. Non-list prose is a single decision.
    """
    items: list[list[str]] = []
    preamble: list[str] = []
    for line in text.splitlines():
        m = _BULLET_RE.match(line)
        if m:
            items.append([m.group(2).strip()])
        elif items:
            items[-1].append(line.strip())
        else:
            preamble.append(line)

    if not items:
        whole = text.strip()
        return [whole] if whole else []
    return ["\n".join(parts).strip() for parts in items if "\n".join(parts).strip()]


def split_decisions(
    doc: AdrDocument,
    splitter: Callable[[str], list[str]] | None = None,
    mapping: StatusMapping = DEFAULT_STATUS_MAPPING,
    id_prefix: str | None = None,
) -> list[DecisionItem]:
    """Split the Decision section into atomic DecisionItems.

    When a splitter provider is given it receives the Decision text and must
    return a list of decision strings; any failure falls back to the
    rule-based splitter with a warning. Each item inherits the document's
    Context, Consequences, and status.
    """
    decision_text = doc.sections.get("Decision", "").strip()
    if not decision_text:
        raise ValueError(f"ADR {doc.path} has no Decision section to split")

    parts: list[str] | None = None
    if splitter is not None:
        try:
            candidate = splitter(decision_text)
            if candidate and all(isinstance(p, str) and p.strip() for p in candidate):
                parts = [p.strip() for p in candidate]
            else:
                raise ValueError("splitter returned no usable decision strings")
        except Exception as exc:
            log.warning("decision splitter failed for %s (%s); using rule-based split", doc.path, exc)
    if parts is None:
        parts = split_decision_text(decision_text)

    prefix = id_prefix if id_prefix is not None else doc.path
    accepted = normalize_status(doc.status_raw, mapping)
    return [
        DecisionItem(
            decision_id=f"{prefix}#{ordinal}",
            adr_path=doc.path,
            decision_text=part,
            context_text=doc.sections.get("Context", ""),
            consequences_text=doc.sections.get("Consequences", ""),
            status_raw=doc.status_raw,
            status_accepted=accepted,
        )
        for ordinal, part in enumerate(parts, start=1)
    ]


def gate_accepted(items: Sequence[DecisionItem]) -> list[DecisionItem]:
    """Keep only decisions whose status maps to accepted, preserving order."""
    return [item for item in items if item.status_accepted]


# --- serialization -----------------------------------------------------------

def decision_to_dict(item: DecisionItem) -> dict:
    return {
        "decision_id": item.decision_id,
        "adr_path": item.adr_path,
        "decision_text": item.decision_text,
        "context_text": item.context_text,
        "consequences_text": item.consequences_text,
        "status_raw": item.status_raw,
        "status_accepted": item.status_accepted,
    }


def decision_from_dict(data: dict) -> DecisionItem:
    return DecisionItem(
        decision_id=data["decision_id"],
        adr_path=data["adr_path"],
        decision_text=data["decision_text"],
        context_text=data["context_text"],
        consequences_text=data["consequences_text"],
        status_raw=data["status_raw"],
        status_accepted=data["status_accepted"],
    )


def decisions_to_jsonl(items: Sequence[DecisionItem]) -> str:
    return "".join(json.dumps(decision_to_dict(i), ensure_ascii=False) + "\n" for i in items)


def decisions_from_jsonl(text: str) -> list[DecisionItem]:
    return [decision_from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
