"""Compliance label domain shared by the judge, validators, and metrics."""

from __future__ import annotations

from enum import Enum


class ComplianceLabel(str, Enum):
    """Verdict a model may assign to one architectural decision."""

    C = "C"
    NC = "NC"
    CIA = "CIA"


LABEL_ORDER: tuple[ComplianceLabel, ...] = (
    ComplianceLabel.C,
    ComplianceLabel.NC,
    ComplianceLabel.CIA,
)

# Long names and short codes a model response may use, case-insensitive.
LABEL_ALIASES: dict[str, ComplianceLabel] = {
    "c": ComplianceLabel.C,
    "compliant": ComplianceLabel.C,
    "nc": ComplianceLabel.NC,
    "not compliant": ComplianceLabel.NC,
    "cia": ComplianceLabel.CIA,
    "code is insufficient to answer": ComplianceLabel.CIA,
}


def parse_label(text: str) -> ComplianceLabel | None:
    """Map a raw label string to a ComplianceLabel, or None if unrecognized."""
    return LABEL_ALIASES.get(" ".join(text.lower().split()))
