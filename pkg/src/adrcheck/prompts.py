"""Prompt assembly for the judge, the validators, and the decision splitter."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .adr import DecisionItem

# Fixed markers; the deterministic mock provider parses prompts by them.
DECISION_MARKER = "Decision under evaluation:"
SNIPPETS_MARKER = "Retrieved code snippets:"
JUDGE_LABEL_MARKER = "Primary judgement:"
JUDGE_REASON_MARKER = "Primary reason:"
SPLIT_MARKER = "Decision section to split:"

LABEL_DEFINITIONS = """\
- Compliant (C): The retrieved code snippets provide clear, direct evidence that the \
decision is implemented or followed as described.
- Not Compliant (NC): The code explicitly contradicts or violates the decision, or there \
is no relevant evidence that the decision has been implemented. If no code snippet \
demonstrates any trace of the decision being applied, consider it Not Compliant.
- Code is Insufficient to Answer (CIA): The decision cannot be evaluated based on code, \
such as organizational or process-related decisions, or cost or other aspects that the \
codebase cannot reflect."""

JUDGE_SYSTEM = f"""\
You are a software architecture expert. You receive one architectural decision taken \
from an Architectural Decision Record, together with code snippets retrieved from the \
project's source code. Determine whether the snippets provide sufficient evidence that \
the decision is implemented or followed. Reason step by step before answering.

Allowed judgements:
{LABEL_DEFINITIONS}

Answer with a single JSON object and nothing else:
{{"Decision": "<the decision you evaluated>", "Judgement": "Compliant" | "Not Compliant" | "Code is Insufficient to Answer", "Reason": "<why, grounded in the given contents>"}}"""

VALIDATOR_SYSTEM = f"""\
You are a software architecture expert reviewing the verdict of another model on one \
architectural decision. You receive the same decision and retrieved code snippets, plus \
the primary model's judgement. Independently assess whether that judgement is correct.

Label meanings:
{LABEL_DEFINITIONS}

Answer with a single JSON object and nothing else, with no additional commentary:
{{"Judgement": "Yes" | "No", "Your answer": "C" | "NC" | "CIA", "Explain": "<reason for your judgement and answer>"}}
"Judgement" is "Yes" only if you agree with the primary model; in that case "Your answer" \
must repeat its label."""

SPLITTER_SYSTEM = f"""\
You receive the Decision section of an Architectural Decision Record. If it contains \
multiple distinct architectural decisions, separate them; otherwise keep it whole. \
Answer with a JSON array of decision strings and nothing else. The text follows after \
"{SPLIT_MARKER}"."""

DEFAULT_FEW_SHOT: tuple[tuple[str, str], ...] = (
    (
        f"{DECISION_MARKER} We will use PostgreSQL as the primary datastore.\n"
        f"{SNIPPETS_MARKER}\n[chunk db/session.py:1-12]\n"
        "engine = create_engine('postgresql://app@db/main')\n",
        '{"Decision": "We will use PostgreSQL as the primary datastore.", '
        '"Judgement": "Compliant", '
        '"Reason": "The session module creates a PostgreSQL engine, directly implementing the decision."}',
    ),
    (
        f"{DECISION_MARKER} Releases require sign-off from two maintainers.\n"
        f"{SNIPPETS_MARKER}\n[chunk app/main.py:1-8]\n"
        "def main():\n    run()\n",
        '{"Decision": "Releases require sign-off from two maintainers.", '
        '"Judgement": "Code is Insufficient to Answer", '
        '"Reason": "Sign-off is an organizational process that the codebase cannot reflect."}',
    ),
)


@dataclass(frozen=True)
class TemplateConfig:
    """Editable prompt building blocks shipped with defaults."""

    judge_system: str = JUDGE_SYSTEM
    validator_system: str = VALIDATOR_SYSTEM
    few_shot_examples: tuple[tuple[str, str], ...] = DEFAULT_FEW_SHOT


DEFAULT_TEMPLATES = TemplateConfig()


@dataclass(frozen=True)
class PromptBundle:
    system_message: str
    user_message: str
    few_shot_examples: tuple[tuple[str, str], ...] = ()


def _snippet_blocks(snippets: Sequence[tuple[str, str]]) -> str:
    blocks = []
    for chunk_id, text in snippets:
        blocks.append(f"[chunk {chunk_id}]\n{text}")
    return "\n---\n".join(blocks)


def _decision_block(item: DecisionItem) -> str:
    return (
        f"Decision section:\n{item.decision_text}\n\n"
        f"Context section:\n{item.context_text or '(none)'}\n\n"
        f"Consequences section:\n{item.consequences_text or '(none)'}\n\n"
        f"{DECISION_MARKER} {item.decision_text}"
    )


def build_judge_prompt(
    item: DecisionItem,
    snippets: Sequence[tuple[str, str]],
    template_config: TemplateConfig = DEFAULT_TEMPLATES,
) -> PromptBundle:
    """Assemble the judge prompt; byte-identical for identical inputs."""
    if not snippets:
        raise ValueError("judge prompt requires at least one retrieved snippet")
    user = f"{_decision_block(item)}\n\n{SNIPPETS_MARKER}\n{_snippet_blocks(snippets)}"
    return PromptBundle(
        system_message=template_config.judge_system,
        user_message=user,
        few_shot_examples=template_config.few_shot_examples,
    )


def build_validator_prompt(
    item: DecisionItem,
    snippets: Sequence[tuple[str, str]],
    judge_label_text: str,
    judge_reason: str,
    template_config: TemplateConfig = DEFAULT_TEMPLATES,
    blind: bool = False,
) -> PromptBundle:
    """Assemble a validator prompt; blind mode withholds the judge's reason."""
    if not snippets:
        raise ValueError("validator prompt requires at least one retrieved snippet")
    parts = [
        _decision_block(item),
        f"{SNIPPETS_MARKER}\n{_snippet_blocks(snippets)}",
        f"{JUDGE_LABEL_MARKER} {judge_label_text}",
    ]
    if not blind:
        parts.append(f"{JUDGE_REASON_MARKER} {judge_reason}")
    return PromptBundle(
        system_message=template_config.validator_system,
        user_message="\n\n".join(parts),
        few_shot_examples=(),
    )


def build_splitter_prompt(decision_text: str) -> PromptBundle:
    return PromptBundle(
        system_message=SPLITTER_SYSTEM,
        user_message=f"{SPLIT_MARKER}\n{decision_text}",
        few_shot_examples=(),
    )
