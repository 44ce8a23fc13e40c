"""Answer prompt assembly and answer generation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from importlib import resources
from string import Template
from typing import Mapping

from .llm import LLMProvider, ProviderError, call_with_retries
from .organizer import ContextBundle

logger = logging.getLogger(__name__)

ANSWER_PROMPT_VERSION = "v1"
DEFAULT_MAX_CONTEXT_CHARS = 32_000


def _asset(name: str) -> str:
    return resources.files("kgrag").joinpath(f"templates/{name}.{ANSWER_PROMPT_VERSION}.txt").read_text(encoding="utf-8")


@dataclass(frozen=True)
class AnswerPrompt:
    system: str
    context: str
    question: str
    chunk_ids: tuple[str, ...] = ()
    truncated: bool = False

    @property
    def user(self) -> str:
        return Template(_asset("answer_user").rstrip("\n")).substitute(context=self.context, question=self.question)

    def render(self) -> str:
        return f"{self.system}\n{self.user}"


@dataclass
class GeneratedAnswer:
    text: str
    model: str
    latency_s: float
    attempts: int = 1
    flags: list[str] = field(default_factory=list)


class GenerationError(ProviderError):
    pass


def assemble_prompt(
    bundle: ContextBundle,
    chunks: Mapping[str, str] | object,
    question: str,
    max_context_chars: int = DEFAULT_MAX_CONTEXT_CHARS,
) -> AnswerPrompt:
    """Concatenate bundle chunks in order: newline within a tree, blank line between trees.

    ``chunks`` maps chunk id to text (a dict, or anything with ``text(id)``).
    If the context would exceed ``max_context_chars``, whole chunks are
    dropped from the tail and the prompt is flagged ``truncated``.
    """
    lookup = chunks.text if hasattr(chunks, "text") else chunks.__getitem__
    parts: list[str] = []
    ids: list[str] = []
    prev_group: object = None
    length = 0
    truncated = False
    for i, entry in enumerate(bundle.entries):
        try:
            text = lookup(entry.chunk_id)
        except KeyError as exc:
            raise KeyError(f"bundle references unknown chunk {entry.chunk_id!r}") from exc
        # Seed-filled chunks are unrelated to each other; each is its own paragraph.
        group = entry.tree_rank if entry.source == "tree" else ("seed", i)
        sep = "" if not parts else ("\n" if group == prev_group else "\n\n")
        if length + len(sep) + len(text) > max_context_chars:
            truncated = True
            break
        parts.append(sep + text)
        ids.append(entry.chunk_id)
        length += len(sep) + len(text)
        prev_group = group
    if truncated:
        logger.warning("context truncated to %d of %d chunks", len(ids), len(bundle.entries))
    return AnswerPrompt(_asset("answer_prompt").strip(), "".join(parts), question, tuple(ids), truncated)


def generate_answer(llm: LLMProvider, prompt: AnswerPrompt, retries: int = 2, max_output_units: int | None = 64) -> GeneratedAnswer:
    try:
        completion, attempts = call_with_retries(
            lambda: llm.complete(prompt.user, max_output_units, system=prompt.system), retries
        )
    except ProviderError as exc:
        raise GenerationError(f"answer generation failed after {exc.attempts} attempt(s): {exc}", attempts=exc.attempts) from exc
    answer = GeneratedAnswer(completion.text.strip(), completion.model, completion.latency_s, attempts)
    if not answer.text:
        answer.flags.append("empty_response")
    if prompt.truncated:
        answer.flags.append("context_truncated")
    return answer
