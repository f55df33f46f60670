"""Prompt templates and the bounded repair loop shared by the extraction agents."""
from __future__ import annotations

import logging
import re
from importlib import resources
from pathlib import Path
from string import Template
from typing import Callable, TypeVar

from .backend import Backend
from .errors import ExtractionFailed

logger = logging.getLogger(__name__)

DEFAULT_REPAIR_LIMIT = 3

T = TypeVar("T")


class ReplyViolation(ValueError):
    """A backend reply that breaks the output contract; carries the reasons."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


def load_template(name: str, override: str | Path | None = None) -> Template:
    if override is not None:
        return Template(Path(override).read_text(encoding="utf-8"))
    text = resources.files("pulsechain").joinpath(f"data/prompts/{name}.txt").read_text(encoding="utf-8")
    return Template(text)


def fenced_block(text: str, tag: str) -> str | None:
    """Body of the first ```<tag> fenced block, or None."""
    m = re.search(rf"```[ \t]*{re.escape(tag)}[ \t]*\r?\n(.*?)^[ \t]*```", text, re.DOTALL | re.MULTILINE)
    return m.group(1) if m else None


def extract_with_repair(
    backend: Backend,
    agent: str,
    prompt: str,
    parse: Callable[[str], T],
    limit: int = DEFAULT_REPAIR_LIMIT,
    subject: str = "",
) -> tuple[T, int]:
    """Ask, parse, and re-ask with the violations appended.

    At most ``limit`` replies are requested in total, so ``limit``
    consecutive malformed replies raise :class:`ExtractionFailed`.
    Returns the parsed value and the number of repair prompts issued.
    """
    repair = load_template("repair")
    messages: list[tuple[str, str]] = [("user", prompt)]
    violations: list[str] = []
    for attempt in range(limit):
        reply = backend.chat(agent, messages)
        try:
            return parse(reply), attempt
        except ReplyViolation as exc:
            violations = exc.violations
            logger.info("%s %s: reply %d rejected: %s", agent, subject, attempt + 1, exc)
            messages = messages + [
                ("assistant", reply),
                ("user", repair.substitute(violations="\n".join(f"- {v}" for v in violations))),
            ]
    raise ExtractionFailed(f"{agent} {subject}: {limit} invalid replies", violations)
