"""Rule-based task classification by keyword counts."""

from __future__ import annotations

import re

from ..core.types import TaskType

KEYWORDS: dict[TaskType, frozenset[str]] = {
    TaskType.CODE: frozenset({
        "implement", "api", "function", "code", "bug", "refactor", "class", "endpoint", "rest",
        "script", "compile", "debug", "program", "library", "module", "unit", "deploy", "backend",
    }),
    TaskType.RESEARCH: frozenset({
        "sources", "survey", "literature", "research", "cite", "citations", "papers", "references",
        "investigate", "bibliography", "findings",
    }),
    TaskType.ANALYSIS: frozenset({
        "analyze", "analyse", "analysis", "compare", "evaluate", "metrics", "data", "trend", "trends",
        "statistics", "assess", "forecast", "breakdown",
    }),
    TaskType.CREATIVE: frozenset({
        "haiku", "poem", "poetry", "story", "song", "lyrics", "fiction", "novel", "slogan", "creative",
        "sonnet", "limerick", "screenplay",
    }),
}

_PRIORITY = (TaskType.CODE, TaskType.RESEARCH, TaskType.ANALYSIS, TaskType.CREATIVE)
_WORD = re.compile(r"[a-z]+")


def classify_task(prompt: str) -> TaskType:
    """Type with the most keyword hits; ties go to the earlier type in code, research, analysis, creative."""
    words = _WORD.findall(prompt.lower())
    best, best_hits = TaskType.CUSTOM, 0
    for kind in _PRIORITY:
        hits = sum(w in KEYWORDS[kind] for w in words)
        if hits > best_hits:
            best, best_hits = kind, hits
    return best
