"""Static rulebook text skills with priority-ordered top-K selection."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

DEFAULT_TOP_K_SKILLS = 3
PRUNE_INTERVAL = 10


class SkillCategory(enum.Enum):
    GENERAL_PRINCIPLES = "General Principles"
    PUSH_STRATEGIES = "Push Strategies"
    MISTAKES_TO_AVOID = "Mistakes to Avoid"


@dataclass(frozen=True)
class TextSkill:
    category: SkillCategory
    text: str
    priority: int


class RulebookError(ValueError):
    pass


def parse_rulebook(text: str) -> list[TextSkill]:
    """Parse ``## <Category>`` sections holding ``<priority> <skill text>`` lines."""
    skills: list[TextSkill] = []
    category: SkillCategory | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or (line.startswith("#") and not line.startswith("## ")):
            continue
        if line.startswith("## "):
            name = line[3:].strip()
            try:
                category = SkillCategory(name)
            except ValueError:
                raise RulebookError(f"line {lineno}: unknown section {name!r}") from None
            continue
        if category is None:
            raise RulebookError(f"line {lineno}: skill outside any section")
        head, _, body = line.partition(" ")
        try:
            priority = int(head)
        except ValueError:
            raise RulebookError(f"line {lineno}: missing integer priority") from None
        skills.append(TextSkill(category, body.strip(), priority))
    return skills


def load_rulebook(env: str | Path) -> list[TextSkill]:
    """Load a bundled rulebook by environment name, or any rulebook file by path."""
    p = Path(env)
    if p.suffix == ".md" and p.exists():
        return parse_rulebook(p.read_text(encoding="utf-8"))
    text = resources.files("skillatlas.rulebooks").joinpath(f"{env}.md").read_text(
        encoding="utf-8"
    )
    return parse_rulebook(text)


def select_skills(skills: list[TextSkill], k: int = DEFAULT_TOP_K_SKILLS) -> list[TextSkill]:
    """Highest priority first; file order breaks ties."""
    if k < 0:
        raise ValueError("k must be >= 0")
    order = sorted(range(len(skills)), key=lambda i: (-skills[i].priority, i))
    return [skills[i] for i in order[:k]]


@dataclass
class SkillBook:
    """Rulebook skills re-ranked every ``prune_interval`` updates by retrieval hits.

    Text is never rewritten; only the effective ordering changes.
    """

    skills: list[TextSkill]
    prune_interval: int = PRUNE_INTERVAL
    hits: dict[int, int] = field(default_factory=dict)
    updates: int = 0
    ranking: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.ranking:
            self.ranking = self._rank(use_hits=False)

    def _rank(self, use_hits: bool) -> list[int]:
        def key(i: int) -> tuple:
            h = self.hits.get(i, 0) if use_hits else 0
            return (-h, -self.skills[i].priority, i)

        return sorted(range(len(self.skills)), key=key)

    def top(self, k: int = DEFAULT_TOP_K_SKILLS) -> list[TextSkill]:
        return [self.skills[i] for i in self.ranking[:k]]

    def record_hit(self, skill: TextSkill) -> None:
        """Credit a skill that an external policy reported as used."""
        i = self.skills.index(skill)
        self.hits[i] = self.hits.get(i, 0) + 1

    def update(self) -> None:
        self.updates += 1
        if self.updates % self.prune_interval == 0:
            self.ranking = self._rank(use_hits=True)
