"""Anchored prompt document combining heatmaps, exemplars, skills and the observation."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ..gridworld import GridState, dump_layout
from ..heuristics import Heatmap
from .exemplars import DEFAULT_TOP_K, ExemplarPool, Tag, retrieve_top_k
from .render import DEFAULT_CELL_PX, Channel, render_frame, render_heatmap
from .skills import DEFAULT_TOP_K_SKILLS, TextSkill, select_skills

SPATIAL_SKILL_MAPS = "Spatial Skill Maps"
VISUAL_EXEMPLARS = "Visual Exemplars"
LEARNED_PRINCIPLES = "Learned Principles"
CURRENT_OBSERVATION = "Current Observation"
ANCHOR_ORDER = (SPATIAL_SKILL_MAPS, VISUAL_EXEMPLARS, LEARNED_PRINCIPLES, CURRENT_OBSERVATION)


@dataclass
class ImageSlot:
    label: str
    image: np.ndarray = field(repr=False)
    ref: str = ""


@dataclass
class Section:
    anchor: str
    images: list[ImageSlot] = field(default_factory=list)
    lines: list[str] = field(default_factory=list)


@dataclass
class PromptDocument:
    sections: list[Section]

    @property
    def anchors(self) -> list[str]:
        return [s.anchor for s in self.sections]

    def section(self, anchor: str) -> Section | None:
        for s in self.sections:
            if s.anchor == anchor:
                return s
        return None

    def manifest(self) -> str:
        """Structured text listing anchors, image references and text lines."""
        out = []
        for s in self.sections:
            out.append(f"## {s.anchor}")
            for img in s.images:
                h, w = img.image.shape[:2]
                ref = img.ref or f"<image {w}x{h} sha256:{_digest(img.image)}>"
                out.append(f"  {img.label}: {ref}")
            out.extend(f"  {line}" for line in s.lines)
        return "\n".join(out) + "\n"


def _digest(image: np.ndarray) -> str:
    return hashlib.sha256(image.tobytes()).hexdigest()[:12]


def assemble_prompt(
    atlas_blend: tuple[Heatmap, Heatmap],
    pool: ExemplarPool,
    skills: list[TextSkill],
    obs: GridState,
    top_k_skills: int = DEFAULT_TOP_K_SKILLS,
    top_k_exemplars: int = DEFAULT_TOP_K,
    cell_px: int = DEFAULT_CELL_PX,
    image_refs: dict[str, str] | None = None,
) -> PromptDocument:
    """Build the document in anchor order, omitting sections whose source is empty."""
    if top_k_skills < 0:
        raise ValueError("top_k_skills must be >= 0")
    refs = image_refs or {}
    danger, affinity = atlas_blend
    sections = [
        Section(
            SPATIAL_SKILL_MAPS,
            images=[
                ImageSlot("Danger zones (red)", render_heatmap(danger, Channel.DANGER, cell_px),
                          refs.get("danger", "")),
                ImageSlot("Goal affinity (green)",
                          render_heatmap(affinity, Channel.AFFINITY, cell_px),
                          refs.get("affinity", "")),
            ],
        )
    ]
    exemplars = retrieve_top_k(obs, pool, top_k_exemplars)
    if exemplars:
        ordered = [e for e in exemplars if e.tag is Tag.POSITIVE] + [
            e for e in exemplars if e.tag is Tag.NEGATIVE
        ]
        sections.append(
            Section(
                VISUAL_EXEMPLARS,
                images=[
                    ImageSlot(
                        f"{'Positive' if e.tag is Tag.POSITIVE else 'Negative'} case "
                        f"#{e.inserted_at}",
                        render_frame(e.state(), cell_px),
                    )
                    for e in ordered
                ],
            )
        )
    chosen = select_skills(skills, top_k_skills)
    if chosen:
        lines = []
        for cat in dict.fromkeys(s.category for s in chosen):
            lines.append(f"### {cat.value}")
            lines.extend(f"- {s.text}" for s in chosen if s.category is cat)
        sections.append(Section(LEARNED_PRINCIPLES, lines=lines))
    sections.append(
        Section(
            CURRENT_OBSERVATION,
            images=[ImageSlot("Observation", render_frame(obs, cell_px), refs.get("obs", ""))],
            lines=dump_layout(obs.layout, obs).rstrip("\n").split("\n"),
        )
    )
    return PromptDocument(sections)
