"""Exemplar pool, text skills, heatmap rendering and prompt assembly."""
from .exemplars import (
    AlignmentMismatch,
    Exemplar,
    ExemplarPool,
    PoolEvent,
    Tag,
    cosine,
    embed,
    insert_with_eviction,
    mine_keyframes,
    retrieve_top_k,
)
from .prompt import ANCHOR_ORDER, PromptDocument, assemble_prompt
from .render import Channel, heatmap_filename, render_frame, render_heatmap, save_png
from .skills import (
    RulebookError,
    SkillBook,
    SkillCategory,
    TextSkill,
    load_rulebook,
    parse_rulebook,
    select_skills,
)

__all__ = [
    "ANCHOR_ORDER",
    "AlignmentMismatch",
    "Channel",
    "Exemplar",
    "ExemplarPool",
    "PoolEvent",
    "PromptDocument",
    "RulebookError",
    "SkillBook",
    "SkillCategory",
    "Tag",
    "TextSkill",
    "assemble_prompt",
    "cosine",
    "embed",
    "heatmap_filename",
    "insert_with_eviction",
    "load_rulebook",
    "mine_keyframes",
    "parse_rulebook",
    "render_frame",
    "render_heatmap",
    "retrieve_top_k",
    "save_png",
    "select_skills",
]
