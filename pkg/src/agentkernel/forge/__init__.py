"""Automatic team composition, the design library and redesign policy."""

from .classify import KEYWORDS, classify_task
from .designer import (
    DEFAULT_TOPOLOGY,
    DesignerPort,
    TemplateDesigner,
    design_team,
    render_prompt,
    template_design,
    validate_design,
)
from .redesign import PENDING_HUMAN_REVIEW, Escalation, ForgeConfig, redesign, refine, should_escalate
from .store import MIN_SURVIVORS, DesignRecord, DesignStore
