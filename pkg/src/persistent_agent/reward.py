"""Hybrid reward: intrinsic drives, beta-weighted fusion and beta edits."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

logger = logging.getLogger(__name__)


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


@dataclass(frozen=True)
class IntrinsicReward:
    curiosity: float
    mastery: float
    coherence: float
    rationale: str

    def __post_init__(self):
        for name in ("curiosity", "mastery", "coherence"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")
        if not self.rationale.strip():
            raise ValueError("intrinsic rationale must be non-empty")

    @property
    def scalar(self) -> float:
        return (self.curiosity + self.mastery + self.coherence) / 3.0


@dataclass(frozen=True)
class HybridReward:
    extrinsic: float
    intrinsic: float
    beta: float
    fused: float
    text: str


def extrinsic_scalar(success: bool, cost: int, latency: int) -> float:
    """success - 0.1*min(1, cost/20) - 0.1*min(1, latency/600), clamped."""
    value = float(success) - 0.1 * min(1.0, cost / 20.0) - 0.1 * min(1.0, latency / 600.0)
    return _clamp(value)


def evaluate_intrinsic(
    pages: Sequence[str],
    visited_before: Iterable[str],
    proficiency_delta: float,
    node_verdicts: Sequence[Optional[str]],
    rationale: str,
) -> IntrinsicReward:
    """Curiosity, mastery and coherence for one finished episode.

    ``node_verdicts`` holds the guardian verdict kind for each executed plan node
    (``None`` or ``"sound"`` counts as clean).
    """
    seen = set(visited_before)
    distinct = list(dict.fromkeys(pages))
    curiosity = sum(1 for p in distinct if p not in seen) / len(distinct) if distinct else 0.0
    mastery = _clamp(proficiency_delta)
    if node_verdicts:
        clean = sum(1 for v in node_verdicts if v in (None, "sound"))
        coherence = clean / len(node_verdicts)
    else:
        coherence = 1.0
    return IntrinsicReward(curiosity, mastery, coherence, rationale)


def fuse(ext: float, intrinsic: IntrinsicReward, beta: float, verifier_message: str = "") -> HybridReward:
    if not 0.0 <= beta <= 1.0:
        logger.warning("beta %.3f outside [0, 1]; clamping", beta)
        beta = _clamp(beta)
    fused = beta * ext + (1.0 - beta) * intrinsic.scalar
    text = intrinsic.rationale if not verifier_message else f"{intrinsic.rationale} {verifier_message}"
    return HybridReward(ext, intrinsic.scalar, beta, fused, text)


@dataclass(frozen=True)
class BetaDirective:
    target: Optional[float] = None
    delta: Optional[float] = None
    rationale: str = ""

    def __post_init__(self):
        if (self.target is None) == (self.delta is None):
            raise ValueError("directive carries exactly one of target or delta")


_BETA_TARGET = re.compile(r"(?:β|beta)\s+to\s+(\d*\.?\d+)", re.I)
_BETA_DELTA = re.compile(r"(?:β|beta)\s+by\s+([+-]?\d*\.?\d+)", re.I)


def parse_beta_directive(text: str) -> Optional[BetaDirective]:
    """Pull a beta edit out of natural-language reward text.

    "raising β to 0.68" -> target 0.68; "lowered beta by 0.1" -> delta -0.1.
    """
    m = _BETA_TARGET.search(text)
    if m:
        return BetaDirective(target=float(m.group(1)), rationale=text)
    m = _BETA_DELTA.search(text)
    if m:
        delta = float(m.group(1))
        prefix = text[: m.start()].lower()
        if re.search(r"(reduc|lower|decreas)\w*\s*$", prefix):
            delta = -abs(delta)
        return BetaDirective(delta=delta, rationale=text)
    return None


def adjust_beta(current: float, directive: BetaDirective) -> float:
    if directive.target is not None:
        new = directive.target
    else:
        new = current + directive.delta
    return _clamp(new)
