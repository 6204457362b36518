"""Flag images whose alpha channel hides a different picture from the RGB samples."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .compositor import file_views
from .imgio import PathLike
from .metrics import MACHINE_THRESHOLD, mse

ALPHA_VARIANCE_THRESHOLD = 1e-3
DIVERGENCE_THRESHOLD = MACHINE_THRESHOLD


class Verdict(enum.IntEnum):
    # values double as CLI exit statuses
    CLEAN = 0
    SUSPICIOUS = 1
    ATTACK_LIKELY = 2


@dataclass(frozen=True)
class ScanResult:
    has_alpha: bool
    alpha_variance: float
    view_divergence_mse: float
    verdict: Verdict

    def to_text(self) -> str:
        return "\n".join(
            [
                f"has_alpha={'true' if self.has_alpha else 'false'}",
                f"alpha_variance={self.alpha_variance!r}",
                f"view_divergence_mse={self.view_divergence_mse!r}",
                f"verdict={self.verdict.name}",
            ]
        )


def classify(alpha_variance: float, divergence: float, v_alpha: float, v_div: float) -> Verdict:
    exceeded = int(alpha_variance > v_alpha) + int(divergence > v_div)
    return Verdict(exceeded)


def scan(
    path: PathLike, v_alpha: float = ALPHA_VARIANCE_THRESHOLD, v_div: float = DIVERGENCE_THRESHOLD
) -> ScanResult:
    """Score one file. A score counts only when it strictly exceeds its threshold."""
    human, machine, alpha = file_views(path)
    if alpha is None:
        return ScanResult(False, 0.0, 0.0, Verdict.CLEAN)
    variance = float(np.var(alpha))
    divergence = mse(human, machine)
    return ScanResult(True, variance, divergence, classify(variance, divergence, v_alpha, v_div))
