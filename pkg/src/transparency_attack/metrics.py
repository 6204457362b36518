"""Attack quality scores."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Dict

import numpy as np

from . import blend as blend_core
from .compositor import DARK, AttackImage, ViewerModel, human_view, machine_view, render
from .imgio import check_grid, same_shape

HUMAN_THRESHOLD = 1e-3
MACHINE_THRESHOLD = 1e-2


def mse(a: np.ndarray, b: np.ndarray) -> float:
    return blend_core.mse_loss(a, b)


def psnr(mse_value: float) -> float:
    """Peak signal-to-noise ratio in dB for unit dynamic range; ``inf`` at zero error."""
    if mse_value < 0 or math.isnan(mse_value):
        raise ValueError(f"mse must be non-negative, got {mse_value}")
    if mse_value == 0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse_value)


@dataclass(frozen=True)
class AttackReport:
    human_fidelity_mse: float
    human_fidelity_psnr: float
    machine_divergence_mse: float
    hidden_integrity_mse: float
    dark_exposure_mse: float
    feasibility_fraction: float
    success: bool

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)

    def to_text(self) -> str:
        """One ``key=value`` line per field."""
        return "\n".join(f"{k}={_fmt(v)}" for k, v in self.as_dict().items())

    @classmethod
    def from_dict(cls, values: Dict[str, str]) -> "AttackReport":
        kwargs = {}
        for f in fields(cls):
            raw = values[f.name]
            kwargs[f.name] = raw == "true" if f.type in (bool, "bool") else float(raw)
        return cls(**kwargs)


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return repr(float(value))


def evaluate(
    img: AttackImage,
    target: np.ndarray,
    background: np.ndarray,
    cfg: blend_core.BlendConfig = blend_core.BlendConfig(),
    human_threshold: float = HUMAN_THRESHOLD,
    machine_threshold: float = MACHINE_THRESHOLD,
) -> AttackReport:
    """Score a packaged attack against the target and unscaled background it was built from."""
    target = check_grid(target, "target")
    background = check_grid(background, "background")
    same_shape(img.alpha, target, background)
    bg_scaled = background * cfg.background_scale

    human = human_view(img)
    machine = machine_view(img)
    human_mse = mse(human, target)
    machine_mse = mse(machine, target)
    fraction, _ = blend_core.feasibility_report(target, bg_scaled)
    return AttackReport(
        human_fidelity_mse=human_mse,
        human_fidelity_psnr=psnr(human_mse),
        machine_divergence_mse=machine_mse,
        hidden_integrity_mse=mse(machine, bg_scaled),
        dark_exposure_mse=mse(render(img, ViewerModel.flatten(DARK)), target),
        feasibility_fraction=fraction,
        success=bool(human_mse <= human_threshold and machine_mse >= machine_threshold),
    )
