"""How different consumers see an RGBA attack image.

People look at the image flattened over their viewer's backdrop; many vision
pipelines simply discard the alpha channel and read the RGB samples.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import imgio
from .imgio import PathLike

LIGHT = 1.0
DARK = 0.0


@dataclass(frozen=True)
class Provenance:
    target: Optional[str] = None
    background: Optional[str] = None
    config_digest: Optional[str] = None


@dataclass(frozen=True)
class AttackImage:
    """Hidden background in ``rgb`` (H, W, 3) plus the optimized ``alpha`` (H, W)."""

    rgb: np.ndarray
    alpha: np.ndarray
    provenance: Optional[Provenance] = None

    def __post_init__(self):
        rgb = np.asarray(self.rgb, dtype=np.float64)
        alpha = imgio.check_grid(self.alpha, "alpha")
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise ValueError(f"rgb must have shape (H, W, 3), got {rgb.shape}")
        imgio.same_shape(rgb, alpha)
        if not (np.array_equal(rgb[..., 0], rgb[..., 1]) and np.array_equal(rgb[..., 1], rgb[..., 2])):
            raise ValueError("attack rgb channels must be equal (grayscale)")
        object.__setattr__(self, "rgb", rgb)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def from_gray(cls, hidden: np.ndarray, alpha: np.ndarray, provenance: Optional[Provenance] = None):
        return cls(imgio.gray_to_rgb(hidden), alpha, provenance)

    @classmethod
    def load(cls, path: PathLike) -> "AttackImage":
        rgb, alpha = imgio.decode_attack_png(path)
        return cls(rgb, alpha)

    def save(self, path: PathLike) -> None:
        imgio.encode_attack_png(self.rgb, self.alpha, path)

    @property
    def hidden(self) -> np.ndarray:
        return self.rgb[..., 0]

    @property
    def shape(self):
        return self.alpha.shape


@dataclass(frozen=True)
class ViewerModel:
    """``backdrop=None`` drops alpha; otherwise flatten over that luminance."""

    backdrop: Optional[float] = None

    def __post_init__(self):
        if self.backdrop is not None and not 0.0 <= self.backdrop <= 1.0:
            raise ValueError(f"backdrop must lie in [0, 1], got {self.backdrop}")

    @classmethod
    def flatten(cls, backdrop: float) -> "ViewerModel":
        return cls(float(backdrop))

    @classmethod
    def drop_alpha(cls) -> "ViewerModel":
        return cls(None)

    @classmethod
    def parse(cls, text: str) -> "ViewerModel":
        """Accepts ``light``, ``dark``, ``drop`` or ``b=<luminance>``."""
        presets = {"light": LIGHT, "dark": DARK}
        if text in presets:
            return cls.flatten(presets[text])
        if text == "drop":
            return cls.drop_alpha()
        if text.startswith("b="):
            try:
                value = float(text[2:])
            except ValueError:
                raise ValueError(f"bad backdrop luminance in {text!r}") from None
            return cls.flatten(value)
        raise ValueError(f"unknown viewer {text!r}; use light, dark, drop or b=<lum>")

    @property
    def drops_alpha(self) -> bool:
        return self.backdrop is None


def render(img: AttackImage, viewer: ViewerModel) -> np.ndarray:
    hidden = img.hidden
    if viewer.drops_alpha:
        return hidden.copy()
    return img.alpha * hidden + (1.0 - img.alpha) * viewer.backdrop


def human_view(img: AttackImage) -> np.ndarray:
    return render(img, ViewerModel.flatten(LIGHT))


def machine_view(img: AttackImage) -> np.ndarray:
    return render(img, ViewerModel.drop_alpha())


def file_views(path: PathLike):
    """Return ``(human, machine, alpha)`` luminance grids for any image file.

    Files without an alpha channel look the same to both consumers and get
    ``alpha=None``. Color RGB samples are collapsed to luminance first.
    """
    if not imgio.has_alpha(path):
        gray = imgio.load_grayscale(path, size=None)
        return gray, gray, None
    rgb, alpha = imgio.decode_attack_png(path)
    machine = imgio.rgb_luminance(rgb)
    human = alpha * machine + (1.0 - alpha) * LIGHT
    return human, machine, alpha
