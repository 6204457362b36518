import numpy as np
import pytest
from PIL import Image


def write_gray(path, gray, fmt=None):
    """Save a [0, 1] luminance array as an 8-bit grayscale file."""
    data = np.floor(np.clip(gray, 0, 1) * 255 + 0.5).astype(np.uint8)
    Image.fromarray(data).save(path, format=fmt)
    return path


def smooth_image(rng, size=32, low=0.0, high=1.0):
    """Random low-frequency image in [low, high]; structured, unlike white noise."""
    coarse = rng.random((5, 5))
    img = Image.fromarray(coarse.astype(np.float32)).resize((size, size), Image.BILINEAR)
    arr = np.clip(np.asarray(img, dtype=np.float64), 0, 1)
    return low + (high - low) * arr


def feasible_pair(rng, shape=(32, 32), scale=0.5):
    """Unscaled background and a target that is reachable everywhere (T >= scale * B)."""
    background = rng.random(shape)
    bg_scaled = scale * background
    target = bg_scaled + (1 - bg_scaled) * rng.random(shape)
    return target, background


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
