"""Exit criteria for the toolkit, one test per criterion.

Each test prints a PASS/FAIL line; the lines are repeated in the pytest
terminal summary. Run alone with ``pytest tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest
from PIL import Image

from transparency_attack import blend as bc
from transparency_attack.cli import main
from transparency_attack.compositor import AttackImage, ViewerModel, human_view, machine_view, render
from transparency_attack.detector import Verdict, scan
from transparency_attack.imgio import decode_attack_png, encode_attack_png, gray_to_rgb, load_grayscale, quantize
from transparency_attack.poison import Mode, PoisonJob, craft_attack, run_job, separability_check

from conftest import ACCEPTANCE_LINES, feasible_pair, smooth_image, write_gray

pytestmark = pytest.mark.acceptance


def verdict(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d}: {title} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def central_difference(alpha, bg_scaled, target, h=1e-5):
    grad = np.zeros_like(alpha)
    for idx in np.ndindex(alpha.shape):
        up, down = alpha.copy(), alpha.copy()
        up[idx] += h
        down[idx] -= h
        lp = np.mean((up * bg_scaled + (1 - up) - target) ** 2)
        lm = np.mean((down * bg_scaled + (1 - down) - target) ** 2)
        grad[idx] = (lp - lm) / (2 * h)
    return grad


def stored(attack, path):
    attack.save(path)
    return AttackImage.load(path)


def test_01_oracle_equivalence():
    rng = np.random.default_rng(101)
    cfg = bc.BlendConfig(size=(32, 32), steps=1000, learning_rate=0.01)
    worst_alpha = worst_loss = 0.0
    start = time.perf_counter()
    for _ in range(50):
        target, background = feasible_pair(rng, (32, 32))
        bg_scaled = 0.5 * background
        alpha, trace = bc.optimize(target, background, cfg)
        oracle = bc.closed_form_alpha(target, bg_scaled)
        _, residual = bc.feasibility_report(target, bg_scaled)
        assert residual == 0.0
        worst_alpha = max(worst_alpha, float(np.max(np.abs(alpha - oracle))))
        worst_loss = max(worst_loss, trace.final_loss - residual)
    elapsed = time.perf_counter() - start
    ok = worst_loss <= 1e-4 and worst_alpha <= 0.01 and elapsed < 10
    verdict(1, "optimizer reaches closed-form oracle", ok,
            f"max loss gap {worst_loss:.2e} <= 1e-4, max |alpha diff| {worst_alpha:.2e} <= 0.01, {elapsed:.2f}s < 10s")


def test_02_gradient_correctness():
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        alpha = rng.random((8, 8))
        bg_scaled = 0.5 * rng.random((8, 8))
        target = rng.random((8, 8))
        analytic = bc.grad_alpha(alpha, bg_scaled, target)
        numeric = central_difference(alpha, bg_scaled, target)
        worst = max(worst, np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric))
    verdict(2, "analytic gradient vs central differences", worst <= 1e-5, f"max rel err {worst:.2e} <= 1e-5")


def test_03_blend_loop_anchors():
    rng = np.random.default_rng(303)
    background = rng.random((150, 150))
    cfg = bc.BlendConfig()
    a_white, t_white = bc.optimize(np.ones_like(background), background, cfg)
    a_bg, t_bg = bc.optimize(0.5 * background, background, cfg)
    ok = (
        t_white.final_loss <= 1e-6
        and np.max(a_white) <= 0.01
        and t_bg.final_loss <= 1e-6
        and np.min(a_bg) >= 0.99
    )
    verdict(3, "white target -> alpha 0, scaled background -> alpha 1", ok,
            f"losses {t_white.final_loss:.1e}, {t_bg.final_loss:.1e} <= 1e-6; "
            f"max alpha {np.max(a_white):.1e}, min alpha {np.min(a_bg):.3f}")


def test_04_dual_view_contract(tmp_path):
    rng = np.random.default_rng(404)
    worst_human = 0.0
    exact = True
    cases = [feasible_pair(rng, (32, 32)) for _ in range(10)]
    cases += [(smooth_image(rng, 150, 0.5, 1.0), smooth_image(rng, 150)) for _ in range(3)]
    for i, (target, background) in enumerate(cases):
        attack, _ = craft_attack(target, background)
        img = stored(attack, tmp_path / f"a{i}.png")
        worst_human = max(worst_human, bc.mse_loss(human_view(img), target))
        exact &= np.array_equal(machine_view(img), quantize(0.5 * background))
    ok = worst_human <= 1e-4 and exact
    verdict(4, "human view matches target, machine view is the scaled background", ok,
            f"max human mse {worst_human:.2e} <= 1e-4, machine view bit-exact: {exact}")


def test_05_theme_exposure(tmp_path):
    rng = np.random.default_rng(505)
    worst = 0.0
    for i in range(20):
        target = rng.random((24, 24))
        background = rng.random((24, 24))
        attack, _ = craft_attack(target, background, bc.BlendConfig(steps=300))
        img = stored(attack, tmp_path / f"a{i}.png")
        dark = render(img, ViewerModel.flatten(0.0))
        light = render(img, ViewerModel.flatten(1.0))
        expected = np.mean((1 - img.alpha) ** 2)
        worst = max(worst, abs(bc.mse_loss(dark, light) - expected))
    verdict(5, "dark-theme divergence equals mean (1 - alpha)^2", worst <= 1e-12, f"max abs err {worst:.1e} <= 1e-12")


def test_06_poisoned_class_is_separable(tmp_path):
    rng = np.random.default_rng(606)
    clean = tmp_path / "clean"
    clean.mkdir()
    source = smooth_image(rng, 150, 0.55, 1.0)
    for i in range(20):
        write_gray(clean / f"plane{i:02d}.png", source)
    background = write_gray(tmp_path / "hidden.png", smooth_image(rng, 150))
    start = time.perf_counter()
    run_job(PoisonJob(clean, [background], Mode.SINGLE, tmp_path / "poisoned", bc.BlendConfig(), workers=4))
    accuracy, gap = separability_check(tmp_path / "poisoned", clean)
    elapsed = time.perf_counter() - start
    ok = accuracy == 1.0 and gap <= 1e-4 and elapsed < 5
    verdict(6, "machine view separates poisoned copies, human view does not", ok,
            f"LOO accuracy {accuracy:.3f} == 1, human gap {gap:.2e} <= 1e-4, {elapsed:.2f}s < 5s")


def test_07_pipeline_determinism(tmp_path):
    rng = np.random.default_rng(707)
    targets = tmp_path / "targets"
    targets.mkdir()
    for i in range(6):
        write_gray(targets / f"t{i}.jpg", smooth_image(rng, 48, 0.5, 1.0), fmt="JPEG")
    bgs = [str(write_gray(tmp_path / f"bg{i}.png", smooth_image(rng, 48))) for i in range(3)]
    cfg = bc.BlendConfig(size=(48, 48), rng_seed=99)
    run_job(PoisonJob(targets, bgs, Mode.RANDOM_CLASS, tmp_path / "run1", cfg))
    run_job(PoisonJob(targets, bgs, Mode.RANDOM_CLASS, tmp_path / "run2", cfg))
    names = sorted(p.name for p in (tmp_path / "run1").iterdir())
    same = names == sorted(p.name for p in (tmp_path / "run2").iterdir()) and all(
        (tmp_path / "run1" / n).read_bytes() == (tmp_path / "run2" / n).read_bytes() for n in names
    )
    verdict(7, "same job and seed give byte-identical outputs", same, f"{len(names)} files compared")


def test_08_png_round_trip(tmp_path):
    rng = np.random.default_rng(808)
    path = tmp_path / "rt.png"
    failures = 0
    for i in range(1000):
        h, w = rng.integers(1, 12, size=2)
        hidden = rng.random((h, w))
        alpha = rng.random((h, w))
        # half the grids sit exactly on rounding midpoints
        if i % 2:
            hidden = (rng.integers(0, 255, (h, w)) + 0.5) / 255
            alpha = (rng.integers(0, 255, (h, w)) + 0.5) / 255
        rgb = gray_to_rgb(hidden)
        encode_attack_png(rgb, alpha, path)
        rgb2, alpha2 = decode_attack_png(path)
        expected_rgb = np.floor(rgb * 255 + 0.5) / 255
        expected_alpha = np.floor(alpha * 255 + 0.5) / 255
        failures += not (np.array_equal(rgb2, expected_rgb) and np.array_equal(alpha2, expected_alpha))
    verdict(8, "encode/decode is the exact 8-bit quantization", failures == 0, f"{failures}/1000 mismatches")


def test_09_detector_self_consistency(tmp_path):
    rng = np.random.default_rng(909)
    flagged = attacks = 0
    for i in range(12):
        target = smooth_image(rng, 64, 0.45, 1.0)
        background = smooth_image(rng, 64)
        if np.mean((target - 0.5 * background) ** 2) <= 1e-2:
            continue
        attacks += 1
        attack, _ = craft_attack(target, background)
        path = tmp_path / f"a{i}.png"
        attack.save(path)
        flagged += scan(path).verdict is Verdict.ATTACK_LIKELY
    opaque_clean = 0
    for i in range(12):
        path = tmp_path / f"o{i}.png"
        encode_attack_png(gray_to_rgb(rng.random((16, 16))), np.ones((16, 16)), path)
        opaque_clean += scan(path).verdict is Verdict.CLEAN
    ok = attacks > 0 and flagged == attacks and opaque_clean == 12
    verdict(9, "crafted attacks flagged, opaque PNGs clean", ok,
            f"{flagged}/{attacks} attacks ATTACK_LIKELY, {opaque_clean}/12 opaque CLEAN")


def test_10_end_to_end_cli(tmp_path, capsys):
    rng = np.random.default_rng(1010)
    target = write_gray(tmp_path / "plane.png", smooth_image(rng, 150, 0.5, 1.0))
    background = write_gray(tmp_path / "cloud.jpg", smooth_image(rng, 150), fmt="JPEG")
    attack = tmp_path / "plane_blended.png"
    craft_code = main(["craft", "--target", str(target), "--background", str(background), "--out", str(attack)])

    drop, light = tmp_path / "drop.png", tmp_path / "light.png"
    main(["flatten", "--in", str(attack), "--viewer", "drop", "--out", str(drop)])
    main(["flatten", "--in", str(attack), "--viewer", "light", "--out", str(light)])
    bg = load_grayscale(background)
    tgt = load_grayscale(target)
    drop_exact = np.array_equal(np.asarray(Image.open(drop), dtype=float) / 255, quantize(0.5 * bg))
    light_mse = float(np.mean((load_grayscale(light, None) - tgt) ** 2))
    inspect_code = main(["inspect", "--in", str(attack)])
    report_code = main(["report", "--attack", str(attack), "--target", str(target), "--background", str(background)])
    capsys.readouterr()
    ok = craft_code == 0 and drop_exact and light_mse <= 1e-4 and inspect_code == 2 and report_code == 0
    verdict(10, "craft -> flatten/inspect/report", ok,
            f"craft exit {craft_code}, drop exact {drop_exact}, light mse {light_mse:.2e} <= 1e-4, "
            f"inspect exit {inspect_code} == 2, report exit {report_code} == 0")
