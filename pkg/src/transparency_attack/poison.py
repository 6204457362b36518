"""Batch crafting over a directory of targets, and the manifest it leaves behind."""

from __future__ import annotations

import enum
import hashlib
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import imgio
from .blend import BlendConfig, LossTrace, optimize
from .compositor import AttackImage, Provenance, file_views
from .imgio import PathLike
from .metrics import AttackReport, evaluate, mse

logger = logging.getLogger(__name__)

MANIFEST_NAME = "poison_manifest.txt"
ELIGIBLE_EXTENSIONS = (".jpg", ".jpeg", ".png")


class Mode(str, enum.Enum):
    SINGLE = "single"
    RANDOM_CLASS = "random"


def craft_attack(
    target: np.ndarray, background: np.ndarray, cfg: BlendConfig = BlendConfig(), label: str = ""
) -> Tuple[AttackImage, LossTrace]:
    """Optimize alpha and package it with the scaled background in the RGB channels."""
    alpha, trace = optimize(target, background, cfg, label=label)
    hidden = np.asarray(background, dtype=np.float64) * cfg.background_scale
    return AttackImage.from_gray(hidden, alpha), trace


def craft_files(
    target_path: PathLike, background_path: PathLike, out_path: PathLike, cfg: BlendConfig = BlendConfig()
):
    """Load, craft, write. Returns ``(attack, trace, report)``.

    The report scores the attack as stored, i.e. after 8-bit quantization.
    """
    target = imgio.load_grayscale(target_path, cfg.size)
    background = imgio.load_grayscale(background_path, cfg.size)
    attack, trace = craft_attack(target, background, cfg, label=Path(target_path).name)
    attack.save(out_path)
    stored = AttackImage.load(out_path)
    stored = AttackImage(
        stored.rgb,
        stored.alpha,
        Provenance(str(target_path), str(background_path), cfg.digest()),
    )
    return stored, trace, evaluate(stored, target, background, cfg)


def per_file_seed(rng_seed: int, filename: str) -> int:
    digest = hashlib.sha256(f"{rng_seed}:{filename}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def assign_background(backgrounds: Sequence[str], rng_seed: int, filename: str) -> Tuple[str, int]:
    """Uniform, order-independent choice of a background for one file."""
    seed = per_file_seed(rng_seed, filename)
    index = int(np.random.default_rng(seed).integers(len(backgrounds)))
    return backgrounds[index], seed


@dataclass
class PoisonJob:
    target_dir: Path
    backgrounds: List[str]
    mode: Mode
    out_dir: Path
    cfg: BlendConfig = field(default_factory=BlendConfig)
    extensions: Tuple[str, ...] = ELIGIBLE_EXTENSIONS
    workers: int = 1

    def __post_init__(self):
        self.target_dir = Path(self.target_dir)
        self.out_dir = Path(self.out_dir)
        self.backgrounds = [str(b) for b in self.backgrounds]
        self.mode = Mode(self.mode)
        if not self.backgrounds:
            raise ValueError("at least one background is required")
        if self.mode is Mode.SINGLE and len(self.backgrounds) != 1:
            raise ValueError("single mode takes exactly one background")
        if self.mode is Mode.RANDOM_CLASS and len(self.backgrounds) < 2:
            raise ValueError("random mode needs at least two backgrounds")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        self.extensions = tuple(e.lower() for e in self.extensions)


@dataclass
class ManifestRecord:
    target_file: str
    background_file: str
    output_file: str
    rng_seed_used: int
    final_loss: Optional[float] = None
    report: Optional[AttackReport] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_line(self) -> str:
        items: Dict[str, object] = {
            "target_file": self.target_file,
            "background_file": self.background_file,
            "output_file": self.output_file,
            "rng_seed_used": self.rng_seed_used,
            "status": "ok" if self.ok else "error",
        }
        if self.ok:
            items["final_loss"] = repr(self.final_loss)
            items.update(dict(line.split("=", 1) for line in self.report.to_text().splitlines()))
        else:
            items["error"] = " ".join(str(self.error).split())
        return "\t".join(f"{k}={v}" for k, v in items.items())

    @classmethod
    def from_line(cls, line: str) -> "ManifestRecord":
        items = dict(part.split("=", 1) for part in line.rstrip("\n").split("\t"))
        ok = items["status"] == "ok"
        return cls(
            target_file=items["target_file"],
            background_file=items["background_file"],
            output_file=items["output_file"],
            rng_seed_used=int(items["rng_seed_used"]),
            final_loss=float(items["final_loss"]) if ok else None,
            report=AttackReport.from_dict(items) if ok else None,
            error=None if ok else items.get("error", ""),
        )


@dataclass
class PoisonManifest:
    records: List[ManifestRecord]
    cfg_digest: str
    mode: Mode
    skipped: int = 0
    warnings: List[str] = field(default_factory=list)
    created_at: datetime = field(default_factory=lambda: datetime.now(timezone.utc))

    @property
    def failed(self) -> int:
        return sum(not r.ok for r in self.records)

    @property
    def mean_final_loss(self) -> float:
        losses = [r.final_loss for r in self.records if r.ok]
        return float(np.mean(losses)) if losses else float("nan")

    def to_text(self) -> str:
        # created_at stays out of the file so identical runs give identical bytes
        header = (
            f"# manifest=transparency-poison\tversion=1\tcfg_digest={self.cfg_digest}"
            f"\tmode={self.mode.value}\trecords={len(self.records)}\tskipped={self.skipped}"
        )
        lines = [header]
        lines += [f"warning={w}" for w in self.warnings]
        lines += [r.to_line() for r in self.records]
        return "\n".join(lines) + "\n"

    def write(self, path: PathLike) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def read(cls, path: PathLike) -> "PoisonManifest":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        header = dict(part.split("=", 1) for part in lines[0].lstrip("# ").split("\t"))
        warnings = [ln.split("=", 1)[1] for ln in lines[1:] if ln.startswith("warning=")]
        records = [ManifestRecord.from_line(ln) for ln in lines[1:] if ln.startswith("target_file=")]
        mtime = datetime.fromtimestamp(os.path.getmtime(path), timezone.utc)
        return cls(records, header["cfg_digest"], Mode(header["mode"]), int(header["skipped"]), warnings, mtime)


def eligible_files(job: PoisonJob) -> Tuple[List[Path], int]:
    if not job.target_dir.is_dir():
        raise FileNotFoundError(f"target directory not found: {job.target_dir}")
    files = sorted(p for p in job.target_dir.iterdir() if p.is_file())
    eligible = [p for p in files if p.suffix.lower() in job.extensions]
    return eligible, len(files) - len(eligible)


def output_path(job: PoisonJob, target: Path) -> Path:
    return job.out_dir / f"{target.stem}{job.cfg.filename_tag}.png"


def run_job(job: PoisonJob) -> PoisonManifest:
    """Craft every eligible target in ``job.target_dir`` and write the manifest."""
    for bg in job.backgrounds:
        if not Path(bg).is_file():
            raise FileNotFoundError(f"background not found: {bg}")
    eligible, skipped = eligible_files(job)
    job.out_dir.mkdir(parents=True, exist_ok=True)
    cfg = job.cfg
    # decoded once up front: an undecodable background aborts the job
    backgrounds = {bg: imgio.load_grayscale(bg, cfg.size) for bg in job.backgrounds}
    claimed: Dict[str, str] = {}
    for target in eligible:
        claimed.setdefault(output_path(job, target).name, target.name)

    def process(target: Path) -> ManifestRecord:
        if job.mode is Mode.SINGLE:
            bg_path, seed = job.backgrounds[0], per_file_seed(cfg.rng_seed, target.name)
        else:
            bg_path, seed = assign_background(job.backgrounds, cfg.rng_seed, target.name)
        out = output_path(job, target)
        record = ManifestRecord(target.name, bg_path, out.name, seed)
        try:
            if out.resolve() == target.resolve():
                raise ValueError("output would overwrite its own input")
            if claimed[out.name] != target.name:
                raise ValueError(f"output name {out.name} already taken by {claimed[out.name]}")
            tgt = imgio.load_grayscale(target, cfg.size)
            background = backgrounds[bg_path]
            attack, trace = craft_attack(tgt, background, cfg, label=target.name)
            attack.save(out)
            stored = AttackImage.load(out)
            record.final_loss = trace.final_loss
            record.report = evaluate(stored, tgt, background, cfg)
        except Exception as exc:  # per-file failures are recorded, not fatal
            logger.warning("failed on %s: %s", target.name, exc)
            record.error = f"{type(exc).__name__}: {exc}"
        return record

    if job.workers > 1:
        with ThreadPoolExecutor(max_workers=job.workers) as pool:
            records = list(pool.map(process, eligible))
    else:
        records = [process(t) for t in eligible]

    warnings = []
    if not eligible:
        warnings.append(f"no eligible files in {job.target_dir}")
        logger.warning(warnings[-1])
    manifest = PoisonManifest(records, cfg.digest(), job.mode, skipped, warnings)
    manifest.write(job.out_dir / MANIFEST_NAME)
    return manifest


def _image_files(directory: PathLike) -> List[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"directory not found: {directory}")
    files = sorted(p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in ELIGIBLE_EXTENSIONS)
    if not files:
        raise ValueError(f"no images in {directory}")
    return files


def leave_one_out_accuracy(first: np.ndarray, second: np.ndarray) -> float:
    """Nearest-centroid leave-one-out accuracy for two classes of row vectors.

    Each sample is removed from its own class before centroids are formed.
    Distance ties earn half credit.
    """
    n1, n2 = len(first), len(second)
    if n1 < 2 or n2 < 2:
        raise ValueError("each class needs at least two samples")
    sum1, sum2 = first.sum(axis=0), second.sum(axis=0)
    c1, c2 = sum1 / n1, sum2 / n2

    def score(samples, own_sum, n_own, other_centroid):
        own = (own_sum[None, :] - samples) / (n_own - 1)
        d_own = np.sum((samples - own) ** 2, axis=1)
        d_other = np.sum((samples - other_centroid[None, :]) ** 2, axis=1)
        # centroid arithmetic is inexact, so near-equal distances count as ties
        tie = np.isclose(d_own, d_other, rtol=1e-9, atol=1e-12 * samples.shape[1])
        return np.sum((d_own < d_other) & ~tie) + 0.5 * np.sum(tie)

    correct = score(first, sum1, n1, c2) + score(second, sum2, n2, c1)
    return float(correct / (n1 + n2))


def separability_check(poisoned_dir: PathLike, clean_dir: PathLike) -> Tuple[float, float]:
    """Can the machine view tell the two sets apart while humans cannot?

    Returns ``(machine_accuracy, human_view_mse_gap)``: the nearest-centroid
    leave-one-out accuracy on alpha-dropped pixels, and the mean MSE between
    human views of files paired in sorted-name order.
    """
    views = {}
    for name, directory in (("poisoned", poisoned_dir), ("clean", clean_dir)):
        views[name] = [file_views(p)[:2] for p in _image_files(directory)]
    imgio.same_shape(*(v[0] for vs in views.values() for v in vs))
    if len(views["poisoned"]) != len(views["clean"]):
        raise ValueError("poisoned and clean sets must have the same number of images")

    machine = {k: np.stack([m.ravel() for _, m in vs]) for k, vs in views.items()}
    accuracy = leave_one_out_accuracy(machine["poisoned"], machine["clean"])
    gaps = [mse(hp, hc) for (hp, _), (hc, _) in zip(views["poisoned"], views["clean"])]
    return accuracy, float(np.mean(gaps))
