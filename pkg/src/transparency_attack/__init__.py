"""Craft, score, batch-deploy and detect alpha-layer transparency attacks on images."""

from .blend import BlendConfig, closed_form_alpha, feasibility_report, optimize
from .compositor import AttackImage, ViewerModel, human_view, machine_view, render
from .detector import Verdict, scan
from .metrics import AttackReport, evaluate, psnr
from .poison import Mode, PoisonJob, craft_attack, run_job, separability_check

__version__ = "0.1.0"
