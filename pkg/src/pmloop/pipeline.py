"""End-to-end helpers: simulate a campaign, reconstruct, summarize over seeds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .detection import expected_campaign, run_campaign
from .tomography import MLEOptions, TomographyResult, default_projector_set, reconstruct_records

__all__ = ["SeedRun", "run_seed", "run_seeds", "analytic_result", "summarize"]


@dataclass
class SeedRun:
    seed: int
    subtracted: TomographyResult
    raw: TomographyResult


def analytic_result(cfg: ExperimentConfig, duration=10.0, repeats=5, errors=None,
                    opts: MLEOptions | None = None, subtract=True) -> TomographyResult:
    """Tomography of noise-free expected counts (no sampling, no plate errors by default)."""
    pset = default_projector_set()
    records = expected_campaign(cfg, pset.setting_ids, duration, repeats, errors)
    return reconstruct_records(records, pset, opts, subtract)


def run_seed(cfg: ExperimentConfig, seed: int, duration=10.0, repeats=5,
             opts: MLEOptions | None = None) -> SeedRun:
    pset = default_projector_set()
    records, _ = run_campaign(cfg, pset.setting_ids, duration, repeats, seed)
    return SeedRun(seed, reconstruct_records(records, pset, opts, True),
                   reconstruct_records(records, pset, opts, False))


def run_seeds(cfg: ExperimentConfig, seeds, **kwargs) -> list[SeedRun]:
    return [run_seed(cfg, s, **kwargs) for s in seeds]


def summarize(runs, attr="subtracted") -> dict:
    """Mean, standard deviation, min and max of each metric across seed runs."""
    out = {}
    for key in ("fidelity_phi_plus", "fidelity_best_phase", "best_phase", "purity"):
        v = np.array([getattr(getattr(r, attr), key) for r in runs])
        out[key] = {"mean": float(v.mean()), "std": float(v.std(ddof=1)) if v.size > 1 else 0.0,
                    "min": float(v.min()), "max": float(v.max())}
    return out
