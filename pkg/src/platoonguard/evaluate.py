"""Per-step inference and report assembly.

With stride s < W successive windows overlap; each step's probability is
taken from the most recent window covering it, matching a detector that
re-decides every s * 100 ms over the last second of data.
"""

from __future__ import annotations

import numpy as np

from . import nn
from .dataset import WindowConfig, make_windows
from .metrics import EvalReport, auc, confusion, roc_curve, weighted_metrics
from .model import EncoderModel, batch_logits
from .sim import PlatoonRun


def stepwise_scores(model: EncoderModel, run: PlatoonRun, step: int,
                    threshold: float = 0.5):
    """Per-(vehicle, step) probabilities and decisions for one run.

    Returns (probs, decisions), both [n_vehicles, T]; entries with mask 0
    are zero and carry no decision.
    """
    wc = WindowConfig(window=model.config.window, step=step)
    samples = make_windows(run, wc)
    logits = batch_logits(model, samples)
    probs = nn.sigmoid(logits)
    V, T = run.mask.shape
    out = np.zeros((V, T))
    for s, p in zip(samples, probs):
        end = min(s.start_index + model.config.window, T)
        span = end - s.start_index
        valid = s.m[:span] == 1
        # Windows are enumerated by ascending start, so later (more
        # recent) windows overwrite earlier ones.
        out[s.vehicle_id, s.start_index:end][valid] = p[:span][valid]
    decisions = ((out >= threshold) & (run.mask == 1)).astype(np.uint8)
    return out, decisions


def evaluate_runs(model: EncoderModel, runs: list[PlatoonRun], step: int,
                  scope: str = "platoon", vehicle_id: int | None = None,
                  threshold: float = 0.5) -> EvalReport:
    """Metric report over a set of (already normalized) runs.

    scope 'platoon' pools every vehicle's steps; scope 'vehicle' keeps
    only vehicle_id's rows, mirroring a detector fed local data only.
    """
    if scope not in ("platoon", "vehicle"):
        raise ValueError(f"unknown scope {scope!r}")
    if scope == "vehicle" and vehicle_id is None:
        raise ValueError("vehicle scope needs a vehicle_id")
    all_probs, all_dec, all_y, all_m = [], [], [], []
    for run in runs:
        probs, decisions = stepwise_scores(model, run, step, threshold)
        if scope == "vehicle":
            if vehicle_id >= run.config.n_vehicles:
                raise ValueError(f"vehicle_id {vehicle_id} out of range")
            sel = slice(vehicle_id, vehicle_id + 1)
        else:
            sel = slice(None)
        all_probs.append(probs[sel].ravel())
        all_dec.append(decisions[sel].ravel())
        all_y.append(run.labels[sel].ravel())
        all_m.append(run.mask[sel].ravel())
    probs = np.concatenate(all_probs)
    dec = np.concatenate(all_dec)
    y = np.concatenate(all_y)
    m = np.concatenate(all_m)
    report = weighted_metrics(confusion(dec, y, m))
    if (y[m == 1] == 1).any() and (y[m == 1] == 0).any():
        report.roc = roc_curve(probs, y, m)
        report.auc = auc(report.roc)
    return report
