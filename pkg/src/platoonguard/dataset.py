"""Preprocessing: global z-score normalization, sliding windows, splits.

Statistics are computed over mask-valid steps only, with population
variance (divisor N).  Runs are windowed per vehicle into fixed-size
slices of W steps; a trailing window that overruns the series is
zero-padded with mask 0 so every valid step receives a prediction.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass

import numpy as np

from .sim import N_FEATURES, PlatoonRun

EPSILON = 1e-8


@dataclass(frozen=True)
class FeatureStats:
    mean: np.ndarray
    variance: np.ndarray
    count: int
    epsilon: float = EPSILON

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


@dataclass(frozen=True)
class WindowConfig:
    window: int = 10
    step: int = 5

    def __post_init__(self):
        if not (1 <= self.step <= self.window):
            raise ValueError("window step must satisfy 1 <= step <= window")


@dataclass
class Sample:
    """One sliding window: normalized features, labels and validity mask."""

    x: np.ndarray  # [W, 7]
    y: np.ndarray  # [W]
    m: np.ndarray  # [W]
    run_id: str
    vehicle_id: int
    start_index: int


@dataclass(frozen=True)
class DatasetSummary:
    total_traces: int
    valid_labels: int
    ratio_1: float
    ratio_0: float
    ratio_0_over_1: float


def compute_stats(runs: list[PlatoonRun]) -> FeatureStats:
    """Per-feature mean and population variance over all valid steps."""
    total = np.zeros(N_FEATURES)
    count = 0
    for run in runs:
        valid = run.mask == 1
        total += run.features[valid].sum(axis=0)
        count += int(valid.sum())
    if count == 0:
        raise ValueError("no mask-valid steps in the given runs")
    mean = total / count
    sq = np.zeros(N_FEATURES)
    for run in runs:
        valid = run.mask == 1
        sq += ((run.features[valid] - mean) ** 2).sum(axis=0)
    variance = sq / count
    return FeatureStats(mean=mean, variance=variance, count=count)


def normalize(run: PlatoonRun, stats: FeatureStats) -> PlatoonRun:
    """z-score each feature; masks and labels are untouched.

    Steps with mask 0 keep zero features so padding stays neutral.
    """
    feats = (run.features - stats.mean) / (stats.std + stats.epsilon)
    feats[run.mask == 0] = 0.0
    return PlatoonRun(
        features=feats,
        mask=run.mask,
        labels=run.labels,
        config=run.config,
        attack=run.attack,
        run_id=run.run_id,
        collision=run.collision,
    )


def window_starts(T: int, wc: WindowConfig) -> list[int]:
    """Start indices: full windows at stride step, plus one padded tail."""
    W, s = wc.window, wc.step
    if T >= W:
        n_full = (T - W) // s + 1
        starts = [i * s for i in range(n_full)]
        if (T - W) % s != 0:
            starts.append(n_full * s)
    else:
        starts = [0]
    return starts


def make_windows(run: PlatoonRun, wc: WindowConfig) -> list[Sample]:
    W = wc.window
    T = run.features.shape[1]
    samples = []
    starts = window_starts(T, wc)
    for v in range(run.features.shape[0]):
        for start in starts:
            end = min(start + W, T)
            x = np.zeros((W, N_FEATURES))
            y = np.zeros(W, dtype=np.uint8)
            m = np.zeros(W, dtype=np.uint8)
            x[: end - start] = run.features[v, start:end]
            y[: end - start] = run.labels[v, start:end]
            m[: end - start] = run.mask[v, start:end]
            x[m == 0] = 0.0
            y[m == 0] = 0
            samples.append(Sample(x=x, y=y, m=m, run_id=run.run_id,
                                  vehicle_id=v, start_index=start))
    return samples


def compute_pos_weight(samples: list[Sample]) -> float:
    """Class-imbalance weight: valid benign steps over valid attack steps."""
    pos = sum(int(((s.y == 1) & (s.m == 1)).sum()) for s in samples)
    neg = sum(int(((s.y == 0) & (s.m == 1)).sum()) for s in samples)
    if pos == 0 or neg == 0:
        raise ValueError(f"cannot weight a single-class set (pos={pos}, neg={neg})")
    return neg / pos


def split_runs(
    runs: list[PlatoonRun], ratio: float = 0.8, seed: int = 0
) -> tuple[list[PlatoonRun], list[PlatoonRun]]:
    """Deterministic split at run granularity; both sides non-empty."""
    if len(runs) < 2:
        raise ValueError("need at least 2 runs to split")
    order = np.random.default_rng(seed).permutation(len(runs))
    n_train = int(round(len(runs) * ratio))
    n_train = min(max(n_train, 1), len(runs) - 1)
    train = [runs[i] for i in sorted(order[:n_train])]
    test = [runs[i] for i in sorted(order[n_train:])]
    return train, test


def summarize(runs: list[PlatoonRun]) -> DatasetSummary:
    valid = 0
    ones = 0
    for run in runs:
        valid += int((run.mask == 1).sum())
        ones += int(((run.labels == 1) & (run.mask == 1)).sum())
    ratio_1 = ones / valid if valid else 0.0
    ratio_0 = 1.0 - ratio_1
    ratio = ratio_0 / ratio_1 if ones else float("inf")
    return DatasetSummary(
        total_traces=len(runs),
        valid_labels=valid,
        ratio_1=ratio_1,
        ratio_0=ratio_0,
        ratio_0_over_1=ratio,
    )


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def save_stats(stats: FeatureStats, path: str) -> None:
    doc = {
        "mean": list(stats.mean),
        "variance": list(stats.variance),
        "count": stats.count,
        "epsilon": stats.epsilon,
    }
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    os.replace(tmp, path)


def load_stats(path: str) -> FeatureStats:
    with open(path) as fh:
        doc = json.load(fh)
    return FeatureStats(
        mean=np.asarray(doc["mean"], dtype=np.float64),
        variance=np.asarray(doc["variance"], dtype=np.float64),
        count=int(doc["count"]),
        epsilon=float(doc["epsilon"]),
    )


_CACHE_MAGIC = b"PGWC"
_CACHE_VERSION = 1


def save_window_cache(samples: list[Sample], path: str) -> None:
    """Binary window cache: versioned header, little-endian float32."""
    if not samples:
        raise ValueError("refusing to cache an empty sample list")
    W = samples[0].x.shape[0]
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(_CACHE_MAGIC)
        fh.write(struct.pack("<III", _CACHE_VERSION, len(samples), W))
        for s in samples:
            origin = f"{s.run_id}\x00{s.vehicle_id}\x00{s.start_index}".encode()
            fh.write(struct.pack("<I", len(origin)))
            fh.write(origin)
            fh.write(s.x.astype("<f4").tobytes())
            fh.write(s.y.astype("<u1").tobytes())
            fh.write(s.m.astype("<u1").tobytes())
    os.replace(tmp, path)


def load_window_cache(path: str) -> list[Sample]:
    with open(path, "rb") as fh:
        if fh.read(4) != _CACHE_MAGIC:
            raise ValueError(f"{path} is not a window cache")
        version, count, W = struct.unpack("<III", fh.read(12))
        if version != _CACHE_VERSION:
            raise ValueError(f"unsupported window cache version {version}")
        samples = []
        for _ in range(count):
            (olen,) = struct.unpack("<I", fh.read(4))
            run_id, vid, start = fh.read(olen).decode().split("\x00")
            x = np.frombuffer(fh.read(4 * W * N_FEATURES), dtype="<f4")
            x = x.reshape(W, N_FEATURES).astype(np.float64)
            y = np.frombuffer(fh.read(W), dtype="<u1").copy()
            m = np.frombuffer(fh.read(W), dtype="<u1").copy()
            samples.append(Sample(x=x, y=y, m=m, run_id=run_id,
                                  vehicle_id=int(vid), start_index=int(start)))
    return samples
