import numpy as np
import pytest

from platoonguard import dataset
from platoonguard.dataset import (
    FeatureStats,
    WindowConfig,
    compute_pos_weight,
    compute_stats,
    make_windows,
    normalize,
    split_runs,
    summarize,
    window_starts,
)
from platoonguard.sim import N_FEATURES, PlatoonRun, SimConfig


def synthetic_run(features, mask=None, labels=None, run_id="r"):
    features = np.asarray(features, dtype=np.float64)
    V, T, _ = features.shape
    if mask is None:
        mask = np.ones((V, T), dtype=np.uint8)
    if labels is None:
        labels = np.zeros((V, T), dtype=np.uint8)
    dur = T * 0.1
    cfg = SimConfig(duration_s=dur, maneuver_time_s=min(30.0, dur / 2))
    return PlatoonRun(features=features, mask=np.asarray(mask, dtype=np.uint8),
                      labels=np.asarray(labels, dtype=np.uint8),
                      config=cfg, run_id=run_id)


def stream_run(values, mask=None):
    """One vehicle whose every feature carries the same stream."""
    arr = np.repeat(np.asarray(values, dtype=np.float64)[None, :, None],
                    N_FEATURES, axis=2)
    return synthetic_run(arr, mask=mask)


class TestComputeStats:
    def test_hand_arithmetic(self):
        stats = compute_stats([stream_run([1.0, 2.0, 3.0])])
        assert stats.mean == pytest.approx([2.0] * N_FEATURES)
        assert stats.variance == pytest.approx([2.0 / 3.0] * N_FEATURES)
        assert stats.count == 3

    def test_constant_feature(self):
        stats = compute_stats([stream_run([4.0, 4.0, 4.0, 4.0])])
        assert stats.mean == pytest.approx([4.0] * N_FEATURES)
        assert stats.variance == pytest.approx([0.0] * N_FEATURES)

    def test_masked_steps_excluded(self):
        run = stream_run([1.0, 100.0, 3.0], mask=[[1, 0, 1]])
        stats = compute_stats([run])
        assert stats.mean == pytest.approx([2.0] * N_FEATURES)
        assert stats.count == 2

    def test_no_valid_steps_rejected(self):
        run = stream_run([1.0, 2.0], mask=[[0, 0]])
        with pytest.raises(ValueError):
            compute_stats([run])


class TestNormalize:
    def test_mean_maps_to_zero(self):
        run = stream_run([1.0, 2.0, 3.0])
        stats = compute_stats([run])
        out = normalize(run, stats)
        assert out.features[0, 1] == pytest.approx([0.0] * N_FEATURES)

    def test_hand_value(self):
        run = stream_run([1.0, 2.0, 3.0])
        stats = compute_stats([run])
        out = normalize(run, stats)
        expected = (3.0 - 2.0) / (np.sqrt(2.0 / 3.0) + 1e-8)
        assert out.features[0, 2, 0] == pytest.approx(expected)
        assert expected == pytest.approx(1.224744, abs=1e-5)

    def test_zero_variance_feature(self):
        run = stream_run([5.0, 5.0])
        stats = compute_stats([run])
        out = normalize(run, stats)
        assert np.all(out.features == 0.0)

    def test_train_steps_standardized(self):
        rng = np.random.default_rng(0)
        runs = [synthetic_run(rng.normal(size=(3, 50, N_FEATURES)) * 5 + 2)
                for _ in range(4)]
        stats = compute_stats(runs)
        normed = [normalize(r, stats) for r in runs]
        flat = np.concatenate([n.features.reshape(-1, N_FEATURES) for n in normed])
        assert np.abs(flat.mean(axis=0)).max() < 1e-6
        assert np.abs(flat.std(axis=0) - 1.0).max() < 1e-4


class TestMakeWindows:
    def test_default_series_stride_5(self):
        assert len(window_starts(1189, WindowConfig(10, 5))) == 237

    def test_exact_fit(self):
        run = stream_run(np.arange(10.0))
        samples = make_windows(run, WindowConfig(10, 10))
        assert len(samples) == 1
        assert samples[0].m.all()

    def test_padded_tail(self):
        run = stream_run(np.arange(12.0))
        samples = make_windows(run, WindowConfig(10, 10))
        assert len(samples) == 2
        tail = samples[1]
        assert tail.start_index == 10
        assert tail.m.sum() == 2
        assert np.all(tail.x[2:] == 0.0)

    def test_stride_enumeration_matches_brute_force(self):
        for T in (9, 10, 11, 23, 40, 1189):
            for s in (1, 5, 10):
                starts = window_starts(T, WindowConfig(10, s))
                # brute force: multiples of s until every step is covered
                brute = []
                start = 0
                while True:
                    brute.append(start)
                    if start + 10 >= T:
                        break
                    start += s
                assert starts == brute, (T, s)

    def test_reconstruction_at_full_stride(self):
        rng = np.random.default_rng(1)
        run = synthetic_run(rng.normal(size=(2, 37, N_FEATURES)))
        samples = make_windows(run, WindowConfig(10, 10))
        for v in range(2):
            rows = [s for s in samples if s.vehicle_id == v]
            rebuilt = np.concatenate([s.x[s.m == 1] for s in rows])
            assert np.array_equal(rebuilt, run.features[v])

    def test_label_conservation_at_full_stride(self):
        rng = np.random.default_rng(2)
        labels = (rng.random((2, 37)) < 0.3).astype(np.uint8)
        run = synthetic_run(rng.normal(size=(2, 37, N_FEATURES)), labels=labels)
        samples = make_windows(run, WindowConfig(10, 10))
        got = np.concatenate([s.y[s.m == 1] for s in samples])
        want = np.concatenate([run.labels[v] for v in range(2)])
        assert sorted(got.tolist()) == sorted(want.tolist())
        assert got.sum() == want.sum()


class TestPosWeight:
    def test_reference_ratio_imbalanced(self):
        labels = np.zeros((1, 10000), dtype=np.uint8)
        labels[0, :2111] = 1
        run = synthetic_run(np.zeros((1, 10000, N_FEATURES)), labels=labels)
        samples = make_windows(run, WindowConfig(10, 10))
        assert compute_pos_weight(samples) == pytest.approx(3.7369, abs=5e-4)

    def test_reference_ratio_moderate(self):
        labels = np.zeros((1, 10000), dtype=np.uint8)
        labels[0, :2863] = 1
        run = synthetic_run(np.zeros((1, 10000, N_FEATURES)), labels=labels)
        samples = make_windows(run, WindowConfig(10, 10))
        assert compute_pos_weight(samples) == pytest.approx(2.4926, abs=5e-4)

    def test_balanced(self):
        labels = np.array([[0, 1, 0, 1]], dtype=np.uint8)
        run = synthetic_run(np.zeros((1, 4, N_FEATURES)), labels=labels)
        samples = make_windows(run, WindowConfig(4, 4))
        assert compute_pos_weight(samples) == 1.0

    def test_single_class_rejected(self):
        run = synthetic_run(np.zeros((1, 4, N_FEATURES)))
        samples = make_windows(run, WindowConfig(4, 4))
        with pytest.raises(ValueError, match="pos=0"):
            compute_pos_weight(samples)


class TestSplitRuns:
    def _runs(self, n):
        return [synthetic_run(np.zeros((1, 4, N_FEATURES)), run_id=f"run{i}")
                for i in range(n)]

    def test_counts(self):
        train, test = split_runs(self._runs(10), 0.8, 0)
        assert len(train) == 8
        assert len(test) == 2

    def test_deterministic(self):
        runs = self._runs(10)
        a = split_runs(runs, 0.8, 3)
        b = split_runs(runs, 0.8, 3)
        assert [r.run_id for r in a[0]] == [r.run_id for r in b[0]]
        assert [r.run_id for r in a[1]] == [r.run_id for r in b[1]]

    def test_disjoint_and_complete(self):
        runs = self._runs(13)
        train, test = split_runs(runs, 0.8, 5)
        tr = {r.run_id for r in train}
        te = {r.run_id for r in test}
        assert tr & te == set()
        assert tr | te == {r.run_id for r in runs}

    def test_too_few_runs(self):
        with pytest.raises(ValueError):
            split_runs(self._runs(1))


class TestSummarize:
    def test_hand_built(self):
        labels = np.array([[1, 0, 0, 0]], dtype=np.uint8)
        run = synthetic_run(np.zeros((1, 4, N_FEATURES)), labels=labels)
        summary = summarize([run])
        assert summary.ratio_1 == 0.25
        assert summary.ratio_0_over_1 == pytest.approx(3.0)
        assert summary.ratio_1 + summary.ratio_0 == pytest.approx(1.0, abs=1e-9)

    def test_all_benign(self):
        run = synthetic_run(np.zeros((1, 4, N_FEATURES)))
        assert summarize([run]).ratio_1 == 0.0


class TestSerialization:
    def test_stats_json_roundtrip(self, tmp_path):
        stats = compute_stats([stream_run([1.0, 2.0, 3.0])])
        path = tmp_path / "stats.json"
        dataset.save_stats(stats, str(path))
        back = dataset.load_stats(str(path))
        assert np.array_equal(back.mean, stats.mean)
        assert np.array_equal(back.variance, stats.variance)
        assert back.count == stats.count
        assert back.epsilon == stats.epsilon

    def test_window_cache_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        run = synthetic_run(rng.normal(size=(2, 25, N_FEATURES)),
                            labels=(rng.random((2, 25)) < 0.2).astype(np.uint8))
        samples = make_windows(run, WindowConfig(10, 5))
        path = tmp_path / "win.bin"
        dataset.save_window_cache(samples, str(path))
        back = dataset.load_window_cache(str(path))
        assert len(back) == len(samples)
        for a, b in zip(samples, back):
            assert np.allclose(a.x, b.x, atol=1e-6)
            assert np.array_equal(a.y, b.y)
            assert np.array_equal(a.m, b.m)
            assert (a.run_id, a.vehicle_id, a.start_index) == (
                b.run_id, b.vehicle_id, b.start_index)

    def test_window_cache_rejects_unknown_version(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"PGWC" + (99).to_bytes(4, "little") * 3)
        with pytest.raises(ValueError, match="version"):
            dataset.load_window_cache(str(path))
