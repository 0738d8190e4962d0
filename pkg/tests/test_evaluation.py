import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fixed_paths
from tvchan.channel import PathSet, channel_set, desk_config
from tvchan.evaluation import (FAMILIES, SweepSpec, TrialResult, aggregate, channel_nmse, match_paths,
                               parameter_mse, run_sweep)


def brute_force_match(truth, est):
    best, best_perm = np.inf, None
    for perm in itertools.permutations(range(len(truth))):
        p = np.array(perm)
        cost = np.sum(((truth.aoa_rad - est.aoa_rad[p]) / np.pi) ** 2 + ((truth.aod_rad - est.aod_rad[p]) / np.pi) ** 2)
        if cost < best:
            best, best_perm = cost, p
    return best_perm, best


def random_paths(rng, n):
    return PathSet(rng.uniform(0.3, 2.8, n), rng.uniform(0.3, 2.8, n), rng.uniform(0, 1e-6, n),
                   rng.uniform(-3e3, 3e3, n), rng.standard_normal(n) + 1j * rng.standard_normal(n))


class TestMatching:
    def test_identity(self, desk):
        p = fixed_paths(desk)
        np.testing.assert_array_equal(match_paths(p, p), [0, 1, 2])

    def test_swap(self, desk):
        p = fixed_paths(desk)
        np.testing.assert_array_equal(match_paths(p, p.permuted([1, 0, 2])), [1, 0, 2])

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4))
    @settings(max_examples=1000)
    def test_agrees_with_exhaustive_search(self, seed, n):
        rng = np.random.default_rng(seed)
        truth, est = random_paths(rng, n), random_paths(rng, n)
        perm = match_paths(truth, est)
        _, best = brute_force_match(truth, est)
        cost = np.sum(((truth.aoa_rad - est.aoa_rad[perm]) / np.pi) ** 2
                      + ((truth.aod_rad - est.aod_rad[perm]) / np.pi) ** 2)
        assert cost <= best + 1e-12

    @given(st.integers(0, 2**32 - 1), st.integers(1, 4))
    def test_recovers_shuffle(self, seed, n):
        rng = np.random.default_rng(seed)
        truth = PathSet(np.linspace(0.4, 2.6, n), np.linspace(2.6, 0.4, n), np.zeros(n), np.zeros(n), np.ones(n))
        shuffle = rng.permutation(n)
        noisy = truth.permuted(shuffle).with_(aoa_rad=truth.aoa_rad[shuffle] + 1e-6 * rng.standard_normal(n))
        perm = match_paths(truth, noisy)
        np.testing.assert_array_equal(shuffle[perm], np.arange(n))

    def test_length_mismatch(self, desk):
        p = fixed_paths(desk)
        with pytest.raises(ValueError):
            match_paths(p, p.permuted([0, 1]))


class TestMetrics:
    def test_zero_error(self, desk):
        p = fixed_paths(desk)
        assert all(v == 0 for v in parameter_mse(p, p).values())

    def test_single_angle_offset(self):
        p = PathSet([1.0], [1.0], [0.0], [0.0], [1.0])
        assert parameter_mse(p, p.with_(aoa_rad=[1.01]))["theta"] == pytest.approx(1e-4, rel=1e-10)

    def test_loop_oracle(self, rng):
        t, e = random_paths(rng, 4), random_paths(rng, 4)
        out = parameter_mse(t, e)
        ref = sum(abs(complex(a) - complex(b)) ** 2 for a, b in zip(t.gain, e.gain))
        assert out["alpha"] == pytest.approx(ref, rel=1e-14)
        ref = sum((a - b) ** 2 for a, b in zip(t.delay_s, e.delay_s))
        assert out["tau"] == pytest.approx(ref, rel=1e-14)

    def test_nmse_cases(self, desk):
        h = channel_set(desk, fixed_paths(desk))
        assert channel_nmse(h, h) == 0
        assert channel_nmse(h, np.zeros_like(h)) == pytest.approx(1.0, rel=1e-14)
        assert channel_nmse(h, h * 1.01) == pytest.approx(1e-4, rel=1e-8)

    def test_nmse_unitary_invariance(self, desk, rng):
        h = channel_set(desk, fixed_paths(desk))
        g = h + 0.01 * (rng.standard_normal(h.shape) + 1j * rng.standard_normal(h.shape))
        q, _ = np.linalg.qr(rng.standard_normal((desk.n_bs, desk.n_bs)) + 1j * rng.standard_normal((desk.n_bs, desk.n_bs)))
        assert channel_nmse(q @ h, q @ g) == pytest.approx(channel_nmse(h, g), rel=1e-10)

    def test_nmse_zero_slice(self, desk):
        h = channel_set(desk, fixed_paths(desk))
        with pytest.raises(ValueError):
            channel_nmse(np.zeros_like(h), h)


class TestSweep:
    def test_noiseless_row(self):
        spec = SweepSpec(values=(np.inf,), trials=1, refine=True)
        row = run_sweep(spec).table()[0]
        assert row["failures"] == 0 and row["nmse"] <= 1e-8

    def test_deterministic_tables(self):
        spec = SweepSpec(values=(10.0,), trials=2, estimators=("esprit", "als"))
        assert run_sweep(spec).table() == run_sweep(spec).table()

    def test_parallel_matches_serial(self):
        spec = SweepSpec(values=(5.0, 15.0), trials=2)
        assert run_sweep(spec, workers=2).table() == run_sweep(spec).table()

    def test_failure_injection(self):
        spec = SweepSpec(values=(10.0,), trials=2, base=desk_config(k_pilot=1, m_slots=2))
        with pytest.warns(RuntimeWarning):
            res = run_sweep(spec)
        row = res.table()[0]
        assert row["failures"] == 2 and np.isnan(row["nmse"])
        assert all(t.message for t in res.trials)

    def test_aggregation_matches_log(self):
        spec = SweepSpec(values=(0.0, 20.0), trials=3, with_crb=True)
        res = run_sweep(spec)
        for row, p in zip(res.table(), range(2)):
            log = [t for t in res.trials if t.point == p]
            for f in FAMILIES:
                assert row[f"mse_{f}"] == pytest.approx(np.mean([t.errors[f] for t in log]), rel=1e-12)
                assert row[f"mse_{f}_perpath"] == pytest.approx(row[f"mse_{f}"] / 3, rel=1e-12)
                assert row[f"crb_{f}"] > 0

    def test_axis_values(self):
        spec = SweepSpec(axis="l_paths", values=(1, 2), trials=1)
        assert [t.l_paths for t in run_sweep(spec).trials] == [1, 2]
        spec = SweepSpec(axis="k_pilot", values=(8,), trials=1)
        assert spec.point_config(8)[0].k_pilot == 8

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SweepSpec(axis="speed")
        with pytest.raises(ValueError):
            SweepSpec(estimators=("music",))
        with pytest.raises(ValueError):
            SweepSpec(trials=0)

    def test_failed_trials_excluded(self):
        spec = SweepSpec(values=(10.0,), trials=2)
        ok = TrialResult("esprit", 0, 10.0, 0, "0-0-0", True, {f: 1.0 for f in FAMILIES}, 0.5, 0.1, 2)
        bad = TrialResult("esprit", 0, 10.0, 1, "0-0-1", False, message="boom")
        row = aggregate(spec, [ok, bad])[0]
        assert row["failures"] == 1 and row["mse_tau"] == 1.0 and row["mse_tau_perpath"] == 0.5
