"""Error metrics and the Monte Carlo sweep driver."""
from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .acquisition import add_noise, assemble_noiseless, generate_context
from .als import AlsConfig, als_estimate
from .channel import PathSet, SystemConfig, channel_set, sample_paths
from .crb import fim
from .esprit import DEFAULT_GRID, estimate

FAMILIES = ("theta", "phi", "tau", "alpha", "fd")
AXES = ("snr_db", "k_pilot", "m_slots", "l_paths")
ESTIMATORS = ("esprit", "als")


def match_paths(truth: PathSet, est: PathSet) -> np.ndarray:
    """perm with est[perm[i]] matched to truth[i], minimising the summed
    squared (theta, phi) differences normalised by pi."""
    if len(truth) != len(est):
        raise ValueError(f"path counts differ: {len(truth)} vs {len(est)}")
    cost = ((truth.aoa_rad[:, None] - est.aoa_rad[None, :]) / np.pi) ** 2
    cost += ((truth.aod_rad[:, None] - est.aod_rad[None, :]) / np.pi) ** 2
    rows, cols = linear_sum_assignment(cost)
    perm = np.empty(len(truth), int)
    perm[rows] = cols
    return perm


def parameter_mse(truth: PathSet, est: PathSet, perm=None) -> dict[str, float]:
    """Squared 2-norm error per parameter family (summed over paths)."""
    e = est if perm is None else est.permuted(perm)
    pairs = {
        "theta": (truth.aoa_rad, e.aoa_rad),
        "phi": (truth.aod_rad, e.aod_rad),
        "tau": (truth.delay_s, e.delay_s),
        "alpha": (truth.gain, e.gain),
        "fd": (truth.doppler_hz, e.doppler_hz),
    }
    return {k: float(np.sum(np.abs(a - b) ** 2)) for k, (a, b) in pairs.items()}


def channel_nmse(h_true: np.ndarray, h_est: np.ndarray) -> float:
    """Mean over (m, k) slices of ||H_hat - H||_F^2 / ||H||_F^2.

    Inputs are (M, K, rows, cols) stacks.
    """
    if h_true.shape != h_est.shape:
        raise ValueError(f"channel stacks differ in shape: {h_true.shape} vs {h_est.shape}")
    den = np.sum(np.abs(h_true) ** 2, axis=(-2, -1))
    if np.any(den == 0):
        raise ValueError("zero-norm true channel slice")
    num = np.sum(np.abs(h_est - h_true) ** 2, axis=(-2, -1))
    return float(np.mean(num / den))


@dataclass
class TrialResult:
    estimator: str
    point: int
    value: float
    trial: int
    seed: str
    success: bool
    errors: dict[str, float] = field(default_factory=dict)
    nmse: float = float("nan")
    wall_time: float = float("nan")
    l_paths: int = 0
    message: str = ""


@dataclass(frozen=True)
class SweepSpec:
    axis: str = "snr_db"
    values: tuple = (10.0,)
    trials: int = 10
    base: SystemConfig = SystemConfig()
    estimators: tuple = ("esprit",)
    l_paths: int = 3
    speed_mps: float = 30.0
    grid_size: int = DEFAULT_GRID
    refine: bool = False
    als: AlsConfig = AlsConfig()
    with_crb: bool = False
    crb_mode: str = "split"
    seed: int = 0

    def __post_init__(self):
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if len(self.values) == 0:
            raise ValueError("sweep values must be non-empty")
        bad = [e for e in self.estimators if e not in ESTIMATORS]
        if bad:
            raise ValueError(f"unknown estimators {bad}")

    def point_config(self, value) -> tuple[SystemConfig, int]:
        cfg, l_paths = self.base, self.l_paths
        if self.axis == "snr_db":
            cfg = cfg.with_(snr_db=float(value))
        elif self.axis == "k_pilot":
            cfg = cfg.with_(k_pilot=int(value))
        elif self.axis == "m_slots":
            cfg = cfg.with_(m_slots=int(value))
        else:
            l_paths = int(value)
        return cfg, l_paths


@dataclass
class SweepResult:
    spec: SweepSpec
    trials: list[TrialResult]
    crb: dict[int, list[dict]]  # point -> per-trial CRB family sums

    def table(self) -> list[dict]:
        return aggregate(self.spec, self.trials, self.crb)

    def timing(self) -> list[dict]:
        rows = []
        for p, value in enumerate(self.spec.values):
            for est in self.spec.estimators:
                ts = [t.wall_time for t in self.trials if t.point == p and t.estimator == est]
                rows.append({"axis": self.spec.axis, "value": float(value), "estimator": est,
                             "wall_time_mean": float(np.mean(ts)), "wall_time_median": float(np.median(ts))})
        return rows


def run_estimator(name: str, tensor, l_paths: int, spec: SweepSpec, als_seed: int):
    if name == "esprit":
        return estimate(tensor, l_paths, grid_size=spec.grid_size, refine=spec.refine)
    cfg = AlsConfig(spec.als.max_iters, spec.als.tol, spec.als.init, als_seed)
    return als_estimate(tensor, l_paths, cfg, grid_size=spec.grid_size, refine=spec.refine)


def run_trial(spec: SweepSpec, point: int, trial: int):
    """One Monte Carlo draw, every estimator on the same received tensor."""
    value = spec.values[point]
    cfg, l_paths = spec.point_config(value)
    rng = np.random.default_rng([spec.seed, point, trial])
    seed_tag = f"{spec.seed}-{point}-{trial}"
    paths = sample_paths(cfg, l_paths, spec.speed_mps, rng)
    ctx = generate_context(cfg, rng)
    tensor = add_noise(assemble_noiseless(cfg, paths, ctx), cfg.snr_db, rng)
    als_seed = int(rng.integers(2**31))
    h_true = channel_set(cfg, paths)
    out = []
    for name in spec.estimators:
        t0 = time.perf_counter()
        try:
            res = run_estimator(name, tensor, l_paths, spec, als_seed)
            elapsed = time.perf_counter() - t0
            perm = match_paths(paths, res.paths)
            errs = parameter_mse(paths, res.paths, perm)
            nmse = channel_nmse(h_true, res.channels)
            ok = all(np.isfinite(v) for v in errs.values()) and np.isfinite(nmse)
            out.append(TrialResult(name, point, float(value), trial, seed_tag, ok, errs, nmse, elapsed, l_paths,
                                   "" if ok else "non-finite result"))
        except (ArithmeticError, RuntimeError, ValueError, np.linalg.LinAlgError) as exc:
            elapsed = time.perf_counter() - t0
            out.append(TrialResult(name, point, float(value), trial, seed_tag, False, {}, float("nan"),
                                   elapsed, l_paths, f"{type(exc).__name__}: {exc}"))
    crb_row = None
    if spec.with_crb and tensor.ctx.noise_var > 0:
        try:
            res = fim(cfg, tensor.ctx, paths, spec.crb_mode)
            crb_row = {f: float(np.sum(res.crb(f))) for f in FAMILIES}
        except (np.linalg.LinAlgError, ValueError) as exc:
            crb_row = {"error": str(exc)}
    return out, crb_row


def _run_trial_star(args):
    return run_trial(*args)


def run_sweep(spec: SweepSpec, workers: int = 1) -> SweepResult:
    jobs = [(spec, p, t) for p in range(len(spec.values)) for t in range(spec.trials)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_trial_star, jobs))
    else:
        results = [run_trial(*j) for j in jobs]
    trials, crb = [], {}
    for (_, p, _), (rows, crb_row) in zip(jobs, results):
        trials.extend(rows)
        if crb_row is not None:
            crb.setdefault(p, []).append(crb_row)
    return SweepResult(spec, trials, crb)


def aggregate(spec: SweepSpec, trials: list[TrialResult], crb: dict | None = None) -> list[dict]:
    """Per (axis value, estimator) statistics over successful trials.

    ``mse_<f>`` is the trial mean of the summed squared error, ``mse_<f>_median``
    its median and ``mse_<f>_perpath`` the trial mean of the sum divided by L.
    """
    rows = []
    for p, value in enumerate(spec.values):
        for est in spec.estimators:
            sel = [t for t in trials if t.point == p and t.estimator == est]
            good = [t for t in sel if t.success]
            row = {"axis": spec.axis, "value": float(value), "estimator": est,
                   "trials": len(sel), "failures": len(sel) - len(good)}
            for f in FAMILIES:
                v = np.array([t.errors[f] for t in good])
                per = np.array([t.errors[f] / t.l_paths for t in good])
                row[f"mse_{f}"] = float(np.mean(v)) if v.size else float("nan")
                row[f"mse_{f}_median"] = float(np.median(v)) if v.size else float("nan")
                row[f"mse_{f}_perpath"] = float(np.mean(per)) if per.size else float("nan")
            nm = np.array([t.nmse for t in good])
            row["nmse"] = float(np.mean(nm)) if nm.size else float("nan")
            row["nmse_median"] = float(np.median(nm)) if nm.size else float("nan")
            if spec.with_crb:
                crows = [c for c in (crb or {}).get(p, []) if "error" not in c]
                for f in FAMILIES:
                    v = np.array([c[f] for c in crows])
                    row[f"crb_{f}"] = float(np.mean(v)) if v.size else float("nan")
                    row[f"crb_{f}_median"] = float(np.median(v)) if v.size else float("nan")
            rows.append(row)
    return rows
