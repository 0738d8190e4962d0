"""ESPRIT-type Vandermonde-constrained CP decomposition and parameter extraction.

The received tensor is reshaped to [[B ⊙ A, C, D]], spatially smoothed along
the mini-slot mode, and the Doppler generators of D are read off the
shift-invariance of the dominant left subspace. C, then B ⊙ A, follow by least
squares against the recovered Vandermonde columns, and A, B come from a
rank-one split of each column of B ⊙ A.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .acquisition import AcquisitionContext, ReceivedTensor
from .channel import PathSet, SystemConfig, channel_set, delay_template, doppler_template, steering_vector
from .tensor import mode_n_unfold

DEFAULT_GRID = 5000
PINV_RCOND = 1e-12
MAX_EIGVEC_COND = 1e8
RANK_TOL = 1e-12
WRAP_SLACK = 1e-9
MIN_EIGVAL_GAP = 1e-9


class EstimationError(RuntimeError):
    """Raised when a stage of the decomposition cannot proceed."""


class RankDeficiencyError(EstimationError):
    pass


class DegenerateDecompositionError(EstimationError):
    pass


@dataclass(frozen=True)
class SmoothingPlan:
    k4: int
    l4: int

    def __post_init__(self):
        if self.k4 < 2 or self.l4 < 1:
            raise ValueError(f"invalid smoothing plan (K4={self.k4}, L4={self.l4}); need K4 >= 2, L4 >= 1")

    @property
    def m_slots(self) -> int:
        return self.k4 + self.l4 - 1

    @classmethod
    def balanced(cls, m_slots: int) -> "SmoothingPlan":
        k4 = math.ceil((m_slots + 1) / 2)
        return cls(k4, m_slots + 1 - k4)

    @classmethod
    def with_window(cls, m_slots: int, k4: int) -> "SmoothingPlan":
        return cls(k4, m_slots + 1 - k4)


@dataclass(frozen=True)
class UniquenessReport:
    satisfied: bool
    conditions: list[dict]

    def failing(self) -> list[str]:
        return [c["name"] for c in self.conditions if not c["ok"]]

    def summary(self) -> str:
        lines = [f"uniqueness: {'satisfied' if self.satisfied else 'violated'}"]
        for c in self.conditions:
            tag = "ok" if c["ok"] else "FAILS"
            lines.append(f"  {c['name']}: {c['lhs']} >= {c['rhs']} (margin {c['margin']}) {tag}")
        return "\n".join(lines)


def check_uniqueness(cfg: SystemConfig, plan: SmoothingPlan, l_paths: int) -> UniquenessReport:
    """Sufficient conditions for a unique Vandermonde-constrained CPD.

    k-ranks of A = W^T A_BS and B = S^T A_MS are taken at their generic values
    min(Q_BS, L) and min(N_s, L); genericity itself is not certified.
    """
    if plan.m_slots != cfg.m_slots:
        raise ValueError(f"plan covers {plan.m_slots} slots, config has {cfg.m_slots}")
    k_a = min(cfg.q_bs, l_paths)
    k_b = min(cfg.n_sym, l_paths)
    conds = []
    lhs1, rhs1 = (plan.k4 - 1) * cfg.k_pilot, l_paths
    conds.append(dict(name="(K4-1)*K >= L", lhs=lhs1, rhs=rhs1, margin=lhs1 - rhs1, ok=lhs1 >= rhs1))
    lhs2, rhs2 = k_a + k_b, math.ceil(l_paths / plan.l4) + 1
    conds.append(dict(name="k(A)+k(B) >= ceil(L/L4)+1", lhs=lhs2, rhs=rhs2, margin=lhs2 - rhs2, ok=lhs2 >= rhs2))
    return UniquenessReport(all(c["ok"] for c in conds), conds)


def spatial_smooth(x1: np.ndarray, plan: SmoothingPlan, k: int, m: int) -> np.ndarray:
    """[(J_1 ⊗ I_K) X_1, ..., (J_L4 ⊗ I_K) X_1] for an MK-row unfolding."""
    if x1.shape[0] != m * k or plan.m_slots != m:
        raise ValueError(f"unfolding has {x1.shape[0]} rows; expected M*K = {m * k} with a plan for M={m}")
    blocks = [x1[l * k:(l + plan.k4) * k] for l in range(plan.l4)]
    return np.hstack(blocks)


@dataclass
class GeneratorRecovery:
    eigvals: np.ndarray  # unit-modulus generators
    raw_eigvals: np.ndarray
    p: np.ndarray
    u: np.ndarray  # leading L left singular vectors
    sigma: np.ndarray  # leading L singular values
    v: np.ndarray  # leading L right singular vectors
    singular_values: np.ndarray
    cond_p: float


def recover_generators(xs: np.ndarray, l_paths: int, k: int) -> GeneratorRecovery:
    u_full, s, vh = np.linalg.svd(xs, full_matrices=False)
    if s.size < l_paths or s[0] == 0 or s[l_paths - 1] <= RANK_TOL * s[0]:
        raise RankDeficiencyError(f"smoothed matrix has fewer than L={l_paths} significant singular values")
    u = u_full[:, :l_paths]
    if u.shape[0] - k < l_paths:
        raise RankDeficiencyError(f"shifted subspace has {u.shape[0] - k} rows < L={l_paths}")
    u1, u2 = u[:-k], u[k:]
    lam, p = np.linalg.eig(np.linalg.pinv(u1, rcond=PINV_RCOND) @ u2)
    cond_p = float(np.linalg.cond(p))
    if not np.isfinite(cond_p) or cond_p > MAX_EIGVEC_COND:
        raise DegenerateDecompositionError(f"eigenvector matrix condition number {cond_p:.3g} exceeds {MAX_EIGVEC_COND:g}")
    if l_paths > 1:
        gap = np.abs(lam[:, None] - lam[None, :])[np.triu_indices(l_paths, 1)].min()
        if gap <= MIN_EIGVAL_GAP:
            # repeated generator: any basis of its eigenspace is an eigenvector matrix,
            # so a well-conditioned P says nothing about identifiability
            raise DegenerateDecompositionError(f"repeated generators (gap {gap:.3g}); Dopplers not distinct")
    mod = np.abs(lam)
    if np.any(mod == 0):
        raise DegenerateDecompositionError("zero eigenvalue in shift-invariance equation")
    return GeneratorRecovery(lam / mod, lam, p, u, s[:l_paths], vh[:l_paths].conj().T, s, cond_p)


def vandermonde(gens: np.ndarray, rows: int) -> np.ndarray:
    """Columns [1, z, ..., z^(rows-1)] for each generator z."""
    return np.power.outer(np.asarray(gens), np.arange(rows)).T


def _kron_collapse(stacked: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Least-squares x from stacked ≈ d ⊗ x."""
    nrm = np.vdot(d, d).real
    if nrm == 0:
        raise EstimationError("zero-norm Vandermonde column")
    blocks = stacked.reshape(d.size, -1)
    return (d.conj() @ blocks) / nrm


def recover_c(u: np.ndarray, p: np.ndarray, d_hat_k4: np.ndarray) -> np.ndarray:
    """Column l: LS collapse of U p_l = d_l^{K4} ⊗ c_l over the K4 blocks."""
    up = u @ p
    return np.stack([_kron_collapse(up[:, l], d_hat_k4[:, l]) for l in range(p.shape[1])], axis=1)


def recover_e_and_split(v: np.ndarray, sigma: np.ndarray, p: np.ndarray, d_hat_l4: np.ndarray,
                        q_bs: int, n_sym: int):
    """Recover E = B ⊙ A from V* Σ P^-T, then split each column into a_l b_l^T.

    Returns (a_hat, b_hat, e_hat, rank1_ratio) where rank1_ratio[l] = s2/s1 of
    unvec(e_l).
    """
    cond = np.linalg.cond(p)
    if not np.isfinite(cond) or cond > MAX_EIGVEC_COND:
        raise DegenerateDecompositionError(f"eigenvector matrix condition number {cond:.3g} too large")
    g = (v.conj() * sigma) @ np.linalg.inv(p).T
    l_paths = p.shape[1]
    a_hat = np.empty((q_bs, l_paths), complex)
    b_hat = np.empty((n_sym, l_paths), complex)
    e_hat = np.empty((q_bs * n_sym, l_paths), complex)
    ratio = np.empty(l_paths)
    for l in range(l_paths):
        e = _kron_collapse(g[:, l], d_hat_l4[:, l])
        e_hat[:, l] = e
        uu, ss, vvh = np.linalg.svd(e.reshape(q_bs, n_sym, order="F"))
        a_hat[:, l] = ss[0] * uu[:, 0]
        b_hat[:, l] = vvh[0]
        ratio[l] = ss[1] / ss[0] if ss.size > 1 and ss[0] > 0 else 0.0
    return a_hat, b_hat, e_hat, ratio


def estimate_doppler(eigvals: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    return np.angle(eigvals) / (2 * np.pi * cfg.slot_duration_s)


class AngleGrid:
    """Correlation search of a column against map @ a(angle) on (0, pi).

    The grid holds the G cell centres (g + 1/2) pi / G.
    """

    def __init__(self, steering_map: np.ndarray, n_ant: int, grid_size: int = DEFAULT_GRID,
                 spacing_ratio: float = 0.5):
        if grid_size < 2:
            raise ValueError("grid size must be >= 2")
        self.map = np.asarray(steering_map)
        self.n_ant = n_ant
        self.spacing = spacing_ratio
        self.angles = (np.arange(grid_size) + 0.5) * np.pi / grid_size
        self.step = np.pi / grid_size
        self.resp = self.map @ steering_vector(n_ant, self.angles, spacing_ratio)
        self.resp_norm2 = np.sum(np.abs(self.resp) ** 2, axis=0)

    def correlation(self, col: np.ndarray, angle: float) -> float:
        r = self.map @ steering_vector(self.n_ant, angle, self.spacing)
        return float(np.abs(np.vdot(col, r)) ** 2 / (np.vdot(col, col).real * np.vdot(r, r).real))

    def search(self, col: np.ndarray, refine: bool = False) -> float:
        col = np.asarray(col)
        nrm = np.vdot(col, col).real
        if nrm == 0:
            raise EstimationError("zero-norm factor column in angle search")
        corr = np.abs(col.conj() @ self.resp) ** 2 / (nrm * self.resp_norm2)
        g = int(np.argmax(corr))
        best = float(self.angles[g])
        if not refine:
            return best
        lo = max(best - self.step, 1e-12)
        hi = min(best + self.step, np.pi - 1e-12)
        res = minimize_scalar(lambda x: -self.correlation(col, x), bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12, "maxiter": 200})
        return float(res.x) if -res.fun >= corr[g] else best


def estimate_angles(col: np.ndarray, steering_map: np.ndarray, n_ant: int, grid_size: int = DEFAULT_GRID,
                    refine: bool = False, spacing_ratio: float = 0.5) -> float:
    return AngleGrid(steering_map, n_ant, grid_size, spacing_ratio).search(col, refine)


def estimate_delays(c_hat: np.ndarray, cfg: SystemConfig) -> np.ndarray:
    """Delay from the phase of the LS adjacent-shift ratio of each column.

    The phase is unwrapped onto [0, N / f_s), the range the delay sampler uses.
    """
    c_hat = np.atleast_2d(c_hat.T).T
    if c_hat.shape[0] < 2:
        raise EstimationError("delay estimation needs K >= 2")
    lo, hi = c_hat[:-1], c_hat[1:]
    num = np.sum(lo.conj() * hi, axis=0)
    # a slack of WRAP_SLACK rad keeps round-off around tau = 0 from wrapping to the far end
    phase = np.mod(-np.angle(num) + WRAP_SLACK, 2 * np.pi) - WRAP_SLACK
    return cfg.n_subcarriers_total / (2 * np.pi * cfg.f_s_hz) * phase


@dataclass
class FactorMatrices:
    a_hat: np.ndarray
    b_hat: np.ndarray
    c_hat: np.ndarray
    d_hat: np.ndarray
    eigvals: np.ndarray
    e_hat: np.ndarray | None = None


def _lstsq_scale(template: np.ndarray, col: np.ndarray) -> complex:
    nrm = np.vdot(template, template).real
    if nrm == 0:
        raise EstimationError("zero-norm template")
    return complex(np.vdot(template, col) / nrm)


def resolve_ambiguity_and_gains(factors: FactorMatrices, est: PathSet, ctx: AcquisitionContext,
                                cfg: SystemConfig) -> tuple[PathSet, dict]:
    """Scaling ambiguities Δ1, Δ2, Δ4 by projection, Δ3 from their product, then α."""
    l_paths = len(est)
    gains = np.empty(l_paths, complex)
    deltas = np.empty((4, l_paths), complex)
    for l in range(l_paths):
        t_a = ctx.w.T @ steering_vector(cfg.n_bs, est.aoa_rad[l], cfg.antenna_spacing_ratio)
        t_b = ctx.s.T @ steering_vector(cfg.n_ms, est.aod_rad[l], cfg.antenna_spacing_ratio)
        d1 = _lstsq_scale(t_a, factors.a_hat[:, l])
        d2 = _lstsq_scale(t_b, factors.b_hat[:, l])
        d4 = _lstsq_scale(doppler_template(cfg, est.doppler_hz[l]), factors.d_hat[:, l])
        d3 = 1.0 / (d1 * d2 * d4)
        cbar = delay_template(cfg, est.delay_s[l])[1:]
        proj = _lstsq_scale(cbar, factors.c_hat[1:, l])
        gains[l] = proj / d3 * np.exp(-1j * 2 * np.pi * est.doppler_hz[l] * est.delay_s[l])
        deltas[:, l] = (d1, d2, d3, d4)
    return est.with_(gain=gains), {"deltas": deltas}


def extract_parameters(factors: FactorMatrices, ctx: AcquisitionContext, cfg: SystemConfig,
                       grid_size: int = DEFAULT_GRID, refine: bool = False) -> tuple[PathSet, dict]:
    """Doppler, angles, delays, then gains from (possibly ambiguous) factors."""
    doppler = estimate_doppler(factors.eigvals, cfg)
    bs_grid = AngleGrid(ctx.w.T, cfg.n_bs, grid_size, cfg.antenna_spacing_ratio)
    ms_grid = AngleGrid(ctx.s.T, cfg.n_ms, grid_size, cfg.antenna_spacing_ratio)
    l_paths = factors.a_hat.shape[1]
    aoa = np.array([bs_grid.search(factors.a_hat[:, l], refine) for l in range(l_paths)])
    aod = np.array([ms_grid.search(factors.b_hat[:, l], refine) for l in range(l_paths)])
    delay = estimate_delays(factors.c_hat, cfg)
    partial = PathSet(aoa, aod, delay, doppler, np.zeros(l_paths, complex))
    return resolve_ambiguity_and_gains(factors, partial, ctx, cfg)


@dataclass
class EspritResult:
    paths: PathSet
    factors: FactorMatrices
    channels: np.ndarray  # (M, K, N_BS, N_MS)
    diagnostics: dict = field(default_factory=dict)


def decompose(t: ReceivedTensor, l_paths: int, plan: SmoothingPlan | None = None):
    """Factor recovery only; returns (FactorMatrices, diagnostics)."""
    cfg = t.cfg
    if l_paths < 1:
        raise ValueError("need at least one path")
    plan = plan or SmoothingPlan.balanced(cfg.m_slots)
    report = check_uniqueness(cfg, plan, l_paths)
    if not report.satisfied:
        warnings.warn(f"uniqueness conditions not met: {report.failing()}", RuntimeWarning, stacklevel=2)
    k, m = cfg.k_pilot, cfg.m_slots
    x1 = mode_n_unfold(t.reshaped(), 0)
    xs = spatial_smooth(x1, plan, k, m)
    gen = recover_generators(xs, l_paths, k)
    d_hat = vandermonde(gen.eigvals, m)
    c_hat = recover_c(gen.u, gen.p, d_hat[:plan.k4])
    a_hat, b_hat, e_hat, ratio = recover_e_and_split(gen.v, gen.sigma, gen.p, d_hat[:plan.l4], cfg.q_bs, cfg.n_sym)
    s = gen.singular_values
    diag = {
        "plan": (plan.k4, plan.l4),
        "uniqueness": report,
        "sv_ratio": float(s[l_paths] / s[l_paths - 1]) if s.size > l_paths else 0.0,
        "cond_p": gen.cond_p,
        "eigval_moduli": np.abs(gen.raw_eigvals),
        "rank1_ratio": ratio,
    }
    return FactorMatrices(a_hat, b_hat, c_hat, d_hat, gen.eigvals, e_hat), diag


def estimate(t: ReceivedTensor, l_paths: int, plan: SmoothingPlan | None = None,
             grid_size: int = DEFAULT_GRID, refine: bool = False) -> EspritResult:
    """Full pipeline: factors, parameters, and the rebuilt channel set."""
    factors, diag = decompose(t, l_paths, plan)
    paths, extra = extract_parameters(factors, t.ctx, t.cfg, grid_size, refine)
    diag.update(extra)
    return EspritResult(paths, factors, channel_set(t.cfg, paths), diag)
