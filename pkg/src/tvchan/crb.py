"""Fisher information and Cramér-Rao bounds for the path parameters.

The observation is z = vec of the mode-1 unfolding, sum_l a_l ⊗ d_l ⊗ c_l ⊗ b_l,
in colored noise with covariance sigma_n^2 (W^T W*) ⊗ I. Two parameterisations:

* ``split`` (default): [theta, phi, tau, Re alpha, Im alpha, f_d], 6L reals.
* ``paper``: [theta, phi, tau, alpha, f_d], 5L entries; the alpha column is the
  holomorphic derivative dz/dalpha, i.e. a perturbation of Re alpha only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .acquisition import AcquisitionContext, cp_factors, noise_variance
from .channel import (PathSet, SystemConfig, delay_template, doppler_template, factor_c, factor_d,
                      steering_derivative, steering_vector)
from .tensor import vectorize_mode1

MODES = ("split", "paper")
FAMILIES = {
    "split": ("theta", "phi", "tau", "alpha_re", "alpha_im", "fd"),
    "paper": ("theta", "phi", "tau", "alpha", "fd"),
}


def param_names(l_paths: int, mode: str = "split") -> list[str]:
    """Ordered parameter labels, e.g. theta_1..theta_L, phi_1..."""
    return [f"{fam}_{l + 1}" for fam in FAMILIES[_mode(mode)] for l in range(l_paths)]


def _mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"unknown CRB mode {mode!r}; use one of {MODES}")
    return mode


@dataclass(frozen=True)
class ParamVector:
    """Real parameter vector in the fixed family-major order of :func:`param_names`."""

    values: np.ndarray
    l_paths: int
    mode: str = "split"

    @classmethod
    def from_paths(cls, paths: PathSet, mode: str = "split") -> "ParamVector":
        g = paths.gain
        if _mode(mode) == "split":
            parts = [paths.aoa_rad, paths.aod_rad, paths.delay_s, g.real, g.imag, paths.doppler_hz]
        else:
            parts = [paths.aoa_rad, paths.aod_rad, paths.delay_s, g.real, paths.doppler_hz]
        return cls(np.concatenate(parts).astype(float), len(paths), mode)

    def to_paths(self, template: PathSet) -> PathSet:
        """Inverse map; in paper mode the imaginary gain part comes from ``template``."""
        blocks = self.values.reshape(-1, self.l_paths)
        if self.mode == "split":
            th, ph, ta, ar, ai, fd = blocks
        else:
            th, ph, ta, ar, fd = blocks
            ai = template.gain.imag
        return PathSet(th, ph, ta, fd, ar + 1j * ai)


class NoiseCovariance:
    """sigma^2 (W^T W*) ⊗ I_n applied through its Q_BS x Q_BS factor only."""

    def __init__(self, w: np.ndarray, noise_var: float, inner: int):
        self.gram = w.T @ w.conj()
        self.noise_var = float(noise_var)
        self.inner = int(inner)
        if self.noise_var <= 0:
            raise ValueError("noise variance must be positive")
        rank = np.linalg.matrix_rank(self.gram)
        if rank < self.gram.shape[0]:
            raise np.linalg.LinAlgError("W^T W* is singular; combiner lacks full column rank")
        self._gram_inv = np.linalg.inv(self.gram)

    @property
    def dim(self) -> int:
        return self.gram.shape[0] * self.inner

    def _blocks(self, x: np.ndarray) -> np.ndarray:
        return x.reshape(self.gram.shape[0], self.inner, *x.shape[1:])

    def apply(self, x: np.ndarray) -> np.ndarray:
        """C x for a vector or a stack of column vectors."""
        y = np.tensordot(self.gram, self._blocks(x), axes=(1, 0))
        return self.noise_var * y.reshape(x.shape)

    def solve(self, x: np.ndarray) -> np.ndarray:
        """C^{-1} x."""
        y = np.tensordot(self._gram_inv, self._blocks(x), axes=(1, 0))
        return y.reshape(x.shape) / self.noise_var

    def dense(self) -> np.ndarray:
        return self.noise_var * np.kron(self.gram, np.eye(self.inner))


def noise_covariance(cfg: SystemConfig, ctx: AcquisitionContext, noise_var: float | None = None) -> NoiseCovariance:
    var = ctx.noise_var if noise_var is None else noise_var
    return NoiseCovariance(ctx.w, var, cfg.n_sym * cfg.k_pilot * cfg.m_slots)


def observation(cfg: SystemConfig, ctx: AcquisitionContext, paths: PathSet) -> np.ndarray:
    """Noiseless z = vec(Z_(1))."""
    return vectorize_mode1(cp_factors(cfg, paths, ctx))


def dz_dparam(cfg: SystemConfig, ctx: AcquisitionContext, paths: PathSet, family: str, l: int) -> np.ndarray:
    """Analytic dz/dp for one parameter (family name, 0-based path index)."""
    sp = cfg.antenna_spacing_ratio
    th, ph, tau, fd = paths.aoa_rad[l], paths.aod_rad[l], paths.delay_s[l], paths.doppler_hz[l]
    a = ctx.w.T @ steering_vector(cfg.n_bs, th, sp)
    b = ctx.s.T @ steering_vector(cfg.n_ms, ph, sp)
    c = factor_c(cfg, paths)[:, l]
    d = factor_d(cfg, paths)[:, l]

    def chain(a_, d_, c_, b_):
        return np.kron(np.kron(np.kron(a_, d_), c_), b_)

    if family == "theta":
        return chain(ctx.w.T @ steering_derivative(cfg.n_bs, th, sp), d, c, b)
    if family == "phi":
        return chain(a, d, c, ctx.s.T @ steering_derivative(cfg.n_ms, ph, sp))
    if family == "tau":
        k = np.arange(1, cfg.k_pilot + 1)
        n = cfg.n_subcarriers_total
        dc = -1j * 2 * np.pi / n * (k * cfg.f_s_hz - n * fd) * c
        return chain(a, d, dc, b)
    if family in ("alpha", "alpha_re", "alpha_im"):
        unit = delay_template(cfg, tau) * np.exp(1j * 2 * np.pi * fd * tau)
        dz = chain(a, d, unit, b)
        return 1j * dz if family == "alpha_im" else dz
    if family == "fd":
        m = np.arange(cfg.m_slots)
        dd = 1j * 2 * np.pi * m * cfg.slot_duration_s * doppler_template(cfg, fd)
        return chain(a, dd, c, b) + 1j * 2 * np.pi * tau * chain(a, d, c, b)
    raise ValueError(f"unknown parameter family {family!r}")


def derivative_stack(cfg: SystemConfig, ctx: AcquisitionContext, paths: PathSet, mode: str = "split") -> np.ndarray:
    """D_p = dz/dp^T, one column per parameter in :func:`param_names` order."""
    cols = [dz_dparam(cfg, ctx, paths, fam, l) for fam in FAMILIES[_mode(mode)] for l in range(len(paths))]
    return np.stack(cols, axis=1)


@dataclass
class FimResult:
    fim: np.ndarray
    crb_diag: np.ndarray
    mode: str
    names: list[str]
    rank: int

    def crb(self, family: str) -> np.ndarray:
        """Per-path bounds of one family; 'alpha' in split mode sums Re and Im."""
        l_paths = len(self.names) // len(FAMILIES[self.mode])
        fams = FAMILIES[self.mode]
        if family == "alpha" and self.mode == "split":
            return self.crb("alpha_re") + self.crb("alpha_im")
        i = fams.index(family)
        return self.crb_diag[i * l_paths:(i + 1) * l_paths]


def fim_from_derivatives(dp: np.ndarray, cov: NoiseCovariance) -> np.ndarray:
    """2 Re{D^H C^-1 D}, symmetrised."""
    f = 2 * np.real(dp.conj().T @ cov.solve(dp))
    return (f + f.T) / 2


def fim(cfg: SystemConfig, ctx: AcquisitionContext, paths: PathSet, mode: str = "split",
        noise_var: float | None = None) -> FimResult:
    cov = noise_covariance(cfg, ctx, noise_var)
    f = fim_from_derivatives(derivative_stack(cfg, ctx, paths, mode), cov)
    return _finish(f, mode, len(paths))


def _finish(f: np.ndarray, mode: str, l_paths: int) -> FimResult:
    # Parameters span ~1e-8 s to ~1e3 Hz, so invert in Jacobi-scaled
    # coordinates; the result equals diag(pinv(f)) whenever f is full rank.
    scale = np.sqrt(np.clip(np.diag(f), 0, None))
    scale[scale == 0] = 1.0
    fn = f / np.outer(scale, scale)
    s = np.linalg.svd(fn, compute_uv=False)
    rank = int(np.sum(s > 1e-12 * s[0])) if s.size and s[0] > 0 else 0
    crb = np.real(np.diag(np.linalg.pinv(fn, rcond=1e-12, hermitian=True))) / scale**2
    return FimResult(f, crb, mode, param_names(l_paths, mode), rank)


def finite_difference_step(cfg: SystemConfig, family: str, value: float) -> float:
    """Central-difference step: absolute 1e-7 rad for angles, otherwise
    1e-6 * max(|p|, natural unit) with natural units 1/Δf (delay),
    1/(M N_s T_s) (Doppler) and |alpha| scale 1 (gain)."""
    if family in ("theta", "phi"):
        return 1e-7
    if family == "tau":
        unit = 1.0 / (cfg.k_pilot * cfg.scs_hz)
    elif family == "fd":
        unit = 1.0 / (cfg.m_slots * cfg.slot_duration_s)
    else:
        unit = 1.0
    return 1e-6 * max(abs(value), unit)


def numerical_derivative_stack(cfg: SystemConfig, ctx: AcquisitionContext, paths: PathSet,
                               mode: str = "split", gain_scale: float | None = None) -> np.ndarray:
    """Central differences of z(p) built through the tensor route."""
    pv = ParamVector.from_paths(paths, mode)
    fams = FAMILIES[_mode(mode)]
    l_paths = len(paths)
    g_unit = gain_scale if gain_scale is not None else max(float(np.max(np.abs(paths.gain))), 1e-300)
    cols = []
    for i, val in enumerate(pv.values):
        fam = fams[i // l_paths]
        h = finite_difference_step(cfg, fam, val)
        if fam.startswith("alpha"):
            h = 1e-6 * max(abs(val), g_unit)
        plus, minus = pv.values.copy(), pv.values.copy()
        plus[i] += h
        minus[i] -= h
        zp = observation(cfg, ctx, ParamVector(plus, l_paths, mode).to_paths(paths))
        zm = observation(cfg, ctx, ParamVector(minus, l_paths, mode).to_paths(paths))
        cols.append((zp - zm) / (2 * h))
    return np.stack(cols, axis=1)


def crb_curve(cfg: SystemConfig, ctx: AcquisitionContext, paths: PathSet, snr_grid, mode: str = "split"):
    """Rows (snr_db, FimResult) with sigma_n^2 set from each SNR."""
    rows = []
    for snr in snr_grid:
        var = noise_variance(cfg, ctx, float(snr))
        rows.append((float(snr), fim(cfg, ctx, paths, mode, noise_var=var)))
    return rows
