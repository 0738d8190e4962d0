"""Hybrid combiner, pilot block and the fourth-order received tensor."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .channel import PathSet, SystemConfig, array_responses, channel_set, factor_c, factor_d, gain_variance
from .tensor import CpModel, DenseTensor, cp_reconstruct


@dataclass(frozen=True)
class AcquisitionContext:
    w: np.ndarray  # N_BS x Q_BS
    s: np.ndarray  # N_MS x N_s
    noise_var: float = 0.0

    @property
    def pilot_power(self) -> float:
        """Average power of one entry of S."""
        return float(np.mean(np.abs(self.s) ** 2))


@dataclass(frozen=True)
class ReceivedTensor:
    y: DenseTensor  # Q_BS x N_s x K x M
    ctx: AcquisitionContext
    cfg: SystemConfig

    def __post_init__(self):
        want = (self.cfg.q_bs, self.cfg.n_sym, self.cfg.k_pilot, self.cfg.m_slots)
        if self.y.shape != want:
            raise ValueError(f"tensor shape {self.y.shape} does not match config {want}")

    def reshaped(self) -> np.ndarray:
        """Third-order view [[B ⊙ A, C, D]] of shape (Q_BS N_s) x K x M."""
        q, n, k, m = self.y.shape
        return self.y.data.reshape(q * n, k, m, order="F")


def generate_combiner(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Constant-modulus analog combiner with entries e^{j phi} / sqrt(N_BS)."""
    phi = rng.uniform(0.0, 2 * np.pi, (cfg.n_bs, cfg.q_bs))
    return np.exp(1j * phi) / np.sqrt(cfg.n_bs)


def generate_pilots(cfg: SystemConfig, rng: np.random.Generator) -> np.ndarray:
    """Random-phase pilots; every column has squared norm exactly 1/N_MS."""
    phi = rng.uniform(0.0, 2 * np.pi, (cfg.n_ms, cfg.n_sym))
    s = np.exp(1j * phi)
    return s / np.linalg.norm(s, axis=0, keepdims=True) / np.sqrt(cfg.n_ms)


def generate_context(cfg: SystemConfig, rng: np.random.Generator) -> AcquisitionContext:
    return AcquisitionContext(generate_combiner(cfg, rng), generate_pilots(cfg, rng))


def cp_factors(cfg: SystemConfig, paths: PathSet, ctx: AcquisitionContext) -> CpModel:
    """Factors (A, B, C, D) with A = W^T A_BS and B = S^T A_MS."""
    _check_ctx(cfg, ctx)
    a_bs, a_ms = array_responses(cfg, paths)
    return CpModel((ctx.w.T @ a_bs, ctx.s.T @ a_ms, factor_c(cfg, paths), factor_d(cfg, paths)))


def assemble_noiseless(cfg: SystemConfig, paths: PathSet, ctx: AcquisitionContext) -> ReceivedTensor:
    y = cp_reconstruct(cp_factors(cfg, paths, ctx))
    return ReceivedTensor(y, replace(ctx, noise_var=0.0), cfg)


def assemble_slicewise(cfg: SystemConfig, paths: PathSet, ctx: AcquisitionContext) -> ReceivedTensor:
    """Same tensor built slice by slice as Y_{m,k} = W^T H_{m,k} S."""
    _check_ctx(cfg, ctx)
    h = channel_set(cfg, paths)
    y = np.einsum("iq,mkij,jn->qnkm", ctx.w, h, ctx.s, optimize=True)
    return ReceivedTensor(DenseTensor(y), replace(ctx, noise_var=0.0), cfg)


def noise_variance(cfg: SystemConfig, ctx: AcquisitionContext, snr_db: float) -> float:
    """sigma_n^2 = P sigma_alpha^2 / SNR."""
    if np.isposinf(snr_db):
        return 0.0
    return ctx.pilot_power * gain_variance(cfg) / 10 ** (snr_db / 10)


def add_noise(t: ReceivedTensor, snr_db: float, rng: np.random.Generator) -> ReceivedTensor:
    """Add W^T N_{m,k} per slice, N i.i.d. CN(0, sigma_n^2); +inf SNR is a no-op."""
    if np.isnan(snr_db) or np.isneginf(snr_db):
        raise ValueError(f"invalid SNR {snr_db}")
    var = noise_variance(t.cfg, t.ctx, snr_db)
    if var == 0.0:
        return t
    cfg = t.cfg
    shape = (cfg.n_bs, cfg.n_sym, cfg.k_pilot, cfg.m_slots)
    raw = np.sqrt(var / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    noise = np.einsum("iq,inkm->qnkm", t.ctx.w, raw, optimize=True)
    return ReceivedTensor(DenseTensor(t.y.data + noise), replace(t.ctx, noise_var=var), cfg)


def _check_ctx(cfg: SystemConfig, ctx: AcquisitionContext):
    if ctx.w.shape != (cfg.n_bs, cfg.q_bs):
        raise ValueError(f"combiner shape {ctx.w.shape} != ({cfg.n_bs}, {cfg.q_bs})")
    if ctx.s.shape != (cfg.n_ms, cfg.n_sym):
        raise ValueError(f"pilot shape {ctx.s.shape} != ({cfg.n_ms}, {cfg.n_sym})")
