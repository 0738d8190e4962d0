"""Alternating least squares baseline on the reshaped tensor [[E, C, D]]."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .acquisition import ReceivedTensor
from .channel import channel_set
from .esprit import DEFAULT_GRID, EspritResult, FactorMatrices, decompose, extract_parameters
from .tensor import khatri_rao, mode_n_unfold

RIDGE = 1e-12


@dataclass(frozen=True)
class AlsConfig:
    max_iters: int = 200
    tol: float = 1e-10
    init: str = "random"
    seed: int = 0

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.init not in ("random", "from-esprit"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class AlsFit:
    e: np.ndarray
    c: np.ndarray
    d: np.ndarray
    history: list[float]  # relative residual after each sweep
    converged: bool
    ridge_used: int = 0
    notes: list[str] = field(default_factory=list)


def _ls_update(unfolded: np.ndarray, kr: np.ndarray, gram: np.ndarray, fit: AlsFit) -> np.ndarray:
    """Solve unfolded ≈ kr @ X^T for X through the normal equations."""
    rhs = kr.conj().T @ unfolded
    try:
        cond = np.linalg.cond(gram)
    except np.linalg.LinAlgError:
        cond = np.inf
    if not np.isfinite(cond) or cond > 1e14:
        gram = gram + RIDGE * max(np.trace(gram).real, 1.0) * np.eye(gram.shape[0])
        fit.ridge_used += 1
    return np.linalg.solve(gram, rhs).T


def _random_unit_columns(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    x = rng.standard_normal((rows, cols)) + 1j * rng.standard_normal((rows, cols))
    return x / np.linalg.norm(x, axis=0, keepdims=True)


def als_fit(t: ReceivedTensor, l_paths: int, cfg: AlsConfig = AlsConfig()) -> AlsFit:
    if l_paths < 1:
        raise ValueError("need at least one path")
    x = t.reshaped()
    x1, x2, x3 = (mode_n_unfold(x, n) for n in range(3))
    norm_x = np.linalg.norm(x)
    n_e, k, m = x.shape
    if cfg.init == "from-esprit":
        f, _ = decompose(t, l_paths)
        e, c, d = khatri_rao(f.b_hat, f.a_hat), f.c_hat, f.d_hat
    else:
        rng = np.random.default_rng(cfg.seed)
        e = _random_unit_columns(rng, n_e, l_paths)
        c = _random_unit_columns(rng, k, l_paths)
        d = _random_unit_columns(rng, m, l_paths)
    fit = AlsFit(e, c, d, [], False)
    prev = None
    for _ in range(cfg.max_iters):
        e = _ls_update(x1, khatri_rao(d, c), (d.conj().T @ d) * (c.conj().T @ c), fit)
        c = _ls_update(x2, khatri_rao(d, e), (d.conj().T @ d) * (e.conj().T @ e), fit)
        d = _ls_update(x3, khatri_rao(c, e), (c.conj().T @ c) * (e.conj().T @ e), fit)
        res = np.linalg.norm(x3 - khatri_rao(c, e) @ d.T)
        rel = float(res / norm_x) if norm_x > 0 else float(res)
        fit.history.append(rel)
        if prev is not None and prev - rel <= cfg.tol * max(prev, 1e-300):
            fit.converged = True
            break
        if rel <= 1e-14:
            fit.converged = True
            break
        prev = rel
    fit.e, fit.c, fit.d = e, c, d
    if fit.ridge_used:
        fit.notes.append(f"ridge-regularised {fit.ridge_used} normal-equation solves")
    return fit


def _split_columns(e: np.ndarray, q_bs: int, n_sym: int):
    a = np.empty((q_bs, e.shape[1]), complex)
    b = np.empty((n_sym, e.shape[1]), complex)
    for l in range(e.shape[1]):
        u, s, vh = np.linalg.svd(e[:, l].reshape(q_bs, n_sym, order="F"))
        a[:, l] = s[0] * u[:, 0]
        b[:, l] = vh[0]
    return a, b


def als_estimate(t: ReceivedTensor, l_paths: int, cfg: AlsConfig = AlsConfig(),
                 grid_size: int = DEFAULT_GRID, refine: bool = False) -> EspritResult:
    """ALS factors followed by the shared parameter-extraction stage.

    D from ALS is only approximately Vandermonde, so each Doppler generator is
    the phase of the LS adjacent-row ratio of its column.
    """
    fit = als_fit(t, l_paths, cfg)
    sc = t.cfg
    a, b = _split_columns(fit.e, sc.q_bs, sc.n_sym)
    lo, hi = fit.d[:-1], fit.d[1:]
    ratio = np.sum(lo.conj() * hi, axis=0)
    gens = np.exp(1j * np.angle(ratio))
    factors = FactorMatrices(a, b, fit.c, fit.d, gens, fit.e)
    paths, extra = extract_parameters(factors, t.ctx, sc, grid_size, refine)
    diag = {"als_history": fit.history, "als_converged": fit.converged, "als_notes": fit.notes, **extra}
    return EspritResult(paths, factors, channel_set(sc, paths), diag)
