"""System configuration, path parameters and the time-varying channel models."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.special import j0

SPEED_OF_LIGHT = 2.99792458e8


@dataclass(frozen=True)
class SystemConfig:
    n_bs: int = 32
    n_ms: int = 16
    q_bs: int = 8
    q_ms: int = 4
    n_subcarriers_total: int = 1024
    k_pilot: int = 16
    n_sym: int = 7
    m_slots: int = 10
    scs_hz: float = 480e3
    f_c_hz: float = 30e9
    antenna_spacing_ratio: float = 0.5
    snr_db: float = 10.0
    distance_m: float = 100.0
    seed: int = 0

    def __post_init__(self):
        for name in ("n_bs", "n_ms", "q_bs", "q_ms", "n_subcarriers_total", "k_pilot", "n_sym", "m_slots"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.q_bs >= self.n_bs or self.q_ms >= self.n_ms:
            raise ValueError("RF chain counts must be smaller than antenna counts")
        if self.k_pilot > self.n_subcarriers_total:
            raise ValueError("k_pilot exceeds the number of subcarriers")
        if self.scs_hz <= 0 or self.f_c_hz <= 0:
            raise ValueError("subcarrier spacing and carrier frequency must be positive")

    @property
    def f_s_hz(self) -> float:
        return self.n_subcarriers_total * self.scs_hz

    @property
    def t_sym_s(self) -> float:
        return 1.0 / self.scs_hz

    @property
    def slot_duration_s(self) -> float:
        """Mini-slot duration N_s * T_s."""
        return self.n_sym * self.t_sym_s

    def with_(self, **kw) -> "SystemConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return asdict(self)


def desk_config(**kw) -> SystemConfig:
    """Small configuration used by the test suite and quick benchmarks."""
    return SystemConfig(**kw)


def paper_config(**kw) -> SystemConfig:
    base = dict(n_bs=128, n_ms=64, q_bs=16, q_ms=8, n_subcarriers_total=1024,
                k_pilot=16, n_sym=7, m_slots=10, scs_hz=480e3, f_c_hz=30e9)
    base.update(kw)
    return SystemConfig(**base)


@dataclass(frozen=True)
class PathSet:
    """Per-path parameters; ground truth and estimates share this container."""

    aoa_rad: np.ndarray
    aod_rad: np.ndarray
    delay_s: np.ndarray
    doppler_hz: np.ndarray
    gain: np.ndarray

    def __post_init__(self):
        cols = {}
        for name in ("aoa_rad", "aod_rad", "delay_s", "doppler_hz"):
            cols[name] = np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).copy()
        cols["gain"] = np.atleast_1d(np.asarray(self.gain, dtype=complex)).copy()
        lengths = {v.shape for v in cols.values()}
        if len(lengths) != 1 or cols["gain"].ndim != 1:
            raise ValueError("all path parameter vectors must be 1-D with equal length")
        for name, v in cols.items():
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    def __len__(self) -> int:
        return self.aoa_rad.shape[0]

    def permuted(self, perm) -> "PathSet":
        perm = np.asarray(perm)
        return PathSet(self.aoa_rad[perm], self.aod_rad[perm], self.delay_s[perm],
                       self.doppler_hz[perm], self.gain[perm])

    def with_(self, **kw) -> "PathSet":
        return replace(self, **kw)

    def distinctness_violations(self, max_doppler_hz: float | None = None) -> list[str]:
        out = []
        for name in ("aoa_rad", "aod_rad", "delay_s", "doppler_hz"):
            v = getattr(self, name)
            if len(np.unique(v)) != len(v):
                out.append(f"{name} not distinct")
        if np.any((self.aoa_rad <= 0) | (self.aoa_rad >= np.pi)):
            out.append("aoa_rad outside (0, pi)")
        if np.any((self.aod_rad <= 0) | (self.aod_rad >= np.pi)):
            out.append("aod_rad outside (0, pi)")
        if np.any(self.delay_s < 0):
            out.append("negative delay")
        if max_doppler_hz is not None and np.any(np.abs(self.doppler_hz) > max_doppler_hz * (1 + 1e-12)):
            out.append("doppler exceeds maximum")
        return out


@dataclass(frozen=True)
class ArModelParams:
    rho: float
    innovation_var: float = field(default=None)

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [-1, 1]")
        if self.innovation_var is None:
            object.__setattr__(self, "innovation_var", 1.0 - self.rho**2)


def max_doppler(cfg: SystemConfig, speed_mps: float) -> float:
    return speed_mps * cfg.f_c_hz / SPEED_OF_LIGHT


def ar_params(cfg: SystemConfig, f_max_hz: float) -> ArModelParams:
    """AR(1) coefficient rho = J0(2 pi f_max N_s T_s)."""
    return ArModelParams(float(j0(2 * np.pi * f_max_hz * cfg.slot_duration_s)))


def gain_variance(cfg: SystemConfig) -> float:
    """Free-space path-gain variance (c / (4 pi D f_c))^2."""
    if cfg.distance_m <= 0 or cfg.f_c_hz <= 0:
        raise ValueError("distance and carrier frequency must be positive")
    return (SPEED_OF_LIGHT / (4 * np.pi * cfg.distance_m * cfg.f_c_hz)) ** 2


def steering_vector(count: int, angle: float | np.ndarray, spacing_ratio: float = 0.5) -> np.ndarray:
    """ULA response exp(j 2 pi (d/lambda) x cos(angle)), x = 0..count-1.

    A vector of angles gives a count x len(angle) matrix.
    """
    if count < 1:
        raise ValueError("antenna count must be >= 1")
    x = np.arange(count)
    ang = np.asarray(angle, dtype=float)
    phase = 2 * np.pi * spacing_ratio * np.multiply.outer(x, np.cos(ang))
    return np.exp(1j * phase)


def steering_derivative(count: int, angle: float, spacing_ratio: float = 0.5) -> np.ndarray:
    x = np.arange(count)
    return -1j * 2 * np.pi * spacing_ratio * x * np.sin(angle) * steering_vector(count, angle, spacing_ratio)


def delay_template(cfg: SystemConfig, delay_s: float) -> np.ndarray:
    """Vandermonde part of C: exp(-j 2 pi f_s tau k / N), k = 1..K."""
    k = np.arange(1, cfg.k_pilot + 1)
    return np.exp(-1j * 2 * np.pi / cfg.n_subcarriers_total * cfg.f_s_hz * delay_s * k)


def doppler_template(cfg: SystemConfig, doppler_hz: float) -> np.ndarray:
    """Column of D: exp(j 2 pi f_d (m-1) N_s T_s), m = 1..M."""
    m = np.arange(cfg.m_slots)
    return np.exp(1j * 2 * np.pi * doppler_hz * m * cfg.slot_duration_s)


def factor_c_column(cfg: SystemConfig, delay_s: float, doppler_hz: float, gain: complex) -> np.ndarray:
    k = np.arange(1, cfg.k_pilot + 1)
    n = cfg.n_subcarriers_total
    offset = doppler_hz / cfg.f_s_hz * n
    return gain * np.exp(-1j * 2 * np.pi / n * (cfg.f_s_hz * delay_s) * (k - offset))


def factor_d_column(cfg: SystemConfig, doppler_hz: float) -> np.ndarray:
    return doppler_template(cfg, doppler_hz)


def factor_c(cfg: SystemConfig, paths: PathSet) -> np.ndarray:
    cols = [factor_c_column(cfg, t, f, g) for t, f, g in zip(paths.delay_s, paths.doppler_hz, paths.gain)]
    return np.stack(cols, axis=1) if cols else np.zeros((cfg.k_pilot, 0), complex)


def factor_d(cfg: SystemConfig, paths: PathSet) -> np.ndarray:
    cols = [factor_d_column(cfg, f) for f in paths.doppler_hz]
    return np.stack(cols, axis=1) if cols else np.zeros((cfg.m_slots, 0), complex)


def array_responses(cfg: SystemConfig, paths: PathSet) -> tuple[np.ndarray, np.ndarray]:
    """(A_BS, A_MS): N_BS x L and N_MS x L steering matrices."""
    a_bs = steering_vector(cfg.n_bs, paths.aoa_rad, cfg.antenna_spacing_ratio)
    a_ms = steering_vector(cfg.n_ms, paths.aod_rad, cfg.antenna_spacing_ratio)
    return a_bs, a_ms


def instantaneous_channel(cfg: SystemConfig, paths: PathSet, m: int, k: int) -> np.ndarray:
    """H_{m,k} = A_BS D_k(C) D_m(D) A_MS^T with 1-based slot m and subcarrier k."""
    if not (1 <= m <= cfg.m_slots and 1 <= k <= cfg.k_pilot):
        raise IndexError(f"(m, k) = ({m}, {k}) outside 1..{cfg.m_slots} x 1..{cfg.k_pilot}")
    a_bs, a_ms = array_responses(cfg, paths)
    w = factor_c(cfg, paths)[k - 1] * factor_d(cfg, paths)[m - 1]
    return (a_bs * w) @ a_ms.T


def channel_set(cfg: SystemConfig, paths: PathSet) -> np.ndarray:
    """All H_{m,k} stacked as an (M, K, N_BS, N_MS) array."""
    a_bs, a_ms = array_responses(cfg, paths)
    c = factor_c(cfg, paths)
    d = factor_d(cfg, paths)
    return np.einsum("il,jl,kl,ml->mkij", a_bs, a_ms, c, d, optimize=True)


def statistical_channel_sequence(cfg: SystemConfig, paths: PathSet, ar: ArModelParams,
                                 rng: np.random.Generator, sigma_alpha2: float = 1.0):
    """Gain sequence of the AR(1) model and the matching channel matrices.

    Returns (gains, channels): gains is M x L (row m holds slot m+1), channels
    is the (M, K, N_BS, N_MS) frequency-domain channel with each path's delay
    phase but no Doppler rotation. Innovations are scaled by ``sigma_alpha2``
    so the process stays stationary at that variance.
    """
    l_paths = len(paths)
    gains = np.empty((cfg.m_slots, l_paths), complex)
    alpha = _cn(rng, l_paths, sigma_alpha2)
    for m in range(cfg.m_slots):
        alpha = ar.rho * alpha + _cn(rng, l_paths, ar.innovation_var * sigma_alpha2)
        gains[m] = alpha
    a_bs, a_ms = array_responses(cfg, paths)
    taps = np.stack([delay_template(cfg, t) for t in paths.delay_s], axis=1)
    channels = np.einsum("il,jl,kl,ml->mkij", a_bs, a_ms, taps, gains, optimize=True)
    return gains, channels


def _cn(rng: np.random.Generator, size, var: float) -> np.ndarray:
    return np.sqrt(var / 2) * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


@dataclass(frozen=True)
class PathSampling:
    angle_low: float = 0.1 * math.pi
    angle_high: float = 0.9 * math.pi
    min_angle_sep: float = 0.05
    delay_fraction: float = 0.8
    max_tries: int = 1000


def sample_paths(cfg: SystemConfig, l_paths: int, speed_mps: float, rng: np.random.Generator,
                 sampling: PathSampling = PathSampling()) -> PathSet:
    if l_paths < 1:
        raise ValueError("need at least one path")
    fmax = max_doppler(cfg, speed_mps)
    tau_max = sampling.delay_fraction * cfg.n_subcarriers_total / cfg.f_s_hz
    aoa = _separated_uniform(rng, l_paths, sampling)
    aod = _separated_uniform(rng, l_paths, sampling)
    for _ in range(sampling.max_tries):
        delay = rng.uniform(0.0, tau_max, l_paths)
        doppler = rng.uniform(-fmax, fmax, l_paths)
        if len(np.unique(delay)) == l_paths and len(np.unique(doppler)) == l_paths:
            break
    else:
        raise RuntimeError("could not draw distinct delays/Dopplers")
    gain = _cn(rng, l_paths, gain_variance(cfg))
    return PathSet(aoa, aod, delay, doppler, gain)


def _separated_uniform(rng, n, s: PathSampling) -> np.ndarray:
    for _ in range(s.max_tries):
        v = rng.uniform(s.angle_low, s.angle_high, n)
        if n == 1 or np.min(np.diff(np.sort(v))) >= s.min_angle_sep:
            return v
    raise RuntimeError(f"cannot place {n} angles with separation {s.min_angle_sep} rad")
