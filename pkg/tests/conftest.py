import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tvchan.acquisition import assemble_noiseless, generate_context
from tvchan.channel import PathSet, SystemConfig, desk_config

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def toy_config(**kw) -> SystemConfig:
    """Q_BS=2, N_s=2, K=3, M=3 configuration for derivative and FIM oracles."""
    base = dict(n_bs=8, n_ms=4, q_bs=2, q_ms=2, k_pilot=3, n_sym=2, m_slots=3)
    base.update(kw)
    return SystemConfig(**base)


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def fixed_paths(cfg: SystemConfig) -> PathSet:
    """Three well-separated paths inside the sampler's support."""
    tau_max = 0.8 * cfg.n_subcarriers_total / cfg.f_s_hz
    return PathSet(
        aoa_rad=[0.7, 1.5, 2.3],
        aod_rad=[1.1, 2.0, 0.6],
        delay_s=[0.12 * tau_max, 0.45 * tau_max, 0.81 * tau_max],
        doppler_hz=[-2100.0, 450.0, 2800.0],
        gain=[1.0 + 0.5j, -0.7 + 0.2j, 0.3 - 0.9j],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def desk():
    return desk_config()


@pytest.fixture
def desk_tensor(desk):
    r = np.random.default_rng(7)
    paths = fixed_paths(desk)
    ctx = generate_context(desk, r)
    return paths, assemble_noiseless(desk, paths, ctx)


ACCEPTANCE_LINES: list[str] = []


def report_criterion(number: int, ok: bool, detail: str) -> str:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
