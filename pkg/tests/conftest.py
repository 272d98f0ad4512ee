import numpy as np
import pytest

from slowfast_is import ScaleRegime
from slowfast_is.experiments import (
    FastVolSpec,
    RoughLangevinSpec,
    build_fast_vol,
    build_rough_langevin,
)
from slowfast_is.torus import TorusGrid


@pytest.fixture(scope="session")
def rl_spec():
    return RoughLangevinSpec.cosine()


@pytest.fixture(scope="session")
def rl_model(rl_spec):
    return build_rough_langevin(rl_spec)


@pytest.fixture(scope="session")
def fv_spec():
    return FastVolSpec.sine(amplitude=0.5, periodic_surrogate=True, m=0.5)


@pytest.fixture(scope="session")
def fv_model(fv_spec):
    return build_fast_vol(fv_spec, ScaleRegime("R3", exponent=0.5))


@pytest.fixture(scope="session")
def grid256():
    return TorusGrid(256, 1.0)


def fourier_d(n: int, period: float = 1.0):
    """Spectral first and second derivative matrices on n equispaced nodes (n even)."""
    k = np.fft.fftfreq(n, d=period / n) * 2 * np.pi
    eye = np.eye(n)
    k1 = k.copy()
    k1[n // 2] = 0.0  # drop the Nyquist mode in the odd derivative
    d1 = np.real(np.fft.ifft(1j * k1[:, None] * np.fft.fft(eye, axis=0), axis=0))
    d2 = np.real(np.fft.ifft(-(k**2)[:, None] * np.fft.fft(eye, axis=0), axis=0))
    return d1, d2


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record an acceptance verdict and fail the test when it is negative."""
    log = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def record(number: int, title: str, ok: bool, detail: str):
        log.append((number, title, bool(ok), detail))
        assert ok, f"criterion {number} ({title}): {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(_ACCEPTANCE_KEY, [])
    if not log:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(log):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
