import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from loas.snn import LifParams, SpikeTensor, WeightMatrix

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_workload(rng, M=None, K=None, N=None, T=None, density=None, wdensity=None,
                    v_th=None, tau_log2=None):
    M = M or int(rng.integers(1, 33))
    K = K or int(rng.integers(1, 301))
    N = N or int(rng.integers(1, 33))
    T = T or int(rng.choice([1, 2, 4, 8]))
    density = rng.uniform(0, 0.6) if density is None else density
    wdensity = rng.uniform(0, 1) if wdensity is None else wdensity
    A = SpikeTensor((rng.random((M, K, T)) < density).astype(np.uint8))
    vals = rng.integers(-128, 128, (K, N))
    B = WeightMatrix(np.where(rng.random((K, N)) < wdensity, vals, 0).astype(np.int8))
    p = LifParams(int(rng.choice([-1, 0, 3, 100])) if v_th is None else v_th,
                  int(rng.integers(0, 3)) if tau_log2 is None else tau_log2)
    return A, B, p


@st.composite
def workloads(draw, max_m=12, max_k=300, max_n=12, ts=(1, 2, 4, 8)):
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    M = draw(st.integers(1, max_m))
    K = draw(st.integers(1, max_k))
    N = draw(st.integers(1, max_n))
    T = draw(st.sampled_from(ts))
    return random_workload(rng, M, K, N, T,
                           density=draw(st.floats(0, 1)), wdensity=draw(st.floats(0, 1)),
                           v_th=draw(st.sampled_from([-1, 0, 3, 100])),
                           tau_log2=draw(st.integers(0, 2)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance verdict lines, echoed in the terminal summary so they survive capture
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
