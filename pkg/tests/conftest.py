import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from spdelab.models import ModelSpec, NoiseSpec
from spdelab.spectral import SpaceConfig

settings.register_profile("lab", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("lab")


@pytest.fixture
def space():
    return SpaceConfig(n_modes=16)


@pytest.fixture
def porous_const():
    return ModelSpec(kind="porous_medium", r=2.0, noise=NoiseSpec(q=0.6, family="constant", b=1.0))


@pytest.fixture
def porous_weyl():
    return ModelSpec(kind="porous_medium", r=2.0, noise=NoiseSpec(q=0.6, family="weyl_example"), trunc_radius=1.0)


@pytest.fixture
def fast_const():
    return ModelSpec(kind="fast_diffusion", r=0.5, noise=NoiseSpec(q=0.55))


def random_states(n_modes, count, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((count, n_modes)) * scale / np.arange(1, n_modes + 1)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance line: ``criterion(number, title, ok, detail)``."""
    def record(number, title, ok, detail=""):
        line = f"CRITERION {number:>2} {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip()
        _CRITERIA[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
