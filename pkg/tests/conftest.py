import math

import numpy as np
import pytest

from skwave.fields import Coefficients, make_map
from skwave.noise import build_covariance
from skwave.solver import SimConfig
from skwave.spectrum import build_domain


@pytest.fixture
def line():
    return build_domain(1, [math.pi], 8)


def make_config(K=8, drift="zero", diffusion=None, lam=1.0, T=1.0, n_steps=64, mu=None,
                u0=None, v0=None, seed=0, L=math.pi):
    domain = build_domain(1, [L], K)
    cov = build_covariance(domain, {"kind": "constant", "value": lam})
    diffusion = {"kind": "constant", "value": 1.0} if diffusion is None else diffusion
    coeffs = Coefficients(make_map(drift), make_map(diffusion))
    u0 = np.zeros(K) if u0 is None else np.asarray(u0, float)
    v0 = np.zeros(K) if v0 is None else np.asarray(v0, float)
    return SimConfig(domain, coeffs, cov, T, n_steps, mu, u0, v0, seed)


@pytest.fixture
def config_factory():
    return make_config


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
