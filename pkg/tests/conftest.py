"""
Shared fixtures and arbitrary-precision oracles
"""
import math

import mpmath as mp
import pytest

from hestonopt.models.schemas import ExponentialUtility, HestonParams, McConfig, PowerUtility, RunConfig
from hestonopt.tools.heston_model import derive_constants

mp.mp.dps = 40


def oracle_log_kummer(a: float, b: float, z: float) -> float:
    return float(mp.log(mp.hyp1f1(a, b, z)))


def oracle_value_factor(a: float, b: float, psi: float) -> float:
    """Gamma(a)/Gamma(b) Psi^(b-a) exp(-Psi) 1F1(a; b; Psi)"""
    a, b, psi = mp.mpf(a), mp.mpf(b), mp.mpf(psi)
    return float(mp.gamma(a) / mp.gamma(b) * psi ** (b - a) * mp.exp(-psi) * mp.hyp1f1(a, b, psi))


def oracle_f(params: HestonParams, constants, v, tau):
    """Closed form evaluated in mpmath as a function of (v, tau)."""
    k, sigma = mp.mpf(params.k), mp.mpf(params.sigma)
    psi = 2 * k * v / (sigma ** 2 * mp.expm1(k * tau))
    a, b = mp.mpf(constants.kummer_a), mp.mpf(constants.kummer_b)
    return mp.gamma(a) / mp.gamma(b) * psi ** (b - a) * mp.exp(-psi) * mp.hyp1f1(a, b, psi)


def oracle_log_ratio(params: HestonParams, constants, v: float, tau: float) -> float:
    """d/dv ln f at fixed tau by high-precision numerical differentiation."""
    return float(mp.diff(lambda x: mp.log(oracle_f(params, constants, x, tau)), mp.mpf(v)))


def tau_for_psi(params: HestonParams, v: float, psi: float) -> float:
    return math.log1p(2.0 * params.k * v / (params.sigma ** 2 * psi)) / params.k


@pytest.fixture
def params():
    """Reference parameters: delta = 0.75, C = 0.015, lambda = -0.75, eta = 0.5 for c = 1."""
    return HestonParams(mu=0.2, k=1.0, theta=0.16, sigma=0.4, rho=0.5)


@pytest.fixture
def exp_utility():
    return ExponentialUtility(c=1.0)


@pytest.fixture
def power_utility():
    return PowerUtility(gamma=-1.0)


@pytest.fixture
def exp_constants(params, exp_utility):
    return derive_constants(params, exp_utility)


@pytest.fixture
def power_constants(params, power_utility):
    return derive_constants(params, power_utility)


@pytest.fixture
def mc_config():
    return McConfig(n_paths=20_000, n_steps=256, seed=20240611, scheme="exact-cir")


@pytest.fixture
def run_config(params, exp_utility):
    return RunConfig(model=params, utility=exp_utility)


@pytest.fixture
def config_document(params):
    return {
        "model": params.model_dump(),
        "utility": {"type": "exponential", "c": 1.0},
        "grid": {"n_v": 64, "n_tau": 64, "tau_max": 1.0},
        "point": {"w": 1.0, "x": 1.0, "v": 0.16, "t": 0.0, "T": 1.0},
    }
