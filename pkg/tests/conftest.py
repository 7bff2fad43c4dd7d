import functools

import numpy as np
import pytest

from nhcyl.averaging import NormalFormH1
from nhcyl.cylinder import GraphConfig, graph_solve
from nhcyl.model import averaged_data, pendulum_family
from nhcyl.reduction import reduction_data


@functools.lru_cache(maxsize=None)
def flagship(eps=0.05, mu=0.3, nu=0.05):
    spec = pendulum_family(mu=mu, nu=nu, epsilon=eps)
    avg = averaged_data(spec)
    return spec, avg, NormalFormH1(spec), reduction_data(avg)


@functools.lru_cache(maxsize=None)
def solved(eps=0.05, mu=0.3, nu=0.05, N=32, tol=1e-8):
    _, _, H1, red = flagship(eps, mu, nu)
    return graph_solve(H1, red, GraphConfig(Nt=N, Nq=N, Np=N + 1, tol_graph=tol))


def random_spd(rng, n, cond=10.0):
    Q, _ = np.linalg.qr(rng.normal(size=(n, n)))
    w = np.exp(rng.uniform(0, np.log(cond), size=n))
    return (Q * w) @ Q.T


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = {}


def record_criterion(number: int, title: str, ok: bool, detail: str = ""):
    ACCEPTANCE_LINES[number] = f"criterion {number:2d} [{'PASS' if ok else 'FAIL'}] {title}" + (
        f" -- {detail}" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
