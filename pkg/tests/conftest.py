import numpy as np
import pytest

from zkroa import edmd, roa
from zkroa.dictionary import make_dictionary
from zkroa.systems import builtin

# Settings of the reduced 1D run used across roa and acceptance tests.
CUBIC = dict(samples=1001, freq_count=128, dt=1.0, steps=1001, tol=1e-2, K=10)


@pytest.fixture(scope="session")
def cubic():
    return builtin("cubic1d")


@pytest.fixture(scope="session")
def vdp():
    return builtin("vdp_reversed")


@pytest.fixture(scope="session")
def cubic_run(cubic):
    """Learned operator and U_ZK for the cubic system at desk scale."""
    d = make_dictionary("cos_gauss_1d", CUBIC["freq_count"], 1, period_scale=3.0, gauss_scale=4.0)
    x = np.linspace(-1.5, 1.5, CUBIC["samples"])[:, None]
    data = edmd.stack_data(cubic, d, x, CUBIC["dt"], CUBIC["steps"])
    op = edmd.fit_operator(data, 1e-12)
    u = roa.build_u_zk(op, d, cubic.x_eq, CUBIC["tol"], CUBIC["K"])
    return {"dictionary": d, "data": data, "op": op, "u": u}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record and print one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
