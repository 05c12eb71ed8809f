import itertools

import numpy as np
import pytest

from vrcast.channel import ChannelModel, PhysicalConfig
from vrcast.scenario import Scenario, UserCompute
from vrcast.tiling import FoVRequest, VideoGeometry

RATES = (6.66e5, 16.18e5, 24.29e5, 32.01e5, 40.23e5)

# four overlapping 2x3 viewports on a 4x8 grid, requirements (3, 1, 2, 2)
EXAMPLE_TILES = {
    1: [(1, 1), (2, 1), (1, 2), (2, 2), (1, 3), (2, 3)],
    2: [(1, 3), (2, 3), (1, 4), (2, 4), (1, 5), (2, 5)],
    3: [(2, 4), (3, 4), (2, 5), (3, 5), (2, 6), (3, 6)],
    4: [(3, 5), (4, 5), (3, 6), (4, 6), (3, 7), (4, 7)],
}
EXAMPLE_R = {1: 3, 2: 1, 3: 2, 4: 2}


@pytest.fixture
def phys():
    return PhysicalConfig.from_temperature(150e6, 0.05, 300.0)


def example_requests(requirements=EXAMPLE_R):
    return tuple(FoVRequest(u, frozenset(EXAMPLE_TILES[u]), requirements[u]) for u in sorted(EXAMPLE_TILES))


def example_scenario(transcode_power=2e-5, delta=1, requirements=EXAMPLE_R, states=((1e-6, 0.5), (2e-6, 0.5))):
    return Scenario(
        geometry=VideoGeometry(4, 8, RATES[:3]),
        requests=example_requests(requirements),
        physical=PhysicalConfig.from_temperature(150e6, 0.05, 300.0),
        channel=ChannelModel.iid(states, 4),
        compute=UserCompute.uniform(transcode_power, 4),
        delta=delta,
    )


def cvx_energy(inst, demand):
    """Independent reference: minimum expected energy (normalised) for a fixed demand, via cvxpy."""
    import cvxpy as cp

    gains, q = inst.norm_gains, inst.probs
    H, K = gains.shape
    G, L, _ = demand.shape
    tau = cp.Variable((H, G * L), nonneg=True)
    eps = cp.Variable((H, G * L), nonneg=True)
    cons = [cp.sum(tau, axis=1) <= 1]
    for g, l, k in itertools.product(range(G), range(L), range(K)):
        if demand[g, l, k] > 0:
            j = g * L + l
            rate = sum(q[h] * -cp.rel_entr(tau[h, j], tau[h, j] + gains[h, k] * eps[h, j]) for h in range(H)) / np.log(2)
            cons.append(rate >= demand[g, l, k])
    prob = cp.Problem(cp.Minimize(cp.sum(q @ eps)), cons)
    prob.solve(solver="CLARABEL")
    return prob.value


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
