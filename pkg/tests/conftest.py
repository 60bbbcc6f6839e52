import numpy as np
import pytest

from twotoa.model import SPEED_OF_LIGHT, Anchor, Cube, Scenario, Schedule, UdState


@pytest.fixture(scope="session")
def table1_anchors():
    """Eight anchors on the vertices of the 600 m cube centered at the origin."""
    cube = Cube(np.zeros(3), 600.0)
    return tuple(Anchor(i, q) for i, q in enumerate(cube.vertices()))


@pytest.fixture(scope="session")
def table1_delays():
    return 0.01 * np.arange(1, 9)


@pytest.fixture()
def scenario_factory(table1_anchors, table1_delays):
    """Scenarios drawn from the published priors at a chosen noise level."""

    def make(seed: int, sigma: float, speed: float | None = None) -> Scenario:
        rng = np.random.default_rng(seed)
        p = rng.uniform(-350.0, 350.0, 3)
        spd = rng.uniform(0.0, 60.0) if speed is None else speed
        yaw = rng.uniform(0.0, 2 * np.pi)
        el = rng.uniform(-np.pi / 2, np.pi / 2)
        v = spd * np.array([np.cos(el) * np.cos(yaw), np.cos(el) * np.sin(yaw), np.sin(el)])
        offset = rng.uniform(0.0, 20e-6) * SPEED_OF_LIGHT
        drift = rng.uniform(-10.0, 10.0) * 1e-6 * SPEED_OF_LIGHT
        return Scenario(
            anchors=table1_anchors,
            ud=UdState(p, v, offset, drift),
            schedule=Schedule(0.0, table1_delays),
            sigma_anchor=np.full(8, sigma),
            sigma_ud=sigma,
        )

    return make
