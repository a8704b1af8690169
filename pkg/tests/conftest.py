import hashlib

import pytest

from lawshield.rl_agent import train
from lawshield.simulator import builtin_scenario
from lawshield.world import (Indicator, Lane, RoadMap, Trace, VehicleState, WorldState)

TRAIN_EPISODES = 5000
TRAIN_SEED = 42


def make_road(n=3, special=(0,), width=3.5, **kw):
    return RoadMap(tuple(Lane(i in special) for i in range(n)), width, **kw)


def make_state(road, ego_lane=1, ego_x=0.0, ego_vx=10.0, other_lane=1, other_x=30.0,
               other_vx=8.0, t=0.0, indicator=Indicator.OFF, indicator_time=0.0, ego_y=None):
    y = road.lane_center(ego_lane) if ego_y is None else ego_y
    ego = VehicleState(ego_x, y, ego_vx, 0.0, indicator, indicator_time)
    other = VehicleState(other_x, road.lane_center(other_lane), other_vx)
    return WorldState(ego, other, t, road)


def lane_trace(road, lanes, dt=0.1, **kw):
    """Ego following a list of lane indices, one per step."""
    return Trace(tuple(make_state(road, ego_lane=l, ego_x=10.0 * dt * k, t=round(k * dt, 9), **kw)
                       for k, l in enumerate(lanes)), dt=dt)


def table_hash(table) -> str:
    return hashlib.sha256(table.dumps().encode()).hexdigest()


@pytest.fixture(scope="session")
def olympic_table():
    return train(builtin_scenario("olympic"), TRAIN_EPISODES, seed=TRAIN_SEED)


@pytest.fixture(scope="session")
def overtaking_table():
    return train(builtin_scenario("overtaking"), TRAIN_EPISODES, seed=TRAIN_SEED)
