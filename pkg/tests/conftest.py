import pytest

from oppnet.scenario import (FieldSpec, NodeSpec, Point, ScenarioConfig, TrafficSpec, HELPER,
                             STATIC_DESTINATION, STATIC_SOURCE)


def make_config(side=1000.0, helpers=3, ttl=600.0, interval=50.0, sim_time=600.0, router="epidemic",
                seed=0, rf_range=80.0, bit_rate=250000.0, buffer=524288, extra=()):
    nodes = [
        NodeSpec(0, STATIC_SOURCE, rf_range, bit_rate, buffer, position=Point(100.0, side - 100.0)),
        NodeSpec(1, STATIC_DESTINATION, rf_range, bit_rate, buffer, position=Point(side - 100.0, 100.0)),
    ]
    nodes += [NodeSpec(2 + k, HELPER, rf_range, bit_rate, buffer, velocity=10.0, pause_min=5.0,
                       pause_max=10.0) for k in range(helpers)]
    nodes += list(extra)
    return ScenarioConfig(FieldSpec(side), tuple(nodes), TrafficSpec(1024, interval, ttl),
                          router=router, sim_time=sim_time, seed=seed, name="test")


@pytest.fixture
def small_config():
    return make_config()
