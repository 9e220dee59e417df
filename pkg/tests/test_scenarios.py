import numpy as np
import pytest

from priofd.errors import ConfigError
from priofd.network import WorldState
from priofd.scenarios import (Scenario, Event, actuator_failure, apply_events,
                              bandwidth_loss, fault_free, resolve_scenario,
                              shaken_pole)
from priofd.simulate import run_single


def test_empty_scenario_changes_nothing(desk_cfg, desk_models):
    base = run_single(desk_models, desk_cfg.bandwidth, desk_cfg.quant_scale,
                      80, seed=31, run=0)
    with_scn = run_single(desk_models, desk_cfg.bandwidth,
                          desk_cfg.quant_scale, 80, seed=31, run=0,
                          scenario=fault_free())
    assert np.array_equal(base.priorities, with_scn.priorities)
    assert np.array_equal(base.gamma, with_scn.gamma)
    assert np.array_equal(base.err_sq, with_scn.err_sq)


@pytest.mark.parametrize("scn", [actuator_failure((2,), 40),
                                 bandwidth_loss(1, 40),
                                 shaken_pole(2, 40, duration=20)])
def test_prefix_identical_to_fault_free(desk_cfg, desk_models, scn):
    base = run_single(desk_models, desk_cfg.bandwidth, desk_cfg.quant_scale,
                      80, seed=37, run=0, keep_states=True)
    faulted = run_single(desk_models, desk_cfg.bandwidth,
                         desk_cfg.quant_scale, 80, seed=37, run=0,
                         scenario=scn, keep_states=True)
    assert np.array_equal(base.states[:40], faulted.states[:40])
    assert np.array_equal(base.priorities[:40], faulted.priorities[:40])
    assert not np.array_equal(base.priorities[40:], faulted.priorities[40:])


def test_actuator_failure_mutates_plant_only(desk_cfg, desk_models):
    world = WorldState(desk_models, desk_cfg.bandwidth, desk_cfg.quant_scale,
                       10, seed=0, run=0)
    scn = actuator_failure((2, 3), 0)
    apply_events(world, scn, 0)
    for agent in (2, 3):
        assert not world.plant_B[agent - 1].any()
        assert not world.model_matched[agent - 1]
        # shared model keeps the original input matrix
        assert world.models[agent - 1].B.any()
        assert world._B[agent - 1].any()
    assert world.model_matched[0]


def test_faulty_agent_error_tracks_model_mismatch(desk_cfg, desk_models):
    # after B := 0 the plant ignores its input, so the estimation error
    # after a received round equals v - B u rather than v
    scn = actuator_failure((1,), 5)
    trace = run_single(desk_models, desk_cfg.bandwidth, desk_cfg.quant_scale,
                       60, seed=41, run=0, scenario=scn, keep_errors=True,
                       keep_noise=True)
    sent = np.flatnonzero(trace.gamma[5:-1, 0]) + 5
    assert sent.size > 0
    mismatch = [not np.array_equal(trace.errors[k + 1, 0], trace.noise[k, 0])
                for k in sent]
    assert all(mismatch)


def test_unknown_agent_rejected(desk_cfg, desk_models):
    world = WorldState(desk_models, desk_cfg.bandwidth, desk_cfg.quant_scale,
                       10, seed=0, run=0)
    with pytest.raises(ConfigError):
        apply_events(world, actuator_failure((99,), 0), 0)


def test_bandwidth_event_validated(desk_cfg, desk_models):
    world = WorldState(desk_models, desk_cfg.bandwidth, desk_cfg.quant_scale,
                       10, seed=0, run=0)
    with pytest.raises(ConfigError):
        apply_events(world, Scenario("x", [Event(0, "set_bandwidth",
                                                 bandwidth=0)]), 0)


def test_shaken_pole_saturates_priority(desk_cfg, desk_models):
    scn = shaken_pole(agent=3, k=50, duration=30)
    trace = run_single(desk_models, desk_cfg.bandwidth, desk_cfg.quant_scale,
                       100, seed=43, run=0, scenario=scn)
    assert trace.priorities[:50, 2].max() < 255
    assert trace.priorities[52:60, 2].max() == 255
    # disturbance expires: the plant matches the model again afterwards
    follow = run_single(desk_models, desk_cfg.bandwidth, desk_cfg.quant_scale,
                        200, seed=43, run=0, scenario=scn, keep_errors=True,
                        keep_noise=True)
    late_sent = np.flatnonzero(follow.gamma[120:-1, 2]) + 120
    assert late_sent.size > 0
    for k in late_sent[-5:]:
        assert np.array_equal(follow.errors[k + 1, 2], follow.noise[k, 2])


def test_disturbance_leaves_other_noise_untouched(desk_cfg, desk_models):
    base = run_single(desk_models, desk_cfg.bandwidth, desk_cfg.quant_scale,
                      80, seed=47, run=0, keep_noise=True)
    shaken = run_single(desk_models, desk_cfg.bandwidth, desk_cfg.quant_scale,
                        80, seed=47, run=0, scenario=shaken_pole(2, 40, 20),
                        keep_noise=True)
    assert np.array_equal(base.noise, shaken.noise)


def test_round_trip_and_presets(tmp_path):
    scn = actuator_failure((2, 3, 4, 5), 100)
    path = tmp_path / "scn.json"
    scn.save(path)
    back = Scenario.load(path)
    assert back.name == scn.name
    assert back.events == scn.events
    assert resolve_scenario(str(path)).events == scn.events
    assert resolve_scenario("bandwidth-loss").events[0].kind == "set_bandwidth"
    assert resolve_scenario(None).events == []
    with pytest.raises(ConfigError):
        resolve_scenario("no-such-preset")


def test_faulty_agents_listing():
    assert actuator_failure((4, 2), 10).faulty_agents() == (2, 4)
    assert bandwidth_loss(1, 10).faulty_agents() == ()
    assert shaken_pole(3, 10).faulty_agents() == (3,)
