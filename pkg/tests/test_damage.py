import math

import numpy as np
import pytest

from sewerrisk.damage import (FAILED, UNDAMAGED, DamagedNetwork, DamageModel, DamageModelError,
                              DamageScenario, DamageState, DamageStateDistribution,
                              apply_scenario, capacity, component_uniforms, derive_seed,
                              empirical_frequencies, sample_scenario)
from sewerrisk.hydraulics.geometry import full_flow_capacity
from sewerrisk.inp import write_inp
from sewerrisk.network import NetworkError

from conftest import pump_chain


def test_default_model_is_table_2():
    m = DamageModel.default()
    assert dict(m.tanks.entries) == {UNDAMAGED: 0.9, FAILED: 0.1}
    assert dict(m.pumps.entries) == {UNDAMAGED: 0.9, FAILED: 0.1}
    assert dict(m.pipes.entries) == {UNDAMAGED: 0.85, capacity(0.5): 0.1, capacity(0.1): 0.04,
                                     FAILED: 0.01}


def test_distribution_must_sum_to_one():
    with pytest.raises(DamageModelError):
        DamageStateDistribution(((UNDAMAGED, 0.9), (FAILED, 0.2)))
    with pytest.raises(DamageModelError):
        DamageStateDistribution(((UNDAMAGED, 1.1), (FAILED, -0.1)))


def test_capacity_state_range():
    with pytest.raises((DamageModelError, ValueError)):
        capacity(1.5)


def test_undamaged_model_gives_undamaged_scenarios():
    net = pump_chain()
    for i in range(20):
        sc = sample_scenario(DamageModel.undamaged(), net, 3, i)
        assert all(s == UNDAMAGED for s in sc.states.values())


def test_same_seed_and_index_reproduce():
    net = pump_chain()
    a = sample_scenario(DamageModel.default(), net, 11, 5)
    b = sample_scenario(DamageModel.default(), net, 11, 5)
    assert a == b
    assert set(a.states) == {c.id for c in net.conduits} | {"P", "T"}


def test_streams_do_not_depend_on_component_order():
    ids = ["C1", "C2", "P1", "T9"]
    u = component_uniforms(42, 7, ids)
    u_rev = component_uniforms(42, 7, ids[::-1])
    assert np.array_equal(u, u_rev[::-1])
    assert np.all((u >= 0) & (u < 1))


def test_derived_seeds_differ_per_label():
    assert derive_seed(1, "DF") != derive_seed(1, "KF")
    assert derive_seed(1, "DF") == derive_seed(1, "DF")


def _binomial_ok(freq, p, n):
    return abs(freq - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_empirical_frequencies_match_table_2(synthetic60):
    # 2,000 scenarios of a 60-node network give over 100,000 pipe draws
    n = 2000
    freq = empirical_frequencies(DamageModel.default(), synthetic60, 5, n)
    n_pipes = n * len(synthetic60.conduits)
    n_pumps = n * len(synthetic60.pumps)
    for state, p in DamageModel.default().pipes.entries:
        assert _binomial_ok(freq["pipes"].get(state, 0.0), p, n_pipes)
    assert _binomial_ok(freq["pumps"].get(FAILED, 0.0), 0.1, n_pumps)
    assert _binomial_ok(freq["tanks"].get(FAILED, 0.0), 0.1, n_pumps)


def test_pipe_failure_frequency_over_10000_samples():
    net = pump_chain()
    fails = sum(sample_scenario(DamageModel.default(), net, 99, i)["A-B"] == FAILED
                for i in range(10_000))
    assert abs(fails / 10_000 - 0.01) <= 0.003


def test_apply_undamaged_equals_original():
    net = pump_chain()
    view = apply_scenario(net, DamageScenario.undamaged(net))
    assert view.network is net
    assert view.failed == frozenset()
    assert np.all(view.conduit_factor == 1.0)
    assert view.routed_network() == net


def test_failed_tank_removes_tank_pump_and_links():
    net = pump_chain()
    view = apply_scenario(net, DamageScenario.from_states({"T": FAILED}))
    routed = view.routed_network()
    assert "T" not in routed.nodes
    assert "P" not in routed.links and "B-T" not in routed.links
    assert "C-Out" in routed.links


def test_partial_pipe_damage_scales_capacity_only_there():
    net = pump_chain()
    view = apply_scenario(net, DamageScenario.from_states({"A-B": capacity(0.5)}))
    eff = view.effective("A-B")
    assert eff.q_cap == 0.5 * full_flow_capacity(net.links["A-B"], net)
    assert view.capacity_factor("C-Out") == 1.0
    assert eff.n_eff == net.links["A-B"].manning_n / 0.5


def test_apply_does_not_mutate_network():
    net = pump_chain()
    before = write_inp(net)
    for i in range(50):
        apply_scenario(net, sample_scenario(DamageModel.default(), net, 1, i))
    assert write_inp(net) == before


def test_unknown_component_is_rejected():
    net = pump_chain()
    with pytest.raises(NetworkError):
        apply_scenario(net, DamageScenario.from_states({"nope": FAILED}))


def test_partial_damage_only_for_pipes():
    net = pump_chain()
    with pytest.raises(DamageModelError):
        apply_scenario(net, DamageScenario.from_states({"P": capacity(0.5)}))


def test_config_round_trip(tmp_path):
    model = DamageModel.default()
    path = tmp_path / "damage.ini"
    path.write_text(model.to_config())
    assert DamageModel.from_config(path) == model
    path.write_text("[damage]\npipes = undamaged 0.5, capacity:0.25 0.5\n")
    custom = DamageModel.from_config(path)
    assert dict(custom.pipes.entries) == {UNDAMAGED: 0.5, capacity(0.25): 0.5}
    assert custom.tanks == model.tanks


def test_state_parsing():
    assert DamageState.parse("undamaged") == UNDAMAGED
    assert DamageState.parse("failed") == FAILED
    assert DamageState.parse("capacity:0.1") == capacity(0.1)
    with pytest.raises(DamageModelError):
        DamageState.parse("broken")


def test_undamaged_view_constructor():
    net = pump_chain()
    assert DamagedNetwork.undamaged(net).routed_network() == net
