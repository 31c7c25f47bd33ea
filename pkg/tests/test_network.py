import math

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sewerrisk.network import (ArterialUndefinedError, Conduit, Junction, Network, NetworkError,
                               Outfall, Pump, StorageTank, downstream_path, extract_arterial,
                               validate)
from sewerrisk.synth import SynthesisParams, generate_synthetic

from conftest import pump_chain, single_pipe


def test_minimal_chain_is_valid():
    report = validate(single_pipe())
    assert report.ok and not report.violations


def test_dangling_endpoint():
    net = single_pipe()
    net = net.replace(conduits=[Conduit("C1", "J1", "NOPE", 100.0, 0.013, 0.5)])
    assert "dangling endpoint" in validate(net).kinds()


def test_two_outgoing_conduits():
    net = single_pipe()
    net = net.replace(conduits=[*net.conduits, Conduit("C2", "J1", "O1", 100.0, 0.013, 0.5)])
    assert "non-tree topology" in validate(net).kinds()


def test_cycle_and_unreachable_outfall():
    net = Network(
        junctions=[Junction("A", 2.0, 4.0), Junction("B", 1.0, 3.0)],
        outfalls=[Outfall("O", 0.0)],
        conduits=[Conduit("AB", "A", "B", 10, 0.013, 0.3), Conduit("BA", "B", "A", 10, 0.013, 0.3)],
    )
    kinds = validate(net).kinds()
    assert "cycle" in kinds or "unreachable outfall" in kinds


def test_nonpositive_slope_is_only_a_warning():
    net = single_pipe(slope=0.0)
    report = validate(net)
    assert report.ok
    assert report.warnings


def test_downstream_path_chain():
    net = pump_chain()
    assert [c.id for c in downstream_path(net, "A")] == ["A-B", "B-T", "C-Out"]
    assert [c.id for c in downstream_path(net, "C")] == ["C-Out"]
    assert downstream_path(net, "Out") == ()


def _walk(net, node):
    """Independent path walker: follow the unique outgoing link, keep conduits."""
    conduits = {c.id: c for c in net.conduits}
    out = {}
    for link in (*net.conduits, *net.pumps):
        out[link.from_node] = link
    path = []
    while node in out:
        link = out[node]
        if link.id in conduits:
            path.append(link.id)
        node = link.to_node
    return path


def test_downstream_path_matches_independent_walker(synthetic500):
    for nid in synthetic500.demand_nodes:
        assert [c.id for c in downstream_path(synthetic500, nid)] == _walk(synthetic500, nid)


def test_path_suffix_property(synthetic500):
    net = synthetic500
    for link in net.conduits:
        up = [c.id for c in downstream_path(net, link.from_node)]
        down = [c.id for c in downstream_path(net, link.to_node)]
        assert up[0] == link.id
        assert up[1:] == down


def test_arterial_chain_example():
    art, mapping = extract_arterial(pump_chain())
    assert set(art.nodes) == {"B", "T", "C", "Out"}
    assert {p.id for p in art.pumps} == {"P"}
    assert art.nodes["B"].base_inflow == 2.0
    assert mapping["A"] == "B" and mapping["B"] == "B" and mapping["C"] == "C"


def test_arterial_undefined_without_pumps():
    with pytest.raises(ArterialUndefinedError):
        extract_arterial(single_pipe())


def test_arterial_everything_downstream_of_pump():
    net = Network(
        junctions=[Junction("C", 10.0, 13.0, 0.5)],
        tanks=[StorageTank("T", 6.0, 4.0, 50.0, base_inflow=0.25)],
        outfalls=[Outfall("Out", 9.0)],
        conduits=[Conduit("C-Out", "C", "Out", 100.0, 0.013, 0.5)],
        pumps=[Pump("P", "T", "C", 1.0, 2.0, 0.5)],
    )
    art, mapping = extract_arterial(net)
    assert art == net
    assert all(mapping[n] == n for n in net.demand_nodes)


def _two_branch_network():
    js = [Junction(f"A{i}", 20.0 - i, 23.0, 0.125 * (i + 1)) for i in range(3)]
    js += [Junction(f"B{i}", 20.0 - i, 23.0, 0.0625 * (i + 1)) for i in range(3)]
    js += [Junction("M", 5.0, 9.0, 0.5), Junction("PA", 8.0, 12.0), Junction("PB", 8.0, 12.0)]
    tanks = [StorageTank("TA", 12.0, 4.0, 30.0), StorageTank("TB", 12.0, 4.0, 30.0)]
    cs = [Conduit("a0", "A0", "A1", 50, 0.013, 0.3), Conduit("a1", "A1", "A2", 50, 0.013, 0.3),
          Conduit("a2", "A2", "TA", 50, 0.013, 0.3, 0.0, 4.0),
          Conduit("b0", "B0", "B1", 50, 0.013, 0.3), Conduit("b1", "B1", "B2", 50, 0.013, 0.3),
          Conduit("b2", "B2", "TB", 50, 0.013, 0.3, 0.0, 4.0),
          Conduit("pa", "PA", "M", 50, 0.013, 0.3), Conduit("pb", "PB", "M", 50, 0.013, 0.3),
          Conduit("m", "M", "Out", 50, 0.013, 0.5)]
    pumps = [Pump("PumpA", "TA", "PA", 1.0, 2.0, 0.5), Pump("PumpB", "TB", "PB", 1.0, 2.0, 0.5)]
    return Network(junctions=js, tanks=tanks, outfalls=[Outfall("Out", 4.0)], conduits=cs,
                   pumps=pumps)


def _brute_force_arterial(net):
    g = nx.DiGraph()
    for link in (*net.conduits, *net.pumps):
        g.add_edge(link.from_node, link.to_node)
    seeds = set(net.tank_ids) | {p.from_node for p in net.pumps}
    seeds |= {c.from_node for c in net.conduits if c.to_node in net.tank_ids}
    keep = set(net.outfall_ids)
    for s in seeds:
        keep |= {s} | nx.descendants(g, s)
    return keep


def test_arterial_two_branches_against_brute_force():
    net = _two_branch_network()
    art, mapping = extract_arterial(net)
    assert set(art.nodes) == _brute_force_arterial(net)
    assert art.nodes["A2"].base_inflow == 0.125 + 0.25 + 0.375
    assert art.nodes["B2"].base_inflow == 0.0625 + 0.125 + 0.1875
    assert art.total_inflow() == net.total_inflow() == math.fsum(j.base_inflow for j in net.junctions)


@pytest.mark.parametrize("seed", range(8))
def test_arterial_properties_on_generated_networks(seed):
    net = generate_synthetic(SynthesisParams(node_count=80, pump_count=2), seed)
    art, mapping = extract_arterial(net)
    assert set(art.nodes) == _brute_force_arterial(net)
    assert art.total_inflow() == net.total_inflow()
    assert validate(art).ok
    # idempotent
    again, again_map = extract_arterial(art)
    assert again == art
    assert all(again_map[n] == n for n in art.demand_nodes)
    # mapping: total, fixed on arterial nodes, consistent with downstream paths
    for nid in net.demand_nodes:
        target = mapping[nid]
        assert target in art.nodes
        full = [c.id for c in downstream_path(net, nid) if c.id in art.links]
        arterial = [c.id for c in downstream_path(art, target)]
        if arterial:
            assert full[-len(arterial):] == arterial


def test_network_is_immutable_value():
    net = single_pipe()
    with pytest.raises((AttributeError, TypeError)):
        net.junctions = ()
    assert net == single_pipe()


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 40), st.integers(0, 2), st.integers(0, 2**32 - 1))
def test_generated_networks_validate(n, pumps, seed):
    pumps = min(pumps, max(0, n - 2))
    net = generate_synthetic(SynthesisParams(node_count=n, pump_count=pumps), seed)
    assert validate(net).ok
    assert len(net.nodes) == n


def test_unknown_downstream_path_node():
    with pytest.raises(NetworkError):
        downstream_path(single_pipe(), "missing")
