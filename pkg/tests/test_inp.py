import json
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sewerrisk.inp import (
    InpError, InpSemanticError, InpWarning, parse_inp, read_inp, write_geojson, write_inp,
    write_results_csv,
)
from sewerrisk.montecarlo import NodePmEstimate, expand_to_full
from sewerrisk.network import Junction, Outfall, extract_arterial
from sewerrisk.synth import SynthesisParams, generate_synthetic

from conftest import pump_chain, single_pipe

MINIMAL = """\
[JUNCTIONS]
;Name Elev MaxDepth
J1 10.0 3.0 0 0 0

[OUTFALLS]
O1 9.0 FREE

[CONDUITS]
C1 J1 O1 100 0.013 0 0

[XSECTIONS]
C1 CIRCULAR 0.5 0 0 0 1

[DWF]
J1 FLOW 0.02
"""


def test_minimal_document():
    net = parse_inp(MINIMAL)
    assert set(net.nodes) == {"J1", "O1"}
    j = net.nodes["J1"]
    assert (j.invert_elev, j.rim_elev, j.base_inflow) == (10.0, 13.0, 0.02)
    assert net.conduits[0].diameter == 0.5


def test_undefined_node_is_a_semantic_error_with_line():
    text = MINIMAL.replace("C1 J1 O1", "C1 J9 O1")
    with pytest.raises(InpSemanticError) as exc:
        parse_inp(text)
    assert "J9" in str(exc.value)
    assert "line 9" in str(exc.value)
    assert exc.value.line == 9


def test_unknown_section_is_skipped_with_warning():
    text = MINIMAL + "\n[WEIRS]\nW1 J1 O1 TRANSVERSE 0 3.33\n"
    with pytest.warns(InpWarning, match="section WEIRS ignored"):
        net = parse_inp(text)
    assert len(net.nodes) == 2
    _, notes = read_inp(text)
    assert notes == ["section WEIRS ignored"]


def test_malformed_number_reports_line():
    with pytest.raises(InpError, match="line 9"):
        parse_inp(MINIMAL.replace("C1 J1 O1 100", "C1 J1 O1 abc"))


def test_missing_fields_report_line():
    with pytest.raises(InpError, match="line 3"):
        parse_inp(MINIMAL.replace("J1 10.0 3.0 0 0 0", "J1 10.0"))


def test_non_circular_shape_is_rejected():
    with pytest.raises(InpError, match="RECT_CLOSED"):
        parse_inp(MINIMAL.replace("CIRCULAR 0.5", "RECT_CLOSED 0.5"))


def test_foreign_units_are_rejected():
    with pytest.raises(InpError):
        parse_inp("[OPTIONS]\nFLOW_UNITS CFS\n" + MINIMAL)
    with pytest.raises(InpError):
        parse_inp(";units US\n" + MINIMAL)


def test_inflows_section_and_comments():
    text = MINIMAL.replace("[DWF]\nJ1 FLOW 0.02\n",
                           "[INFLOWS]\nJ1 FLOW \"\" FLOW 1.0 2.0 0.01 ; doubled\n")
    assert parse_inp(text).nodes["J1"].base_inflow == 0.02


def test_patterns_round_trip():
    pat = "\n".join(["[PATTERNS]", "DAY HOURLY " + " ".join(["1.0"] * 6)]
                    + ["DAY " + " ".join([repr(0.5 + i / 10) for i in range(6)])] * 3)
    text = MINIMAL.replace("J1 FLOW 0.02", "J1 FLOW 0.02 DAY") + pat + "\n"
    net = parse_inp(text)
    assert net.nodes["J1"].pattern_id == "DAY"
    assert len(net.patterns["DAY"]) == 24
    assert parse_inp(write_inp(net)) == net


def test_pattern_length_checked():
    text = MINIMAL + "[PATTERNS]\nDAY HOURLY 1 1 1\n"
    with pytest.raises(InpError):
        parse_inp(text)


def test_lenient_read_defers_to_validation():
    net, _ = read_inp(MINIMAL.replace("C1 J1 O1", "C1 J9 O1"), strict=False)
    assert net.conduits[0].from_node == "J9"


@pytest.mark.parametrize("net", [pump_chain(), single_pipe(inflow=0.3)], ids=["pumps", "pipe"])
def test_round_trip_fixtures(net):
    assert parse_inp(write_inp(net)) == net


def test_round_trip_arterial_output(synthetic500):
    art, _ = extract_arterial(synthetic500)
    assert parse_inp(write_inp(art)) == art
    assert parse_inp(write_inp(synthetic500)) == synthetic500


def test_round_trip_fixed_outfall():
    net = single_pipe().replace(outfalls=[Outfall("O1", 10.0, (200.0, 0.0), 10.37)])
    assert parse_inp(write_inp(net)) == net


def test_rim_without_exact_depth_survives():
    # no double d gives 0.853544219611359 + d == 3.691117537279513
    net = single_pipe().replace(junctions=[
        Junction("J1", 0.853544219611359, 3.691117537279513, 0.1, None, (0.0, 0.0))],
        outfalls=[Outfall("O1", 0.0, (200.0, 0.0))])
    text = write_inp(net)
    assert ";rim=3.691117537279513" in text
    assert parse_inp(text) == net


_finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 60), st.integers(0, 3), st.integers(0, 2**31), st.data())
def test_round_trip_with_arbitrary_floats(n, pumps, seed, data):
    pumps = min(pumps, max(0, n - 2))
    net = generate_synthetic(SynthesisParams(node_count=n, pump_count=pumps), seed)
    jitter = [data.draw(st.floats(1e-9, 1e-3)) for _ in net.junctions]
    net = net.replace(junctions=[
        Junction(j.id, j.invert_elev + e, j.rim_elev + 7 * e, j.base_inflow * (1 + e),
                 j.pattern_id, (data.draw(_finite), data.draw(_finite)))
        for j, e in zip(net.junctions, jitter)])
    assert parse_inp(write_inp(net)) == net


# --- results output ----------------------------------------------------------------------


def _est(nid, mean):
    return NodePmEstimate(nid, mean, 100, 0.1 if mean < 1 else 0.0)


def test_geojson_two_nodes():
    net = single_pipe()
    doc = json.loads(write_geojson(net, {"J1": _est("J1", 1.0), "O1": _est("O1", 0.5)}, "DF"))
    assert doc["type"] == "FeatureCollection"
    feats = doc["features"]
    assert len(feats) == 2
    props = {f["properties"]["node_id"]: f["properties"] for f in feats}
    assert props["J1"] == {"node_id": "J1", "pm_mean": 1.0, "delta_pm": 0.0, "n_sims": 100,
                           "model_name": "DF"}
    assert props["O1"]["pm_mean"] == 0.5
    assert feats[1]["geometry"] == {"type": "Point", "coordinates": [200.0, 0.0]}


def test_geojson_empty_and_unknown():
    net = single_pipe()
    assert json.loads(write_geojson(net, {}, "CF")) == {"type": "FeatureCollection",
                                                        "features": []}
    with pytest.raises(KeyError):
        write_geojson(net, {"nope": _est("nope", 1.0)}, "CF")


def test_geojson_of_expanded_arterial_results(synthetic60):
    art, mapping = extract_arterial(synthetic60)
    routed = {n: _est(n, 0.25) for n in art.nodes}
    full = expand_to_full(routed, mapping, synthetic60)
    doc = json.loads(write_geojson(synthetic60, full, "CA"))
    ids = [f["properties"]["node_id"] for f in doc["features"]]
    assert sorted(ids) == sorted(synthetic60.nodes)
    assert len(ids) == len(set(ids))


def test_results_csv():
    text = write_results_csv({"A": _est("A", 0.5)}, "KF")
    assert text.splitlines() == ["node_id,model,pm_mean,delta_pm,n_sims", "A,KF,0.5,0.1,100"]


def test_write_is_deterministic(synthetic60):
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert write_inp(synthetic60) == write_inp(parse_inp(write_inp(synthetic60)))
