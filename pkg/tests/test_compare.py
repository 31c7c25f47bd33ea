import csv
import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sewerrisk.compare import ModelRunError, average_pm, mae, run_matrix
from sewerrisk.damage import DamageModel
from sewerrisk.hydraulics import SolverConfig
from sewerrisk.montecarlo import ALL_MODELS, MODEL_NAMES, ModelSpec, NodePmEstimate

from conftest import single_pipe

SHORT = SolverConfig(dt=2.0, duration=900.0)

_pm = st.floats(0.0, 1.0)


@given(st.integers(1, 30).flatmap(lambda n: st.tuples(*[st.lists(_pm, min_size=n, max_size=n)] * 3)))
def test_mae_is_a_pseudometric(vectors):
    a, b, c = ({str(i): v for i, v in enumerate(vec)} for vec in vectors)
    assert mae(a, a) == 0.0
    assert mae(a, b) == mae(b, a) >= 0.0
    assert mae(a, c) <= mae(a, b) + mae(b, c) + 1e-12


def test_mae_hand_values():
    a = {"x": 1.0, "y": 0.5}
    b = {"x": NodePmEstimate("x", 0.5, 10, 0.1), "y": NodePmEstimate("y", 0.5, 10, 0.1)}
    assert mae(a, b) == 0.25
    assert average_pm(b) == 0.5
    with pytest.raises(ValueError):
        mae(a, {"x": 1.0})
    with pytest.raises(ValueError):
        mae({}, {})


@pytest.fixture(scope="module")
def undamaged_report(synthetic60):
    return run_matrix(synthetic60, DamageModel.undamaged(), SHORT, seed=1)


def test_undamaged_matrix_is_all_ones(undamaged_report):
    rep = undamaged_report
    assert rep.models == MODEL_NAMES
    assert all(v == 1.0 for v in rep.average.values())
    assert all(v == 0.0 for v in rep.mae_vs_baseline.values())
    assert rep.mae_vs_baseline["DF"] == 0.0
    assert set(rep.pairwise) == {("KF", "CF"), ("KA", "CA"), ("DF", "CF")}
    assert rep.pm_table().shape == (len(rep.node_ids), 6)


def test_report_outputs(undamaged_report):
    rep = undamaged_report
    kv = dict(line.split("=", 1) for line in rep.key_values().splitlines())
    assert kv["baseline"] == "DF" and kv["CA.average_pm"] == "1.0"
    assert "time" not in rep.key_values()
    rows = list(csv.reader(io.StringIO(rep.scatter_csv("DF", "KA"))))
    assert rows[0] == ["node_id", "pm_baseline", "pm_model"]
    assert [r[0] for r in rows[1:]] == list(rep.node_ids)
    assert len(rep.scatter_pairs()) == 9
    assert "pairwise MAE" in rep.text()


def test_failure_names_model_and_keeps_finished_results():
    done = []
    with pytest.raises(ModelRunError) as exc:
        run_matrix(single_pipe(inflow=0.1), config=SHORT, seed=1,
                   on_result=lambda r: done.append(r.spec.name))
    assert exc.value.model == "DA"
    assert done == ["DF", "KF", "CF"]


def test_subset_of_models(synthetic60):
    specs = [ModelSpec.from_name(n) for n in ("CF", "CA")]
    rep = run_matrix(synthetic60, config=SHORT, seed=2, crn=True, models=specs)
    assert rep.models == ("CF", "CA")
    assert rep.mae_vs_baseline == {}
    assert rep.pairwise == {}
    assert set(rep.average) == {"CF", "CA"}


def test_all_models_listed():
    assert tuple(s.name for s in ALL_MODELS) == MODEL_NAMES
