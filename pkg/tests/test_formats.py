import json
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photon_overlaps import formats
from photon_overlaps.core_model import (
    CountTable,
    ExperimentConfig,
    ExperimentDesign,
    FisherMatrix,
    MeshParameters,
    OverlapParameters,
    SchemaError,
    enumerate_outcomes,
)
from photon_overlaps.estimator import FitResult, FullParameters
from photon_overlaps.fisher import DesignResult, fig1_design
from photon_overlaps.interference import pmf
from photon_overlaps.interferometer import random_unitary


def _through_text(obj):
    doc = json.loads(formats.dumps(formats.encode(obj)))
    return formats.decode(doc)


finite = st.floats(-10, 10, allow_nan=False)
ratio = st.floats(0, 1, allow_nan=False)


@given(st.lists(ratio, min_size=3, max_size=3), finite)
def test_mesh_round_trip(ratios, alpha):
    m = MeshParameters(tuple(ratios), (alpha,))
    assert _through_text(m) == m


@given(st.floats(0, 0.5), st.floats(0, 0.5), st.floats(0, 0.5), finite)
def test_overlaps_round_trip(a, b, c, phase):
    o = OverlapParameters.three(a, b, c, phase)
    assert _through_text(o) == o


def test_unitary_round_trip(rng):
    u = random_unitary(4, rng)
    np.testing.assert_array_equal(_through_text(u), u)


def test_pmf_and_counts_round_trip(rng):
    p = pmf(random_unitary(3, rng), (1, 1, 1), np.eye(3))
    q = _through_text(p)
    assert q.outcomes == p.outcomes
    np.testing.assert_array_equal(q.probabilities, p.probabilities)
    t = CountTable(enumerate_outcomes(3, 3), np.arange(10), (2, 0, 1))
    t2 = _through_text(t)
    np.testing.assert_array_equal(t2.counts, t.counts)
    assert t2.sources == t.sources and t2.outcomes == t.outcomes


def test_design_round_trip(rng):
    d = ExperimentDesign(fig1_design(0.33).configs + (
        ExperimentConfig(input=(1, 1, 1), unitary=random_unitary(3, rng), sources=(1, 0, 2), label="u"),
    ), (1.0, 1.0, 1.0, 2.0))
    e = _through_text(d)
    assert e.weights == d.weights
    for a, b in zip(d.configs, e.configs):
        assert a.input == b.input and a.sources == b.sources and a.mesh == b.mesh and a.label == b.label
    np.testing.assert_array_equal(e.configs[3].unitary, d.configs[3].unitary)


def test_results_round_trip():
    f = FisherMatrix(np.array([[2.0, 0.1], [0.1, 1.0 / 3]]), ("a", "b"), 1)
    g = _through_text(f)
    np.testing.assert_array_equal(g.entries, f.entries)
    assert g.parameter_labels == f.parameter_labels and g.underflow_terms == 1

    theta = OverlapParameters.uniform(3, 0.7)
    dr = DesignResult(fig1_design(0.3), 1.25, f, [(1, 0.5), (2, 1.25)], False, theta)
    back = _through_text(dr)
    assert (back.score, back.optimizer_trace, back.converged, back.theta) == (1.25, dr.optimizer_trace, False, theta)

    est = FullParameters(OverlapParameters.three(0.9, 0.8, 0.7, 0.1), MeshParameters((0.5, 0.3, 1.0), (0.2,)))
    fr = FitResult(est, -123.456, f, True, [0.01, 0.02], 4)
    back = _through_text(fr)
    assert back.estimate == est
    assert (back.log_likelihood, back.tvd_per_config, back.restarts) == (-123.456, [0.01, 0.02], 4)


def test_stream_round_trip():
    out = enumerate_outcomes(3, 3)
    doc = json.loads(formats.dumps(formats.encode_stream((1, 2, 0), out, [3, 1, 4])))
    sources, outcomes, indices = formats.decode(doc)
    assert sources == (1, 2, 0) and outcomes == out and list(indices) == [3, 1, 4]


@pytest.mark.parametrize("doc", [
    {"magnitudes": [0.5]},
    {"schema": "overlaps/v2", "magnitudes": [0.5]},
    {"schema": "nothing/v1"},
    {"schema": "mesh/v1", "phases": []},
    {"schema": "counts/v1", "outcomes": [[1, 0]], "counts": [-1]},
    {"schema": "counts/v1", "outcomes": [[1, 0]], "counts": [1.5]},
    {"schema": "unitary/v1", "matrix": [[1, 0], [0, 1]]},
    [1, 2, 3],
])
def test_malformed_documents(doc):
    with pytest.raises(SchemaError):
        formats.decode(doc)


def test_load_object_checks_schema(tmp_path):
    path = tmp_path / "m.json"
    formats.atomic_write(path, formats.dumps(formats.encode(MeshParameters((0.5,), ()))))
    assert formats.load_object(path, "mesh").splitting_ratios == (0.5,)
    with pytest.raises(SchemaError):
        formats.load_object(path, "overlaps")
    with pytest.raises(SchemaError):
        formats.load_object(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{")
    with pytest.raises(SchemaError):
        formats.load_object(tmp_path / "bad.json")


def test_atomic_write_leaves_no_temporaries(tmp_path):
    target = tmp_path / "sub" / "out.txt"
    formats.atomic_write(target, "one")
    formats.atomic_write(target, "two")
    assert target.read_text() == "two"
    assert os.listdir(target.parent) == ["out.txt"]


def test_csv_floats_round_trip():
    values = [0.1, 1 / 3, 2.0**-60, 1e300, float("inf")]
    text = formats.csv_text(["k", "v"], [(k, v) for k, v in enumerate(values)])
    lines = text.splitlines()
    assert lines[0] == "k,v"
    assert [float(line.split(",")[1]) for line in lines[1:]] == values
    rows = formats.csv_text(["a"], [{"a": np.float64(0.3)}])
    assert rows == "a\n0.3\n"
