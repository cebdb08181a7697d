import math

import numpy as np
import pytest

from photon_overlaps.core_model import (
    ExperimentConfig,
    ExperimentDesign,
    FisherMatrix,
    MeshParameters,
    OverlapParameters,
    SchemaError,
)
from photon_overlaps.fisher import (
    CYCLIC_SOURCES,
    _fig1_objective,
    canonical_config,
    canonical_mesh,
    compare_protocols,
    configs_equivalent,
    d_optimality,
    fig1_design,
    fim,
    hom_baseline_fim,
    hom_config,
    hom_design,
    hom_information,
    inverse_metrics,
    optimal_second_ratio,
    optimize_design,
    summed_fim,
)
from photon_overlaps.interferometer import beamsplitter, random_unitary

from conftest import interior_overlaps, random_overlaps


@pytest.mark.parametrize("method", ["score", "hessian"])
@pytest.mark.parametrize("x", [0.3, 0.6, 0.9])
def test_hom_information_closed_form(method, x):
    theta = OverlapParameters.uniform(2, x)
    f = fim(ExperimentConfig(input=(1, 1), unitary=beamsplitter(0.5)), theta, method=method)
    assert f.entries[0, 0] == pytest.approx(4 * x**2 / (1 - x**4), rel=1e-8)
    assert f.parameter_labels == ("x12",)


def test_score_and_hessian_agree(rng):
    for _ in range(10):
        theta = interior_overlaps(rng)
        cfg = ExperimentConfig(input=(1, 1, 1), unitary=random_unitary(3, rng))
        a = fim(cfg, theta, "score").entries
        b = fim(cfg, theta, "hessian").entries
        np.testing.assert_allclose(b, a, rtol=1e-6, atol=1e-9 * np.abs(a).max())


def test_fim_is_symmetric_psd(rng):
    theta = random_overlaps(rng)
    f = fim(ExperimentConfig(input=(1, 1, 1), unitary=random_unitary(3, rng)), theta)
    assert f.is_valid()


def test_unknown_method():
    with pytest.raises(SchemaError):
        fim(hom_config((0, 1)), OverlapParameters.uniform(2, 0.5), method="magic")


def test_source_outside_theta():
    with pytest.raises(SchemaError):
        fim(hom_config((0, 2)), OverlapParameters.uniform(2, 0.5))


def test_summed_fim_is_weighted_mean():
    theta = OverlapParameters.three(0.8, 0.7, 0.6)
    design = fig1_design(0.35)
    total = summed_fim(design, theta).entries
    parts = sum(fim(c, theta).entries for c in design.configs) / 3
    np.testing.assert_allclose(total, parts)


def test_hom_design_matches_analytic_baseline():
    theta = OverlapParameters.three(0.8, 0.7, 0.6)
    numeric = summed_fim(hom_design(3), theta)
    np.testing.assert_allclose(numeric.entries, hom_baseline_fim(theta).entries, rtol=1e-10, atol=1e-14)
    np.testing.assert_allclose(np.diag(hom_baseline_fim(theta).entries), hom_information([0.8, 0.7, 0.6]) / 3)


def test_inverse_metrics():
    det_inv, tr_inv, max_inv = inverse_metrics(FisherMatrix(np.diag([2.0, 4.0])))
    assert det_inv == pytest.approx(1 / 8)
    assert tr_inv == pytest.approx(0.75)
    assert max_inv == pytest.approx(0.5)
    assert inverse_metrics(np.diag([1.0, 0.0])) == (math.inf, math.inf, math.inf)
    assert d_optimality(np.diag([2.0, 3.0])) == pytest.approx(6.0)


def test_fig1_curve_symmetric_in_second_ratio():
    theta = OverlapParameters.uniform(3, 0.7)
    for q in (0.1, 0.3, 0.45):
        assert _fig1_objective(q, theta) == pytest.approx(_fig1_objective(1 - q, theta), abs=1e-9)


def test_optimal_second_ratio_endpoints():
    assert 0.323 <= optimal_second_ratio(0.999) <= 0.343
    assert optimal_second_ratio(0.02) == pytest.approx(0.5, abs=0.01)
    with pytest.raises(SchemaError):
        optimal_second_ratio(1.0)


def test_optimal_second_ratio_is_a_maximum():
    x = 0.8
    q = optimal_second_ratio(x)
    theta = OverlapParameters.uniform(3, x)
    best = _fig1_objective(q, theta)
    for dq in (-0.01, 0.01):
        assert _fig1_objective(q + dq, theta) < best


def test_canonical_mesh_folds_symmetries():
    m = canonical_mesh(MeshParameters((0.5, 0.7, 0.0), (0.3,)))
    assert m.splitting_ratios == (0.5, pytest.approx(0.3), 1.0)
    assert m.phases == (0.0,)
    m = canonical_mesh(MeshParameters((0.5, 0.7, 0.2), (0.3,)))
    assert m.splitting_ratios[2] == pytest.approx(0.8)
    assert m.phases[0] == pytest.approx(0.3 + np.pi - 2 * np.pi)


def test_canonical_config_preserves_experiment(rng):
    theta = random_overlaps(rng)
    mesh = MeshParameters((0.9, 0.6, 0.3), (1.3,))
    cfg = ExperimentConfig(input=(1, 1, 1), mesh=mesh, sources=(2, 0, 1))
    can = canonical_config(cfg)
    assert configs_equivalent(cfg, can)
    a = np.sort(fim(cfg, theta).entries.ravel())
    b = np.sort(fim(can, theta).entries.ravel())
    np.testing.assert_allclose(a, b, atol=1e-8)


def test_configs_equivalent_detects_relabelling():
    design = fig1_design(0.35)
    a, b, _ = design.configs
    assert configs_equivalent(a, b)
    other = ExperimentConfig(input=(1, 1, 1), mesh=MeshParameters((0.5, 0.2, 1.0), (0.0,)))
    assert not configs_equivalent(a, other)


@pytest.mark.parametrize("x", [0.5, 0.7, 0.9])
def test_fig1_design_beats_hom(x):
    theta = OverlapParameters.uniform(3, x)
    rows = compare_protocols(theta, [fig1_design(optimal_second_ratio(x))], ["fig1"])
    assert [r["protocol"] for r in rows] == ["fig1", "hom_baseline"]
    assert rows[0]["det_inv"] < rows[1]["det_inv"]


def test_optimize_design_short_run_is_deterministic():
    theta = OverlapParameters.uniform(3, 0.8)
    a = optimize_design(theta, restarts=2, seed=5, maxiter=400)
    b = optimize_design(theta, restarts=2, seed=5, maxiter=400)
    assert a.score == b.score
    assert [c.mesh for c in a.design.configs] == [c.mesh for c in b.design.configs]
    assert a.fim.is_valid()
    assert a.score == pytest.approx(d_optimality(a.fim))
    assert a.optimizer_trace


def test_optimize_design_rejects_boundary_overlaps():
    with pytest.raises(SchemaError):
        optimize_design(OverlapParameters.uniform(3, 1.0), restarts=1)
    with pytest.raises(SchemaError):
        optimize_design(OverlapParameters.uniform(4, 0.5), restarts=1)


def test_cyclic_routings_cover_every_photon_in_every_mode():
    for mode in range(3):
        assert sorted(src[mode] for src in CYCLIC_SOURCES) == [0, 1, 2]


def test_identity_interferometer_carries_no_information():
    theta = OverlapParameters.three(0.7, 0.6, 0.5)
    f = fim(ExperimentConfig(input=(1, 1, 1), unitary=np.eye(3)), theta)
    np.testing.assert_array_equal(f.entries, 0)


def test_fig1_hessian_matches_score_at_equal_overlaps():
    theta = OverlapParameters.uniform(3, 0.9)
    for cfg in fig1_design(0.35).configs:
        a = fim(cfg, theta, "score").entries
        b = fim(cfg, theta, "hessian").entries
        assert np.max(np.abs(a - b)) <= 1e-6 * np.max(np.abs(a))


def test_richardson_step_halving(rng):
    # without extrapolation the central-difference error is O(h^2)
    for _ in range(10):
        theta = interior_overlaps(rng)
        cfg = ExperimentConfig(input=(1, 1, 1), unitary=random_unitary(3, rng))
        exact = fim(cfg, theta, "score").entries
        e1 = np.max(np.abs(fim(cfg, theta, "hessian", step=2e-3, richardson=False).entries - exact))
        e2 = np.max(np.abs(fim(cfg, theta, "hessian", step=1e-3, richardson=False).entries - exact))
        assert e2 < 0.35 * e1


def test_summed_fim_normalization():
    theta = OverlapParameters.three(0.8, 0.7, 0.6)
    cfg = fig1_design(0.3).configs[0]
    single = fim(cfg, theta).entries
    np.testing.assert_allclose(summed_fim(ExperimentDesign((cfg,)), theta).entries, single)
    np.testing.assert_allclose(summed_fim(ExperimentDesign((cfg, cfg, cfg)), theta).entries, single)


def test_permuted_fig1_design_is_symmetric_in_overlap_axes():
    f = summed_fim(fig1_design(0.35), OverlapParameters.uniform(3, 0.8)).entries
    for perm in ([1, 2, 0], [2, 0, 1]):
        np.testing.assert_allclose(f[np.ix_(perm, perm)], f, atol=1e-12)


def test_relabelling_photons_permutes_fim():
    theta = OverlapParameters.three(0.8, 0.6, 0.5)
    mesh = MeshParameters((0.5, 0.35, 1.0), (0.0,))
    base = fim(ExperimentConfig(input=(1, 1, 1), mesh=mesh, sources=(0, 1, 2)), theta).entries
    # swapping sources 0 and 1 exchanges x13 and x23
    swapped = OverlapParameters.three(0.8, 0.5, 0.6)
    moved = fim(ExperimentConfig(input=(1, 1, 1), mesh=mesh, sources=(1, 0, 2)), swapped).entries
    axes = [0, 2, 1]
    np.testing.assert_allclose(moved[np.ix_(axes, axes)], base, atol=1e-12)


def test_inverse_metric_examples():
    assert d_optimality(np.eye(3)) == 1.0
    assert inverse_metrics(np.eye(3)) == (1.0, 3.0, 1.0)
    assert d_optimality(2 * np.eye(3)) == pytest.approx(8.0)
    assert inverse_metrics(2 * np.eye(3)) == pytest.approx((0.125, 1.5, 0.5))
    assert d_optimality(np.zeros((3, 3))) == 0.0
    assert inverse_metrics(np.zeros((3, 3))) == (math.inf, math.inf, math.inf)


def test_hom_baseline_values():
    f = hom_baseline_fim(OverlapParameters.uniform(3, 0.9)).entries
    np.testing.assert_allclose(np.diag(f), 9.421343413783077 / 3)
    assert hom_baseline_fim(OverlapParameters.uniform(3, 1e-6)).entries.max() < 1e-11


def test_second_ratio_curve_range():
    from photon_overlaps.fisher import second_ratio_curve

    curve = second_ratio_curve(np.linspace(0.1, 0.9, 9))
    qs = [q for _, q in curve]
    assert all(1 / 3 - 0.02 <= q <= 0.5 + 0.02 for q in qs)
    # more distinguishable photons favour the balanced second coupler
    assert qs[0] == pytest.approx(0.5, abs=1e-6)
    assert qs == sorted(qs, reverse=True) or max(np.diff(qs)) < 0.01


def test_hom_design_against_itself():
    theta = OverlapParameters.three(0.8, 0.7, 0.6)
    rows = compare_protocols(theta, [hom_design(3), hom_design(3)], ["a", "b"])
    assert {k: v for k, v in rows[0].items() if k != "protocol"} == {k: v for k, v in rows[1].items() if k != "protocol"}


def test_four_photon_cascade_report():
    from photon_overlaps.interferometer import cascade_protocol

    rng = np.random.Generator(np.random.PCG64(4))
    theta = OverlapParameters.uniform(4, 0.8)
    u = cascade_protocol(4, [0.5, *rng.uniform(0.2, 0.8, 2)])
    single = ExperimentDesign((ExperimentConfig(input=(1, 1, 1, 1), unitary=u),))
    routed = ExperimentDesign(tuple(
        ExperimentConfig(input=(1, 1, 1, 1), unitary=u, sources=tuple(np.roll(range(4), k))) for k in range(4)
    ))
    rows = compare_protocols(theta, [single, routed, hom_design(4)], ["single", "routed", "hom_pairs"])
    assert [r["protocol"] for r in rows] == ["single", "routed", "hom_pairs", "hom_baseline"]
    # one routing cannot separate all six overlaps; cycling the sources can
    assert rows[0]["det_inv"] == math.inf
    assert np.isfinite(rows[1]["det_inv"])
    assert rows[2]["det_inv"] == pytest.approx(rows[3]["det_inv"], rel=1e-9)
