import json

import numpy as np
import pytest
from scipy import stats

from latgauss.harness import (
    CRITERIA,
    ExperimentSpec,
    ReportRecord,
    chi2_tv,
    gen_instance,
    instance_hash,
    run_experiment,
    summarize,
    write_report,
)
from latgauss.lattice import cvp_enum


def test_instances_are_deterministic():
    a = gen_instance(3, 10, 42)
    b = gen_instance(3, 10, 42)
    assert a == b
    assert instance_hash(*a) == instance_hash(*b)
    assert instance_hash(*a) != instance_hash(*gen_instance(3, 10, 43))


@pytest.mark.parametrize("seed", range(5))
def test_instances_have_full_rank_and_bounded_entries(seed):
    B, t = gen_instance(3, 10, seed)
    assert abs(np.linalg.det(B.matrix)) > 0.5
    assert np.abs(B.matrix).max() <= 10
    assert len(t) == 3


def test_near_lattice_without_noise_is_a_lattice_point():
    B, t = gen_instance(4, 10, 7, "near-lattice", noise=0.0)
    assert cvp_enum(B, t).dist2 == pytest.approx(0.0, abs=1e-9)


def test_deep_hole_targets_are_half_lattice_points():
    B, t = gen_instance(3, 10, 8, "deep-hole-ish")
    z = B.coefficients(t)
    assert all((2 * c).denominator == 1 for c in z)


def test_bad_instance_arguments():
    with pytest.raises(ValueError):
        gen_instance(0, 10, 0)
    with pytest.raises(ValueError):
        gen_instance(2, 10, 0, "sideways")


# --- statistics ----------------------------------------------------------


def test_chi2_point_mass():
    stat, p, tv = chi2_tv({(0, 0): 5000}, {(0, 0): 1.0})
    assert stat == 0.0 and tv == 0.0 and p == 1.0


def test_chi2_disjoint_supports():
    stat, p, tv = chi2_tv({1: 2000}, {0: 1.0})
    assert tv == 1.0 and p == 0.0


def test_chi2_rejects_bad_inputs():
    with pytest.raises(ValueError):
        chi2_tv({0: 2000}, {0: 0.5})
    with pytest.raises(ValueError):
        chi2_tv({0: 10}, {0: 1.0})
    with pytest.raises(ValueError):
        chi2_tv({(0,): 2000}, {(0, 1): 1.0})


def test_chi2_pvalues_are_uniform_under_the_null():
    rng = np.random.default_rng(0)
    probs = np.array([0.4, 0.3, 0.2, 0.07, 0.03])
    expected = dict(enumerate(probs))
    pvals = []
    for _ in range(300):
        counts = rng.multinomial(2000, probs)
        pvals.append(chi2_tv(dict(enumerate(counts.tolist())), expected)[1])
    assert stats.kstest(pvals, "uniform").pvalue > 1e-3


# --- specs and reports ---------------------------------------------------


def test_spec_validation():
    with pytest.raises(ValueError):
        ExperimentSpec("nonsense")
    with pytest.raises(ValueError):
        ExperimentSpec("bench", trials=0)
    with pytest.raises(ValueError):
        ExperimentSpec("bench", dims=[99])


def test_record_format_has_fixed_field_order():
    r = ReportRecord("cvp-equivalence", "abc", "pass_rate", 1.0, 0.99, True, ">=")
    assert str(r) == "experiment=cvp-equivalence instance=abc metric=pass_rate value=1 tolerance=0.99 op=>= pass=1"


def test_write_report(tmp_path):
    recs = [ReportRecord("x", "-", "m", 0.5, 1.0, True), ReportRecord("x", "-", "n", 2.0, 1.0, False)]
    path = tmp_path / "rep.txt"
    write_report(recs, path)
    assert path.read_text().count("\n") == 2
    data = json.loads((tmp_path / "rep.txt.json").read_text())
    assert data["summary"] == summarize(recs)
    assert data["summary"]["failed"] == 1


def test_every_criterion_has_a_spec():
    assert sorted(CRITERIA) == list(range(1, 11))


def test_reports_are_reproducible():
    spec = ExperimentSpec("identity-suite", [1, 2], 6, seed=11)
    a = [str(r) for r in run_experiment(spec)]
    b = [str(r) for r in run_experiment(spec)]
    assert a == b


def test_small_suites_do_not_pass_vacuously():
    recs = run_experiment(ExperimentSpec("tail-audit", [1], 2, seed=1))
    trials = [r for r in recs if r.metric == "trials"]
    assert trials and not trials[0].passed
