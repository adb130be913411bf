import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latgauss.errors import KleinParameterError
from latgauss.gaussian import (
    GaussianParam,
    check_rs_holder,
    check_rs_identity,
    coset_ladder,
    coset_mass,
    coset_masses,
    exact_distribution,
    klein_law,
    klein_threshold,
    log_theta_shift,
    mass,
    max_coset_log_mass,
    m_target,
    rho,
    sample_1d_many,
    sample_exact,
    sample_klein,
    support,
    tail_bound,
    tail_radius,
)
from latgauss.harness import chi2_tv
from latgauss.lattice import Basis, ShiftedLattice, cvp_enum

# reference sums evaluated with mpmath at 30 digits
RHO_Z = 1.08643481121330801457531612151
RHO_2Z = 1.00000697468471241799127935746
RHO_ODD = 0.0864278365285955965840367640545
M_TARGET_Z = 1.08642723372588979204387560237
RHO_Z_SHIFT_04_S05 = 0.144752431958038167652441754138

Z1 = Basis([[1]])
Z2 = Basis([[1, 0], [0, 1]])


def test_rho_values():
    assert rho(1, [0, 0]) == 1.0
    assert rho(1, [1, 0]) == pytest.approx(0.04321391826, rel=1e-10)
    assert rho(2, [1, 1]) == pytest.approx(math.exp(-math.pi / 2))


def test_gaussian_param_halving_is_exact():
    s = GaussianParam(3.0, 4)
    assert s.value == 12.0
    t = s
    for _ in range(4):
        t = t.halved()
    assert t.value == 3.0 and t.base == s.base
    with pytest.raises(ValueError):
        GaussianParam(0.0)


def test_masses_of_the_integers():
    m = mass(Z1, 1.0)
    assert m.value == pytest.approx(RHO_Z, rel=1e-12)
    assert m.rel_err <= 1e-12
    cm = coset_masses(Z1, 1.0)
    assert cm[0].value == pytest.approx(RHO_2Z, rel=1e-12)
    assert cm[1].value == pytest.approx(RHO_ODD, rel=1e-12)
    assert mass(Z1, 0.5, t=[0.4]).value == pytest.approx(RHO_Z_SHIFT_04_S05, rel=1e-12)


def test_m_target_values():
    assert m_target(Z1, 1.0) == pytest.approx(M_TARGET_Z, rel=1e-12)
    assert m_target(Z1, 0.05) == pytest.approx(1.0)
    assert m_target(Z2, 100.0) == pytest.approx(4.0, rel=1e-9)


def test_coset_partition_sums_to_total():
    B = Basis([[2, 1], [-1, 3]])
    t = [0.3, -1.1]
    total = mass(B, 1.7, t=t).value
    parts = coset_masses(B, 1.7, t=t)
    assert sum(p.value for p in parts.values()) == pytest.approx(total, rel=2e-12)


def test_half_shift_coset_tie():
    # (0,0) and (1,0) sit at the same distance from (1/2, 0)
    cm = coset_masses(Z2, 1.0, t=[0.5, 0])
    assert cm[0].value == pytest.approx(cm[1].value, rel=1e-14)
    assert max(cm, key=lambda k: cm[k].value) in (0, 1)
    assert cm[0].value > cm[2].value


@settings(max_examples=20, deadline=None)
@given(st.floats(0.05, 20.0), st.floats(-3.0, 3.0))
def test_log_theta_shift_matches_direct_sum(s, c):
    ks = np.arange(math.floor(c) - 400, math.floor(c) + 401)
    direct = math.log(math.fsum(np.exp(-math.pi * (ks - c) ** 2 / s**2)))
    assert float(log_theta_shift(np.array([c]), s)[0]) == pytest.approx(direct, rel=1e-12, abs=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.integers(-4, 4), st.integers(-4, 4), st.integers(-4, 4), st.floats(0.3, 3.0))
def test_mass_relative_bounds(a, b, c, s):
    B = Basis([[3, a], [b, 4 + abs(c)]])
    t = np.array([0.37 * a, -0.21 * c])
    d2 = cvp_enum(B, t).dist2
    ratio = mass(B, s, t=t).value / mass(B, s).value
    assert math.exp(-math.pi * d2 / s**2) * (1 - 1e-9) <= ratio <= 1 + 1e-9


def test_tail_radius_and_bound_agree():
    r = tail_radius(3, 0.5, 1e-6)
    assert tail_bound(3, 0.5, r) <= 1e-6 * (1 + 1e-9)
    assert tail_bound(3, 0.5, r * 0.99) > 1e-6
    assert tail_bound(2, 0.0, 0.1) == 1.0


def test_support_tail_is_small():
    sup = support(Z2, 2.0, 1e-12, t=[0.3, 0.4])
    assert sup.tail <= 1e-12 * (1 + 1e-9)
    assert sup.d2 == pytest.approx(0.3**2 + 0.4**2)


# --- 1-D sampler ---------------------------------------------------------


def test_1d_sampler_small_width_concentrates():
    rng = np.random.default_rng(0)
    assert np.all(sample_1d_many(np.full(10_000, 0.2), 0.01, rng) == 0)


def test_1d_sampler_probability_of_zero():
    rng = np.random.default_rng(1)
    x = sample_1d_many(np.zeros(200_000), 1.0, rng)
    p0 = 1 / RHO_Z
    sigma = math.sqrt(p0 * (1 - p0) / len(x))
    assert abs((x == 0).mean() - p0) < 5 * sigma


def test_1d_sampler_symmetry_and_law():
    rng = np.random.default_rng(2)
    x = sample_1d_many(np.zeros(100_000), 1.5, rng)
    obs = {int(k): int(v) for k, v in zip(*np.unique(x, return_counts=True))}
    flipped = {-k: v for k, v in obs.items()}
    # symmetric law: the mirrored histogram passes against the exact one too
    Z, p = exact_distribution(Z1, 1.5)
    law = {int(z[0]): float(q) for z, q in zip(Z, p)}
    for counts in (obs, flipped):
        _, pval, tv = chi2_tv(counts, law)
        assert pval > 1e-3 and tv < 0.01


def test_1d_sampler_wide_window():
    rng = np.random.default_rng(3)
    x = sample_1d_many(np.full(50_000, 0.5), 500.0, rng)
    assert abs(x.mean() - 0.5) < 5 * 500 / math.sqrt(2 * math.pi) / math.sqrt(len(x))
    assert x.std() == pytest.approx(500 / math.sqrt(2 * math.pi), rel=0.03)


# --- Klein sampler -------------------------------------------------------


def test_klein_rejects_small_parameter():
    B = Basis([[1, 0], [3, 100]])
    with pytest.raises(KleinParameterError):
        sample_klein(B, klein_threshold(B.gs) * 0.9, 10, np.random.default_rng(0))


def test_klein_on_integers_matches_exact():
    rng = np.random.default_rng(4)
    t = [0.5, 0.5]
    Z = sample_klein(Z2, 3.0, 100_000, rng, t=t)
    rows, counts = np.unique(Z, axis=0, return_counts=True)
    obs = {tuple(r): int(c) for r, c in zip(rows, counts)}
    E, p = exact_distribution(Z2, 3.0, t=t)
    _, pval, tv = chi2_tv(obs, {tuple(e): float(q) for e, q in zip(E, p)})
    assert tv <= 0.02 and pval > 1e-3


def test_klein_law_equals_exact_above_threshold():
    B = Basis([[2, 1], [1, 3]])
    s = klein_threshold(B.gs) * 2
    E, p = exact_distribution(B, s, t=[0.2, 0.7])
    q = klein_law(B, s, E, t=[0.2, 0.7])
    assert 0.5 * np.abs(p - q).sum() < 1e-6


def test_klein_huge_parameter_equidistributes_labels():
    rng = np.random.default_rng(5)
    B = Basis([[2, 1], [1, 3]])
    Z = sample_klein(B, 1e6 * 4, 40_000, rng)
    keys = (Z[:, 0] & 1) + 2 * (Z[:, 1] & 1)
    obs = {int(k): int(v) for k, v in zip(*np.unique(keys, return_counts=True))}
    _, pval, _ = chi2_tv(obs, {k: 0.25 for k in range(4)})
    assert pval > 1e-3


def test_exact_sampler_mode_and_concentration():
    rng = np.random.default_rng(6)
    Z = sample_exact(Z2, 0.8, 5000, rng)
    rows, counts = np.unique(Z, axis=0, return_counts=True)
    assert rows[np.argmax(counts)].tolist() == [0, 0]
    Z = sample_exact(Z2, 0.02, 200, rng, t=[0.3, -0.7])
    assert np.all(Z == [0, -1])


# --- identity, inequality, ladder ---------------------------------------


def test_identity_examples():
    assert check_rs_identity(Z1, [0.3], [0.7], 1.0).residual <= 1e-12
    assert check_rs_identity(Z2, [0, 0], [0, 0], 1.3).residual <= 1e-12
    B = Basis([[2, 1], [-1, 3]])
    assert check_rs_identity(B, [0.4, 1.9], [-0.8, 0.25], 1.2).residual <= 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 5), st.integers(-3, 3), st.floats(-2, 2), st.floats(-2, 2), st.floats(0.4, 4.0))
def test_holder_inequality(a, b, t1, t2, s):
    B = Basis([[a, 0], [b, 2]])
    chk = check_rs_holder(B, [t1, t2], s)
    assert chk.margin >= -1e-9


def test_holder_at_zero_shift():
    chk = check_rs_holder(Z1, [0], 1.0)
    view = ShiftedLattice.of(Z1)
    assert chk.lhs_log == pytest.approx(2 * max_coset_log_mass(view, 1.0))
    assert chk.lhs_log == pytest.approx(2 * coset_mass(Z1, [0], 1.0).log_mass)
    assert chk.margin >= 0


def test_ladder_on_integers():
    tr = coset_ladder(Z1, [0], 4.0, 4)
    assert 1 <= tr.chosen_i <= 4
    assert tr.sandwich_ok
    assert tr.sandwich == pytest.approx([1.0] * 4)


def test_ladder_random_plane():
    rng = np.random.default_rng(7)
    B = Basis([[3, 1], [-1, 2]])
    tr = coset_ladder(B, rng.uniform(-2, 2, 2).tolist(), 2.5, 6)
    assert tr.sandwich_ok
    assert all(1 - 1e-9 <= S <= 2 ** (2 / 4) + 1e-9 for S in tr.S)
