import itertools
import math
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latgauss.errors import DegenerateBasisError, NotLatticeVectorError, TargetNotInSpanError
from latgauss.lattice import (
    Basis,
    CosetLabel,
    ShiftedLattice,
    babai,
    coset_label,
    covering_radius_upper,
    cvp_enum,
    enumerate_ball,
    format_rational,
    hkz_basis,
    is_hkz,
    label_keys,
    parse_vector,
    read_basis_file,
    svp_enum,
    write_basis_file,
)


def full_rank(rows):
    return abs(np.linalg.det(np.array(rows, dtype=float))) > 0.5


def bases(n, bound=6):
    entries = st.lists(st.integers(-bound, bound), min_size=n * n, max_size=n * n)
    return entries.map(lambda e: [e[i * n : (i + 1) * n] for i in range(n)]).filter(full_rank)


def brute_closest(B: Basis, t, box):
    M = B.matrix
    t = np.asarray(t, dtype=float)
    best = math.inf
    for z in itertools.product(range(-box, box + 1), repeat=B.rank):
        d = np.asarray(z) @ M - t
        best = min(best, float(d @ d))
    return best


# --- Gram-Schmidt --------------------------------------------------------


def test_identity_is_its_own_gs():
    B = Basis(np.eye(3, dtype=int).tolist())
    assert np.allclose(B.gs.gs_vectors, np.eye(3))
    assert B.gs.is_orthogonal()


def test_two_by_two_projection():
    B = Basis([[1, 0], [1, 1]])
    assert B.exact_mu[1][0] == 1
    assert B.exact_norms2 == [1, 1]
    assert np.allclose(B.gs.gs_vectors, [[1, 0], [0, 1]])


@settings(max_examples=40, deadline=None)
@given(bases(4, 9))
def test_gs_reconstructs_basis(rows):
    B = Basis(rows)
    gs = B.gs
    assert np.allclose(gs.mu @ gs.gs_vectors, B.matrix, atol=1e-9)
    assert np.allclose(np.diag(gs.mu), 1.0)
    G = gs.gs_vectors @ gs.gs_vectors.T
    assert np.allclose(G - np.diag(np.diag(G)), 0.0, atol=1e-8)


def test_dependent_rows_rejected():
    with pytest.raises(DegenerateBasisError):
        Basis([[1, 2], [2, 4]])
    with pytest.raises(DegenerateBasisError):
        Basis([[1], [2]])


# --- SVP / CVP -----------------------------------------------------------


def test_svp_unit_lattice_prefers_lexicographically_smaller():
    v = svp_enum(Basis([[1, 0], [0, 1]]))
    assert v.dist2 == 1.0
    assert v.coeffs.tolist() == [-1, 0]


def test_svp_small_examples():
    assert svp_enum(Basis([[2, 0], [1, 2]])).dist2 == pytest.approx(4.0)
    assert svp_enum(Basis([[2, 0], [1, 20]])).dist2 == pytest.approx(4.0)


def test_cvp_rounding_and_tie():
    assert cvp_enum(Basis([[1, 0], [0, 1]]), [0.3, -0.7]).coeffs.tolist() == [0, -1]
    assert cvp_enum(Basis([[1]]), [F(1, 2)]).coeffs.tolist() == [0]


@settings(max_examples=25, deadline=None)
@given(bases(3, 5), st.lists(st.integers(-40, 40), min_size=3, max_size=3))
def test_cvp_matches_box_search(rows, t8):
    B = Basis(rows)
    t = [F(x, 8) for x in t8]
    # coefficients of the closest point are bounded through the inverse basis
    Binv = np.linalg.inv(B.matrix)
    R = math.sqrt(float(np.sum(B.gs.norms2))) / 2 + np.linalg.norm([float(x) for x in t])
    box = int(math.ceil(R * np.abs(Binv).sum(axis=0).max())) + 1
    assert cvp_enum(B, t).dist2 == pytest.approx(brute_closest(B, t, box), rel=1e-9, abs=1e-12)


def test_babai_is_exact_on_orthogonal_basis():
    B = Basis([[2, 0], [0, 3]])
    view = ShiftedLattice.of(B, [F(5, 2) + F(1, 10), F(-4)])
    assert babai(view.gs, view.tau).tolist() == [1, -1]


def test_target_outside_span():
    with pytest.raises(TargetNotInSpanError):
        ShiftedLattice.of(Basis([[1, 0, 0]]), [0, 1, 0])


def test_enumerate_ball_counts_unit_square():
    Z, P = enumerate_ball(ShiftedLattice.of(Basis([[1, 0], [0, 1]])), 1.0)
    assert len(Z) == 5
    assert sorted(P.tolist()) == [0, 1, 1, 1, 1]


# --- HKZ -----------------------------------------------------------------


def test_hkz_fixed_point():
    B = Basis([[1, 0, 0], [0, 1, 0], [0, 0, 1]])
    assert hkz_basis(B).basis == B


def test_hkz_first_vector_is_shortest():
    # the shortest vectors of this lattice are ±(1, 1) with norm² 2
    H = hkz_basis(Basis([[1, 1], [0, 3]]))
    assert float(sum(x * x for x in H.basis.rows[0])) == 2
    assert svp_enum(Basis([[1, 1], [0, 3]])).dist2 == pytest.approx(2.0)


@settings(max_examples=15, deadline=None)
@given(bases(4, 8))
def test_hkz_projected_minima(rows):
    B = Basis(rows)
    H = hkz_basis(B)
    assert is_hkz(H.basis)
    U = np.array(H.transform)
    assert abs(round(np.linalg.det(U))) == 1
    assert np.allclose(U @ B.matrix, H.basis.matrix)
    # |b~_i| equals λ1 of the lattice projected orthogonally to b_1..b_{i-1}
    gs = H.basis.gs
    for i in range(4):
        tail = gs.tail(i)
        from latgauss.lattice import shortest

        _, lam2 = shortest(tail)
        assert gs.norms2[i] == pytest.approx(lam2, rel=1e-9)
    mu = np.array([[float(x) for x in r] for r in H.basis.exact_mu])
    assert np.all(np.abs(np.tril(mu, -1)) <= 0.5 + 1e-12)


# --- cosets, covering radius --------------------------------------------


def test_coset_labels():
    Z2 = Basis([[1, 0], [0, 1]])
    assert coset_label(Z2, [0, 0]).coeffs == (0, 0)
    assert coset_label(Z2, [3, -2]).coeffs == (1, 0)
    with pytest.raises(NotLatticeVectorError):
        coset_label(Basis([[2]]), [1])


@settings(max_examples=30, deadline=None)
@given(bases(3, 6), st.lists(st.integers(-9, 9), min_size=3, max_size=3), st.lists(st.integers(-9, 9), min_size=3, max_size=3))
def test_labels_agree_modulo_twice_the_lattice(rows, z, y):
    B = Basis(rows)
    v = B.exact_vector(z)
    w = B.exact_vector([a + 2 * b for a, b in zip(z, y)])
    assert coset_label(B, v) == coset_label(B, w)
    assert label_keys(np.array([z])) == CosetLabel.from_coeffs(z).key


def test_covering_radius_bound():
    assert covering_radius_upper(Basis([[1]]).gs) == 0.5
    assert covering_radius_upper(Basis(np.eye(4, dtype=int).tolist()).gs) == pytest.approx(1.0)
    rng = np.random.default_rng(3)
    B = Basis([[3, 1, 0], [1, -4, 2], [0, 2, 5]])
    bound = covering_radius_upper(hkz_basis(B).basis.gs)
    worst = max(cvp_enum(B, rng.uniform(-10, 10, 3)).distance for _ in range(1000))
    assert worst <= bound


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5])
def test_last_minimum_against_covering_radius_on_unit_lattices(n):
    # Z^n: last successive minimum 1, covering radius sqrt(n)/2
    lam, mu = 1.0, math.sqrt(n) / 2
    assert lam <= 2 * mu
    assert (lam <= mu) == (n >= 4)  # the undoubled form fails below n = 4
    assert mu * mu <= covering_radius_upper(Basis(np.eye(n, dtype=int).tolist()).gs) ** 2 + 1e-12


# --- io --------------------------------------------------------------------


def test_basis_file_round_trip(tmp_path):
    B = Basis([[1, F(1, 2)], [0, 3]])
    t = (F(1, 3), F(-2))
    path = tmp_path / "b.txt"
    write_basis_file(path, B, t)
    B2, t2 = read_basis_file(path)
    assert B2 == B and t2 == t
    assert format_rational(F(-3, 6)) == "-1/2"
    assert parse_vector("1/2, 3 -1") == (F(1, 2), F(3), F(-1))
