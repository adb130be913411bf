"""Bases, Gram-Schmidt data, HKZ reduction and enumeration oracles.

Basis entries are kept as exact ``Fraction`` values.  Gram-Schmidt data is
computed exactly once and then rounded to float64 for the numerical kernels;
coset labels and lattice membership are always decided on integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import (
    DegenerateBasisError,
    LatticeError,
    NotLatticeVectorError,
    TargetNotInSpanError,
)

SPAN_TOL = 1e-9
GS_TOL = 1e-9


def to_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    return Fraction(float(x))


def format_rational(x: Fraction) -> str:
    x = to_fraction(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _exact_gs(rows):
    d = len(rows)
    bstar, norms2 = [], []
    mu = [[Fraction(0)] * d for _ in range(d)]
    for i, b in enumerate(rows):
        v = list(b)
        for j in range(i):
            m = _dot(b, bstar[j]) / norms2[j]
            mu[i][j] = m
            if m:
                v = [vi - m * bj for vi, bj in zip(v, bstar[j])]
        n2 = _dot(v, v)
        if n2 == 0:
            raise DegenerateBasisError("degenerate basis: vectors are linearly dependent")
        mu[i][i] = Fraction(1)
        bstar.append(v)
        norms2.append(n2)
    return bstar, mu, norms2


@dataclass(frozen=True)
class GramSchmidt:
    """Float Gram-Schmidt data: ``b_i = b~_i + sum_{j<i} mu[i, j] b~_j``.

    ``mu`` carries ones on the diagonal so that GS coordinates of the point
    with coefficients ``z`` are simply ``z @ mu``.
    """

    gs_vectors: np.ndarray
    mu: np.ndarray
    norms2: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.norms2.shape[0])

    @property
    def gs_norms(self) -> np.ndarray:
        return np.sqrt(self.norms2)

    def coords(self, t) -> tuple[np.ndarray, float]:
        """GS coordinates of ``t`` and its squared distance to the span."""
        t = np.asarray(t, dtype=np.float64)
        tau = (self.gs_vectors @ t) / self.norms2
        resid2 = float(t @ t - np.sum(tau * tau * self.norms2))
        return tau, max(resid2, 0.0)

    def prefix(self, k: int) -> "GramSchmidt":
        return GramSchmidt(self.gs_vectors[:k], self.mu[:k, :k], self.norms2[:k])

    def tail(self, k: int) -> "GramSchmidt":
        """GS data of the projection of the lattice orthogonally to b_1..b_k."""
        return GramSchmidt(self.gs_vectors[k:], self.mu[k:, k:], self.norms2[k:])

    def is_orthogonal(self) -> bool:
        off = self.mu - np.eye(self.rank)
        return bool(np.all(np.abs(off) <= 1e-15))


class Basis:
    """Lattice basis with exact rational entries; rows are basis vectors."""

    def __init__(self, rows: Iterable[Iterable]):
        rows = tuple(tuple(to_fraction(x) for x in r) for r in rows)
        if not rows:
            raise LatticeError("basis needs at least one vector")
        m = len(rows[0])
        if any(len(r) != m for r in rows):
            raise LatticeError("basis rows have different lengths")
        if len(rows) > m:
            raise DegenerateBasisError("degenerate basis: more vectors than dimensions")
        self.rows = rows
        self._bstar, self._mu, self._norms2 = _exact_gs(rows)

    def __repr__(self):
        body = ", ".join("(" + ", ".join(format_rational(x) for x in r) + ")" for r in self.rows)
        return f"Basis({body})"

    def __eq__(self, other):
        return isinstance(other, Basis) and self.rows == other.rows

    def __hash__(self):
        return hash(self.rows)

    @property
    def rank(self) -> int:
        return len(self.rows)

    @property
    def dim(self) -> int:
        return len(self.rows[0])

    @property
    def is_square(self) -> bool:
        return self.rank == self.dim

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.array([[float(x) for x in r] for r in self.rows])

    @property
    def exact_mu(self):
        return self._mu

    @property
    def exact_norms2(self):
        return self._norms2

    @cached_property
    def gs(self) -> GramSchmidt:
        return GramSchmidt(
            np.array([[float(x) for x in v] for v in self._bstar]),
            np.array([[float(x) for x in r] for r in self._mu]),
            np.array([float(x) for x in self._norms2]),
        )

    def prefix(self, k: int) -> "Basis":
        return Basis(self.rows[:k])

    def vector(self, z) -> np.ndarray:
        return np.asarray(z, dtype=np.float64) @ self.matrix

    def exact_vector(self, z) -> tuple[Fraction, ...]:
        z = [int(v) for v in z]
        return tuple(sum((zi * r[j] for zi, r in zip(z, self.rows)), Fraction(0)) for j in range(self.dim))

    def exact_coords(self, v) -> tuple[list[Fraction], Fraction]:
        """Exact GS coordinates of ``v`` and its squared distance to the span."""
        v = [to_fraction(x) for x in v]
        if len(v) != self.dim:
            raise LatticeError("vector length does not match basis dimension")
        tau = [_dot(v, bs) / n2 for bs, n2 in zip(self._bstar, self._norms2)]
        resid2 = _dot(v, v) - sum(t * t * n2 for t, n2 in zip(tau, self._norms2))
        return tau, resid2

    def coefficients(self, v) -> tuple[Fraction, ...]:
        """Exact coefficients of ``v`` in this basis; ``v`` must lie in the span."""
        tau, resid2 = self.exact_coords(v)
        if resid2 != 0:
            raise TargetNotInSpanError("target not in span")
        d = self.rank
        z = [Fraction(0)] * d
        for j in range(d - 1, -1, -1):
            z[j] = tau[j] - sum((z[i] * self._mu[i][j] for i in range(j + 1, d)), Fraction(0))
        return tuple(z)

    def is_integral(self) -> bool:
        return all(x.denominator == 1 for r in self.rows for x in r)


@dataclass(frozen=True)
class LatticeVector:
    """A lattice point with its coefficients and squared distance to a target."""

    coeffs: np.ndarray
    vector: np.ndarray
    dist2: float

    @property
    def distance(self) -> float:
        return math.sqrt(self.dist2)


@dataclass(frozen=True)
class ShiftedLattice:
    """The set ``L - t`` described through GS data.

    ``tau`` holds the GS coordinates of ``t`` and ``resid2`` its squared
    distance to the span.  A point is stored as its integer coefficient vector
    ``z``; the associated vector of ``L - t`` is ``z B - t``.
    """

    gs: GramSchmidt
    tau: np.ndarray
    resid2: float = 0.0
    basis: Basis | None = None
    target: np.ndarray | None = None

    @classmethod
    def of(cls, basis: Basis, t=None) -> "ShiftedLattice":
        if t is None:
            t = [0] * basis.dim
        if len(t) != basis.dim:
            raise LatticeError("target length does not match basis dimension")
        if all(isinstance(x, (int, Fraction, np.integer, str)) for x in t):
            tau_e, resid_e = basis.exact_coords(t)
            tau = np.array([float(x) for x in tau_e])
            resid2 = float(resid_e)
            target = np.array([float(to_fraction(x)) for x in t])
        else:
            target = np.asarray(t, dtype=np.float64)
            tau, resid2 = basis.gs.coords(target)
        scale = 1.0 + float(np.dot(target, target))
        if resid2 > SPAN_TOL * scale:
            raise TargetNotInSpanError("target not in span")
        if basis.is_square:
            resid2 = 0.0
        return cls(basis.gs, tau, resid2, basis, target)

    @property
    def rank(self) -> int:
        return self.gs.rank

    def shifted(self, y_coeffs) -> "ShiftedLattice":
        """View of ``L - (t + y)`` for the lattice vector with coefficients ``y``."""
        y = np.asarray(y_coeffs, dtype=np.float64)
        tau = self.tau + y @ self.gs.mu
        target = None
        if self.target is not None and self.basis is not None:
            target = self.target + self.basis.vector(y_coeffs)
        return ShiftedLattice(self.gs, tau, self.resid2, self.basis, target)

    def coset_view(self, label) -> "ShiftedLattice":
        """``ρ_s(c - t) = ρ_{s/2}(L - (t - rep)/2)``; returns that halved view."""
        rep = np.asarray(label, dtype=np.float64)
        tau = (self.tau - rep @ self.gs.mu) / 2.0
        return ShiftedLattice(self.gs, tau, self.resid2 / 4.0)

    def norms2(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=np.float64)
        diff = Z @ self.gs.mu - self.tau
        return diff * diff @ self.gs.norms2 + self.resid2

    def vectors(self, Z) -> np.ndarray:
        if self.basis is None or self.target is None:
            raise LatticeError("view has no ambient basis")
        return self.basis.vector(Z) - self.target


# ---------------------------------------------------------------------------
# coset labels


@dataclass(frozen=True)
class CosetLabel:
    """Coefficients mod 2 of a lattice vector; identifies its class in L/2L."""

    coeffs: tuple[int, ...]

    @classmethod
    def from_coeffs(cls, z) -> "CosetLabel":
        return cls(tuple(int(v) & 1 for v in z))

    @property
    def key(self) -> int:
        return sum(b << i for i, b in enumerate(self.coeffs))

    @classmethod
    def from_key(cls, key: int, n: int) -> "CosetLabel":
        return cls(tuple((key >> i) & 1 for i in range(n)))


def label_keys(Z) -> np.ndarray:
    """Integer coset keys for a batch of coefficient rows."""
    Z = np.asarray(Z, dtype=np.int64)
    weights = np.left_shift(np.int64(1), np.arange(Z.shape[1], dtype=np.int64))
    return (Z & 1) @ weights


def coset_label(B: Basis, v) -> CosetLabel:
    """Label of the lattice vector ``v`` (ambient coordinates) in ``L/2L``."""
    try:
        z = B.coefficients(v)
    except TargetNotInSpanError:
        raise NotLatticeVectorError("not a lattice vector") from None
    if any(c.denominator != 1 for c in z):
        raise NotLatticeVectorError("not a lattice vector")
    return CosetLabel.from_coeffs([int(c) for c in z])


# ---------------------------------------------------------------------------
# oracles


def gram_schmidt(B: Basis) -> GramSchmidt:
    return B.gs


def covering_radius_upper(G: GramSchmidt) -> float:
    return 0.5 * math.sqrt(float(np.sum(G.norms2)))


def babai(gs: GramSchmidt, tau) -> np.ndarray:
    """Nearest-plane rounding in GS coordinates."""
    d = gs.rank
    z = np.zeros(d, np.int64)
    for k in range(d - 1, -1, -1):
        c = tau[k] - z[k + 1 :] @ gs.mu[k + 1 :, k]
        z[k] = int(np.floor(c + 0.5))
    return z


def closest(gs: GramSchmidt, tau) -> tuple[np.ndarray, float]:
    """Exact closest point in GS coordinates (squared distance within the span)."""
    tau = np.asarray(tau, dtype=np.float64)
    if gs.rank == 0:
        return np.zeros(0, np.int64), 0.0
    z0 = babai(gs, tau)
    diff = z0 @ gs.mu - tau
    r2 = float(diff * diff @ gs.norms2)
    res = kernels.enum_closest(gs.mu, gs.norms2, tau, r2 * (1 + 1e-8) + 1e-12)
    return res[0], float(res[1])


def shortest(gs: GramSchmidt) -> tuple[np.ndarray, float]:
    r2 = float(gs.norms2[0])
    res = kernels.enum_closest(gs.mu, gs.norms2, np.zeros(gs.rank), r2 * (1 + 1e-8) + 1e-12, True)
    return res[0], float(res[1])


def svp_enum(B: Basis) -> LatticeVector:
    z, n2 = shortest(B.gs)
    return LatticeVector(z, B.vector(z), n2)


def cvp_enum(B: Basis, t) -> LatticeVector:
    view = ShiftedLattice.of(B, t)
    z, d2 = closest(view.gs, view.tau)
    return LatticeVector(z, B.vector(z), d2 + view.resid2)


def enumerate_ball(view: ShiftedLattice, radius2: float) -> tuple[np.ndarray, np.ndarray]:
    """All points of ``L - t`` with squared length at most ``radius2``.

    Returns coefficient rows sorted lexicographically and their squared
    lengths.
    """
    Z, P = kernels.enum_points(view.gs.mu, view.gs.norms2, view.tau, radius2 - view.resid2)
    if len(P) > 1:
        order = np.lexsort(Z.T[::-1])
        Z, P = Z[order], P[order]
    return Z, P + view.resid2


# ---------------------------------------------------------------------------
# HKZ reduction


@dataclass(frozen=True)
class HKZBasis:
    """An HKZ-reduced basis together with the transform from the input.

    ``transform`` is the integer matrix ``U`` with ``basis.rows = U @ source.rows``.
    """

    basis: Basis
    gamma: float = 1.0
    transform: tuple[tuple[int, ...], ...] = field(default=())

    @property
    def gs(self) -> GramSchmidt:
        return self.basis.gs

    def to_source_coeffs(self, h) -> np.ndarray:
        U = np.array(self.transform, dtype=np.int64)
        return np.asarray(h, dtype=np.int64) @ U


def _complete_unimodular(x: Sequence[int]) -> list[list[int]]:
    """Unimodular integer matrix whose first row is the primitive vector ``x``."""
    m = len(x)
    x = [int(v) for v in x]
    inv = [[int(i == j) for j in range(m)] for i in range(m)]
    while True:
        nz = [i for i in range(m) if x[i] != 0]
        if len(nz) == 1:
            break
        a = min(nz, key=lambda i: abs(x[i]))
        for j in nz:
            if j == a:
                continue
            q = x[j] // x[a]
            if q:
                x[j] -= q * x[a]
                inv[a] = [u + q * w for u, w in zip(inv[a], inv[j])]
    a = nz[0]
    if abs(x[a]) != 1:
        raise LatticeError("coefficient vector is not primitive")
    if a != 0:
        x[0], x[a] = x[a], x[0]
        inv[0], inv[a] = inv[a], inv[0]
    if x[0] == -1:
        inv[0] = [-u for u in inv[0]]
    return inv


def _round_half_down(q: Fraction) -> int:
    return math.ceil(q - Fraction(1, 2))


def size_reduce(rows, U):
    """In-place exact size reduction so that all |mu_ij| <= 1/2."""
    _, mu, _ = _exact_gs(rows)
    d = len(rows)
    for i in range(1, d):
        for j in range(i - 1, -1, -1):
            q = _round_half_down(mu[i][j])
            if q:
                rows[i] = [a - q * b for a, b in zip(rows[i], rows[j])]
                U[i] = [a - q * b for a, b in zip(U[i], U[j])]
                for l in range(j):
                    mu[i][l] -= q * mu[j][l]
                mu[i][j] -= q


def hkz_basis(B: Basis) -> HKZBasis:
    """Exact HKZ reduction by repeated projected SVP plus size reduction."""
    rows = [list(r) for r in B.rows]
    d = len(rows)
    U = [[int(i == j) for j in range(d)] for i in range(d)]
    for i in range(d - 1):
        gs = Basis(rows).gs if i else B.gs
        tail = gs.tail(i)
        x, n2 = shortest(tail)
        if n2 >= tail.norms2[0] * (1 - kernels.TIE_RTOL) - kernels.TIE_ATOL:
            continue  # current vector already attains the projected minimum
        V = _complete_unimodular(x)
        block = rows[i:]
        ublock = U[i:]
        rows[i:] = [[sum((v * r[c] for v, r in zip(vr, block)), Fraction(0)) for c in range(len(block[0]))] for vr in V]
        U[i:] = [[sum(v * u[c] for v, u in zip(vr, ublock)) for c in range(d)] for vr in V]
    size_reduce(rows, U)
    return HKZBasis(Basis(rows), 1.0, tuple(tuple(r) for r in U))


def is_hkz(B: Basis, tol: float = 1e-9) -> bool:
    mu = B.exact_mu
    for i in range(B.rank):
        for j in range(i):
            if abs(mu[i][j]) > Fraction(1, 2):
                return False
    gs = B.gs
    for i in range(B.rank):
        _, n2 = shortest(gs.tail(i))
        if gs.norms2[i] > n2 * (1 + tol) + tol:
            return False
    return True


# ---------------------------------------------------------------------------
# basis files


def read_basis_file(path) -> tuple[Basis, tuple[Fraction, ...] | None]:
    """Parse ``n``, ``n`` rows of rationals and an optional ``t: ...`` line."""
    lines = [ln.strip() for ln in Path(path).read_text().splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise LatticeError("empty basis file")
    n = int(lines[0])
    if len(lines) < n + 1:
        raise LatticeError("basis file has fewer rows than declared")
    rows = [[Fraction(tok) for tok in ln.split()] for ln in lines[1 : n + 1]]
    if any(len(r) != n for r in rows):
        raise LatticeError("basis rows must have n entries")
    target = None
    for ln in lines[n + 1 :]:
        if ln.startswith("t:"):
            target = tuple(Fraction(tok) for tok in ln[2:].split())
            if len(target) != n:
                raise LatticeError("target must have n entries")
    return Basis(rows), target


def write_basis_file(path, B: Basis, target=None) -> None:
    out = [str(B.rank)]
    out += [" ".join(format_rational(x) for x in r) for r in B.rows]
    if target is not None:
        out.append("t: " + " ".join(format_rational(to_fraction(x)) for x in target))
    Path(path).write_text("\n".join(out) + "\n")


def parse_vector(text: str) -> tuple[Fraction, ...]:
    return tuple(Fraction(tok) for tok in text.replace(",", " ").split())
