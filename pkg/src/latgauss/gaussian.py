"""Gaussian masses over shifted lattices, exact and nearest-plane samplers,
and numerical checks of the mass identities the combiner relies on.

Masses are summed in the log domain.  Truncation radii come from the
Gaussian tail bound

    ρ_s((L - t) \\ r s sqrt(n) B) <= exp(π d²/s²) (sqrt(2πe) r exp(-π r²))^n ρ_s(L - t)

where ``d`` is the distance from ``t`` to the lattice, so every
:class:`MassEstimate` carries a certified relative truncation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import KleinParameterError, LadderViolationError, MassDidNotConvergeError
from .lattice import Basis, GramSchmidt, ShiftedLattice, closest, label_keys

EPS_MASS = 1e-12
MAX_POINTS = 20_000_000
MAX_RANK = 12
_U = 2.0**-53


@dataclass(frozen=True)
class GaussianParam:
    """Gaussian width ``s = base * 2**(exponent / 2)``.

    Keeping the dyadic exponent separate makes repeated halvings of ``s²``
    land exactly back on ``base``.
    """

    base: float
    exponent: int = 0

    def __post_init__(self):
        if not (math.isfinite(self.base) and self.base > 0):
            raise ValueError("Gaussian parameter must be positive and finite")

    @property
    def value(self) -> float:
        return self.base * 2.0 ** (self.exponent / 2)

    def __float__(self):
        return self.value

    def halved(self) -> "GaussianParam":
        """Parameter for the next combiner stage (``s / sqrt 2``)."""
        return GaussianParam(self.base, self.exponent - 1)


def _s(s) -> float:
    v = float(s)
    if not (math.isfinite(v) and v > 0):
        raise ValueError("Gaussian parameter must be positive and finite")
    return v


@dataclass(frozen=True)
class MassEstimate:
    log_mass: float
    rel_err: float

    @property
    def value(self) -> float:
        return math.exp(self.log_mass)


def log_rho(s, x) -> float:
    x = np.asarray(x, dtype=np.float64)
    return -math.pi * float(x @ x) / _s(s) ** 2


def rho(s, x) -> float:
    """``exp(-π ||x||² / s²)``."""
    return math.exp(log_rho(s, x))


def _as_view(L, t=None) -> ShiftedLattice:
    if isinstance(L, ShiftedLattice):
        return L
    if isinstance(L, Basis):
        return ShiftedLattice.of(L, t)
    raise TypeError("expected a Basis or ShiftedLattice")


# ---------------------------------------------------------------------------
# truncation


def _tail_log(n: int, a: float, r: float) -> float:
    # log of exp(π a) (sqrt(2πe) r exp(-π r²))^n with a = d²/s²
    return math.pi * a + n * (0.5 * math.log(2 * math.pi * math.e) + math.log(r) - math.pi * r * r)


def tail_radius(n: int, d2_over_s2: float, eps: float) -> float:
    """Smallest ``r >= 1/sqrt(2π)`` whose tail bound is at most ``eps``."""
    target = math.log(eps)
    lo = 1.0 / math.sqrt(2 * math.pi)
    if _tail_log(n, d2_over_s2, lo) <= target:
        return lo
    hi = lo
    while _tail_log(n, d2_over_s2, hi) > target:
        hi *= 2.0
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if _tail_log(n, d2_over_s2, mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


def tail_bound(n: int, d2_over_s2: float, r: float) -> float:
    """Relative Gaussian mass of ``L - t`` outside radius ``r s sqrt(n)``."""
    if r < 1.0 / math.sqrt(2 * math.pi):
        return 1.0
    return min(1.0, math.exp(_tail_log(n, d2_over_s2, r)))


def _point_estimate(gs: GramSchmidt, R: float) -> float:
    n = gs.rank
    logvol = 0.5 * n * math.log(math.pi) - math.lgamma(0.5 * n + 1)
    cov = 0.5 * math.sqrt(float(np.sum(gs.norms2)))
    return math.exp(logvol + n * math.log(R + cov) - 0.5 * float(np.sum(np.log(gs.norms2))))


@dataclass
class Support:
    """Truncated support of ``D_{L-t,s}``: coefficient rows, squared lengths,
    relative tail bound and the squared distance to the closest point."""

    Z: np.ndarray
    norms2: np.ndarray
    tail: float
    d2: float
    s: float

    def log_weights(self) -> np.ndarray:
        return -math.pi * self.norms2 / (self.s * self.s)


def support(L, s, eps_tail: float, t=None, max_points: int = MAX_POINTS) -> Support:
    view = _as_view(L, t)
    s = _s(s)
    n = view.rank
    if n > MAX_RANK:
        raise MassDidNotConvergeError(f"rank {n} exceeds the enumeration cap {MAX_RANK}")
    if n == 0:
        return Support(np.zeros((1, 0), np.int64), np.array([view.resid2]), 0.0, view.resid2, s)
    _, d2 = closest(view.gs, view.tau)
    r = tail_radius(n, d2 / (s * s), eps_tail)
    R2 = r * r * s * s * n
    if _point_estimate(view.gs, math.sqrt(R2)) > max_points:
        raise MassDidNotConvergeError("mass did not converge: enumeration radius exceeds the point cap")
    Z, P = kernels.enum_points(view.gs.mu, view.gs.norms2, view.tau, R2 * (1 + 1e-12))
    if len(P) > max_points:
        raise MassDidNotConvergeError("mass did not converge: too many points")
    return Support(Z, P + view.resid2, tail_bound(n, d2 / (s * s), r), d2 + view.resid2, s)


def _logsumexp(w: np.ndarray) -> float:
    wmax = float(w.max())
    return wmax + math.log(math.fsum(np.exp(w - wmax)))


def _roundoff(n: int, d2_over_s2: float) -> float:
    return 8.0 * (n + 2) * _U * (1.0 + math.pi * (d2_over_s2 + n))


def mass(L, s, eps_rel: float = EPS_MASS, t=None) -> MassEstimate:
    """Certified ``ρ_s(L - t)``.

    ``L`` is a :class:`ShiftedLattice` or a :class:`Basis` (with optional
    target ``t``).  The reported relative error is the tail bound plus a
    floating-point allowance that grows with ``d²/s²``.
    """
    sup = support(L, s, 0.5 * eps_rel, t)
    lm = _logsumexp(sup.log_weights())
    tail = sup.tail / (1.0 - sup.tail)
    n = sup.Z.shape[1]
    return MassEstimate(lm, tail + _roundoff(n, sup.d2 / sup.s**2))


def coset_mass(L, label, s, eps_rel: float = EPS_MASS, t=None) -> MassEstimate:
    """``ρ_s(c - t)`` for the coset ``c = 2L + rep(label)``."""
    view = _as_view(L, t)
    bits = getattr(label, "coeffs", label)
    return mass(view.coset_view(bits), _s(s) / 2.0, eps_rel)


def coset_masses(L, s, eps_rel: float = EPS_MASS, t=None) -> dict[int, MassEstimate]:
    """Masses of all ``2^n`` cosets, keyed by :func:`label_keys` value.

    Small ranks compute each coset separately; larger ones bucket a single
    enumeration tight enough that the heaviest coset keeps ``eps_rel``.
    """
    view = _as_view(L, t)
    n = view.rank
    if n <= 4:
        out = {}
        for key in range(1 << n):
            bits = [(key >> i) & 1 for i in range(n)]
            out[key] = coset_mass(view, bits, s, eps_rel)
        return out
    sup = support(view, s, 0.5 * eps_rel * 2.0**-n)
    w = sup.log_weights()
    keys = label_keys(sup.Z)
    total = _logsumexp(w)
    ro = _roundoff(n, sup.d2 / sup.s**2)
    out = {}
    for key in np.unique(keys):
        lm = _logsumexp(w[keys == key])
        rel = sup.tail / (1.0 - sup.tail) * math.exp(total - lm) + ro
        out[int(key)] = MassEstimate(lm, rel)
    return out


def max_coset_log_mass(L, s, eps_rel: float = EPS_MASS, t=None) -> float:
    return max(m.log_mass for m in coset_masses(L, s, eps_rel, t).values())


def m_target(L, s, t=None, eps_rel: float = EPS_MASS) -> float:
    """``ρ_s(L - t) / max_c ρ_s(c - t)``, a number in ``[1, 2^n]``."""
    view = _as_view(L, t)
    total = mass(view, s, eps_rel).log_mass
    return math.exp(total - max_coset_log_mass(view, s, eps_rel))


# ---------------------------------------------------------------------------
# samplers


def exact_distribution(L, s, eps_rel: float = 1e-12, t=None) -> tuple[np.ndarray, np.ndarray]:
    """Enumerated support (lexicographic order) and normalized probabilities."""
    sup = support(L, s, eps_rel, t)
    Z, w = sup.Z, sup.log_weights()
    if len(w) > 1:
        order = np.lexsort(Z.T[::-1])
        Z, w = Z[order], w[order]
    p = np.exp(w - w.max())
    return Z, p / p.sum()


def sample_exact(L, s, size: int, rng: np.random.Generator, eps_rel: float = 1e-12, t=None) -> np.ndarray:
    """``size`` exact draws from ``D_{L-t,s}`` as coefficient rows."""
    Z, p = exact_distribution(L, s, eps_rel, t)
    cdf = np.cumsum(p)
    idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
    return Z[np.minimum(idx, len(p) - 1)]


def sample_exact_counts(L, s, size: int, rng: np.random.Generator, eps_rel: float = 1e-12, t=None):
    """Histogram form of :func:`sample_exact`: ``(rows, counts)``.

    Draws ``size`` i.i.d. samples through a single multinomial, so very large
    batches cost only as much as the support.
    """
    Z, p = exact_distribution(L, s, eps_rel, t)
    counts = rng.multinomial(size, p)
    keep = counts > 0
    return Z[keep], counts[keep].astype(np.int64)


WIDE_WINDOW = 4096


def sample_1d_many(centers, s, rng: np.random.Generator) -> np.ndarray:
    """Independent integers ``k_i`` with probability ∝ ``ρ_s(k_i - c_i)``.

    Uses the exact inverse CDF over ``|k - c| <= 10 s + 1``; windows wider
    than ``WIDE_WINDOW`` points switch to rejection from the uniform window.
    """
    s = _s(s)
    centers = np.atleast_1d(np.asarray(centers, dtype=np.float64))
    hw = 10.0 * s + 1.0
    if 2 * hw + 3 <= WIDE_WINDOW:
        return kernels.inverse_cdf_1d(centers, s, rng.random(len(centers)), hw)
    out = np.empty(len(centers), np.int64)
    todo = np.arange(len(centers))
    inv = math.pi / (s * s)
    while len(todo):
        c = centers[todo]
        lo = np.floor(c - hw)
        hi = np.ceil(c + hw)
        k = lo + np.floor(rng.random(len(todo)) * (hi - lo + 1))
        k = np.minimum(k, hi)
        acc = rng.random(len(todo)) < np.exp(-inv * (k - c) ** 2)
        out[todo[acc]] = k[acc].astype(np.int64)
        todo = todo[~acc]
    return out


def sample_1d(c: float, s, rng: np.random.Generator) -> int:
    return int(sample_1d_many([c], s, rng)[0])


def klein_threshold(gs: GramSchmidt, klein_factor: float = 4.0) -> float:
    """Smallest parameter accepted by :func:`sample_klein`."""
    n = gs.rank
    if n == 0:
        return 0.0
    return klein_factor * math.sqrt(math.log(n + 2)) * float(np.sqrt(gs.norms2.max()))


def klein_ok(gs: GramSchmidt, s, klein_factor: float = 4.0) -> bool:
    """True when nearest-plane sampling at ``s`` is admissible.

    Orthogonal bases pass for every ``s``: the sampler then factorizes into
    independent exact 1-D draws.
    """
    return gs.rank == 0 or gs.is_orthogonal() or float(s) >= klein_threshold(gs, klein_factor) * (1 - 1e-12)


def sample_klein(L, s, size: int, rng: np.random.Generator, klein_factor: float = 4.0, t=None) -> np.ndarray:
    """Randomized nearest-plane sampler; returns coefficient rows.

    Coordinates are drawn from the last GS direction to the first, each from
    a 1-D discrete Gaussian of width ``s / ||b~_i||`` around the current
    nearest-plane center.
    """
    view = _as_view(L, t)
    s = _s(s)
    gs = view.gs
    if not klein_ok(gs, s, klein_factor):
        raise KleinParameterError(
            f"parameter too small for Klein: s={s:.6g} < {klein_threshold(gs, klein_factor):.6g}"
        )
    d = gs.rank
    Z = np.zeros((size, d), np.int64)
    for k in range(d - 1, -1, -1):
        c = view.tau[k] - Z[:, k + 1 :] @ gs.mu[k + 1 :, k] if k + 1 < d else np.full(size, view.tau[k])
        Z[:, k] = sample_1d_many(c, s / math.sqrt(gs.norms2[k]), rng)
    return Z


def log_theta_shift(c, s) -> np.ndarray:
    """``log Σ_k ρ_s(k - c)`` over the integers, vectorized in ``c``.

    Direct summation for ``s < 1``; for wider ``s`` the Poisson-summed form
    ``s Σ_m exp(-π s² m²) cos(2π m c)`` converges after a few terms.
    """
    s = _s(s)
    c = np.asarray(c, dtype=np.float64)
    frac = c - np.floor(c)
    if s < 1.0:
        ks = np.arange(-int(10 * s) - 2, int(10 * s) + 4)
        y = ks[None, :] - frac[:, None]
        return np.log(np.exp(-math.pi * y * y / (s * s)).sum(axis=1))
    mmax = max(1, int(math.ceil(math.sqrt(50.0 / math.pi) / s)) + 1)
    total = np.ones_like(frac)
    for m in range(1, mmax + 1):
        total += 2.0 * math.exp(-math.pi * s * s * m * m) * np.cos(2 * math.pi * m * frac)
    return math.log(s) + np.log(total)


def klein_law(L, s, Z, t=None) -> np.ndarray:
    """Exact probability the nearest-plane sampler assigns to each row of ``Z``.

    Product of the 1-D conditionals; used to separate sampler bias from
    Monte Carlo noise in audits.
    """
    view = _as_view(L, t)
    s = _s(s)
    gs = view.gs
    Z = np.asarray(Z, dtype=np.int64)
    logp = np.zeros(len(Z))
    for k in range(gs.rank - 1, -1, -1):
        c = view.tau[k] - Z[:, k + 1 :] @ gs.mu[k + 1 :, k]
        sk = s / math.sqrt(gs.norms2[k])
        logp += -math.pi * (Z[:, k] - c) ** 2 / sk**2 - log_theta_shift(c, sk)
    return np.exp(logp)


# ---------------------------------------------------------------------------
# identities and inequalities


@dataclass(frozen=True)
class IdentityCheck:
    lhs_log: float
    rhs_log: float
    residual: float


def check_rs_identity(B: Basis, x, y, s, eps_rel: float = EPS_MASS) -> IdentityCheck:
    """Relative gap between ``ρ_s(L-x) ρ_s(L-y)`` and
    ``Σ_c ρ_{√2 s}(c-x-y) ρ_{√2 s}(c-x+y)``."""
    s = _s(s)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    e = eps_rel / 4.0
    lhs = mass(B, s, e, t=x).log_mass + mass(B, s, e, t=y).log_mass
    plus = ShiftedLattice.of(B, x + y)
    minus = ShiftedLattice.of(B, x - y)
    s2 = math.sqrt(2.0) * s
    terms = []
    for key in range(1 << B.rank):
        bits = [(key >> i) & 1 for i in range(B.rank)]
        terms.append(coset_mass(plus, bits, s2, e).log_mass + coset_mass(minus, bits, s2, e).log_mass)
    rhs = _logsumexp(np.array(terms))
    return IdentityCheck(lhs, rhs, abs(math.expm1(rhs - lhs)))


@dataclass(frozen=True)
class HolderCheck:
    lhs_log: float
    rhs_log: float
    margin: float

    @property
    def difference(self) -> float:
        """Absolute ``RHS - LHS``."""
        return math.exp(self.rhs_log) - math.exp(self.lhs_log)


def check_rs_holder(B: Basis, t, s, eps_rel: float = EPS_MASS) -> HolderCheck:
    """``max_c ρ_s(c-t)² <= max_c ρ_{s/√2}(c-t) ρ_{s/√2}(L)``.

    ``margin`` is ``(RHS - LHS) / RHS``; it must not be meaningfully negative.
    """
    s = _s(s)
    view = ShiftedLattice.of(B, t)
    lhs = 2.0 * max_coset_log_mass(view, s, eps_rel)
    sh = s / math.sqrt(2.0)
    rhs = max_coset_log_mass(view, sh, eps_rel) + mass(B, sh, eps_rel).log_mass
    return HolderCheck(lhs, rhs, -math.expm1(lhs - rhs))


LADDER_TERMS = 40


@dataclass
class LadderTrace:
    ell: int
    S: list[float]
    R: list[float]
    chosen_i: int
    S_upper: list[float] = field(default_factory=list)
    sandwich: list[float] = field(default_factory=list)
    sandwich_ok: bool = True
    log_theta: list[float] = field(default_factory=list)


def coset_ladder(B: Basis, t, s, ell: int, eps_rel: float = EPS_MASS, tol: float = 1e-9) -> LadderTrace:
    """Ratios ``S_i`` and ``R_i`` for ``i = 1..ell`` and the first qualifying index.

    ``θ(i) = ρ_{2^{-i/2} s}(L)``.  The infinite product in ``S_i`` keeps
    ``LADDER_TERMS`` factors; the dropped ones are bounded by the last kept
    ``θ`` since ``θ`` is nonincreasing in ``i``.
    """
    if ell < 1:
        raise ValueError("ell must be positive")
    s = _s(s)
    n = B.rank
    J = LADDER_TERMS
    top = ell + J + 2
    L0 = ShiftedLattice.of(B)
    lt = [0.0] + [mass(L0, s * 2.0 ** (-i / 2), eps_rel).log_mass for i in range(1, top + 1)]
    S, S_up, R = [], [], []
    for i in range(1, ell + 1):
        acc = math.fsum(lt[i + j] * 2.0**-j for j in range(1, J + 1))
        S.append(math.exp(acc - lt[i + 2]))
        S_up.append(math.exp(acc + 2.0**-J * lt[i + J + 1] - lt[i + 2]))
        R.append(math.exp(lt[i + 1] - lt[i + 2]))
    bound = 2.0 ** (3 * n / (4 * ell)) * (1 + tol)
    chosen = next((i for i in range(1, ell + 1) if S_up[i - 1] <= bound), None)
    if chosen is None:
        raise LadderViolationError("ladder violation: no index meets the 2^{3n/(4 ell)} bound")
    view = ShiftedLattice.of(B, t)
    _, d2 = closest(view.gs, view.tau)
    d2 += view.resid2
    sandwich, ok = [], True
    cap = 2.0 ** (n / 4) * (1 + tol)
    for i in range(1, ell + 1):
        si = s * 2.0 ** (-i / 2)
        top_c = max_coset_log_mass(view, si, eps_rel)
        ratio = math.exp(top_c + math.pi * d2 / si**2 - lt[i + 2])
        sandwich.append(ratio)
        if not (1 - tol <= ratio <= S_up[i - 1] * (1 + tol)) or S[i - 1] > cap or S[i - 1] < 1 - tol:
            ok = False
    return LadderTrace(ell, S, R, chosen, S_up, sandwich, ok, lt[1:])
