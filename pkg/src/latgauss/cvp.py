"""Cluster CVP from discrete Gaussian samples and the recursive exact solver.

Approximate closest vectors cluster by their class modulo ``2L``: two of them
in the same class are close to each other, and for an HKZ basis they differ
by a vector of a low-rank sublattice ``L' = L(b_1, ..., b_{k-1})``.  The exact
solver samples a short candidate list, groups it by cosets of ``L'`` and
recurses on ``L'`` once per occupied coset.
"""

from __future__ import annotations

import math
import zlib
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .combiner import PipelineConfig
from .dgs import DistanceEstimate, SamplerConfig, estimate_view, sample_view
from .errors import LatticeError, PreconditionError, SolverStarvedError
from .gaussian import GaussianParam
from .lattice import (
    Basis,
    CosetLabel,
    GramSchmidt,
    HKZBasis,
    LatticeVector,
    ShiftedLattice,
    babai,
    closest,
    covering_radius_upper,
    enumerate_ball,
    hkz_basis,
    label_keys,
    to_fraction,
)


@dataclass
class CCVPConfig:
    """Parameters of the cluster-CVP solver and the recursion.

    ``None`` entries are filled per rank ``n``: ``alpha = 1/(10 n³)``,
    ``f_cluster = max(1, ceil(n^(1/3)))`` and
    ``ell = max(4, ceil(log2(10 f)))``.  The finest ladder parameter is
    ``d / (n^s_exponent f 2^(ell/2))`` with ``d`` the lower distance bound.
    ``runs_cap`` caps the number of sampler runs per call.
    """

    alpha: float | None = None
    p_cap: int = 64
    f_cluster: int | None = None
    delta: float = 0.5
    kappa: float = 4.0
    ell: int | None = None
    runs_cap: int = 2
    batch: int = 1 << 14
    batch_cap: int = 1 << 18
    s_exponent: float = 0.0
    klein_factor: float = 1.0
    cross_fit: bool = True
    accept_scale: float = 1.0
    oracle_distance: bool = False
    max_stages: int = 24
    repeats: int = 1
    max_depth: int = 64

    def __post_init__(self):
        if self.p_cap < 1:
            raise ValueError("p_cap must be at least 1")
        if self.alpha is not None and self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 <= self.delta < 1:
            raise ValueError("delta must lie in [0, 1)")
        if self.runs_cap < 1 or self.repeats < 1:
            raise ValueError("runs_cap and repeats must be positive")
        if self.batch_cap < self.batch:
            raise ValueError("batch_cap must be at least batch")

    def alpha_for(self, n: int) -> float:
        return self.alpha if self.alpha is not None else 1.0 / (10 * max(n, 1) ** 3)

    def f_for(self, n: int) -> int:
        if self.f_cluster is not None:
            return self.f_cluster
        return max(1, math.ceil(max(n, 1) ** (1 / 3) - 1e-12))

    def ell_for(self, n: int) -> int:
        if self.ell is not None:
            return self.ell
        return max(4, math.ceil(math.log2(10 * self.f_for(n))))

    def runs_for(self, n: int) -> int:
        ell = self.ell_for(n)
        return min(self.runs_cap, n * n * math.ceil(2 ** (n / ell)))

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(None, self.kappa, self.cross_fit, self.accept_scale)

    def sampler(self) -> SamplerConfig:
        return SamplerConfig(klein_factor=self.klein_factor, batch=self.batch, max_stages=self.max_stages)


@dataclass
class CandidateSet:
    """cCVP output: lattice vectors with their distances and ``L/2L`` labels."""

    vectors: list
    coeffs: list
    distances: list
    coset_labels: list
    target: np.ndarray | None = None

    def __len__(self):
        return len(self.vectors)


# ---------------------------------------------------------------------------
# clustering


def _exact(v) -> tuple[Fraction, ...]:
    return tuple(to_fraction(x) if not isinstance(x, float) else Fraction(x) for x in v)


def cluster_test(B: Basis, w1, w2, r1, r2) -> bool:
    """Whether ``||w1 - w2||² < 2 (r1² + r2²)`` for ``w1 ≡ w2 (mod 2L)``.

    ``w1`` and ``w2`` are points of ``L - t`` in ambient coordinates; their
    difference must lie in ``2L``.  Arithmetic is exact.
    """
    a, b = _exact(w1), _exact(w2)
    diff = [x - y for x, y in zip(a, b)]
    half = B.coefficients([d / 2 for d in diff])
    if any(c.denominator != 1 for c in half):
        raise PreconditionError("points are not congruent modulo 2L")
    lhs = sum(d * d for d in diff)
    return lhs < 2 * (_exact([r1])[0] ** 2 + _exact([r2])[0] ** 2)


def parallelogram_gap(w1, w2) -> Fraction:
    """``2||w1||² + 2||w2||² - 4||(w1+w2)/2||² - ||w1-w2||²`` (always 0)."""
    a, b = _exact(w1), _exact(w2)
    n = lambda v: sum(x * x for x in v)  # noqa: E731
    mid = [(x + y) / 2 for x, y in zip(a, b)]
    return 2 * n(a) + 2 * n(b) - 4 * n(mid) - n([x - y for x, y in zip(a, b)])


@dataclass(frozen=True)
class GoodIndex:
    """Index ``k`` (1-based) of the good prefix and the shift-count bound."""

    k: int
    bound: int
    case: int
    ell: int
    thresholds: tuple


def _gs_of(H) -> GramSchmidt:
    if isinstance(H, GramSchmidt):
        return H
    if isinstance(H, (HKZBasis, Basis)):
        return H.gs
    raise TypeError("expected an HKZ basis or GS data")


def good_index(H, f: int, gamma: float = 1.0) -> GoodIndex:
    """Pick ``k`` so that few cosets of ``L(b_1..b_{k-1})`` hold near-closest
    vectors.

    ``m_j`` is the first index whose GS norm reaches ``γ R / n^j``.  If some
    ``m_j`` repeats for ``j <= f`` the first repeat gives ``k`` with bound
    ``2^(n-k+1)``; otherwise a window ``m_j < m_{j-1}`` closer than ``n/f``
    exists among ``j = f..2f-1`` and gives ``k = m_j``, ``ℓ = m_{j-1}`` with
    bound ``2^(n-k+1) (2 (2n)^(ℓ-k) - 1)``.
    """
    gs = _gs_of(H)
    n = gs.rank
    if n < 1:
        raise LatticeError("good_index needs rank at least 1")
    if f < 1:
        raise ValueError("f must be a positive integer")
    norms = gs.gs_norms
    R = float(norms.max())
    m = []
    for j in range(2 * f):
        thr = gamma * R / n**j
        hits = np.flatnonzero(norms >= thr * (1 - 1e-12))
        m.append(int(hits[0]) + 1 if len(hits) else int(np.argmax(norms)) + 1)
    k = ell = case = None
    for j in range(1, f + 1):
        if m[j] == m[j - 1]:
            k, ell, case = m[j], m[j], 1
            break
    if k is None:
        for j in range(f, 2 * f):
            if m[j - 1] - m[j] < n / f:
                k, ell, case = m[j], m[j - 1], 2
                break
    if k is None:
        raise RuntimeError("good_index: no index satisfies the case analysis")
    bound = 2 ** (n - k + 1) * (2 * (2 * n) ** (ell - k) - 1)
    if norms[k - 1] < gamma * covering_radius_upper(gs) / n ** (2 * f) * (1 - 1e-12):
        raise RuntimeError("good_index: GS norm at k below the covering-radius bound")
    return GoodIndex(k, bound, case, ell, tuple(m))


@dataclass(frozen=True)
class ShiftCount:
    count: int
    bound: int
    condition_ok: bool
    r: float


def sparse_shift_count(B: Basis, t, k: int, ell: int, s: float, r: float | None = None) -> ShiftCount:
    """Count cosets ``c`` of ``L' = L(b_1..b_{k-1})`` with
    ``dist(t, c)² < dist(t, L)² + r²`` on the HKZ basis of ``B``.

    ``k`` and ``ell`` are 1-based with ``k <= ell <= n + 1``.  The count is
    guaranteed only when ``r² + (k-1)/2 Σ_{i<k} ||b~_i||²`` is at most
    ``min(s² ||b~_k||², ||b~_ell||²)``; when ``r`` is omitted the largest such
    radius is used.  The result reports whether that holds and the bound
    ``2^(n-k+1) (2 ceil(2s)^(ell-k) - 1)``; the count is exhaustive.
    """
    H = hkz_basis(B)
    view = ShiftedLattice.of(H.basis, t)
    gs = view.gs
    n = gs.rank
    if not 1 <= k <= ell <= n + 1:
        raise ValueError("need 1 <= k <= ell <= n + 1")
    lhs_extra = (k - 1) / 2 * float(np.sum(gs.norms2[: k - 1]))
    cap = s * s * gs.norms2[k - 1]
    if ell <= n:
        cap = min(cap, gs.norms2[ell - 1])
    if r is None:
        r = math.sqrt(max(cap - lhs_extra, 0.0))
    ok = r * r + lhs_extra <= cap * (1 + 1e-12)
    bound = 2 ** (n - k + 1) * (2 * math.ceil(2 * s) ** (ell - k) - 1)
    _, d2 = closest(gs, view.tau)
    Z, P = enumerate_ball(view, (d2 + r * r) * (1 + 1e-12))
    Z = Z[P < d2 + r * r - 1e-12 * max(1.0, d2)]
    count = len({tuple(z[k - 1 :]) for z in Z.tolist()})
    return ShiftCount(count, bound, bool(ok), r)


# ---------------------------------------------------------------------------
# cluster CVP


def _dedupe(Z: np.ndarray, d2: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique rows ordered by distance, ties lexicographically."""
    if len(Z) == 0:
        return Z, d2
    Z, idx = np.unique(Z, axis=0, return_index=True)
    d2 = d2[idx]
    order = np.lexsort(tuple(Z.T[::-1]) + (d2,))
    return Z[order], d2[order]


def _prune(Z, d2, alpha: float, p_cap: int):
    if len(Z) == 0:
        return Z, d2
    keep = d2 <= (1 + alpha) ** 2 * d2[0] * (1 + 1e-12) + 1e-12
    return Z[keep][:p_cap], d2[keep][:p_cap]


def ccvp_view(view: ShiftedLattice, cfg: CCVPConfig, rng, audit: dict | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Candidate list for a view with HKZ GS data.

    Returns coefficient rows sorted by distance and their squared distances
    (including ``view.resid2``).  ``audit`` receives the unpruned list.
    """
    n = view.rank
    span = ShiftedLattice(view.gs, view.tau, 0.0)
    z0 = babai(span.gs, span.tau)
    u2 = float(span.norms2(z0[None, :])[0])
    if u2 == 0.0:
        Z, d2 = z0[None, :], np.array([view.resid2])
        if audit is not None:
            audit["raw"] = (Z, d2)
        return Z, d2
    f = cfg.f_for(n)
    ell = cfg.ell_for(n)
    if cfg.oracle_distance:
        _, e2 = closest(span.gs, span.tau)
        est = DistanceEstimate(math.sqrt(e2), math.sqrt(e2), True)
    else:
        est = estimate_view(span, f, rng, cfg=cfg.pipeline())
    if est.upper == 0.0:
        z, _ = closest(span.gs, span.tau)
        Z, d2 = z[None, :], np.array([view.resid2])
        if audit is not None:
            audit["raw"] = (Z, d2)
        return Z, d2
    s_fine = GaussianParam(est.lower / (n**cfg.s_exponent * f), -ell)
    sampler = cfg.sampler()
    pcfg = cfg.pipeline()
    rows, dists = [z0[None, :]], [np.array([u2])]
    batch = cfg.batch
    for _ in range(cfg.runs_for(n)):
        while True:
            stages: list = []
            sample_view(span, s_fine, est.upper, pcfg, sampler, rng, batch, min_ell=ell, stages=stages)
            got = [b for b in stages[-(ell + 1) :] if b.size]
            # long pipelines can starve before the fine stages; retry larger
            if got or batch >= cfg.batch_cap:
                break
            batch *= 2
        for b in got:
            Zb = b.coeffs if b.counts is None else b.coeffs[b.counts > 0]
            Zb = np.unique(Zb, axis=0)
            rows.append(Zb)
            dists.append(span.norms2(Zb))
    Z, d2 = _dedupe(np.vstack(rows), np.concatenate(dists))
    d2 = d2 + view.resid2
    if audit is not None:
        audit["raw"] = (Z, d2)
        audit["s_fine"] = s_fine.value
        audit["batch"] = batch
        audit["estimate"] = est
    return _prune(Z, d2, cfg.alpha_for(n), cfg.p_cap)


def ccvp_solve(B: Basis, t, cfg: CCVPConfig | None = None, rng=None, audit: dict | None = None) -> CandidateSet:
    """Short list of lattice vectors, one of which (with good probability)
    lies in the same class modulo ``2L`` as a closest vector to ``t``.

    Samples are taken at the ladder parameters ``s_i = 2^(-i/2) s``,
    ``i = 0..ℓ``, from the intermediate stages of each sampler run; the list
    keeps only vectors within a factor ``1 + α`` of the best one and at most
    ``p_cap`` of them.
    """
    cfg = cfg or CCVPConfig()
    rng = rng if rng is not None else np.random.default_rng()
    H = hkz_basis(B)
    view = ShiftedLattice.of(H.basis, t)
    Z, d2 = ccvp_view(view, cfg, rng, audit)
    src = H.to_source_coeffs(Z) if len(Z) else Z
    vecs = [B.vector(z) for z in src]
    return CandidateSet(
        vecs,
        [np.asarray(z) for z in src],
        [math.sqrt(max(x, 0.0)) for x in d2],
        [CosetLabel.from_coeffs(z) for z in src],
        view.target,
    )


def prune_audit(B: Basis, t, cfg: CCVPConfig | None = None, rng=None) -> tuple[bool, bool]:
    """Does a closest vector's class mod ``2L`` survive pruning?

    Returns ``(before, after)`` for the unpruned and the pruned candidate
    lists of one top-level run.  ``before and not after`` means pruning threw
    away the only witness.
    """
    cfg = cfg or CCVPConfig()
    rng = rng if rng is not None else np.random.default_rng()
    view = ShiftedLattice.of(hkz_basis(B).basis, t)
    audit: dict = {}
    Z, _ = ccvp_view(view, cfg, rng, audit)
    _, e2 = closest(view.gs, view.tau)
    near, _ = enumerate_ball(view, e2 * (1 + 1e-9) + 1e-12)
    want = label_keys(near)
    before = bool(np.isin(label_keys(audit["raw"][0]), want).any())
    return before, bool(np.isin(label_keys(Z), want).any())


# ---------------------------------------------------------------------------
# exact CVP


def _round_1d(c: float) -> int:
    lo = math.floor(c)
    frac = c - lo
    if abs(frac - 0.5) <= 1e-12 * max(1.0, abs(c)):
        return lo
    return lo + 1 if frac > 0.5 else lo


def _child_seed(ss: np.random.SeedSequence, label) -> np.random.SeedSequence:
    h = zlib.crc32(np.asarray(label, dtype=np.int64).tobytes())
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + (h,))


def _sub_view(view: ShiftedLattice, y: np.ndarray, k: int) -> ShiftedLattice:
    """``L' - (t - y)`` for ``L'`` spanned by the first ``k - 1`` vectors."""
    gs = view.gs
    diff = y @ gs.mu - view.tau
    j = k - 1
    return ShiftedLattice(gs.prefix(j), -diff[:j], view.resid2 + float(diff[j:] ** 2 @ gs.norms2[j:]))


def _solve_view(view: ShiftedLattice, cfg: CCVPConfig, ss, census: Counter | None, depth: int):
    n = view.rank
    if census is not None:
        census[n] += 1
    if depth > cfg.max_depth:
        raise RecursionError("exact CVP recursion exceeded max_depth")
    if n == 0:
        return np.zeros(0, np.int64), view.resid2
    if n == 1:
        z = np.array([_round_1d(float(view.tau[0]))], np.int64)
        return z, float(view.norms2(z[None, :])[0])
    rng = np.random.default_rng(ss)
    gi = good_index(view.gs, cfg.f_for(n))
    k = gi.k
    Z, _ = ccvp_view(view, cfg, rng)
    if len(Z) == 0:
        raise SolverStarvedError("solver starved: empty candidate list")
    reps: dict = {}
    for z in Z:
        reps.setdefault(tuple(z[k - 1 :].tolist()), z)
    best_z, best_d2 = None, math.inf
    for key, y in reps.items():
        sub = _sub_view(view, y, k)
        x, d2 = _solve_view(sub, cfg, _child_seed(ss, key), census, depth + 1)
        full = y.copy()
        full[: k - 1] += x
        if best_z is None or d2 < best_d2 * (1 - 1e-12) - 1e-15:
            best_z, best_d2 = full, d2
        elif d2 <= best_d2 * (1 + 1e-12) + 1e-15 and tuple(full) < tuple(best_z):
            best_z = full
    return best_z, best_d2


def exact_cvp(
    B: Basis,
    t,
    cfg: CCVPConfig | None = None,
    seed: int = 0,
    census: Counter | None = None,
    repeat_offset: int = 0,
) -> LatticeVector:
    """Closest lattice vector to ``t`` by recursion over cluster-CVP lists.

    Each of ``cfg.repeats`` runs uses its own seed stream (``seed`` plus the
    run index, shifted by ``repeat_offset``) and the best result is kept.
    ``census`` counts calls per rank.
    """
    cfg = cfg or CCVPConfig()
    H = hkz_basis(B)
    view = ShiftedLattice.of(H.basis, t)
    best_h, best_d2 = None, math.inf
    for r in range(cfg.repeats):
        ss = np.random.SeedSequence(seed, spawn_key=(repeat_offset + r,))
        h, d2 = _solve_view(view, cfg, ss, census, 0)
        if best_h is None or d2 < best_d2 * (1 - 1e-12):
            best_h, best_d2 = h, d2
    z = H.to_source_coeffs(best_h)
    v = B.vector(z)
    diff = v - view.target
    return LatticeVector(z, v, float(diff @ diff))


@dataclass
class CensusReport:
    """Calls per rank of one exact CVP run and a soft envelope check."""

    calls: dict
    envelope: dict
    within: bool
    result: LatticeVector | None = None

    def lines(self) -> list[str]:
        return [f"rank={d} calls={self.calls[d]}" for d in sorted(self.calls, reverse=True)]


def census_envelope(n: int, d: int, p_cap: int) -> int:
    """Soft cap on calls at rank ``d`` below a rank-``n`` root."""
    if d >= n:
        return 1
    return min(n * n * 2 ** (n - d + 1), p_cap ** (n - d))


def recursion_census(B: Basis, t, cfg: CCVPConfig | None = None, seed: int = 0) -> CensusReport:
    cfg = cfg or CCVPConfig()
    census: Counter = Counter()
    res = exact_cvp(B, t, CCVPConfig(**{**cfg.__dict__, "repeats": 1}), seed, census)
    n = B.rank
    env = {d: census_envelope(n, d, cfg.p_cap) for d in census}
    within = all(census[d] <= env[d] for d in census)
    return CensusReport(dict(census), env, within, res)
