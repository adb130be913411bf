"""Discrete Gaussian sampling over shifted lattices and approximate CVP.

The sampler restricts ``L - t`` to a shifted sublattice that holds essentially
all of the Gaussian mass, seeds it with nearest-plane (Klein) samples at a wide
parameter ``ŝ = 2^(ℓ/2) s`` and then runs ``ℓ`` combiner stages on two
independent halves of the seed batch, which lands exactly on ``s``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .combiner import PipelineConfig, SampleBatch, pipeline, required_input
from .errors import KleinParameterError, PipelineStarvedError, PreconditionError, RadiusTooSmallError, SolverStarvedError
from .gaussian import GaussianParam, exact_distribution, klein_ok, m_target, sample_klein, tail_radius
from .lattice import Basis, HKZBasis, LatticeVector, ShiftedLattice, babai, closest, hkz_basis

MAX_VERIFY_RANK = 6


@dataclass(frozen=True)
class DistanceEstimate:
    """Bracket ``lower <= dist(t, L) <= upper`` with ``upper <= 2 lower``.

    ``certified`` is False when the lower end comes from sampling rather than
    from an exact computation.
    """

    lower: float
    upper: float
    certified: bool = True

    def __post_init__(self):
        if self.lower < 0 or self.upper < self.lower * (1 - 1e-12):
            raise ValueError("distance bracket must satisfy 0 <= lower <= upper")
        if self.upper > 2 * self.lower * (1 + 1e-12):
            raise ValueError("distance bracket wider than a factor 2")


@dataclass
class SamplerConfig:
    """Knobs of the Gaussian sampler.

    ``klein_factor`` scales the nearest-plane admissibility threshold.
    ``u`` is kept for interface compatibility; the HKZ reduction is exact so
    it never changes a radius.  When ``radius_C`` is set, the containment
    radius is ``radius_C * ŝ / sqrt(log(n + 2))``; otherwise it is derived from
    the Gaussian tail bound at level ``tail_eps``.
    """

    klein_factor: float = 4.0
    u: int = 2
    tail_eps: float = 2.0**-40
    radius_C: float | None = None
    batch: int = 1 << 14
    max_stages: int = 24

    def __post_init__(self):
        if self.klein_factor <= 0:
            raise ValueError("klein_factor must be positive")
        if self.u < 2:
            raise ValueError("u must be at least 2")
        if not 0 < self.tail_eps < 1:
            raise ValueError("tail_eps must lie in (0, 1)")
        if self.batch < 2:
            raise ValueError("batch must be at least 2")


@dataclass
class DGSRequest:
    """Sample ``D_{L-t,s}`` for the lattice of ``basis`` and target ``target``.

    ``f`` bounds how far below the distance the parameter may go:
    ``s > dist(t, L) / f``.  ``eps`` is recorded only.
    """

    basis: Basis
    target: tuple | np.ndarray | None
    s: GaussianParam | float
    f: float = 1.0
    eps: float = 2.0**-40
    dist: DistanceEstimate | None = None

    def __post_init__(self):
        if not isinstance(self.s, GaussianParam):
            self.s = GaussianParam(float(self.s))
        if self.f <= 0:
            raise ValueError("f must be positive")
        if self.dist is not None and self.s.value * self.f <= self.dist.lower:
            raise PreconditionError(
                f"parameter {self.s.value:.6g} is below dist/f = {self.dist.lower / self.f:.6g}"
            )


@dataclass
class SublatticeSplit:
    """Shifted sublattice ``L' - (t - y)`` carrying the Gaussian mass.

    ``view`` is the whole of ``L - t`` in HKZ coordinates and ``k`` the rank of
    ``L'`` (spanned by the first ``k`` HKZ vectors).  ``anchor`` holds the HKZ
    coefficients of ``y`` (zero on the first ``k`` entries).
    """

    k: int
    view: ShiftedLattice
    sub_view: ShiftedLattice
    anchor: np.ndarray
    radius: float
    u: int = 2
    hkz: HKZBasis | None = None

    def lift(self, Z) -> np.ndarray:
        """HKZ coefficients of points given by ``L'`` coefficients."""
        Z = np.asarray(Z, dtype=np.int64)
        if Z.ndim != 2:
            Z = Z.reshape(-1, self.k)
        tail = np.broadcast_to(self.anchor[self.k :], (len(Z), len(self.anchor) - self.k))
        return np.hstack([Z, tail]).astype(np.int64)

    def to_source(self, Z) -> np.ndarray:
        """Coefficients with respect to the original basis."""
        H = self.lift(Z)
        return self.hkz.to_source_coeffs(H) if self.hkz is not None else H


def _split_view(view: ShiftedLattice, r: float) -> tuple[int, np.ndarray, ShiftedLattice]:
    """Longest prefix with GS norms at most ``r`` and the anchor on the rest."""
    gs = view.gs
    n = gs.rank
    norms = gs.gs_norms
    k = 0
    while k < n and norms[k] <= r:
        k += 1
    anchor = np.zeros(n, np.int64)
    if k == n:
        return k, anchor, view
    tail_z, _ = closest(gs.tail(k), view.tau[k:])
    anchor[k:] = tail_z
    diff = anchor @ gs.mu - view.tau
    tau_sub = -diff[:k]
    extra = float(diff[k:] ** 2 @ gs.norms2[k:])
    sub = ShiftedLattice(gs.prefix(k), tau_sub, view.resid2 + extra)
    return k, anchor, sub


def _hkz_view(B: Basis, t) -> tuple[HKZBasis, ShiftedLattice]:
    H = hkz_basis(B)
    return H, ShiftedLattice.of(H.basis, t)


def _exact_dist(view: ShiftedLattice) -> float:
    if view.rank == 0:
        return math.sqrt(view.resid2)
    _, d2 = closest(view.gs, view.tau)
    return math.sqrt(d2 + view.resid2)


def shifted_sublattice(B: Basis, t, r: float, u: int = 2, dist: DistanceEstimate | None = None) -> SublatticeSplit:
    """Split off the shifted sublattice holding every short vector of ``L - t``.

    Every ``v`` in ``L - t`` with ``||v|| <= r - dist(t, L)`` lies in
    ``L' - (t - y)``.  Requires ``r >= (1 + sqrt n) dist(t, L)``, checked with
    the upper end of ``dist`` (exact distance when omitted).
    """
    H, view = _hkz_view(B, t)
    d_up = dist.upper if dist is not None else _exact_dist(view)
    n = view.rank
    if r < (1 + math.sqrt(n)) * d_up:
        raise RadiusTooSmallError(f"radius too small: {r:.6g} < {(1 + math.sqrt(n)) * d_up:.6g}")
    k, anchor, sub = _split_view(view, r)
    return SublatticeSplit(k, view, sub, anchor, r, u, H)


def containment_radius(n: int, d_up: float, s_hat: float, cfg: SamplerConfig) -> float:
    """Radius of the sublattice split used when seeding at ``s_hat``."""
    if cfg.radius_C is not None:
        r = cfg.radius_C * s_hat / math.sqrt(math.log(n + 2))
    else:
        r = d_up + tail_radius(n, (d_up / s_hat) ** 2, cfg.tail_eps) * s_hat * math.sqrt(n)
    return max(r, (1 + math.sqrt(n)) * d_up)


def _split_for(view: ShiftedLattice, H, s_hat: float, d_up: float, cfg: SamplerConfig) -> SublatticeSplit:
    r = containment_radius(view.rank, d_up, s_hat, cfg)
    k, anchor, sub = _split_view(view, r)
    return SublatticeSplit(k, view, sub, anchor, r, cfg.u, H)


def init_samples(
    B: Basis,
    t,
    M: int,
    s_hat: GaussianParam | float,
    u: int = 2,
    rng=None,
    cfg: SamplerConfig | None = None,
    dist: DistanceEstimate | None = None,
) -> tuple[SublatticeSplit, SampleBatch]:
    """Seed batch of ``M`` nearest-plane samples of ``L' - (t - y)`` at ``s_hat``.

    The returned batch lives on the sublattice view; map rows back with
    ``split.to_source``.
    """
    cfg = cfg or SamplerConfig(u=u)
    rng = rng if rng is not None else np.random.default_rng()
    if not isinstance(s_hat, GaussianParam):
        s_hat = GaussianParam(float(s_hat))
    H, view = _hkz_view(B, t)
    d_up = dist.upper if dist is not None else _exact_dist(view)
    split = _split_for(view, H, s_hat.value, d_up, cfg)
    return split, _seed(split, M, s_hat, rng, cfg)


def _seed(split: SublatticeSplit, M: int, s_hat: GaussianParam, rng, cfg: SamplerConfig) -> SampleBatch:
    Z = sample_klein(split.sub_view, s_hat.value, M, rng, cfg.klein_factor)
    return SampleBatch(split.sub_view, s_hat, Z)


def _derive_ell(view, H, s: GaussianParam, d_up: float, cfg: SamplerConfig, min_ell: int = 0):
    """Smallest ``ℓ >= min_ell`` whose seed parameter passes the Klein test."""
    for ell in range(min_ell, cfg.max_stages + 1):
        s_hat = GaussianParam(s.base, s.exponent + ell)
        split = _split_for(view, H, s_hat.value, d_up, cfg)
        if klein_ok(split.sub_view.gs, s_hat.value, cfg.klein_factor):
            return ell, s_hat, split
    raise KleinParameterError(f"no admissible seed parameter within {cfg.max_stages} stages")


def _merge(parts: list[SampleBatch], view: ShiftedLattice, s: GaussianParam, transform) -> SampleBatch:
    rows, counts = [], []
    explicit = all(p.counts is None for p in parts)
    for p in parts:
        rows.append(transform(p.coeffs))
        if not explicit:
            counts.append(p.counts if p.counts is not None else np.ones(len(p.coeffs), np.int64))
    Z = np.vstack(rows) if rows else np.zeros((0, view.rank), np.int64)
    C = None if explicit else np.concatenate(counts)
    ledger = [e for p in parts for e in p.ledger]
    flags = [f for p in parts for f in p.flags]
    return SampleBatch(view, s, Z, C, ledger, flags)


def tv_to_exact(batch: SampleBatch, eps_rel: float = 1e-12) -> float:
    """Total variation between the batch histogram and ``D_{L-t,s}``."""
    Z, p = exact_distribution(batch.lattice, batch.s.value, eps_rel)
    rows, cnt = batch.histogram()
    if len(rows) == 0:
        return 1.0
    index = {tuple(z): i for i, z in enumerate(Z.tolist())}
    q = cnt / cnt.sum()
    tv = 0.0
    seen = np.zeros(len(p), bool)
    for z, qi in zip(rows.tolist(), q):
        i = index.get(tuple(z))
        if i is None:
            tv += qi
        else:
            seen[i] = True
            tv += abs(qi - p[i])
    tv += p[~seen].sum()
    return 0.5 * float(tv)


def sample_view(
    view: ShiftedLattice,
    s: GaussianParam,
    d_up: float,
    cfg: PipelineConfig,
    sampler: SamplerConfig,
    rng,
    M: int,
    min_ell: int = 0,
    stages: list | None = None,
    records: list | None = None,
    strict: bool = False,
) -> tuple[SampleBatch, int, SublatticeSplit]:
    """Core of :func:`dgs_solve` on a view whose GS data is already HKZ.

    Returns the output batch in the view's coefficients, the number of
    stages and the split used for seeding.
    """
    if cfg.ell is None:
        ell, s_hat, split = _derive_ell(view, None, s, d_up, sampler, min_ell)
    else:
        ell = cfg.ell
        s_hat = GaussianParam(s.base, s.exponent + ell)
        split = _split_for(view, None, s_hat.value, d_up, sampler)
        if not klein_ok(split.sub_view.gs, s_hat.value, sampler.klein_factor):
            raise KleinParameterError(f"ell={ell} gives a seed parameter below the Klein threshold")
    if strict and M // 2 < required_input(split.k, ell, cfg.kappa):
        need = required_input(split.k, ell, cfg.kappa)
        raise PipelineStarvedError(f"pipeline starved: half batch {M // 2} < required {need}")
    run_cfg = PipelineConfig(ell, cfg.kappa, cfg.cross_fit, cfg.accept_scale, cfg.explicit_limit)
    seed = _seed(split, M, s_hat, rng, sampler)
    half = M // 2
    halves = [
        SampleBatch(split.sub_view, s_hat, seed.coeffs[:half]),
        SampleBatch(split.sub_view, s_hat, seed.coeffs[half:]),
    ]
    per_stage: list[list[SampleBatch]] = [[] for _ in range(ell + 1)]
    outs = []
    for h in halves:
        per_stage[0].append(h)
        outs.append(pipeline(h, run_cfg, rng, records=records, on_stage=lambda i, b: per_stage[i].append(b)))
    if stages is not None:
        for parts in per_stage:
            stages.append(_merge(parts, view, parts[0].s, split.lift))
    out = _merge(outs, view, outs[0].s, split.lift)
    out.ledger.append((M, view.rank, cfg.kappa))
    out.flags.append(f"ell={ell} k={split.k} s_hat={s_hat.value:.12g}")
    return out, ell, split


def _to_source(batch: SampleBatch, H: HKZBasis, source: ShiftedLattice) -> SampleBatch:
    return SampleBatch(source, batch.s, H.to_source_coeffs(batch.coeffs), batch.counts, batch.ledger, batch.flags)


def dgs_solve(
    req: DGSRequest,
    cfg: PipelineConfig | None = None,
    M_override: int | None = None,
    rng=None,
    sampler: SamplerConfig | None = None,
    strict: bool = False,
    verify: bool = False,
    min_ell: int = 0,
    stages: list | None = None,
    records: list | None = None,
) -> SampleBatch:
    """Samples from ``D_{L-t,s}`` as coefficient rows of the input basis.

    ``cfg.ell`` fixes the number of combiner stages; when it is ``None`` the
    smallest count (at least ``min_ell``) making the seed parameter
    admissible is used.  ``stages`` collects the merged batch after every
    stage, index 0 being the seed.  Verification records the total variation
    to the exact law and the shortfall against ``m_target`` in ``flags``.
    """
    cfg = cfg or PipelineConfig()
    sampler = sampler or SamplerConfig()
    rng = rng if rng is not None else np.random.default_rng()
    H, view = _hkz_view(req.basis, req.target)
    d_up = req.dist.upper if req.dist is not None else _exact_dist(view)
    M = int(M_override) if M_override is not None else sampler.batch
    inner: list | None = [] if stages is not None else None
    out, ell, split = sample_view(view, req.s, d_up, cfg, sampler, rng, M, min_ell, inner, records, strict)
    source = ShiftedLattice.of(req.basis, req.target)
    if stages is not None:
        stages.extend(_to_source(b, H, source) for b in inner)
    out = _to_source(out, H, source)
    if verify or strict:
        mt = m_target(source, out.s) if view.rank <= MAX_VERIFY_RANK else float("nan")
        if out.size < mt:
            out.flags.append(f"shortfall: {out.size} < m_target {mt:.6g}")
            if strict:
                raise PipelineStarvedError(f"pipeline starved: final count {out.size} < m_target {mt:.6g}")
        if verify and view.rank <= MAX_VERIFY_RANK and out.size:
            out.flags.append(f"tv={tv_to_exact(out):.6g}")
    return out


# ---------------------------------------------------------------------------
# distance estimates and approximate CVP


def _best_of(batch: SampleBatch) -> tuple[np.ndarray, float] | None:
    if batch.size == 0:
        return None
    Z = batch.coeffs if batch.counts is None else batch.coeffs[batch.counts > 0]
    n2 = batch.lattice.norms2(Z)
    i = int(np.argmin(n2))
    return Z[i], float(n2[i])


def estimate_view(
    view: ShiftedLattice,
    f: float,
    rng,
    sampler: SamplerConfig | None = None,
    cfg: PipelineConfig | None = None,
    rounds: int = 8,
) -> DistanceEstimate:
    """Distance bracket for a view with HKZ GS data, ignoring ``resid2``.

    The nearest-plane distance ``U`` is an upper bound, improved by sampling
    at ``U / 2`` until a round brings no progress; the lower end
    ``U / (1 + 1/f)`` is then a high-probability bound, not a certificate.
    """
    view = ShiftedLattice(view.gs, view.tau, 0.0)
    if view.rank == 0:
        return DistanceEstimate(0.0, 0.0, True)
    z = babai(view.gs, view.tau)
    U = math.sqrt(float(view.norms2(z[None, :])[0]))
    if U == 0.0:
        return DistanceEstimate(0.0, 0.0, True)
    sampler = sampler or SamplerConfig(klein_factor=1.0, batch=1 << 11)
    cfg = cfg or PipelineConfig(cross_fit=True, accept_scale=1.0)
    for _ in range(rounds):
        out, _, _ = sample_view(view, GaussianParam(U / 2), U, cfg, sampler, rng, sampler.batch)
        best = _best_of(out)
        if best is None or math.sqrt(best[1]) >= U * (1 - 1e-12):
            break
        U = math.sqrt(best[1])
        if U == 0.0:
            return DistanceEstimate(0.0, 0.0, False)
    return DistanceEstimate(U / (1 + 1 / f), U, False)


def estimate_distance(
    B: Basis,
    t,
    f: float = 1.0,
    rng=None,
    oracle: bool = False,
    sampler: SamplerConfig | None = None,
    cfg: PipelineConfig | None = None,
    rounds: int = 8,
) -> DistanceEstimate:
    """Bracket ``dist(t, L)`` within a factor 2 (enumeration in oracle mode)."""
    rng = rng if rng is not None else np.random.default_rng()
    view = ShiftedLattice.of(B, t)
    if oracle or view.rank == 0:
        d = _exact_dist(view)
        return DistanceEstimate(d, d, True)
    _, hview = _hkz_view(B, t)
    return estimate_view(hview, f, rng, sampler, cfg, rounds)


def approx_cvp(
    B: Basis,
    t,
    f: float = 1.0,
    rng=None,
    oracle: bool = False,
    sampler: SamplerConfig | None = None,
    cfg: PipelineConfig | None = None,
    max_stages: int = 8,
    repeats: int = 1,
) -> LatticeVector:
    """A lattice vector within ``(1 + 1/f) dist(t, L)`` of ``t`` (with high
    probability).

    Samples at ``s = d / (n f)`` where ``d`` is the lower end of the distance
    bracket; ``s`` is raised when reaching it would need more than
    ``max_stages`` combiner stages.  Returns the sample closest to ``t``.
    """
    rng = rng if rng is not None else np.random.default_rng()
    sampler = sampler or SamplerConfig(klein_factor=1.0, batch=1 << 15)
    cfg = cfg or PipelineConfig(cross_fit=True, accept_scale=1.0)
    view = ShiftedLattice.of(B, t)
    n = max(view.rank, 1)
    est = estimate_distance(B, t, f, rng, oracle, cfg=cfg)
    z0 = babai(view.gs, view.tau)
    best_z, best_n2 = z0, float(view.norms2(z0[None, :])[0])
    if est.upper == 0.0 or best_n2 == 0.0:
        return LatticeVector(z0, B.vector(z0), best_n2)
    H, hview = _hkz_view(B, t)
    s = GaussianParam(est.lower / (n * f))
    capped = SamplerConfig(sampler.klein_factor, sampler.u, sampler.tail_eps, sampler.radius_C, sampler.batch, max_stages)
    while True:
        try:
            _derive_ell(hview, H, s, est.upper, capped)
            break
        except KleinParameterError:
            s = GaussianParam(s.value * 2.0)
    got = False
    for _ in range(repeats):
        req = DGSRequest(B, t, s, f=2 * n * f + 2, dist=est)
        out = dgs_solve(req, cfg, rng=rng, sampler=capped)
        best = _best_of(out)
        if best is None:
            continue
        got = True
        if best[1] < best_n2:
            best_z, best_n2 = best
    if not got:
        raise SolverStarvedError("solver starved: the sampler produced no vectors")
    best_z = np.asarray(best_z, dtype=np.int64)
    return LatticeVector(best_z, B.vector(best_z), best_n2)
