"""Coset square-sampler and the pair-averaging combiner.

Two samples of ``L - t`` whose lattice parts agree modulo ``2L`` average to
another point of ``L - t``; if both are drawn from ``D_{L-t,s}`` and selected
with probability proportional to their coset mass, the average is distributed
as ``D_{L-t,s/√2}``.  A batch is stored as integer coefficient rows plus
multiplicities, so the averages are exact and very large batches stay cheap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PipelineStarvedError
from .gaussian import GaussianParam, m_target
from .lattice import CosetLabel, ShiftedLattice, label_keys

HYPERGEOM_LIMIT = 10**9 - 1


@dataclass
class PipelineConfig:
    """Combiner settings.

    ``ell`` is the number of halving stages (``None`` lets the caller derive
    it); ``kappa`` only enters the strict size requirement and the ledger.
    With ``cross_fit`` each half of the split is accepted using the label
    frequencies of the other half, so no sample is spent purely on
    estimation.  ``accept_scale`` multiplies the acceptance probability
    ``p(label) / max p``.
    """

    ell: int | None = None
    kappa: float = 4.0
    cross_fit: bool = False
    accept_scale: float = 0.5
    explicit_limit: int = 1 << 22

    def __post_init__(self):
        if self.ell is not None and self.ell < 0:
            raise ValueError("ell must be nonnegative")
        if self.kappa < 2:
            raise ValueError("kappa must be at least 2")
        if not 0 < self.accept_scale <= 1:
            raise ValueError("accept_scale must lie in (0, 1]")


def required_input(n: int, ell: int, kappa: float) -> int:
    """Input size ``(32 κ)^(ℓ+1) 2^n`` demanded in strict mode."""
    return int(math.ceil((32 * kappa) ** (ell + 1) * 2**n))


@dataclass
class SampleBatch:
    """Samples of ``L - t`` as coefficient rows with multiplicities."""

    lattice: ShiftedLattice
    s: GaussianParam
    coeffs: np.ndarray
    counts: np.ndarray | None = None
    ledger: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=np.int64)
        if coeffs.ndim != 2:
            coeffs = coeffs.reshape(-1, self.lattice.rank)
        if coeffs.shape[1] != self.lattice.rank:
            raise ValueError("coefficient rows do not match the lattice rank")
        self.coeffs = coeffs
        if self.counts is not None:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (len(self.coeffs),) or np.any(self.counts < 0):
                raise ValueError("counts must be nonnegative and aligned with coeffs")

    @property
    def size(self) -> int:
        return int(self.counts.sum()) if self.counts is not None else len(self.coeffs)

    def __len__(self):
        return self.size

    def rows(self) -> np.ndarray:
        """One row per sample (multiplicities expanded)."""
        if self.counts is None:
            return self.coeffs
        return np.repeat(self.coeffs, self.counts, axis=0)

    def histogram(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct rows (lexicographic) with their counts."""
        if len(self.coeffs) == 0:
            return self.coeffs, np.zeros(0, np.int64)
        w = self.counts if self.counts is not None else np.ones(len(self.coeffs), np.int64)
        uniq, inv = np.unique(self.coeffs, axis=0, return_inverse=True)
        return uniq, np.bincount(inv.ravel(), weights=w, minlength=len(uniq)).astype(np.int64)

    def vectors(self) -> np.ndarray:
        return self.lattice.vectors(self.rows())

    def norms2(self) -> np.ndarray:
        return self.lattice.norms2(self.rows())

    def labels(self) -> np.ndarray:
        return label_keys(self.coeffs)

    def sd_budget(self, c1: float = 1.0, c2: float = 1.0) -> float:
        """Sum of ``M exp(c1 n - c2 κ)`` over ledger entries."""
        return sum(M * math.exp(c1 * n - c2 * k) for M, n, k in self.ledger)

    def with_rows(self, coeffs, counts, s: GaussianParam, entry=None) -> "SampleBatch":
        ledger = list(self.ledger) + ([entry] if entry else [])
        return SampleBatch(self.lattice, s, coeffs, counts, ledger, list(self.flags))


# ---------------------------------------------------------------------------
# square sampler


def _dense_keys(keys: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    uniq, inv = np.unique(keys, return_inverse=True)
    return uniq, inv.ravel()


def _accept_prob(freq: np.ndarray, scale: float) -> np.ndarray:
    top = freq.max() if len(freq) and freq.max() > 0 else 1.0
    return scale * freq / top


def _accept_mask(keys: np.ndarray, rng, cross_fit: bool, scale: float) -> np.ndarray:
    """Keys are assumed to be in random order already."""
    M = len(keys)
    uniq, idx = _dense_keys(keys)
    half = M // 2
    a, b = idx[:half], idx[half:]
    fa = np.bincount(a, minlength=len(uniq)).astype(float)
    fb = np.bincount(b, minlength=len(uniq)).astype(float)
    acc = np.zeros(M, bool)
    acc[half:] = rng.random(M - half) < _accept_prob(fa, scale)[b]
    if cross_fit:
        acc[:half] = rng.random(half) < _accept_prob(fb, scale)[a]
    return acc


def square_sampler(labels, kappa: float = 4.0, rng=None, cross_fit: bool = False, accept_scale: float = 0.5):
    """Turn labels drawn with probabilities ``p_i`` into labels with
    probabilities close to ``p_i² / Σ p_j²``.

    Each label appears in the output at most half as often as in the input.
    ``kappa`` is accepted for interface compatibility; the acceptance rule
    does not depend on it.
    """
    rng = rng if rng is not None else np.random.default_rng()
    labels = list(labels)
    if not labels:
        raise ValueError("labels must be nonempty")
    as_objects = isinstance(labels[0], CosetLabel)
    keys = np.array([lab.key if as_objects else int(lab) for lab in labels], dtype=np.int64)
    keys = keys[rng.permutation(len(keys))]
    acc = _accept_mask(keys, rng, cross_fit, accept_scale)
    uniq, cnt = np.unique(keys[acc], return_counts=True)
    out = np.repeat(uniq, cnt // 2)
    out = out[rng.permutation(len(out))]
    if as_objects:
        n = len(labels[0].coeffs)
        return [CosetLabel.from_key(int(k), n) for k in out]
    return out


# ---------------------------------------------------------------------------
# combining


def _pair_explicit(Z: np.ndarray, rng, cross_fit: bool, scale: float) -> np.ndarray:
    Z = Z[rng.permutation(len(Z))]
    keys = label_keys(Z)
    acc = _accept_mask(keys, rng, cross_fit, scale)
    Za, ka = Z[acc], keys[acc]
    order = np.argsort(ka, kind="stable")
    ks = ka[order]
    if len(ks) == 0:
        return np.zeros((0, Z.shape[1]), np.int64)
    starts = np.flatnonzero(np.r_[True, ks[1:] != ks[:-1]])
    sizes = np.diff(np.r_[starts, len(ks)])
    pos = np.arange(len(ks)) - np.repeat(starts, sizes)
    gsize = np.repeat(sizes, sizes)
    first = np.flatnonzero((pos % 2 == 0) & (pos + 1 < gsize))
    i, j = order[first], order[first + 1]
    total = Za[i] + Za[j]
    if np.any(total & 1):
        raise RuntimeError("pairing shortfall: paired samples from different cosets")
    return total // 2


def _mv_hypergeom(colors: np.ndarray, m: int, rng) -> np.ndarray:
    """Multivariate hypergeometric draw that tolerates totals up to 2e9."""
    colors = np.asarray(colors, dtype=np.int64)
    total = int(colors.sum())
    if m <= 0:
        return np.zeros_like(colors)
    if m >= total:
        return colors.copy()
    if total <= HYPERGEOM_LIMIT:
        method = "count" if total < 10**6 else "marginals"
        return rng.multivariate_hypergeometric(colors, m, method=method)
    if total > 2 * HYPERGEOM_LIMIT:
        raise ValueError("histogram batch too large for exact splitting")
    # split the items into two groups of fewer than 1e9 each; a color may be
    # cut in two since items of one color are interchangeable
    cum = np.cumsum(colors)
    cut = total // 2
    k = int(np.searchsorted(cum, cut, side="left"))
    left = colors.copy()
    left[k + 1 :] = 0
    left[k] -= int(cum[k]) - cut
    right = colors - left
    x = int(rng.hypergeometric(cut, total - cut, m))
    return _mv_hypergeom(left, x, rng) + _mv_hypergeom(right, m - x, rng)


def _pair_histogram(Z: np.ndarray, counts: np.ndarray, rng, cross_fit: bool, scale: float):
    """Exact counterpart of :func:`_pair_explicit` working on multiplicities."""
    M = int(counts.sum())
    uniq, idx = _dense_keys(label_keys(Z))
    A = _mv_hypergeom(counts, M // 2, rng)
    Bc = counts - A
    fa = np.bincount(idx, weights=A, minlength=len(uniq))
    fb = np.bincount(idx, weights=Bc, minlength=len(uniq))
    acc = rng.binomial(Bc, _accept_prob(fa, scale)[idx])
    if cross_fit:
        acc = acc + rng.binomial(A, _accept_prob(fb, scale)[idx])
    out_rows, out_counts = [], []
    for g in range(len(uniq)):
        rows = np.flatnonzero((idx == g) & (acc > 0))
        a = acc[rows].astype(np.int64)
        T = int(a.sum())
        if T < 2:
            continue
        if T % 2:
            drop = rng.choice(len(rows), p=a / T)
            a[drop] -= 1
            T -= 1
        first = _mv_hypergeom(a, T // 2, rng)
        second = a - first
        for r in np.flatnonzero(first):
            partners = _mv_hypergeom(second, int(first[r]), rng)
            second -= partners
            nz = np.flatnonzero(partners)
            out_rows.append((Z[rows[r]] + Z[rows[nz]]) // 2)
            out_counts.append(partners[nz])
    if not out_rows:
        return np.zeros((0, Z.shape[1]), np.int64), np.zeros(0, np.int64)
    R = np.vstack(out_rows)
    C = np.concatenate(out_counts)
    uniq_rows, inv = np.unique(R, axis=0, return_inverse=True)
    return uniq_rows, np.bincount(inv.ravel(), weights=C, minlength=len(uniq_rows)).astype(np.int64)


def combine_once(batch: SampleBatch, kappa: float = 4.0, rng=None, cfg: PipelineConfig | None = None) -> SampleBatch:
    """One combiner stage: ``D_{L-t,s}`` samples in, ``D_{L-t,s/√2}`` out."""
    cfg = cfg or PipelineConfig(kappa=kappa)
    rng = rng if rng is not None else np.random.default_rng()
    M = batch.size
    if M == 0:
        raise ValueError("batch must be nonempty")
    entry = (M, batch.lattice.rank, kappa)
    if M > cfg.explicit_limit:
        Z, C = batch.histogram()
        rows, counts = _pair_histogram(Z, C, rng, cfg.cross_fit, cfg.accept_scale)
        return batch.with_rows(rows, counts, batch.s.halved(), entry)
    rows = _pair_explicit(batch.rows(), rng, cfg.cross_fit, cfg.accept_scale)
    return batch.with_rows(rows, None, batch.s.halved(), entry)


@dataclass
class StageRecord:
    stage: int
    s: float
    n_in: int
    n_out: int
    m_target: float = float("nan")

    def __str__(self):
        return f"stage={self.stage} s={self.s:.12g} in={self.n_in} out={self.n_out} m_target={self.m_target:.12g}"


def pipeline(
    batch: SampleBatch,
    cfg: PipelineConfig,
    rng=None,
    strict: bool = False,
    verify: bool = False,
    records: list | None = None,
    on_stage=None,
) -> SampleBatch:
    """Apply ``cfg.ell`` combiner stages.

    ``records`` collects a :class:`StageRecord` per stage (with ``m_target``
    filled in verification mode); ``on_stage(i, batch)`` sees every
    intermediate batch.  Strict mode enforces the worst-case input size and
    raises :class:`PipelineStarvedError` when the final count falls short of
    ``m_target``.
    """
    rng = rng if rng is not None else np.random.default_rng()
    ell = cfg.ell or 0
    n = batch.lattice.rank
    if strict and batch.size < required_input(n, ell, cfg.kappa):
        raise PipelineStarvedError(
            f"pipeline starved: {batch.size} inputs < required {required_input(n, ell, cfg.kappa)}"
        )
    cur = batch
    for i in range(1, ell + 1):
        if cur.size >= 2:
            nxt = combine_once(cur, cfg.kappa, rng, cfg)
        else:
            nxt = cur.with_rows(np.zeros((0, n), np.int64), None, cur.s.halved(), (cur.size, n, cfg.kappa))
        if records is not None:
            mt = m_target(nxt.lattice, nxt.s) if verify else float("nan")
            records.append(StageRecord(i, nxt.s.value, cur.size, nxt.size, mt))
        if on_stage is not None:
            on_stage(i, nxt)
        cur = nxt
    if verify or strict:
        mt = m_target(cur.lattice, cur.s)
        if cur.size < mt:
            cur.flags.append(f"shortfall: {cur.size} < m_target {mt:.6g}")
            if strict:
                raise PipelineStarvedError(f"pipeline starved: final count {cur.size} < m_target {mt:.6g}")
    return cur
