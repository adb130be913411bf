"""Instance generation, statistical checks and the experiment runner.

Each experiment kind produces a list of :class:`ReportRecord` lines.  Every
instance draws from its own generator, derived from the experiment seed and
the instance index, so results do not depend on the number of workers.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from scipy import stats

from .combiner import PipelineConfig, SampleBatch, combine_once, pipeline, required_input
from .cvp import CCVPConfig, cluster_test, exact_cvp, recursion_census, sparse_shift_count
from .dgs import DGSRequest, SamplerConfig, dgs_solve
from .gaussian import (
    GaussianParam,
    check_rs_holder,
    check_rs_identity,
    coset_ladder,
    exact_distribution,
    klein_law,
    klein_threshold,
    m_target,
    sample_exact,
    sample_exact_counts,
    sample_klein,
    tail_bound,
)
from .lattice import Basis, ShiftedLattice, closest, cvp_enum, enumerate_ball, hkz_basis, label_keys

MAX_DIM = 12
KINDS = (
    "sample-audit",
    "combiner-audit",
    "pipeline-count",
    "identity-suite",
    "ladder-suite",
    "cluster-audit",
    "tail-audit",
    "shift-audit",
    "cvp-equivalence",
    "census",
    "bench",
)
TARGET_MODES = ("parallelepiped", "near-lattice", "deep-hole-ish")
DENOM = 1024


# ---------------------------------------------------------------------------
# instances


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def random_basis(n: int, entry_bound: int, rng: np.random.Generator) -> Basis:
    """Integer basis with entries uniform in ``[-bound, bound]``, full rank."""
    while True:
        M = rng.integers(-entry_bound, entry_bound + 1, (n, n))
        if abs(np.linalg.det(M)) > 0.5:
            return Basis(M.tolist())


def gen_instance(n: int, entry_bound: int, seed, mode: str = "parallelepiped", noise: float = 0.05):
    """Random basis and rational target.

    ``parallelepiped`` draws the target uniformly (on a 1/1024 grid) from the
    fundamental parallelepiped; ``near-lattice`` adds Gaussian noise of width
    ``noise`` to a lattice point; ``deep-hole-ish`` averages a random corner
    of the parallelepiped, giving a half-lattice point.
    """
    if n < 1 or entry_bound < 1:
        raise ValueError("need n >= 1 and entry_bound >= 1")
    if mode not in TARGET_MODES:
        raise ValueError(f"unknown target mode {mode!r}")
    rng = _rng(seed)
    B = random_basis(n, entry_bound, rng)
    rows = [[int(x) for x in r] for r in B.rows]
    if mode == "parallelepiped":
        coef = [Fraction(int(c), DENOM) for c in rng.integers(0, DENOM, n)]
        extra = [Fraction(0)] * n
    elif mode == "near-lattice":
        coef = [Fraction(int(c)) for c in rng.integers(-3, 4, n)]
        extra = [Fraction(int(round(e * DENOM)), DENOM) for e in rng.normal(0.0, noise, n)] if noise else [Fraction(0)] * n
    else:
        coef = [Fraction(int(c), 2) for c in rng.integers(0, 2, n)]
        extra = [Fraction(0)] * n
    t = tuple(sum((c * r[j] for c, r in zip(coef, rows)), Fraction(0)) + extra[j] for j in range(n))
    return B, t


def instance_hash(B: Basis, t=None) -> str:
    text = repr(B.rows) + "|" + repr(tuple(t) if t is not None else None)
    return hashlib.sha1(text.encode()).hexdigest()[:12]


# ---------------------------------------------------------------------------
# statistics


def chi2_tv(observed: dict, expected: dict) -> tuple[float, float, float]:
    """Pearson statistic, its p-value and the total variation distance.

    Bins with expected count at least 5 are tested individually; the rest
    (including observed keys missing from ``expected``) are pooled.
    """
    total_p = math.fsum(expected.values())
    if abs(total_p - 1.0) > 1e-9:
        raise ValueError("expected probabilities must sum to 1")
    N = sum(observed.values())
    if N < 1000:
        raise ValueError("need at least 1000 observations")
    lengths = {len(k) if isinstance(k, tuple) else -1 for k in list(observed) + list(expected)}
    if len(lengths) > 1:
        raise ValueError("support mismatch: keys of different shapes")
    keys = set(observed) | set(expected)
    tv = 0.5 * math.fsum(abs(observed.get(k, 0) / N - expected.get(k, 0.0)) for k in keys)
    big = [k for k, p in expected.items() if p * N >= 5]
    obs = [observed.get(k, 0) for k in big]
    exp = [expected[k] * N for k in big]
    rest_o = N - sum(obs)
    rest_e = N - math.fsum(exp)
    if rest_e >= 5 or (rest_o > 0 and rest_e > 0):
        obs.append(rest_o)
        exp.append(rest_e)
    elif rest_o > 0:
        return math.inf, 0.0, tv
    if len(obs) <= 1:
        return 0.0, 1.0, tv
    o, e = np.array(obs, float), np.array(exp, float)
    stat = float(np.sum((o - e) ** 2 / e))
    return stat, float(stats.chi2.sf(stat, len(o) - 1)), tv


def _empirical(Z, counts=None) -> dict:
    if counts is None:
        uniq, cnt = np.unique(np.asarray(Z), axis=0, return_counts=True)
    else:
        uniq, cnt = Z, counts
    return {tuple(int(v) for v in z): int(c) for z, c in zip(uniq, cnt) if c > 0}


def _law(Z, p) -> dict:
    return {tuple(int(v) for v in z): float(x) for z, x in zip(Z, p)}


# ---------------------------------------------------------------------------
# reports


@dataclass
class ExperimentSpec:
    kind: str
    dims: list = field(default_factory=lambda: [2])
    trials: int = 1
    seed: int = 0
    params: dict = field(default_factory=dict)
    threads: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if any(d < 1 or d > MAX_DIM for d in self.dims):
            raise ValueError(f"dims must lie in 1..{MAX_DIM}")

    def instance_seed(self, *key) -> np.random.SeedSequence:
        tag = zlib.crc32(self.kind.encode())
        return np.random.SeedSequence(self.seed, spawn_key=(tag,) + tuple(int(k) for k in key))


@dataclass
class ReportRecord:
    experiment: str
    instance: str
    metric: str
    value: float
    tolerance: float
    passed: bool
    op: str = "<="

    def __str__(self):
        return (
            f"experiment={self.experiment} instance={self.instance} metric={self.metric} "
            f"value={_fmt(self.value)} tolerance={_fmt(self.tolerance)} op={self.op} pass={int(self.passed)}"
        )


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)) or (isinstance(x, float) and x.is_integer() and abs(x) < 1e15):
        return str(int(x))
    return f"{x:.6g}"


def _rec(exp, inst, metric, value, tol, op="<=") -> ReportRecord:
    value = float(value)
    ok = value <= tol if op == "<=" else value >= tol
    return ReportRecord(exp, inst, metric, value, float(tol), bool(ok), op)


def summarize(records: list[ReportRecord]) -> dict:
    return {
        "records": len(records),
        "failed": sum(not r.passed for r in records),
        "passed": all(r.passed for r in records),
    }


def write_report(records: list[ReportRecord], path) -> None:
    """Line records to ``path`` and a JSON summary next to it."""
    from pathlib import Path

    p = Path(path)
    p.write_text("".join(str(r) + "\n" for r in records))
    summary = {"summary": summarize(records), "records": [asdict(r) for r in records]}
    p.with_suffix(p.suffix + ".json").write_text(json.dumps(summary, indent=1, sort_keys=True))


def _map(fn, tasks, threads: int):
    if threads <= 1 or len(tasks) < 2:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(threads) as ex:
        return list(ex.map(fn, tasks, chunksize=max(1, len(tasks) // (4 * threads))))


def _trials_record(exp, done, need) -> ReportRecord:
    return _rec(exp, "-", "trials", done, need, ">=")


# ---------------------------------------------------------------------------
# suites


def _klein_case(task):
    name, rows, s, draws, ss, kf = task
    B = Basis(rows)
    rng = _rng(ss)
    view = ShiftedLattice.of(B)
    Z = sample_klein(view, s, draws, rng, kf)
    Ze, p = exact_distribution(view, s)
    law = _law(Ze, p)
    obs = _empirical(Z)
    _, pval, tv = chi2_tv(obs, law)
    bias = 0.5 * float(np.abs(klein_law(view, s, Ze) - p).sum())
    return name, tv, pval, bias


def suite_sample_audit(spec: ExperimentSpec) -> list[ReportRecord]:
    """Nearest-plane sampler against the exact law at the admissibility edge."""
    P = spec.params
    draws = int(P.get("draws", 100_000))
    kf = float(P.get("klein_factor", 4.0))
    tol = float(P.get("tv", 0.02))
    rng = _rng(spec.instance_seed(0))
    cases = [("Z2", [[1, 0], [0, 1]])]
    cases.append(("random2", [[int(x) for x in r] for r in random_basis(2, 10, rng).rows]))
    cases.append(("skewed", [[1, 0], [3, 100]]))
    tasks = []
    for i, (name, rows) in enumerate(cases):
        B = Basis(rows)
        s = klein_threshold(B.gs, kf) * float(P.get("s_scale", 1.0))
        tasks.append((name, rows, s, draws, spec.instance_seed(1, i), kf))
    out = []
    for name, tv, pval, bias in _map(_klein_case, tasks, spec.threads):
        out.append(_rec("sample-audit", name, "tv", tv, tol))
        out.append(_rec("sample-audit", name, "chi2_p", pval, 1e-3 / len(tasks), ">="))
        out.append(_rec("sample-audit", name, "law_tv", bias, tol))
    out.append(_trials_record("sample-audit", len(tasks), 3))
    return out


def _combiner_case(task):
    name, rows, t, s, pairs, ss = task
    B = Basis(rows)
    rng = _rng(ss)
    view = ShiftedLattice.of(B, t)
    M = int(pairs / 0.1)
    Z, C = sample_exact_counts(view, s, M, rng)
    out = combine_once(SampleBatch(view, GaussianParam(s), Z, C), 4.0, rng, PipelineConfig())
    Zo, Co = out.histogram()
    if out.size > pairs:
        keep = rng.multivariate_hypergeometric(Co, pairs) if out.size < 10**9 else Co
        Co = keep
    Ze, p = exact_distribution(view, out.s.value)
    _, pval, tv = chi2_tv(_empirical(Zo, Co), _law(Ze, p))
    return name, tv, pval, int(Co.sum())


def suite_combiner_audit(spec: ExperimentSpec) -> list[ReportRecord]:
    """Output of one combiner stage against ``D_{L-t,s/√2}``."""
    P = spec.params
    pairs = int(P.get("pairs", 100_000))
    n_random = int(P.get("lattices", 5))
    tol = float(P.get("tv", 0.02))
    tasks = []
    rng = _rng(spec.instance_seed(0))
    t = [float(rng.random())]
    tasks.append(("Z", [[1]], t, float(P.get("s", 2.0)), pairs, spec.instance_seed(1, 0)))
    for i in range(n_random):
        B = random_basis(2, 5, rng)
        t = list(rng.random(2) @ B.matrix)
        s = 1.5 * float(np.max(B.gs.gs_norms))
        tasks.append((f"random{i}", [[int(x) for x in r] for r in B.rows], t, s, pairs, spec.instance_seed(1, i + 1)))
    out = []
    alpha = 1e-3 / len(tasks)
    for name, tv, pval, used in _map(_combiner_case, tasks, spec.threads):
        out.append(_rec("combiner-audit", name, "tv", tv, tol))
        out.append(_rec("combiner-audit", name, "chi2_p", pval, alpha, ">="))
        out.append(_rec("combiner-audit", name, "pairs", used, pairs, ">="))
    out.append(_trials_record("combiner-audit", len(tasks), 1 + n_random))
    return out


def _pipeline_case(task):
    ell, rows, t, s, scale, ss = task
    B = Basis(rows)
    rng = _rng(ss)
    view = ShiftedLattice.of(B, t)
    M = max(2, int(required_input(2, ell, 4.0) * scale))
    s_in = GaussianParam(s, ell)
    Z, C = sample_exact_counts(view, s_in.value, M, rng)
    cfg = PipelineConfig(ell=ell, kappa=4.0)
    out = pipeline(SampleBatch(view, s_in, Z, C), cfg, rng, strict=scale >= 1)
    return ell, out.size, m_target(view, out.s)


def suite_pipeline_count(spec: ExperimentSpec) -> list[ReportRecord]:
    """Final pipeline counts against ``m_target`` at strict input sizes."""
    P = spec.params
    ells = list(P.get("ells", [1, 2, 3]))
    runs = spec.trials
    scale = float(P.get("scale", 1.0))
    tasks = []
    for ell in ells:
        for i in range(runs):
            rng = _rng(spec.instance_seed(ell, i, 0))
            B = random_basis(2, 5, rng)
            t = list(rng.random(2) @ B.matrix)
            s = 1.5 * float(np.max(B.gs.gs_norms))
            tasks.append((ell, [[int(x) for x in r] for r in B.rows], t, s, scale, spec.instance_seed(ell, i, 1)))
    res = _map(_pipeline_case, tasks, spec.threads)
    out = []
    for ell in ells:
        rows = [(c, m) for e, c, m in res if e == ell]
        rate = sum(c >= m for c, m in rows) / len(rows)
        out.append(_rec("pipeline-count", f"ell={ell}", "hit_rate", rate, float(P.get("rate", 0.95)), ">="))
        out.append(_rec("pipeline-count", f"ell={ell}", "min_count_over_target", min(c / m for c, m in rows), 0.0, ">="))
    out.append(_trials_record("pipeline-count", runs, int(P.get("min_trials", 50))))
    return out


def _rand_identity_instance(rng, n):
    B = random_basis(n, 4, rng)
    M = B.matrix
    x = rng.random(n) @ M
    y = rng.random(n) @ M
    lo = float(np.max(B.gs.gs_norms))
    s = lo * float(rng.uniform(0.3, 2.0))
    return B, x, y, s


def _identity_case(task):
    n, ss, eps = task
    rng = _rng(ss)
    B, x, y, s = _rand_identity_instance(rng, n)
    return instance_hash(B), check_rs_identity(B, x, y, s, eps).residual


def suite_identity(spec: ExperimentSpec) -> list[ReportRecord]:
    """Coset-sum identity for products of shifted masses."""
    P = spec.params
    eps = float(P.get("eps_mass", 1e-12))
    tol = float(P.get("tol", 3e-12))
    tasks = [(spec.dims[i % len(spec.dims)], spec.instance_seed(i), eps) for i in range(spec.trials)]
    res = _map(_identity_case, tasks, spec.threads)
    worst = max(r for _, r in res)
    out = [_rec("identity-suite", h, "residual", r, tol) for h, r in res if r > tol]
    out.append(_rec("identity-suite", "-", "max_residual", worst, tol))
    out.append(_trials_record("identity-suite", len(res), int(P.get("min_trials", 1000))))
    return out


def _holder_case(task):
    n, ss = task
    rng = _rng(ss)
    B, x, _, s = _rand_identity_instance(rng, n)
    return check_rs_holder(B, x, s).margin


def _ladder_case(task):
    n, ell, ss = task
    rng = _rng(ss)
    B, x, _, s = _rand_identity_instance(rng, n)
    s *= 2.0 ** (ell / 4)
    tr = coset_ladder(B, x, s, ell)
    bound = 2.0 ** (3 * n / (4 * ell))
    return tr.S_upper[tr.chosen_i - 1] / bound, tr.sandwich_ok


def suite_ladder(spec: ExperimentSpec) -> list[ReportRecord]:
    """Hölder-type inequality margins and the coset-mass ladder."""
    P = spec.params
    n_holder = int(P.get("holder_trials", spec.trials))
    n_ladder = int(P.get("ladder_trials", max(1, spec.trials // 2)))
    ells = list(P.get("ells", [2, 3, 4, 5, 6]))
    h_tasks = [(spec.dims[i % len(spec.dims)], spec.instance_seed(0, i)) for i in range(n_holder)]
    l_tasks = [
        (spec.dims[i % len(spec.dims)], ells[(i // len(spec.dims)) % len(ells)], spec.instance_seed(1, i))
        for i in range(n_ladder)
    ]
    margins = _map(_holder_case, h_tasks, spec.threads)
    ladder = _map(_ladder_case, l_tasks, spec.threads)
    out = [
        _rec("ladder-suite", "-", "min_holder_margin", min(margins), -1e-9, ">="),
        _rec("ladder-suite", "-", "max_chosen_S_over_bound", max(r for r, _ in ladder), 1 + 1e-9),
        _rec("ladder-suite", "-", "sandwich_failures", sum(not ok for _, ok in ladder), 0),
        _rec("ladder-suite", "-", "holder_trials", len(margins), int(P.get("min_holder", 1000)), ">="),
        _rec("ladder-suite", "-", "ladder_trials", len(ladder), int(P.get("min_ladder", 500)), ">="),
    ]
    return out


def _cluster_case(task):
    """Pairs of same-class near-closest vectors, in exact integer arithmetic.

    Points are scaled by the target denominator ``D`` so that every squared
    length is an integer.  The clustering window is the covering-radius
    bound doubled, ``r² = Σ ||b~_i||²``; the sublattice window of a random index
    ``k`` is ``||b~_k||²``.
    """
    n, ss = task
    rng = _rng(ss)
    B = random_basis(n, 4, rng)
    H = hkz_basis(B)
    D = 8
    tnum = rng.integers(-4 * D, 4 * D + 1, n)
    t = tuple(Fraction(int(v), D) for v in tnum)
    view = ShiftedLattice.of(H.basis, t)
    k = int(rng.integers(1, n + 1))
    norms2 = H.basis.exact_norms2
    bk2 = norms2[k - 1]
    w2 = sum(norms2, Fraction(0))
    _, d2f = closest(view.gs, view.tau)
    Z, _ = enumerate_ball(view, (d2f + float(max(w2, bk2))) * (1 + 1e-9) + 1e-9)
    rows = np.array([[int(x) for x in r] for r in H.basis.rows], dtype=object)
    tint = np.array([int(v) for v in tnum], dtype=object)
    W = [tuple(int(v) for v in (D * (np.array(z, dtype=object) @ rows) - tint)) for z in Z]
    N2 = [sum(v * v for v in w) for w in W]
    d2 = Fraction(min(N2), D * D)
    keys = label_keys(Z) if len(Z) else np.zeros(0, np.int64)
    in_w = [N2[i] < D * D * (d2 + w2) for i in range(len(W))]
    in_k = [N2[i] < D * D * (d2 + bk2) for i in range(len(W))]
    pairs = clus = proj = proj_pairs = 0
    for i in range(len(W)):
        for j in range(i + 1, len(W)):
            if keys[i] != keys[j]:
                continue
            diff2 = sum((x - y) ** 2 for x, y in zip(W[i], W[j]))
            if in_w[i] and in_w[j]:
                pairs += 1
                clus += not diff2 < 4 * D * D * w2
            if in_k[i] and in_k[j]:
                proj_pairs += 1
                proj += bool(np.any(Z[i][k - 1 :] != Z[j][k - 1 :]))
    return pairs, clus, proj, proj_pairs


def suite_cluster(spec: ExperimentSpec) -> list[ReportRecord]:
    """Exhaustive same-coset pair audit of near-closest vectors."""
    P = spec.params
    tasks = [(spec.dims[i % len(spec.dims)], spec.instance_seed(i)) for i in range(spec.trials)]
    res = _map(_cluster_case, tasks, spec.threads)
    pairs = sum(r[0] for r in res)
    out = [
        _rec("cluster-audit", "-", "cluster_violations", sum(r[1] for r in res), 0),
        _rec("cluster-audit", "-", "projection_violations", sum(r[2] for r in res), 0),
        _rec("cluster-audit", "-", "pairs", pairs, int(P.get("min_pairs", 10_000)), ">="),
        _rec("cluster-audit", "-", "projection_pairs", sum(r[3] for r in res), 1, ">="),
    ]
    # Z², t = (1/2, 1/2): every same-coset pair within a fixed window, each
    # with the smallest radius admitting it
    B = Basis([[1, 0], [0, 1]])
    t = (Fraction(1, 2), Fraction(1, 2))
    d2 = Fraction(1, 2)
    pts = [(a - t[0], b - t[1]) for a in range(-3, 4) for b in range(-3, 4)]
    ws = [(w, w[0] ** 2 + w[1] ** 2) for w in pts if w[0] ** 2 + w[1] ** 2 < d2 + 4]
    bad = 0
    for i in range(len(ws)):
        for j in range(i + 1, len(ws)):
            (wi, ni), (wj, nj) = ws[i], ws[j]
            if all(((x - y) / 2).denominator == 1 for x, y in zip(wi, wj)):
                ri = math.sqrt(float(ni - d2) + 0.01)
                rj = math.sqrt(float(nj - d2) + 0.01)
                bad += not cluster_test(B, wi, wj, ri, rj)
    out.append(_rec("cluster-audit", "Z2-half", "cluster_violations", bad, 0))
    out.append(_trials_record("cluster-audit", len(res), int(P.get("min_trials", 100))))
    return out


def _tail_case(task):
    n, ss, draws = task
    rng = _rng(ss)
    B = random_basis(n, 4, rng)
    t = rng.random(n) @ B.matrix
    view = ShiftedLattice.of(B, t)
    s = float(np.max(B.gs.gs_norms)) * float(rng.uniform(0.5, 2.0))
    _, d2 = closest(view.gs, view.tau)
    a = d2 / s**2
    # radius where the bound is about 0.2, so that exceedances are observable
    r = 1.0 / math.sqrt(2 * math.pi)
    while tail_bound(n, a, r) > 0.2:
        r *= 1.02
    bound = tail_bound(n, a, r)
    Z = sample_exact(view, s, draws, rng)
    k = int(np.sum(view.norms2(Z) > (r * s) ** 2 * n))
    p = stats.binomtest(k, draws, bound, alternative="greater").pvalue
    return k / draws, bound, p


def suite_tail(spec: ExperimentSpec) -> list[ReportRecord]:
    """Empirical tail frequencies under the exact sampler against the bound."""
    P = spec.params
    draws = int(P.get("draws", 10_000))
    tasks = [(spec.dims[i % len(spec.dims)], spec.instance_seed(i), draws) for i in range(spec.trials)]
    res = _map(_tail_case, tasks, spec.threads)
    out = [_rec("tail-audit", f"#{i}", "binom_p", p, 0.01, ">=") for i, (_, _, p) in enumerate(res) if p < 0.01]
    out.append(_rec("tail-audit", "-", "rejections", sum(p < 0.01 for _, _, p in res), 0))
    out.append(_rec("tail-audit", "-", "max_freq_over_bound", max(f / b for f, b, _ in res), math.inf))
    out.append(_trials_record("tail-audit", len(res), int(P.get("min_trials", 100))))
    return out


def _shift_case(task):
    ss, n = task
    rng = _rng(ss)
    while True:
        B = random_basis(n, 6, rng)
        t = tuple(Fraction(int(v), 8) for v in rng.integers(-40, 41, n))
        k = int(rng.integers(1, n + 1))
        ell = int(rng.integers(k, n + 2))
        res = sparse_shift_count(B, t, k, ell, float(n))
        if res.condition_ok and res.r > 0:
            return res.count, res.bound


def suite_shift(spec: ExperimentSpec) -> list[ReportRecord]:
    """Exhaustive sublattice shift counts against the sparse-projection bound."""
    P = spec.params
    n = spec.dims[0]
    tasks = [(spec.instance_seed(i), n) for i in range(spec.trials)]
    res = _map(_shift_case, tasks, spec.threads)
    out = [_rec("shift-audit", "-", "violations", sum(c > b for c, b in res), 0)]
    out.append(_rec("shift-audit", "-", "max_count_over_bound", max(c / b for c, b in res), 1.0))
    out.append(_trials_record("shift-audit", len(res), int(P.get("min_trials", 50))))
    return out


def _cvp_case(task):
    n, i, seed, bound, amp, cfg_kw = task
    mode = TARGET_MODES[i % len(TARGET_MODES)]
    B, t = gen_instance(n, bound, seed, mode)
    oracle = cvp_enum(B, t).dist2
    cfg = CCVPConfig(**cfg_kw)
    ok = lambda d2: d2 <= oracle * (1 + 1e-9) + 1e-9  # noqa: E731
    run_seed = int(seed.generate_state(1)[0])
    first = exact_cvp(B, t, cfg, seed=run_seed).dist2
    best = first
    for r in range(1, amp):
        if ok(best):
            break  # a correct best-of stays correct
        best = min(best, exact_cvp(B, t, cfg, seed=run_seed, repeat_offset=r).dist2)
    return n, instance_hash(B, t), ok(first), ok(best)


def suite_cvp(spec: ExperimentSpec) -> list[ReportRecord]:
    """Exact CVP against enumeration over random instances."""
    P = spec.params
    bound = int(P.get("entry_bound", 10))
    amp = int(P.get("amplify", 5))
    cfg_kw = dict(P.get("ccvp", {}))
    tasks = []
    for n in spec.dims:
        for i in range(spec.trials):
            ss = spec.instance_seed(n, i)
            tasks.append((n, i, ss, bound, amp, cfg_kw))
    t0 = time.perf_counter()
    res = _map(_cvp_case, tasks, spec.threads)
    elapsed = time.perf_counter() - t0
    out = []
    for n in spec.dims:
        rows = [r for r in res if r[0] == n]
        out.append(_rec("cvp-equivalence", f"n={n}", "single_rate", sum(r[2] for r in rows) / len(rows), 0.99, ">="))
        out.append(_rec("cvp-equivalence", f"n={n}", "amplified_rate", sum(r[3] for r in rows) / len(rows), 1.0, ">="))
    out.append(_rec("cvp-equivalence", "-", "seconds", elapsed, float(P.get("max_seconds", 1800))))
    out.append(_trials_record("cvp-equivalence", spec.trials, int(P.get("min_trials", 200))))
    return out


def suite_census(spec: ExperimentSpec) -> list[ReportRecord]:
    """Recursive call counts per rank (soft envelope)."""
    out = []
    for n in spec.dims:
        for i in range(spec.trials):
            B, t = gen_instance(n, int(spec.params.get("entry_bound", 10)), spec.instance_seed(n, i))
            rep = recursion_census(B, t, seed=i)
            h = instance_hash(B, t)
            for d in sorted(rep.calls, reverse=True):
                out.append(_rec("census", h, f"rank{d}_calls", rep.calls[d], rep.envelope[d]))
    return out


def bench_instance(n: int, seed, scale: float = 2.0**-12, kf: float = 4.0):
    """Lattice, target, parameter and input size for one ``dgs_solve`` timing."""
    B, t = gen_instance(n, 10, seed)
    H = hkz_basis(B)
    s = klein_threshold(H.gs, kf) / 2.0 * 1.001
    M = max(4, int(required_input(n, 2, 4.0) * scale))
    return B, t, s, M


def suite_bench(spec: ExperimentSpec) -> list[ReportRecord]:
    """Wall time of ``dgs_solve`` (two stages) at input size proportional to
    the strict requirement; reports the fitted slope of log2(time) vs n."""
    P = spec.params
    scale = float(P.get("scale", 2.0**-12))
    reps = int(P.get("reps", 3))
    times = {}
    for n in spec.dims:
        best = math.inf
        for r in range(reps):
            B, t, s, M = bench_instance(n, spec.instance_seed(n, 0), scale)
            rng = _rng(spec.instance_seed(n, 1, r))
            t0 = time.perf_counter()
            dgs_solve(DGSRequest(B, t, s), PipelineConfig(ell=2, kappa=4.0), M, rng, SamplerConfig())
            best = min(best, time.perf_counter() - t0)
        times[n] = best
    out = [_rec("bench", f"n={n}", "seconds", times[n], math.inf) for n in spec.dims]
    if len(times) >= 2:
        ns = np.array(sorted(times))
        slope = float(np.polyfit(ns, np.log2([times[n] for n in ns]), 1)[0])
        out.append(_rec("bench", "-", "slope_dev", abs(slope - 1.0), 0.35))
        out.append(ReportRecord("bench", "-", "slope", slope, 1.0, abs(slope - 1.0) <= 0.35, "~"))
    return out


SUITES = {
    "sample-audit": suite_sample_audit,
    "combiner-audit": suite_combiner_audit,
    "pipeline-count": suite_pipeline_count,
    "identity-suite": suite_identity,
    "ladder-suite": suite_ladder,
    "cluster-audit": suite_cluster,
    "tail-audit": suite_tail,
    "shift-audit": suite_shift,
    "cvp-equivalence": suite_cvp,
    "census": suite_census,
    "bench": suite_bench,
}

# suite arguments matching the acceptance criteria
CRITERIA = {
    1: ExperimentSpec("cvp-equivalence", [2, 3, 4, 5, 6, 7, 8], 200),
    2: ExperimentSpec("combiner-audit", [1, 2], 1),
    3: ExperimentSpec("pipeline-count", [2], 50),
    4: ExperimentSpec("identity-suite", [1, 2, 3], 1000),
    5: ExperimentSpec("ladder-suite", [1, 2, 3], 1000),
    6: ExperimentSpec("cluster-audit", [2, 3, 4], 120),
    7: ExperimentSpec("sample-audit", [2], 1),
    8: ExperimentSpec("tail-audit", [1, 2, 3], 100),
    9: ExperimentSpec("shift-audit", [3], 50),
    10: ExperimentSpec("bench", [4, 5, 6, 7, 8, 9, 10], 1),
}


def run_experiment(spec: ExperimentSpec) -> list[ReportRecord]:
    return SUITES[spec.kind](spec)
