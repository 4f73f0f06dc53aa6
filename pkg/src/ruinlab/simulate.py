"""Seeded Monte Carlo for the shock model and its equivalent constructions.

Paths are processed in fixed-size blocks. Block ``b`` of experiment ``e`` draws from
``SeedSequence(seed, spawn_key=(e, b))``, and blocks are reduced in index order with
integer accumulators, so results do not depend on how many worker threads run.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .aggregate import bivariate_claim_pmf, claims_moments, is_product_shock_law
from .counting import counts_joint_pmf
from .model import ModelSpec, Pmf, model_summary
from .ruin import adjustment_coefficient, thinning_equivalence

BLOCK_SIZE = 1 << 16

# stream identifiers; fixed so that adding experiments never shifts existing streams
_STREAM = {
    "paths": 1,
    "counts_direct": 2,
    "counts_thinned": 3,
    "claims_direct": 4,
    "claims_thinned": 5,
    "claims_product": 6,
    "ruin": 7,
    "thinning_left": 8,
    "thinning_right": 9,
}


@dataclass(frozen=True)
class SimConfig:
    seed: int
    n_paths: int
    horizon: int
    u: int = 0
    block_size: int = BLOCK_SIZE
    threads: int | None = None

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.horizon < 0:
            raise ValueError("horizon must be >= 0")
        if self.u < 0:
            raise ValueError("initial capital must be >= 0")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("threads")
        return d


@dataclass
class Statistic:
    name: str
    estimate: float
    std_error: float
    n: int


@dataclass
class SimSummary:
    experiment: str
    config: dict
    statistics: list[Statistic] = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def stat(self, name: str) -> Statistic:
        for s in self.statistics:
            if s.name == name:
                return s
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "config": self.config,
            "statistics": [asdict(s) for s in self.statistics],
            "tables": self.tables,
            "extras": self.extras,
        }


def default_threads() -> int:
    raw = os.environ.get("RUINLAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return 1


def _blocks(cfg: SimConfig):
    n_full, rest = divmod(cfg.n_paths, cfg.block_size)
    sizes = [cfg.block_size] * n_full + ([rest] if rest else [])
    return list(enumerate(sizes))


def _rng(cfg: SimConfig, stream: str, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(_STREAM[stream], block)))


def _run_blocks(cfg: SimConfig, stream: str, work) -> list:
    """Apply ``work(rng, size)`` to every block; results come back in block order."""
    jobs = _blocks(cfg)
    threads = cfg.threads or default_threads()

    def one(job):
        b, size = job
        return work(_rng(cfg, stream, b), size)

    if threads <= 1 or len(jobs) == 1:
        return [one(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, jobs))


def _moment_stat(name: str, total: int, total_sq: int, n: int) -> Statistic:
    mean = total / n
    if n > 1:
        var = max((total_sq - total * total / n) / (n - 1), 0.0)
    else:
        var = 0.0
    return Statistic(name, mean, math.sqrt(var / n), n)


def _proportion_stat(name: str, hits: int, n: int) -> Statistic:
    phat = hits / n
    return Statistic(name, phat, math.sqrt(phat * (1 - phat) / n), n)


# ---------------------------------------------------------------------------
# Per-period outcome tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _Outcomes:
    """Every (event, type-1 claim, type-2 claim) outcome of one period, with its probability."""

    cdf: np.ndarray
    event: np.ndarray  # 0 none, 1 type-1 only, 2 type-2 only, 3 shock
    s1: np.ndarray
    s2: np.ndarray

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        idx = np.searchsorted(self.cdf, rng.random(size), side="right")
        return np.minimum(idx, len(self.cdf) - 1)


def _outcomes(model: ModelSpec) -> _Outcomes:
    s = model.shock
    rows = [(1.0 - s.p, 0, 0, 0)]
    rows += [(s.p1 * w, 1, k, 0) for k, w in zip(model.law1.support, model.law1.probs)]
    rows += [(s.p2 * w, 2, 0, k) for k, w in zip(model.law2.support, model.law2.probs)]
    rows += [(s.p0 * w, 3, k3, k4) for k3, k4, w in model.shock_joint.atoms]
    probs = np.array([r[0] for r in rows])
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0
    return _Outcomes(
        cdf,
        np.array([r[1] for r in rows]),
        np.array([r[2] for r in rows], dtype=np.int64),
        np.array([r[3] for r in rows], dtype=np.int64),
    )


def _sampler(support, probs):
    support = np.asarray(support, dtype=np.int64)
    cdf = np.cumsum(probs)
    cdf[-1] = 1.0

    def draw(rng, size):
        idx = np.minimum(np.searchsorted(cdf, rng.random(size), side="right"), len(cdf) - 1)
        return support[idx]

    return draw


def _sum_of_iid(rng, counts: np.ndarray, support, probs) -> np.ndarray:
    """Sum of ``counts[i]`` i.i.d. draws from a finite law, via multinomial cell counts."""
    cells = rng.multinomial(counts, probs)
    return cells.astype(np.int64) @ np.asarray(support, dtype=np.int64)


# ---------------------------------------------------------------------------
# Path simulation
# ---------------------------------------------------------------------------


def sample_paths(model: ModelSpec, cfg: SimConfig) -> SimSummary:
    """Simulate (M1, M2, S1, S2, R_u) period by period up to ``cfg.horizon``."""
    out = _outcomes(model)
    names = ["M1", "M2", "S1", "S2", "S", "R"]

    def work(rng, size):
        m1 = np.zeros(size, dtype=np.int64)
        m2 = np.zeros_like(m1)
        s1 = np.zeros_like(m1)
        s2 = np.zeros_like(m1)
        ruined = np.zeros(size, dtype=bool)
        for t in range(1, cfg.horizon + 1):
            o = out.draw(rng, size)
            ev = out.event[o]
            m1 += (ev == 1) | (ev == 3)
            m2 += (ev == 2) | (ev == 3)
            s1 += out.s1[o]
            s2 += out.s2[o]
            ruined |= cfg.u + t - s1 - s2 < 0
        s = s1 + s2
        r = cfg.u + cfg.horizon - s
        cols = [m1, m2, s1, s2, s, r]
        return [(int(c.sum()), int((c * c).sum())) for c in cols], int(ruined.sum())

    results = _run_blocks(cfg, "paths", work)
    n = cfg.n_paths
    summary = SimSummary("paths", cfg.to_dict())
    for i, name in enumerate(names):
        tot = sum(r[0][i][0] for r in results)
        sq = sum(r[0][i][1] for r in results)
        summary.statistics.append(_moment_stat(f"{name}({cfg.horizon})", tot, sq, n))
    summary.statistics.append(
        _proportion_stat(f"psi_hat(u={cfg.u},T={cfg.horizon})", sum(r[1] for r in results), n)
    )
    return summary


# ---------------------------------------------------------------------------
# Equivalence of constructions
# ---------------------------------------------------------------------------


def _table_counts(a: np.ndarray, b: np.ndarray, shape) -> np.ndarray:
    flat = a * shape[1] + b
    return np.bincount(flat, minlength=shape[0] * shape[1]).reshape(shape).astype(np.int64)


def chi_square_test(counts: np.ndarray, probs: np.ndarray, min_expected: float = 5.0) -> dict:
    """Pearson chi-square of observed counts against exact cell probabilities.

    Cells with expected count below ``min_expected`` are pooled into one cell. Any
    observation in a zero-probability cell yields p-value 0.
    """
    counts = np.asarray(counts, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    n = counts.sum()
    if np.any(counts[probs <= 0] > 0):
        return {"statistic": math.inf, "dof": 0, "p_value": 0.0}
    expected = n * probs
    big = expected >= min_expected
    obs = list(counts[big])
    exp = list(expected[big])
    small_e, small_o = expected[~big].sum(), counts[~big].sum()
    if small_e > 0:
        obs.append(small_o)
        exp.append(small_e)
    obs, exp = np.array(obs), np.array(exp)
    dof = len(obs) - 1
    if dof < 1:
        return {"statistic": 0.0, "dof": 0, "p_value": 1.0}
    # rescale so both sides carry the same total; exact tables can be short by rounding
    res = stats.chisquare(obs, exp * (n / exp.sum()))
    stat, p_value = float(res.statistic), float(res.pvalue)
    return {"statistic": stat, "dof": dof, "p_value": p_value}


def _compare(name: str, counts: np.ndarray, exact: np.ndarray, n: int) -> dict:
    phat = counts / n
    se = np.sqrt(np.clip(exact * (1 - exact), 0, None) / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, (phat - exact) / se, np.where(phat == exact, 0.0, np.inf))
    res = chi_square_test(counts, exact)
    res.update(
        {
            "name": name,
            "tv_vs_exact": 0.5 * float(np.abs(phat - exact).sum()),
            "max_abs_z": float(np.max(np.abs(z))),
        }
    )
    return res


def _pad(table: np.ndarray, shape) -> np.ndarray:
    out = np.zeros(shape, dtype=table.dtype)
    out[: table.shape[0], : table.shape[1]] = table
    return out


def equivalence_report(model: ModelSpec, t: int, cfg: SimConfig, product_branch: bool | None = None) -> SimSummary:
    """Sample each pair of equivalent constructions from independent streams and compare.

    Counting: multinomial time intersections versus per-period thinning of a
    Bernoulli(p) event stream. Claims: sums over multinomial event counts
    versus per-period indicator-weighted claims. The product-claim construction
    (claims summed over each coordinate's own count) runs when the shock pair
    has independent coordinates, or when ``product_branch`` is forced True.
    """
    s = model.shock
    n = cfg.n_paths
    if product_branch is None:
        product_branch = is_product_shock_law(model)
    elif product_branch and not is_product_shock_law(model):
        raise ValueError("product-claim construction needs a shock law with independent coordinates")

    counts_shape = (t + 1, t + 1)
    exact_counts = counts_joint_pmf(model, t).table if t <= 64 else None
    exact_claims = bivariate_claim_pmf(model, t)
    claims_shape = exact_claims.shape

    event_probs = [s.p0, s.p1, s.p2, max(0.0, 1.0 - s.p)]
    event_probs[-1] = 1.0 - sum(event_probs[:3])

    def counts_direct(rng, size):
        b = rng.multinomial(t, event_probs, size=size)
        return _table_counts(b[:, 1] + b[:, 0], b[:, 2] + b[:, 0], counts_shape)

    def counts_thinned(rng, size):
        a1 = np.zeros(size, dtype=np.int64)
        a2 = np.zeros_like(a1)
        kinds = _sampler([1, 2, 0], [s.p1 / s.p, s.p2 / s.p, s.p0 / s.p])
        for _ in range(t):
            hit = rng.random(size) < s.p
            kind = kinds(rng, size)
            a1 += hit & ((kind == 1) | (kind == 0))
            a2 += hit & ((kind == 2) | (kind == 0))
        return _table_counts(a1, a2, counts_shape)

    atoms = model.shock_joint.atoms
    atom_w = [a[2] for a in atoms]
    k3s, k4s = [a[0] for a in atoms], [a[1] for a in atoms]

    def claims_direct(rng, size):
        b = rng.multinomial(t, event_probs, size=size)
        s1 = _sum_of_iid(rng, b[:, 1], model.law1.support, model.law1.probs)
        s2 = _sum_of_iid(rng, b[:, 2], model.law2.support, model.law2.probs)
        cells = rng.multinomial(b[:, 0], atom_w).astype(np.int64)
        s1 = s1 + cells @ np.asarray(k3s, dtype=np.int64)
        s2 = s2 + cells @ np.asarray(k4s, dtype=np.int64)
        return _table_counts(s1, s2, claims_shape)

    y1 = _sampler(model.law1.support, model.law1.probs)
    y2 = _sampler(model.law2.support, model.law2.probs)
    pair = _sampler(np.arange(len(atoms)), atom_w)

    def claims_thinned(rng, size):
        s3 = np.zeros(size, dtype=np.int64)
        s4 = np.zeros_like(s3)
        kinds = _sampler([1, 2, 0], [s.p1 / s.p, s.p2 / s.p, s.p0 / s.p])
        k3a, k4a = np.asarray(k3s), np.asarray(k4s)
        for _ in range(t):
            hit = rng.random(size) < s.p
            kind = kinds(rng, size)
            v1, v2, j = y1(rng, size), y2(rng, size), pair(rng, size)
            s3 += hit * ((kind == 1) * v1 + (kind == 0) * k3a[j])
            s4 += hit * ((kind == 2) * v2 + (kind == 0) * k4a[j])
        return _table_counts(s3, s4, claims_shape)

    m3, m4 = model.shock_joint.marginal(1), model.shock_joint.marginal(2)
    product_shape = (t * (model.law1.max_value + m3.max_value) + 1, t * (model.law2.max_value + m4.max_value) + 1)

    def claims_product(rng, size):
        b = rng.multinomial(t, event_probs, size=size)
        c1, c2 = b[:, 1] + b[:, 0], b[:, 2] + b[:, 0]
        s5 = _sum_of_iid(rng, c1, model.law1.support, model.law1.probs) + _sum_of_iid(rng, c1, m3.support, m3.probs)
        s6 = _sum_of_iid(rng, c2, model.law2.support, model.law2.probs) + _sum_of_iid(rng, c2, m4.support, m4.probs)
        return _table_counts(s5, s6, product_shape), (int(s5.sum()), int((s5 * s5).sum()), int(s6.sum()), int((s6 * s6).sum()))

    summary = SimSummary("equivalence", dict(cfg.to_dict(), t=t))
    direct = sum(_run_blocks(cfg, "counts_direct", counts_direct))
    thinned = sum(_run_blocks(cfg, "counts_thinned", counts_thinned))
    c_direct = sum(_run_blocks(cfg, "claims_direct", claims_direct))
    c_thinned = sum(_run_blocks(cfg, "claims_thinned", claims_thinned))

    summary.tables["counts_direct"] = direct.tolist()
    summary.tables["counts_thinned"] = thinned.tolist()
    summary.tables["claims_direct"] = c_direct.tolist()
    summary.tables["claims_thinned"] = c_thinned.tolist()
    comparisons = []
    if exact_counts is not None:
        comparisons.append(_compare("counts_direct", direct, exact_counts, n))
        comparisons.append(_compare("counts_thinned", thinned, exact_counts, n))
    comparisons.append(_compare("claims_direct", c_direct, exact_claims, n))
    comparisons.append(_compare("claims_thinned", c_thinned, exact_claims, n))
    summary.extras["comparisons"] = comparisons
    summary.extras["tv_counts_direct_vs_thinned"] = 0.5 * float(np.abs(direct - thinned).sum()) / n
    summary.extras["tv_claims_direct_vs_thinned"] = 0.5 * float(np.abs(c_direct - c_thinned).sum()) / n
    summary.extras["counts_cells"] = int(np.prod(counts_shape))

    if product_branch:
        res = _run_blocks(cfg, "claims_product", claims_product)
        table = sum(r[0] for r in res)
        tot = [sum(r[1][i] for r in res) for i in range(4)]
        summary.tables["claims_product"] = table.tolist()
        summary.statistics.append(_moment_stat(f"S5({t})", tot[0], tot[1], n))
        summary.statistics.append(_moment_stat(f"S6({t})", tot[2], tot[3], n))
        shape = (max(product_shape[0], claims_shape[0]), max(product_shape[1], claims_shape[1]))
        exact = _pad(exact_claims, shape)
        summary.extras["claims_product_vs_exact"] = _compare("claims_product", _pad(table, shape), exact, n)
        cm = claims_moments(model, t)
        summary.extras["claims_exact_means"] = {"S1": cm.meanS1, "S2": cm.meanS2}
    return summary


# ---------------------------------------------------------------------------
# Ruin experiments
# ---------------------------------------------------------------------------


def estimate_ruin(model: ModelSpec, cfg: SimConfig, max_deficit: int | None = None) -> SimSummary:
    """Estimate psi(u, T), the ruin-time moments and the deficit law given ruin by T."""
    out = _outcomes(model)
    claim = out.s1 + out.s2
    top_deficit = max_deficit or max(1, int(claim.max()))
    adj = adjustment_coefficient(model) if _net_profit(model) else None
    T, u = cfg.horizon, cfg.u

    def work(rng, size):
        reserve = np.full(size, u, dtype=np.int64)
        ruined = 0
        t_sum = t_sq = 0
        deficits = np.zeros(top_deficit + 1, dtype=np.int64)
        times = np.zeros(T + 1, dtype=np.int64)
        for t in range(1, T + 1):
            if reserve.size == 0:
                break
            reserve += 1 - claim[out.draw(rng, reserve.size)]
            hit = reserve < 0
            k = int(hit.sum())
            if k:
                d = np.minimum(-reserve[hit], top_deficit)
                deficits += np.bincount(d, minlength=top_deficit + 1)
                times[t] += k
                ruined += k
                t_sum += k * t
                t_sq += k * t * t
                reserve = reserve[~hit]
        residual = 0.0 if adj is None else float(np.power(adj.z_star, -reserve.astype(float)).sum())
        return ruined, t_sum, t_sq, deficits, times, residual

    res = _run_blocks(cfg, "ruin", work)
    n = cfg.n_paths
    ruined = sum(r[0] for r in res)
    deficits = sum(r[3] for r in res)
    times = sum(r[4] for r in res)
    summary = SimSummary("ruin", cfg.to_dict())
    summary.statistics.append(_proportion_stat(f"psi_hat(u={u},T={T})", ruined, n))
    if ruined:
        summary.statistics.append(
            _moment_stat("ruin_time_given_ruin", sum(r[1] for r in res), sum(r[2] for r in res), ruined)
        )
        r = np.arange(top_deficit + 1, dtype=np.int64)
        summary.statistics.append(
            _moment_stat("deficit_given_ruin", int(r @ deficits), int((r * r) @ deficits), ruined)
        )
    summary.tables["deficit_counts"] = deficits.tolist()
    summary.tables["ruin_time_counts"] = times.tolist()
    summary.extras["n_ruined"] = ruined
    summary.extras["horizon"] = T
    summary.extras["finite_horizon"] = True
    # per-block float sums reduced in block order, so still thread-count invariant
    summary.extras["residual_ruin_bound"] = None if adj is None else sum(r[5] for r in res) / n
    return summary


def _net_profit(model: ModelSpec) -> bool:
    return model_summary(model).net_profit_holds


def deficit_check(summary: SimSummary, exact_conditional: np.ndarray, k: float = 4.0) -> dict:
    """Compare the simulated deficit histogram with an exact law on {1, 2, ...}."""
    counts = np.asarray(summary.tables["deficit_counts"], dtype=float)
    n = counts.sum()
    r_max = max(len(counts) - 1, len(exact_conditional))
    exact = np.zeros(r_max + 1)
    exact[1 : len(exact_conditional) + 1] = exact_conditional
    obs = np.zeros(r_max + 1)
    obs[: len(counts)] = counts
    phat = obs / n
    se = np.sqrt(exact * (1 - exact) / n)
    err = np.abs(phat - exact)
    ok = bool(np.all(err <= k * se + 1e-15))
    return {"n": int(n), "max_abs_err": float(err.max()), "passed": ok, "phat": phat.tolist(), "exact": exact.tolist()}


# ---------------------------------------------------------------------------
# Thinning experiment
# ---------------------------------------------------------------------------


def thinning_mc_check(xlaw: Pmf, pG: float, c: float, cfg: SimConfig, k_max: int | None = None, k: float = 4.0) -> SimSummary:
    """Sample both compound-geometric constructions and compare with the exact law."""
    if k_max is None:
        k_max = max(20, 10 * xlaw.max_value)
    exact = thinning_equivalence(xlaw, pG, c, k_max)
    a = exact.thinning_prob
    support, probs = xlaw.support, xlaw.weights

    def left(rng, size):
        count = rng.geometric(1.0 - pG, size) - 1
        total = _sum_of_iid(rng, count, support, probs)
        return np.bincount(np.minimum(total, k_max + 1), minlength=k_max + 2)

    def right(rng, size):
        count = rng.geometric(1.0 - c * pG, size) - 1
        kept = rng.binomial(count, a)
        total = _sum_of_iid(rng, kept, support, probs)
        return np.bincount(np.minimum(total, k_max + 1), minlength=k_max + 2)

    n = cfg.n_paths
    h_left = sum(_run_blocks(cfg, "thinning_left", left))
    h_right = sum(_run_blocks(cfg, "thinning_right", right))
    ref = np.concatenate([exact.pmf_left, [max(0.0, 1.0 - exact.pmf_left.sum())]])
    summary = SimSummary("thinning", dict(cfg.to_dict(), pG=pG, c=c, k_max=k_max))
    summary.tables["left_counts"] = h_left.tolist()
    summary.tables["right_counts"] = h_right.tolist()
    for name, h in (("left", h_left), ("right", h_right)):
        phat = h / n
        se = np.sqrt(ref * (1 - ref) / n)
        err = np.abs(phat - ref)
        summary.extras[f"{name}_tv_vs_exact"] = 0.5 * float(err.sum())
        summary.extras[f"{name}_within_{k:g}se"] = bool(np.all(err <= k * se + 1e-15))
        summary.extras[f"{name}_max_abs_z"] = float(np.max(np.where(se > 0, err / np.where(se > 0, se, 1), 0.0)))
    summary.extras["thinning_prob"] = a
    return summary
