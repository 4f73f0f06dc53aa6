"""Ruin and survival probabilities of the reduced compound binomial risk process.

The reserve evolves as ``R_u(t) = u - sum_{i<=t} X_i`` with i.i.d. steps
``X_i = I_{A_i} Y_i - 1`` (see :func:`ruinlab.model.per_period_step_law`). Ruin at
level u is the event that the associated random walk ever exceeds u.

Exact routes provided here:

* the generating function of the walk maximum and its power-series expansion,
* two compound-geometric representations of the maximum (ladder-free variant
  ``"A"`` with summands on {0, 1, ...} and ladder-height variant ``"B"``),
* the Beekman convolution series for the survival curve,
* the Lundberg adjustment coefficient,
* deficit-at-ruin laws for zero initial capital,
* a finite-horizon dynamic-programming oracle, independent of all of the above.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .model import (
    ModelSpec,
    Pmf,
    convolve,
    model_summary,
    per_event_claim_law,
    per_period_claim_law,
    per_period_step_law,
)

DEFAULT_EPS = 1e-10
STATE_CAP = 5_000_000


class NetProfitError(ValueError):
    """The net profit condition p*mu < 1 does not hold."""


class StateSpaceError(ValueError):
    pass


def _require_net_profit(model: ModelSpec):
    summary = model_summary(model)
    if not summary.net_profit_holds:
        raise NetProfitError(f"net profit condition violated: p*mu = {summary.p_mu:g} >= 1")
    return summary


def per_step_pgf(model: ModelSpec, z: float) -> float:
    """E z^{I_A Y}, the generating function of the per-period claim."""
    return per_period_claim_law(model).pgf(z)


def lundberg_function(model: ModelSpec, z: float) -> float:
    """g(z) = E z^{I_A Y} - z; its root above 1 is the adjustment coefficient."""
    return per_step_pgf(model, z) - z


# ---------------------------------------------------------------------------
# Walk maximum
# ---------------------------------------------------------------------------


def global_max_pgf(model: ModelSpec, z: float) -> float:
    """E z^M for the all-time maximum M of the associated random walk, z in [0, 1)."""
    summary = _require_net_profit(model)
    if not 0 <= z < 1:
        raise ValueError("z must lie in [0, 1)")
    return (1.0 - summary.p_mu) * (1.0 - z) / lundberg_function(model, z)


def _quotient_by_z_minus_one(coeffs: np.ndarray) -> np.ndarray:
    """Exact synthetic division of sum c_k z^k by (z - 1); remainder is dropped."""
    n = len(coeffs) - 1
    h = np.zeros(max(n, 1))
    if n == 0:
        return h
    h[n - 1] = coeffs[n]
    for k in range(n - 1, 0, -1):
        h[k - 1] = coeffs[k] + h[k]
    return h


def _lundberg_quotient(model: ModelSpec) -> np.ndarray:
    """Coefficients of h(z) = g(z) / (z - 1), a polynomial since g(1) = 0."""
    d = per_period_claim_law(model).weights.copy()
    if len(d) < 2:
        d = np.concatenate([d, [0.0]])
    d[1] -= 1.0
    return _quotient_by_z_minus_one(d)


def global_max_series(model: ModelSpec, n_max: int) -> np.ndarray:
    """P(M = 0..n_max) by power-series division of the generating function.

    Uses (1 - z) / g(z) = -1 / h(z) so the removable root at z = 1 never enters
    the recursion.
    """
    summary = _require_net_profit(model)
    if model.p >= 1:
        raise ValueError("series expansion needs p < 1")
    a = -_lundberg_quotient(model)
    c = np.zeros(n_max + 1)
    c[0] = (1.0 - summary.p_mu) / a[0]
    for n in range(1, n_max + 1):
        k = min(n, len(a) - 1)
        c[n] = -float(np.dot(a[1 : k + 1], c[n - 1 :: -1][:k])) / a[0]
    return c


def survival_at_zero(model: ModelSpec) -> float:
    summary = _require_net_profit(model)
    if model.p >= 1:
        raise ValueError("survival at zero capital needs p < 1")
    return (1.0 - summary.p_mu) / (1.0 - model.p)


def ladder_height_law(model: ModelSpec) -> Pmf:
    """Law of the first ascending ladder height: P(U1 = k) = P(Y > k) / (mu - 1), k >= 1."""
    mu = model_summary(model).mu
    if mu <= 1:
        raise ValueError("ladder-height law is empty when mu = 1 (every claim equals 1)")
    y = per_event_claim_law(model)
    k = np.arange(1, y.max_value)
    sf = np.array([y.sf(int(x)) for x in k])
    return Pmf(1, np.clip(sf / (mu - 1.0), 0.0, None))


@dataclass(frozen=True, eq=False)
class GeometricRep:
    """Compound geometric law: N ~ P(N=n) = (1 - theta) theta^n summands drawn from ``summand``."""

    theta: float
    summand: Pmf
    variant: str

    def pgf(self, z: float) -> float:
        return (1.0 - self.theta) / (1.0 - self.theta * self.summand.pgf(z))

    def pmf(self, n_max: int) -> np.ndarray:
        return compound_geometric_pmf(self.theta, self.summand, n_max)


def compound_geometric_pmf(theta: float, summand: Pmf, n_max: int) -> np.ndarray:
    """P(sum_{i<=N} U_i = n), n = 0..n_max, by the geometric case of Panjer's recursion."""
    if summand.offset < 0:
        raise ValueError("summands must be non-negative")
    f = summand.dense(0, max(n_max, summand.max_value))
    g = np.zeros(n_max + 1)
    scale = 1.0 / (1.0 - theta * f[0])
    g[0] = (1.0 - theta) * scale
    for n in range(1, n_max + 1):
        g[n] = theta * scale * float(np.dot(f[1 : n + 1], g[n - 1 :: -1]))
    return g


def geometric_representation(model: ModelSpec, variant: str = "B") -> GeometricRep:
    """Compound-geometric representation of the walk maximum.

    ``"A"``: continuation p*mu, summand P(U=k) = P(I_A Y > k) / (p mu), k >= 0.
    ``"B"``: continuation p(mu-1)/(1-p), summand the ladder-height law.
    """
    summary = _require_net_profit(model)
    p, mu = model.p, summary.mu
    y = per_event_claim_law(model)
    if variant == "A":
        k = np.arange(0, y.max_value)
        sf = np.array([y.sf(int(x)) for x in k])
        return GeometricRep(summary.p_mu, Pmf(0, np.clip(p * sf / summary.p_mu, 0.0, None)), "A")
    if variant == "B":
        if mu <= 1:
            raise ValueError("variant B needs mu > 1")
        if p >= 1:
            raise ValueError("variant B needs p < 1")
        return GeometricRep(p * (mu - 1.0) / (1.0 - p), ladder_height_law(model), "B")
    raise ValueError(f"unknown variant {variant!r}; expected 'A' or 'B'")


def representation_as_printed(model: ModelSpec) -> dict:
    """Normalisations obtained when the representations are read literally.

    Variant A with denominator p^2 mu gives summand mass 1/p; variant B with the
    geometric weights swapped puts mass psi(0) rather than delta(0) at N = 0.
    """
    summary = _require_net_profit(model)
    p, mu = model.p, summary.mu
    out = {"variant_A_summand_total": 1.0 / p}
    if p < 1 and mu > 1:
        out["variant_B_count_mass_at_zero"] = p * (mu - 1.0) / (1.0 - p)
    return out


# ---------------------------------------------------------------------------
# Survival curve
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RuinCurve:
    u: np.ndarray
    delta: np.ndarray
    psi: np.ndarray
    lundberg_bound: np.ndarray
    series_tail_bound: np.ndarray
    order: int
    theta: float

    def rows(self):
        for i in range(len(self.u)):
            yield {
                "u": int(self.u[i]),
                "delta": float(self.delta[i]),
                "psi": float(self.psi[i]),
                "lundberg_bound": float(self.lundberg_bound[i]),
                "tail_bound": float(self.series_tail_bound[i]),
            }


def _series_order(theta: float, eps: float) -> int:
    if theta <= 0:
        return 0
    # smallest N with theta^(N+1) / (1 - theta) <= eps
    n = math.ceil(math.log(eps * (1.0 - theta)) / math.log(theta)) - 1
    return max(n, 0)


def beekman_survival(model: ModelSpec, u_max: int, eps: float = DEFAULT_EPS) -> RuinCurve:
    """delta(u) = delta(0) sum_n theta^n H^{*n}(u), theta = p(mu-1)/(1-p).

    Ladder heights are >= 1, so H^{*n}(u) = 0 for n > u and the series is exact
    once the order reaches u; below that the recorded tail bound applies.
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    if u_max < 0:
        raise ValueError("u_max must be >= 0")
    delta0 = survival_at_zero(model)
    mu = model_summary(model).mu
    u = np.arange(u_max + 1)
    adj = adjustment_coefficient(model)
    lundberg = np.zeros(u_max + 1) if adj is None else adj.z_star ** (-u.astype(float))

    if mu <= 1:
        ones = np.ones(u_max + 1)
        return RuinCurve(u, ones, np.zeros(u_max + 1), lundberg, np.zeros(u_max + 1), 0, 0.0)

    theta = model.p * (mu - 1.0) / (1.0 - model.p)
    order = min(_series_order(theta, eps), u_max)
    ladder = ladder_height_law(model)
    # 1 - delta_N(u) = delta0 sum_{n<=m} theta^n Hbar^{*n}(u) + theta^(m+1), m = min(N, u),
    # summed term by term so small ruin probabilities keep their relative accuracy.
    # Hbar^{*n}(u) = Hbar^{*(n-1)}(u) + sum_j h^{*(n-1)}(j) Hbar(u - j), all terms >= 0.
    h_sf = np.array([ladder.sf(int(k)) for k in u])
    psi = np.zeros(u_max + 1)
    power = Pmf.point_mass(0).dense(0, u_max)
    sf = np.zeros(u_max + 1)
    for n in range(order + 1):
        psi += np.where(u >= n, delta0 * theta**n * sf, 0.0)
        sf = sf + np.convolve(power, h_sf)[: u_max + 1]
        power = np.convolve(power, ladder.dense(0, ladder.max_value))[: u_max + 1]
    psi += theta ** (np.minimum(u, order) + 1.0)
    tail = np.where(u > order, delta0 * theta ** (order + 1) / (1.0 - theta), 0.0)
    # guard against last-ulp rises so the curve is exactly non-increasing
    psi = np.minimum.accumulate(np.clip(psi, 0.0, 1.0))
    return RuinCurve(u, 1.0 - psi, psi, lundberg, tail, order, theta)


# ---------------------------------------------------------------------------
# Lundberg coefficient
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AdjustmentCoefficient:
    z_star: float
    epsilon: float
    bracket: tuple[float, float]
    residual: float
    iterations: int

    def to_dict(self) -> dict:
        return {
            "z_star": self.z_star,
            "epsilon": self.epsilon,
            "bracket": list(self.bracket),
            "residual": self.residual,
            "iterations": self.iterations,
        }


def adjustment_coefficient(model: ModelSpec, max_iter: int = 400) -> AdjustmentCoefficient | None:
    """Root z* > 1 of g(z) = E z^{I_A Y} - z by bracketed bisection; ``None`` if all claims equal 1.

    Bisection runs on h(z) = g(z) / (z - 1), which keeps the sign of g on z > 1
    without the cancellation near z = 1.
    """
    _require_net_profit(model)
    if model.max_claim <= 1:
        return None
    h = np.polynomial.Polynomial(_lundberg_quotient(model))
    lo, hi = 1.0 + 1e-9, 2.0
    if h(lo) >= 0:
        lo = 1.0
    while h(hi) <= 0:
        lo, hi = hi, 2.0 * hi
    bracket = (lo, hi)
    root, info = optimize.bisect(
        h, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=max_iter, full_output=True
    )
    # an adjacent float can have a smaller |g| than the returned midpoint
    candidates = (np.nextafter(root, 0.0), root, np.nextafter(root, np.inf))
    z = float(min(candidates, key=lambda x: abs(lundberg_function(model, x))))
    return AdjustmentCoefficient(z, math.log(z), bracket, abs(lundberg_function(model, z)), info.iterations)


def martingale_residual(model: ModelSpec, z: float) -> float:
    """|E z^{I_A Y - 1} - 1|; zero at the adjustment coefficient."""
    return abs(per_step_pgf(model, z) / z - 1.0)


# ---------------------------------------------------------------------------
# Finite-horizon dynamic programming
# ---------------------------------------------------------------------------


def _propagate(dist: np.ndarray, claim_rev: np.ndarray, shift: int):
    full = np.convolve(dist, claim_rev)
    return float(full[:shift].sum()), full[shift:]


def ruin_time_pmf(model: ModelSpec, u: int, horizon: int, cap: int = STATE_CAP) -> np.ndarray:
    """``out[t-1] = P(tau(u) = t)`` for t = 1..horizon, by forward propagation of the reserve law.

    The reserve rises by one per period and falls by the period's claim; mass that
    lands below zero is absorbed as ruin.
    """
    if u < 0:
        raise ValueError("initial capital must be >= 0")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    claim = per_period_claim_law(model).weights
    if u + horizon + 1 > cap:
        raise StateSpaceError(f"reserve state space {u + horizon + 1} exceeds cap {cap}")
    claim_rev = claim[::-1]
    shift = len(claim) - 2
    dist = np.zeros(u + 1)
    dist[u] = 1.0
    out = np.zeros(horizon)
    for t in range(horizon):
        out[t], dist = _propagate(dist, claim_rev, shift)
    return out


def finite_horizon_ruin(model: ModelSpec, u: int, horizon: int, cap: int = STATE_CAP) -> float:
    """P(tau(u) <= horizon), exact up to floating point."""
    return float(ruin_time_pmf(model, u, horizon, cap).sum())


def mean_ruin_time_dp(model: ModelSpec, u: int = 0, tol: float = 1e-13, max_horizon: int = 200_000):
    """E[tau(u) | tau(u) < inf] by propagating the reserve law until the ruin mass converges.

    Reserve levels above the Lundberg cut-off (ruin probability below 1e-17) are
    dropped; their contribution is below the stopping tolerance.
    """
    adj = adjustment_coefficient(model)
    if adj is None:
        return None
    psi = float(beekman_survival(model, u, eps=1e-300).psi[u])
    if psi <= 0:
        return None
    top = u + int(math.ceil(17 * math.log(10) / adj.epsilon)) + 1
    claim = per_period_claim_law(model).weights
    claim_rev, shift = claim[::-1], len(claim) - 2
    dist = np.zeros(u + 1)
    dist[u] = 1.0
    mass = first = 0.0
    t = 0
    while t < max_horizon:
        t += 1
        r, dist = _propagate(dist, claim_rev, shift)
        dist = dist[:top]
        mass += r
        first += t * r
        if psi - mass < tol * psi:
            return first / mass, t, True
    return first / mass, t, False


# ---------------------------------------------------------------------------
# Deficit at ruin with zero initial capital
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DeficitReport:
    ruin_possible: bool
    psi0: float
    lambda_conditional: Pmf | None = None
    lambda_unconditional: Pmf | None = None
    lambda_recursion: np.ndarray | None = None
    recursion_max_abs_diff: float = 0.0
    mean_deficit: float | None = None
    mean_deficit_closed_form: float | None = None
    mean_ruin_time: float | None = None
    pgf_grid: list = field(default_factory=list)
    pgf_max_abs_diff: float = 0.0
    printed: dict = field(default_factory=dict)
    hypothesis_holds: bool | None = None

    def to_dict(self) -> dict:
        def pmf(x):
            return None if x is None else [float(v) for v in x.weights]

        return {
            "ruin_possible": self.ruin_possible,
            "psi0": self.psi0,
            "reconciled": {
                "lambda_conditional": pmf(self.lambda_conditional),
                "lambda_unconditional": pmf(self.lambda_unconditional),
                "lambda_recursion": None
                if self.lambda_recursion is None
                else [float(v) for v in self.lambda_recursion],
                "recursion_max_abs_diff": self.recursion_max_abs_diff,
                "mean_deficit": self.mean_deficit,
                "mean_deficit_closed_form": self.mean_deficit_closed_form,
                "mean_ruin_time": self.mean_ruin_time,
                "pgf_grid": self.pgf_grid,
                "pgf_max_abs_diff": self.pgf_max_abs_diff,
            },
            "paper_printed": self.printed,
            "hypothesis_holds": self.hypothesis_holds,
        }


def deficit_recursion(step0: float, step_law: Pmf, p: float, lambda1: float, r_max: int) -> np.ndarray:
    """Forward ladder recursion for the deficit masses, starting from ``lambda1``.

    lambda_{r+1} = lambda_r (1 - P(X=0)) / (1-p) - lambda_r lambda_1 - P(X=r) / (1-p)
    """
    lam = np.zeros(r_max)
    lam[0] = lambda1
    for r in range(1, r_max):
        lam[r] = lam[r - 1] * (1.0 - step0) / (1.0 - p) - lam[r - 1] * lambda1 - step_law.prob(r) / (1.0 - p)
    return lam


def deficit_laws(model: ModelSpec, r_max: int | None = None, with_ruin_time: bool = True) -> DeficitReport:
    """Deficit-at-ruin laws at zero capital, with every reconciliation check evaluated."""
    summary = _require_net_profit(model)
    if model.p >= 1:
        raise ValueError("deficit laws need p < 1")
    p, mu = model.p, summary.mu
    if mu <= 1:
        return DeficitReport(ruin_possible=False, psi0=0.0)
    y = per_event_claim_law(model)
    support_max = max(1, y.max_value - 1)
    if r_max is None:
        r_max = support_max
    if r_max < 1:
        raise ValueError("r_max must be >= 1")

    r = np.arange(1, r_max + 1)
    sf = np.array([y.sf(int(k)) for k in r])
    uncond = np.clip(p * sf / (1.0 - p), 0.0, None)
    cond = np.clip(sf / (mu - 1.0), 0.0, None)
    psi0 = p * (mu - 1.0) / (1.0 - p)

    step = per_period_step_law(model)
    step0 = step.prob(0)
    lam1_uncond = (p - step0) / (1.0 - p)
    rec = deficit_recursion(step0, step, p, lam1_uncond, r_max)

    full = np.arange(1, support_max + 1)
    full_cond = np.array([y.sf(int(k)) for k in full]) / (mu - 1.0)
    mean_def = float(np.dot(full, full_cond))
    closed = (y.second_moment() - mu) / (2.0 * (mu - 1.0))

    lam1_cond = float(cond[0])
    den_cond = p - (1.0 - p) * lam1_cond - step0
    den_uncond = p - (1.0 - p) * lam1_uncond - step0
    tiny = 1e-12
    printed = {
        "denominator_conditional_lambda1": den_cond,
        "denominator_unconditional_lambda1": den_uncond,
        "mean_deficit_conditional_lambda1": None if abs(den_cond) < tiny else (summary.p_mu - 1.0) / den_cond,
        "mean_ruin_time_conditional_lambda1": None if abs(den_cond) < tiny else 1.0 / den_cond,
        "vanishing_denominator_conditional": abs(den_cond) < tiny,
        "vanishing_denominator_unconditional": abs(den_uncond) < tiny,
    }

    q = 1.0 - p
    grid, worst = [], 0.0
    lam_full = p * np.array([y.sf(int(k)) for k in full]) / (1.0 - p)
    for s in [round(0.1 * i, 1) for i in range(1, 10)]:
        series = float(np.dot(s**full, lam_full))
        numer = sum(s**k * step.prob(k) for k in range(1, step.max_value + 1)) - lam1_uncond * q
        denom = 1.0 - step0 - lam1_uncond * q - q / s
        formula = numer / denom
        worst = max(worst, abs(series - formula))
        grid.append({"s": s, "series": series, "formula": formula})

    ruin_time = None
    if with_ruin_time:
        res = mean_ruin_time_dp(model, 0)
        ruin_time = None if res is None else res[0]

    return DeficitReport(
        ruin_possible=True,
        psi0=psi0,
        lambda_conditional=Pmf(1, cond),
        lambda_unconditional=Pmf(1, uncond, defective=True),
        lambda_recursion=rec,
        recursion_max_abs_diff=float(np.max(np.abs(rec - uncond))),
        mean_deficit=mean_def,
        mean_deficit_closed_form=closed,
        mean_ruin_time=ruin_time,
        pgf_grid=grid,
        pgf_max_abs_diff=worst,
        printed=printed,
        hypothesis_holds=bool(step0 >= 2 * p - 1),
    )


# ---------------------------------------------------------------------------
# Thinning equivalence of compound geometric laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ThinningReport:
    pmf_left: np.ndarray
    pmf_right: np.ndarray
    max_abs_diff: float
    tail_left: float
    tail_right: float
    thinning_prob: float
    printed_max_abs_diff: float

    def to_dict(self) -> dict:
        return {
            "reconciled": {
                "pmf_left": [float(x) for x in self.pmf_left],
                "pmf_right": [float(x) for x in self.pmf_right],
                "max_abs_diff": self.max_abs_diff,
                "tail_left": self.tail_left,
                "tail_right": self.tail_right,
                "thinning_prob": self.thinning_prob,
            },
            "paper_printed": {"max_abs_diff": self.printed_max_abs_diff},
        }


def _compound_series(theta: float, summand: Pmf, k_max: int, count_tol: float = 1e-18, max_terms: int = 200_000):
    """Truncated sum_n (1-theta) theta^n summand^{*n} on 0..k_max; returns (pmf, neglected count mass)."""
    out = np.zeros(k_max + 1)
    power = Pmf.point_mass(0)
    weight = 1.0 - theta
    n = 0
    exact = summand.offset >= 1
    while True:
        out += weight * power.dense(0, k_max)
        n += 1
        if exact and n > k_max:
            return out, 0.0
        tail = theta**n
        if tail <= count_tol or n >= max_terms:
            return out, tail
        power = convolve(power, summand, max_value=k_max)
        weight *= theta


def thinning_probability(pG: float, c: float) -> float:
    return (1.0 - c * pG) / (c * (1.0 - pG))


def thinning_equivalence(xlaw: Pmf, pG: float, c: float, k_max: int) -> ThinningReport:
    """Compare a compound geometric law with its thinned, higher-continuation twin.

    Left: continuation pG over X. Right: continuation c*pG over I_A X with
    P(A) = (1 - c pG) / (c (1 - pG)). Both are truncated to 0..k_max.
    """
    if xlaw.offset < 1:
        raise ValueError("summands must be strictly positive")
    if not 0 < pG < 1:
        raise ValueError("pG must lie in (0, 1)")
    if not 1 < c < 1.0 / pG:
        raise ValueError("c must lie in (1, 1/pG)")
    a = thinning_probability(pG, c)
    assert 0 <= a <= 1, a
    thinned = Pmf(0, np.concatenate([[1.0 - a], a * xlaw.dense(1, xlaw.max_value)]))

    left, tail_left = _compound_series(pG, xlaw, k_max)
    right, tail_right = _compound_series(c * pG, thinned, k_max)

    # literal reading: count parameters attached to the opposite sides
    pl, _ = _compound_series(c * pG, xlaw, k_max)
    pr, _ = _compound_series(pG, thinned, k_max)
    return ThinningReport(
        pmf_left=left,
        pmf_right=right,
        max_abs_diff=float(np.max(np.abs(left - right))),
        tail_left=tail_left,
        tail_right=tail_right,
        thinning_prob=a,
        printed_max_abs_diff=float(np.max(np.abs(pl - pr))),
    )
