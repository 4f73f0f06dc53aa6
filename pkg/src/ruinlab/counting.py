"""Exact laws and moments of the bivariate claim-counting process.

``M1(t) = B1(t) + B0(t)`` and ``M2(t) = B2(t) + B0(t)`` where ``(B0, B1, B2)`` is the
multinomial process of shock / type-1-only / type-2-only events.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import ModelSpec, Pmf, ShockParams

HORIZON_CAP = 64


class HorizonCapError(ValueError):
    pass


def _check_horizon(t: int, cap: int):
    if t < 0:
        raise ValueError(f"horizon must be >= 0, got {t}")
    if t > cap:
        raise HorizonCapError(f"horizon {t} exceeds the dense-table cap {cap}")


def _other(coord: int) -> int:
    if coord not in (1, 2):
        raise ValueError(f"coordinate must be 1 or 2, got {coord!r}")
    return 3 - coord


def _pi(shock: ShockParams, coord: int) -> float:
    return shock.p1 if coord == 1 else shock.p2


def multinomial_pmf(shock: ShockParams, t: int, b0: int, b1: int, b2: int) -> float:
    """P(B0(t)=b0, B1(t)=b1, B2(t)=b2); zero outside the simplex."""
    if min(b0, b1, b2) < 0 or b0 + b1 + b2 > t:
        return 0.0
    rest = t - b0 - b1 - b2
    coef = math.factorial(t) // (
        math.factorial(b0) * math.factorial(b1) * math.factorial(b2) * math.factorial(rest)
    )
    return coef * shock.p0**b0 * shock.p1**b1 * shock.p2**b2 * (1.0 - shock.p) ** rest


def counts_joint_pgf(model: ModelSpec, t: int, z1: float, z2: float) -> float:
    s = model.shock
    return (1.0 - s.p + s.p1 * z1 + s.p2 * z2 + s.p0 * z1 * z2) ** t


@dataclass(frozen=True, eq=False)
class BivariateCountsLaw:
    """Dense table ``table[m1, m2] = P(M1(t)=m1, M2(t)=m2)``."""

    t: int
    table: np.ndarray

    def marginal(self, coord: int) -> np.ndarray:
        _other(coord)
        return self.table.sum(axis=1 if coord == 1 else 0)

    def total_law(self) -> np.ndarray:
        """Law of M1 + M2 from anti-diagonal sums."""
        n = self.t + 1
        out = np.zeros(2 * n - 1)
        for m1 in range(n):
            out[m1 : m1 + n] += self.table[m1]
        return out

    def rows(self):
        n = self.t + 1
        for m1 in range(n):
            for m2 in range(n):
                yield m1, m2, float(self.table[m1, m2])


def counts_joint_pmf(model: ModelSpec, t: int, cap: int = HORIZON_CAP) -> BivariateCountsLaw:
    """Joint law of (M1(t), M2(t)) by summing over the number of common shocks.

    A cell (m1, m2) with i shocks needs m1 + m2 - i <= t event periods, so cells with
    m1 + m2 > t are reachable whenever shocks are possible.
    """
    _check_horizon(t, cap)
    s = model.shock
    q = 1.0 - s.p
    fact = [math.factorial(k) for k in range(t + 1)]
    table = np.zeros((t + 1, t + 1))
    for m1 in range(t + 1):
        for m2 in range(t + 1):
            acc = 0.0
            for i in range(max(0, m1 + m2 - t), min(m1, m2) + 1):
                rest = t - m1 - m2 + i
                coef = fact[t] // (fact[i] * fact[m1 - i] * fact[m2 - i] * fact[rest])
                acc += coef * s.p0**i * s.p1 ** (m1 - i) * s.p2 ** (m2 - i) * q**rest
            table[m1, m2] = acc
    return BivariateCountsLaw(t, table)


def enumerate_counts_law(shock: ShockParams, t: int) -> np.ndarray:
    """Brute-force oracle: push every multinomial triple through (b1+b0, b2+b0)."""
    table = np.zeros((t + 1, t + 1))
    for b0 in range(t + 1):
        for b1 in range(t + 1 - b0):
            for b2 in range(t + 1 - b0 - b1):
                table[b1 + b0, b2 + b0] += multinomial_pmf(shock, t, b0, b1, b2)
    return table


def counts_conditional(model: ModelSpec, t: int, coord: int, value: int, cap: int = HORIZON_CAP) -> Pmf:
    """Law of the other coordinate given ``M_coord(t) = value``, by joint / marginal division."""
    _other(coord)
    law = counts_joint_pmf(model, t, cap)
    marginal = law.marginal(coord)
    if not 0 <= value <= t or marginal[value] <= 0:
        raise ValueError(f"P(M{coord}({t}) = {value}) is zero; conditional law undefined")
    row = law.table[value, :] if coord == 1 else law.table[:, value]
    return Pmf(0, np.clip(row / marginal[value], 0.0, None))


def counts_regression(model: ModelSpec, t: int, r: int, i: int) -> float:
    """E[M_s(t) | M_r(t) = i]; linear in i.

    Of the i periods with an r-event a fraction p0/(p0+pr) are shocks; of the
    remaining t-i periods a fraction ps/(1-p0-pr) carry an s-only event.
    """
    s_coord = _other(r)
    if not 0 <= i <= t:
        raise ValueError(f"conditioning count must lie in [0, {t}], got {i}")
    sh = model.shock
    pr, ps = _pi(sh, r), _pi(sh, s_coord)
    with_r = sh.p0 / (sh.p0 + pr) if sh.p0 + pr > 0 else 0.0
    without_r = ps / (1.0 - sh.p0 - pr) if 1.0 - sh.p0 - pr > 0 else 0.0
    return t * without_r + i * (with_r - without_r)


@dataclass(frozen=True)
class CountsMoments:
    mean1: float
    mean2: float
    var1: float
    var2: float
    cross: float
    cov: float
    cor: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def counts_moments(model: ModelSpec, t: int) -> CountsMoments:
    """Closed-form moments. ``cor`` is 0 when either coordinate is degenerate (e.g. t = 0)."""
    s = model.shock
    a, b = s.p1 + s.p0, s.p2 + s.p0
    step_cov = s.p0 - a * b
    denom = math.sqrt((a - a * a) * (b - b * b))
    cor = step_cov / denom if t > 0 and denom > 0 else 0.0
    return CountsMoments(
        mean1=t * a,
        mean2=t * b,
        var1=t * a * (1 - a),
        var2=t * b * (1 - b),
        cross=t * (t - 1) * a * b + t * s.p0,
        cov=t * step_cov,
        cor=cor,
    )


def table_moments(law: BivariateCountsLaw) -> CountsMoments:
    """Moments computed directly from a joint table (oracle for :func:`counts_moments`)."""
    tab = law.table
    k = np.arange(law.t + 1, dtype=float)
    m1, m2 = law.marginal(1), law.marginal(2)
    e1, e2 = float(k @ m1), float(k @ m2)
    v1 = float((k * k) @ m1) - e1 * e1
    v2 = float((k * k) @ m2) - e2 * e2
    cross = float(k @ tab @ k)
    cov = cross - e1 * e2
    cor = cov / math.sqrt(v1 * v2) if v1 > 0 and v2 > 0 else 0.0
    return CountsMoments(e1, e2, v1, v2, cross, cov, cor)


@dataclass(frozen=True, eq=False)
class ClusterTotal:
    pmf: Pmf
    mean: float
    var: float


def cluster_total(model: ModelSpec, t: int, cap: int = HORIZON_CAP) -> ClusterTotal:
    """Law of A(t) = M1(t) + M2(t): coefficients of [1-p + (p1+p2) z + p0 z^2]^t."""
    _check_horizon(t, cap)
    s = model.shock
    step = np.array([1.0 - s.p, s.p1 + s.p2, s.p0])
    w = np.array([1.0])
    for _ in range(t):
        w = np.convolve(w, step)
    m = s.p1 + s.p2 + 2 * s.p0
    # per-period variance times t; increments are independent
    var = t * (s.p1 + s.p2 + 4 * s.p0 - m * m)
    return ClusterTotal(Pmf(0, np.clip(w, 0.0, None)), t * m, var)


def cluster_variance_as_printed(model: ModelSpec, t: int) -> float:
    """Variance expression with an extra factor t on the squared mean; can go negative."""
    s = model.shock
    m = s.p1 + s.p2 + 2 * s.p0
    return t * (s.p1 + s.p2 + 4 * s.p0 - t * m * m)


def conditional_closed_form(model: ModelSpec, t: int, r: int, m_r: int, m_s: int) -> float:
    """Closed-form P(M_r(t)=m_r | M_s(t)=m_s) as found in the literature.

    The expression itself equals joint / marginal. It is usually quoted for
    m_r <= t - m_s only, but common shocks let m_r reach t, so summing over
    that range misses mass whenever p0 > 0 and m_s > 0; see
    :func:`conditional_printed_range_mass`. :func:`counts_conditional` is authoritative.
    """
    s_coord = _other(r)
    sh = model.shock
    pr, ps, p0, q = _pi(sh, r), _pi(sh, s_coord), sh.p0, 1.0 - sh.p
    acc = 0.0
    for i in range(0, min(m_r, m_s) + 1):
        if m_r - i > t - m_s:
            continue
        acc += (
            math.comb(m_s, i)
            * math.comb(t - m_s, m_r - i)
            * (p0 * q / (pr * ps)) ** i
        )
    return acc * (pr / q) ** m_r * (ps * (1 - p0 - ps) / ((p0 + ps) * q)) ** m_s * (q / (q + pr)) ** t


def conditional_printed_range_mass(model: ModelSpec, t: int, r: int, m_s: int) -> float:
    """Total of the closed-form conditional over the quoted range m_r = 0..t-m_s."""
    return sum(conditional_closed_form(model, t, r, k, m_s) for k in range(t - m_s + 1))
