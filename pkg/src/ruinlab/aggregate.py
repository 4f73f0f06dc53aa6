"""Transforms, exact p.m.f.s and moments of the total-claim processes.

``S1`` collects type-1 claims plus the first coordinate of every shock pair, ``S2``
the type-2 claims plus the second coordinate, and ``S = S1 + S2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import convolve2d

from .counting import HORIZON_CAP, _check_horizon
from .model import ModelSpec, Pmf, convolution_power, mixture, per_period_claim_law


def claims_joint_transform(model: ModelSpec, t: int, z1: float, z2: float) -> float:
    """E exp(-z1 S1(t) - z2 S2(t))."""
    if z1 < 0 or z2 < 0:
        raise ValueError("transform arguments must be >= 0")
    if t < 0:
        raise ValueError("horizon must be >= 0")
    s = model.shock
    step = (
        1.0
        - s.p
        + s.p1 * model.law1.pmf().laplace(z1)
        + s.p0 * model.shock_joint.laplace(z1, z2)
        + s.p2 * model.law2.pmf().laplace(z2)
    )
    return step**t


def total_claim_pmf(model: ModelSpec, t: int, cap: int = HORIZON_CAP) -> Pmf:
    """Law of S(t): t-fold convolution of the per-period claim law."""
    _check_horizon(t, cap)
    return convolution_power(per_period_claim_law(model), t)


def total_claim_transform(model: ModelSpec, t: int, s: float) -> float:
    """E exp(-s S(t)) in product form.

    This is the object some texts label a generating function while writing it
    with exponential arguments; :func:`total_claim_pgf` is the z-form.
    """
    if s < 0:
        raise ValueError("transform argument must be >= 0")
    return claims_joint_transform(model, t, s, s)


def total_claim_pgf(model: ModelSpec, t: int, z: float) -> float:
    """E z^S(t) for z in (0, 1], via z = exp(-s)."""
    if not 0 < z <= 1:
        raise ValueError("z must lie in (0, 1]")
    return total_claim_transform(model, t, -math.log(z))


def per_period_joint_table(model: ModelSpec) -> np.ndarray:
    """``table[a, b] = P(S1(1) = a, S2(1) = b)``."""
    s = model.shock
    n1 = max(model.law1.max_value, max(a[0] for a in model.shock_joint.atoms)) + 1
    n2 = max(model.law2.max_value, max(a[1] for a in model.shock_joint.atoms)) + 1
    tab = np.zeros((n1, n2))
    tab[0, 0] = 1.0 - s.p
    for k, w in zip(model.law1.support, model.law1.probs):
        tab[k, 0] += s.p1 * w
    for k, w in zip(model.law2.support, model.law2.probs):
        tab[0, k] += s.p2 * w
    for k3, k4, w in model.shock_joint.atoms:
        tab[k3, k4] += s.p0 * w
    return tab


def bivariate_claim_pmf(model: ModelSpec, t: int, cap: int = HORIZON_CAP) -> np.ndarray:
    """Exact joint law of (S1(t), S2(t)) as a dense table."""
    _check_horizon(t, cap)
    step = per_period_joint_table(model)
    out = np.ones((1, 1))
    for _ in range(t):
        out = convolve2d(out, step)
    return np.clip(out, 0.0, None)


def marginal_claim_pmf(model: ModelSpec, t: int, coord: int, cap: int = HORIZON_CAP) -> Pmf:
    """Law of S1(t) or S2(t) built from the thinned single-coordinate step law.

    Per period the coordinate receives its own-type claim, the matching shock
    component, or nothing.
    """
    _check_horizon(t, cap)
    s = model.shock
    own, p_own = (model.law1, s.p1) if coord == 1 else (model.law2, s.p2)
    step = mixture(
        [
            (1.0 - s.p0 - p_own, Pmf.point_mass(0)),
            (p_own, own.pmf()),
            (s.p0, model.shock_joint.marginal(coord).pmf()),
        ]
    )
    return convolution_power(step, t)


@dataclass(frozen=True)
class ClaimsMoments:
    meanS1: float
    meanS2: float
    varS1: float
    varS2: float
    crossS: float
    cov: float
    cor: float
    meanS: float
    varS: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def claims_moments(model: ModelSpec, t: int) -> ClaimsMoments:
    s = model.shock
    l1, l2, j = model.law1, model.law2, model.shock_joint
    y3, y4 = j.marginal(1), j.marginal(2)
    a = s.p1 * l1.mean() + s.p0 * y3.mean()
    b = s.p2 * l2.mean() + s.p0 * y4.mean()
    step_v1 = s.p1 * l1.second_moment() + s.p0 * y3.second_moment() - a * a
    step_v2 = s.p2 * l2.second_moment() + s.p0 * y4.second_moment() - b * b
    step_cov = s.p0 * j.cross_moment() - a * b
    denom = math.sqrt(max(step_v1, 0.0) * max(step_v2, 0.0))
    cor = step_cov / denom if t > 0 and denom > 0 else 0.0

    total = j.sum_law()
    m = s.p1 * l1.mean() + s.p0 * total.mean() + s.p2 * l2.mean()
    step_v = s.p1 * l1.second_moment() + s.p2 * l2.second_moment() + s.p0 * total.second_moment() - m * m
    return ClaimsMoments(
        meanS1=t * a,
        meanS2=t * b,
        varS1=t * step_v1,
        varS2=t * step_v2,
        crossS=t * s.p0 * j.cross_moment() + t * (t - 1) * a * b,
        cov=t * step_cov,
        cor=cor,
        meanS=t * m,
        varS=t * step_v,
    )


def table2d_moments(table: np.ndarray) -> dict:
    """Moments of a dense bivariate table (oracle for :func:`claims_moments`)."""
    i = np.arange(table.shape[0], dtype=float)
    j = np.arange(table.shape[1], dtype=float)
    m1, m2 = table.sum(axis=1), table.sum(axis=0)
    e1, e2 = float(i @ m1), float(j @ m2)
    v1 = float((i * i) @ m1) - e1 * e1
    v2 = float((j * j) @ m2) - e2 * e2
    cross = float(i @ table @ j)
    return {"meanS1": e1, "meanS2": e2, "varS1": v1, "varS2": v2, "crossS": cross, "cov": cross - e1 * e2}


def is_product_shock_law(model: ModelSpec, tol: float = 1e-12) -> bool:
    return model.shock_joint.product_tv_distance() < tol
