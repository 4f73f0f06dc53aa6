"""Model parameters, claim-size laws and the derived per-event / per-period laws.

Every other module consumes a validated :class:`ModelSpec`. Validation is strict:
weights must sum to one within ``WEIGHT_TOL`` and are never renormalised.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

WEIGHT_TOL = 1e-12


class ModelValidationError(ValueError):
    """Raised when a model candidate violates one or more invariants.

    ``problems`` lists every violation found, each prefixed with the offending field.
    """

    def __init__(self, problems: Iterable[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# ---------------------------------------------------------------------------
# Generic finite p.m.f.
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Pmf:
    """Finite p.m.f. on consecutive integers ``offset, offset + 1, ...``.

    Sub-probability weights (total < 1) are allowed; ``defective`` marks laws
    whose missing mass is meaningful rather than truncation.
    """

    offset: int
    weights: np.ndarray
    defective: bool = False

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1:
            raise ValueError("weights must be one-dimensional")
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        if w.sum() > 1.0 + WEIGHT_TOL:
            raise ValueError(f"weights sum to {w.sum()!r} > 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "offset", int(self.offset))

    @classmethod
    def point_mass(cls, k: int) -> "Pmf":
        return cls(k, np.array([1.0]))

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float]) -> "Pmf":
        lo, hi = min(mapping), max(mapping)
        w = np.zeros(hi - lo + 1)
        for k, v in mapping.items():
            w[k - lo] += v
        return cls(lo, w)

    @property
    def support(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + len(self.weights))

    @property
    def max_value(self) -> int:
        return self.offset + len(self.weights) - 1

    def __len__(self):
        return len(self.weights)

    def prob(self, k: int) -> float:
        i = k - self.offset
        if 0 <= i < len(self.weights):
            return float(self.weights[i])
        return 0.0

    def dense(self, lo: int, hi: int) -> np.ndarray:
        """Weights on ``lo..hi`` inclusive, zero-padded."""
        out = np.zeros(hi - lo + 1)
        a, b = max(lo, self.offset), min(hi, self.max_value)
        if a <= b:
            out[a - lo : b - lo + 1] = self.weights[a - self.offset : b - self.offset + 1]
        return out

    def total(self) -> float:
        return float(self.weights.sum())

    def mean(self) -> float:
        return float(np.dot(self.support, self.weights))

    def second_moment(self) -> float:
        k = self.support.astype(float)
        return float(np.dot(k * k, self.weights))

    def var(self) -> float:
        """Variance of the normalised law."""
        m0 = self.total()
        m1 = self.mean() / m0
        return self.second_moment() / m0 - m1 * m1

    def cdf(self, k: int) -> float:
        i = k - self.offset
        if i < 0:
            return 0.0
        return float(self.weights[: i + 1].sum())

    def sf(self, k: int) -> float:
        """P(X > k) relative to the total mass."""
        return self.total() - self.cdf(k)

    def pgf(self, z: float) -> float:
        return float(np.dot(self.weights, np.power(float(z), self.support.astype(float))))

    def laplace(self, s: float) -> float:
        """E exp(-s X)."""
        return float(np.dot(self.weights, np.exp(-float(s) * self.support)))

    def shift(self, d: int) -> "Pmf":
        return Pmf(self.offset + d, self.weights, self.defective)

    def scaled(self, c: float, defective: bool = True) -> "Pmf":
        return Pmf(self.offset, c * self.weights, defective)

    def to_dict(self) -> dict:
        return {
            "offset": self.offset,
            "weights": [float(x) for x in self.weights],
            "total": self.total(),
            "defective": self.defective,
        }


def convolve(a: Pmf, b: Pmf, max_value: int | None = None) -> Pmf:
    """Exact dense convolution, optionally truncated above ``max_value``."""
    off = a.offset + b.offset
    if len(a.weights) == 0 or len(b.weights) == 0:
        return Pmf(off, np.zeros(0), defective=True)
    w = np.convolve(a.weights, b.weights)
    if max_value is not None:
        w = w[: max(0, max_value - off + 1)]
    return Pmf(off, np.clip(w, 0.0, None))


def convolution_power(a: Pmf, n: int, max_value: int | None = None) -> Pmf:
    out = Pmf.point_mass(0)
    for _ in range(n):
        out = convolve(out, a, max_value)
    return out


def mixture(components: Iterable[tuple[float, Pmf]]) -> Pmf:
    comps = [(w, c) for w, c in components if w > 0]
    lo = min(c.offset for _, c in comps)
    hi = max(c.max_value for _, c in comps)
    out = np.zeros(hi - lo + 1)
    for w, c in comps:
        out += w * c.dense(lo, hi)
    return Pmf(lo, out)


# ---------------------------------------------------------------------------
# Model components
# ---------------------------------------------------------------------------


def _shock_problems(p0, p1, p2) -> list[str]:
    problems = []
    for name, v in (("p0", p0), ("p1", p1), ("p2", p2)):
        if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
            problems.append(f"{name}: must be a finite number, got {v!r}")
        elif v < 0:
            problems.append(f"{name}: negative probability {v!r}")
    if problems:
        return problems
    p = p0 + p1 + p2
    if p > 1 + WEIGHT_TOL:
        problems.append(f"p0+p1+p2: p = {p:g} > 1")
    if p <= 0:
        problems.append("p0+p1+p2: p = 0, a model without events is degenerate")
    return problems


def _weights_problems(name: str, weights: list) -> list[str]:
    problems = []
    if not weights:
        return [f"{name}: empty support"]
    for w in weights:
        if not isinstance(w, (int, float)) or isinstance(w, bool) or not math.isfinite(w):
            problems.append(f"{name}: weight {w!r} is not a finite number")
        elif w <= 0:
            problems.append(f"{name}: weight {w!r} must be > 0")
    if not problems:
        s = math.fsum(weights)
        if abs(s - 1.0) > WEIGHT_TOL:
            problems.append(f"{name}: weights sum to {s!r}, not 1 within {WEIGHT_TOL:g}")
    return problems


def _size_problems(name: str, values: list) -> list[str]:
    problems = []
    for v in values:
        if not isinstance(v, int) or isinstance(v, bool):
            problems.append(f"{name}: claim size {v!r} is not an integer")
        elif v < 1:
            problems.append(f"{name}: claim sizes must be >= 1, got {v}")
    return problems


@dataclass(frozen=True)
class ShockParams:
    """Per-period probabilities of a common shock (p0) and single-type events."""

    p0: float
    p1: float
    p2: float

    def __post_init__(self):
        problems = _shock_problems(self.p0, self.p1, self.p2)
        if problems:
            raise ModelValidationError(problems)

    @property
    def p(self) -> float:
        return self.p0 + self.p1 + self.p2


@dataclass(frozen=True)
class ClaimLaw:
    """Finite-support claim-size law on positive integers."""

    support: tuple[int, ...]
    probs: tuple[float, ...]
    name: str = field(default="claim_law", compare=False)

    def __post_init__(self):
        support, probs = tuple(self.support), tuple(float(x) for x in self.probs)
        problems = []
        if len(support) != len(probs):
            problems.append(f"{self.name}: support and probs differ in length")
        problems += _size_problems(self.name, list(support))
        problems += _weights_problems(self.name, list(probs))
        if len(set(support)) != len(support):
            problems.append(f"{self.name}: duplicate claim sizes")
        if problems:
            raise ModelValidationError(problems)
        order = sorted(range(len(support)), key=support.__getitem__)
        object.__setattr__(self, "support", tuple(support[i] for i in order))
        object.__setattr__(self, "probs", tuple(probs[i] for i in order))

    @classmethod
    def from_mapping(cls, mapping: Mapping[int, float], name: str = "claim_law") -> "ClaimLaw":
        items = sorted(mapping.items())
        return cls(tuple(k for k, _ in items), tuple(v for _, v in items), name)

    @classmethod
    def degenerate(cls, k: int, name: str = "claim_law") -> "ClaimLaw":
        return cls((k,), (1.0,), name)

    def pmf(self) -> Pmf:
        return Pmf.from_mapping(dict(zip(self.support, self.probs)))

    @property
    def max_value(self) -> int:
        return self.support[-1]

    def mean(self) -> float:
        return math.fsum(k * w for k, w in zip(self.support, self.probs))

    def second_moment(self) -> float:
        return math.fsum(k * k * w for k, w in zip(self.support, self.probs))

    def prob(self, k: int) -> float:
        return dict(zip(self.support, self.probs)).get(k, 0.0)


@dataclass(frozen=True)
class ShockJointLaw:
    """Joint law of the claim pair (type-1 part, type-2 part) caused by a common shock."""

    atoms: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        atoms = tuple((a[0], a[1], float(a[2])) for a in self.atoms)
        problems = []
        problems += _size_problems("shock_joint", [a[0] for a in atoms] + [a[1] for a in atoms])
        problems += _weights_problems("shock_joint", [a[2] for a in atoms])
        if len({(a[0], a[1]) for a in atoms}) != len(atoms):
            problems.append("shock_joint: duplicate (k3, k4) atoms")
        if problems:
            raise ModelValidationError(problems)
        object.__setattr__(self, "atoms", tuple(sorted(atoms)))

    @classmethod
    def degenerate(cls, k3: int, k4: int) -> "ShockJointLaw":
        return cls(((k3, k4, 1.0),))

    @classmethod
    def product(cls, first: ClaimLaw, second: ClaimLaw) -> "ShockJointLaw":
        return cls(
            tuple(
                (a, b, wa * wb)
                for a, wa in zip(first.support, first.probs)
                for b, wb in zip(second.support, second.probs)
            )
        )

    def marginal(self, coord: int) -> ClaimLaw:
        acc: dict[int, float] = {}
        for k3, k4, w in self.atoms:
            k = k3 if coord == 1 else k4
            acc[k] = acc.get(k, 0.0) + w
        return ClaimLaw.from_mapping(acc, name=f"shock_joint[{coord}]")

    def sum_law(self) -> Pmf:
        acc: dict[int, float] = {}
        for k3, k4, w in self.atoms:
            acc[k3 + k4] = acc.get(k3 + k4, 0.0) + w
        return Pmf.from_mapping(acc)

    def cross_moment(self) -> float:
        return math.fsum(k3 * k4 * w for k3, k4, w in self.atoms)

    def laplace(self, z1: float, z2: float) -> float:
        return math.fsum(w * math.exp(-z1 * k3 - z2 * k4) for k3, k4, w in self.atoms)

    def table(self) -> np.ndarray:
        """Dense joint table indexed ``[k3, k4]``."""
        t = np.zeros((max(a[0] for a in self.atoms) + 1, max(a[1] for a in self.atoms) + 1))
        for k3, k4, w in self.atoms:
            t[k3, k4] += w
        return t

    def product_tv_distance(self) -> float:
        """Total-variation distance from the product of its own marginals."""
        t = self.table()
        prod = np.outer(t.sum(axis=1), t.sum(axis=0))
        return 0.5 * float(np.abs(t - prod).sum())


@dataclass(frozen=True)
class ModelSpec:
    shock: ShockParams
    law1: ClaimLaw
    law2: ClaimLaw
    shock_joint: ShockJointLaw

    @property
    def p(self) -> float:
        return self.shock.p

    @property
    def max_claim(self) -> int:
        """Largest possible per-event total claim."""
        s = self.shock
        parts = []
        if s.p1 > 0:
            parts.append(self.law1.max_value)
        if s.p2 > 0:
            parts.append(self.law2.max_value)
        if s.p0 > 0:
            parts.append(self.shock_joint.sum_law().max_value)
        return max(parts)


# ---------------------------------------------------------------------------
# Parsing and validation
# ---------------------------------------------------------------------------


def _parse_law(raw, name: str, problems: list[str]) -> ClaimLaw | None:
    if not isinstance(raw, Mapping):
        problems.append(f"{name}: expected a map claim-size -> probability")
        return None
    sizes, weights = [], []
    for k, v in raw.items():
        try:
            kk = int(k)
            if str(kk) != str(k).strip():
                raise ValueError
        except (TypeError, ValueError):
            problems.append(f"{name}: claim size {k!r} is not an integer")
            continue
        sizes.append(kk)
        weights.append(v)
    local = _size_problems(name, sizes) + _weights_problems(name, weights)
    if local:
        problems.extend(local)
        return None
    return ClaimLaw(tuple(sizes), tuple(weights), name)


def _parse_joint(raw, problems: list[str]) -> ShockJointLaw | None:
    if not isinstance(raw, list) or not all(isinstance(a, (list, tuple)) and len(a) == 3 for a in raw):
        problems.append("shock_joint: expected a list of [k3, k4, prob] triples")
        return None
    sizes = [a[0] for a in raw] + [a[1] for a in raw]
    local = _size_problems("shock_joint", sizes) + _weights_problems("shock_joint", [a[2] for a in raw])
    if local:
        problems.extend(local)
        return None
    return ShockJointLaw(tuple(tuple(a) for a in raw))


def validate_model(raw) -> ModelSpec:
    """Validate a model candidate (a JSON-style mapping or a ``ModelSpec``).

    Raises :class:`ModelValidationError` listing every violated invariant.
    """
    if isinstance(raw, ModelSpec):
        return raw
    if not isinstance(raw, Mapping):
        raise ModelValidationError(["model: expected a JSON object"])
    problems: list[str] = []
    for key in ("p0", "p1", "p2", "type1", "type2", "shock_joint"):
        if key not in raw:
            problems.append(f"{key}: missing field")
    unknown = set(raw) - {"p0", "p1", "p2", "type1", "type2", "shock_joint", "name"}
    for key in sorted(unknown):
        problems.append(f"{key}: unknown field")
    if problems:
        raise ModelValidationError(problems)

    shock_problems = _shock_problems(raw["p0"], raw["p1"], raw["p2"])
    problems += shock_problems
    law1 = _parse_law(raw["type1"], "type1", problems)
    law2 = _parse_law(raw["type2"], "type2", problems)
    joint = _parse_joint(raw["shock_joint"], problems)
    if problems:
        raise ModelValidationError(problems)
    return ModelSpec(ShockParams(raw["p0"], raw["p1"], raw["p2"]), law1, law2, joint)


def load_model(path) -> ModelSpec:
    text = Path(path).read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelValidationError([f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"])
    return validate_model(raw)


def model_to_dict(model: ModelSpec) -> dict:
    """Inverse of :func:`validate_model`; floats survive a JSON round trip exactly."""
    s = model.shock
    return {
        "p0": s.p0,
        "p1": s.p1,
        "p2": s.p2,
        "type1": {str(k): w for k, w in zip(model.law1.support, model.law1.probs)},
        "type2": {str(k): w for k, w in zip(model.law2.support, model.law2.probs)},
        "shock_joint": [[k3, k4, w] for k3, k4, w in model.shock_joint.atoms],
    }


def make_model(p0, p1, p2, type1, type2, shock_joint) -> ModelSpec:
    """Convenience constructor from plain Python containers."""
    return validate_model(
        {
            "p0": p0,
            "p1": p1,
            "p2": p2,
            "type1": {str(k): v for k, v in type1.items()},
            "type2": {str(k): v for k, v in type2.items()},
            "shock_joint": [list(a) for a in shock_joint],
        }
    )


def _random_law(rng: np.random.Generator, max_claim: int) -> dict[int, float]:
    size = int(rng.integers(1, max_claim + 1))
    support = np.sort(rng.choice(np.arange(1, max_claim + 1), size=size, replace=False))
    w = rng.dirichlet(np.ones(size))
    w[-1] = 1.0 - w[:-1].sum()
    if w[-1] <= 0:
        return {1: 1.0}
    return {int(k): float(v) for k, v in zip(support, w)}


def random_model(
    rng: np.random.Generator,
    max_claim: int = 4,
    net_profit: bool = False,
    require_mu_above_one: bool = False,
    product_shock: bool = False,
) -> ModelSpec:
    """Draw a random valid model, by rejection when constraints are requested."""
    for _ in range(10_000):
        probs = rng.dirichlet(np.ones(4))
        scale = rng.uniform(0.05, 1.0)
        p0, p1, p2 = (float(x) * scale for x in probs[:3])
        law1 = _random_law(rng, max_claim)
        law2 = _random_law(rng, max_claim)
        if product_shock:
            a, b = _random_law(rng, max_claim // 2 or 1), _random_law(rng, max_claim // 2 or 1)
            joint = [(i, j, wa * wb) for i, wa in a.items() for j, wb in b.items()]
        else:
            size = int(rng.integers(1, 4))
            pairs = {(int(rng.integers(1, max_claim // 2 + 1)), int(rng.integers(1, max_claim // 2 + 1))) for _ in range(size)}
            w = rng.dirichlet(np.ones(len(pairs)))
            w[-1] = 1.0 - w[:-1].sum()
            if w[-1] <= 0:
                continue
            joint = [(i, j, float(x)) for (i, j), x in zip(sorted(pairs), w)]
        try:
            model = make_model(p0, p1, p2, law1, law2, joint)
        except ModelValidationError:
            continue
        summary = model_summary(model)
        if net_profit and not summary.net_profit_holds:
            continue
        if require_mu_above_one and summary.mu <= 1 + 1e-9:
            continue
        return model
    raise RuntimeError("could not draw a model satisfying the constraints")


# ---------------------------------------------------------------------------
# Derived laws
# ---------------------------------------------------------------------------


def per_event_claim_law(model: ModelSpec) -> Pmf:
    """Law of the total claim Y caused by one insurance event."""
    s = model.shock
    p = s.p
    return mixture(
        [
            (s.p1 / p, model.law1.pmf()),
            (s.p0 / p, model.shock_joint.sum_law()),
            (s.p2 / p, model.law2.pmf()),
        ]
    )


def per_period_claim_law(model: ModelSpec) -> Pmf:
    """Law of the claim paid in one period (zero when no event occurs)."""
    y = per_event_claim_law(model)
    w = np.concatenate([[1.0 - model.p], model.p * y.dense(1, y.max_value)])
    return Pmf(0, np.clip(w, 0.0, None))


def per_period_step_law(model: ModelSpec) -> Pmf:
    """Law of the random-walk step: per-period claim minus the unit premium."""
    return per_period_claim_law(model).shift(-1)


@dataclass(frozen=True)
class ModelSummary:
    mu: float
    p_mu: float
    safety_loading: float
    net_profit_holds: bool

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "p_mu": self.p_mu,
            "safety_loading": self.safety_loading,
            "net_profit_holds": self.net_profit_holds,
        }


def model_summary(model: ModelSpec) -> ModelSummary:
    s = model.shock
    total = math.fsum(
        [
            s.p1 * model.law1.mean(),
            s.p2 * model.law2.mean(),
            s.p0 * model.shock_joint.sum_law().mean(),
        ]
    )
    mu = total / s.p
    return ModelSummary(mu=mu, p_mu=total, safety_loading=1.0 / total - 1.0, net_profit_holds=total < 1.0)


def tm1() -> ModelSpec:
    """Reference model: p0=0.1, p1=p2=0.2, type-1 uniform on {1, 2}, other claims equal to 1."""
    return make_model(0.1, 0.2, 0.2, {1: 0.5, 2: 0.5}, {1: 1.0}, [(1, 1, 1.0)])
