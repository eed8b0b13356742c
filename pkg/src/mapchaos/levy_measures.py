"""Finite-activity Lévy jump measures and their moment functionals.

A measure is ``nu(dx) = intensity * law(dx)`` for a parametric jump law.
All moments are computed in closed form per family; quadrature is reserved
for the test suite, where it serves as an independent check.

Supported jump laws
-------------------
Gaussian(mean, stddev), Uniform(lo, hi), TwoPoint(x1, p1, x2, p2) and
Exponential(rate, sign).  Every family has finite moments of all orders.
The exponential-moment condition ``int_{|x|>=1} exp(lam*x) nu(dx) < inf``
holds for every ``lam`` except for a positive-sign Exponential law, where
it requires ``lam < rate`` (see :func:`check_exponential_moment`).

Triggered jump laws
-------------------
The conditional law of the triggered jump ``U(x)`` given a modulator jump
of size ``x`` is one of Deterministic (``U = scale*x``), Affine
(``U = slope*x + intercept + noise*Z``) or Independent (``U ~ law``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import NonFiniteMoment, OrderTooHigh, ValidationError

K_MAX_DEFAULT = 4
K_MAX_LIMIT = 6


def _std_normal_moment(j: int) -> float:
    """E[Z^j] for a standard normal Z: (j-1)!! for even j, else 0."""
    if j % 2:
        return 0.0
    out = 1.0
    for i in range(j - 1, 0, -2):
        out *= i
    return out


def _phi(z: float) -> float:
    return math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


def _Phi(z: float) -> float:
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


# --------------------------------------------------------------------------
# jump laws
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    mean: float = 0.0
    stddev: float = 1.0

    def moment(self, k: int) -> float:
        return sum(
            math.comb(k, j) * self.mean ** (k - j) * self.stddev**j * _std_normal_moment(j)
            for j in range(0, k + 1, 2)
        )

    def truncated_mean(self) -> float:
        """E[J; |J| >= 1]."""
        m, s = self.mean, self.stddev
        b = (1.0 - m) / s
        c = (-1.0 - m) / s
        upper = m * (1.0 - _Phi(b)) + s * _phi(b)
        lower = m * _Phi(c) - s * _phi(c)
        return upper + lower

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.mean + self.stddev * rng.standard_normal(size)

    def issues(self) -> list[str]:
        out = []
        if not (math.isfinite(self.mean) and math.isfinite(self.stddev)):
            out.append("nonfinite-parameter")
        elif self.stddev <= 0:
            out.append("gaussian-stddev-nonpositive")
        return out


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    def moment(self, k: int) -> float:
        lo, hi = self.lo, self.hi
        return (hi ** (k + 1) - lo ** (k + 1)) / ((k + 1) * (hi - lo))

    def truncated_mean(self) -> float:
        width = self.hi - self.lo
        total = 0.0
        # pieces of [lo, hi] outside (-1, 1)
        for a, b in ((self.lo, min(self.hi, -1.0)), (max(self.lo, 1.0), self.hi)):
            if b > a:
                total += (b * b - a * a) / 2.0
        return total / width

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size)

    def issues(self) -> list[str]:
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            return ["nonfinite-parameter"]
        if self.hi <= self.lo:
            return ["uniform-empty-interval"]
        return []


@dataclass(frozen=True)
class TwoPoint:
    x1: float = 1.0
    p1: float = 0.5
    x2: float = -1.0
    p2: float = 0.5

    def moment(self, k: int) -> float:
        return self.p1 * self.x1**k + self.p2 * self.x2**k

    def truncated_mean(self) -> float:
        return sum(p * x for x, p in ((self.x1, self.p1), (self.x2, self.p2)) if abs(x) >= 1.0)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        return np.where(u < self.p1, self.x1, self.x2)

    def issues(self) -> list[str]:
        vals = (self.x1, self.p1, self.x2, self.p2)
        if not all(math.isfinite(v) for v in vals):
            return ["nonfinite-parameter"]
        if self.p1 < 0 or self.p2 < 0 or abs(self.p1 + self.p2 - 1.0) > 1e-12:
            return ["twopoint-bad-probabilities"]
        return []


@dataclass(frozen=True)
class Exponential:
    """``J = sign * E`` with ``E ~ Exp(rate)``."""

    rate: float = 1.0
    sign: int = 1

    def moment(self, k: int) -> float:
        return self.sign**k * math.factorial(k) / self.rate**k

    def truncated_mean(self) -> float:
        r = self.rate
        return self.sign * math.exp(-r) * (1.0 + 1.0 / r)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return self.sign * rng.exponential(1.0 / self.rate, size)

    def issues(self) -> list[str]:
        if not math.isfinite(self.rate):
            return ["nonfinite-parameter"]
        out = []
        if self.rate <= 0:
            out.append("exponential-rate-nonpositive")
        if self.sign not in (1, -1):
            out.append("exponential-bad-sign")
        return out


JumpLaw = Union[Gaussian, Uniform, TwoPoint, Exponential]


@dataclass(frozen=True)
class LevyMeasureSpec:
    """``nu(dx) = intensity * law(dx)``; intensity 0 is the zero measure."""

    intensity: float
    law: JumpLaw

    @property
    def is_zero(self) -> bool:
        return self.intensity == 0.0

    def issues(self) -> list[str]:
        out = []
        if not math.isfinite(self.intensity):
            out.append("nonfinite-intensity")
        elif self.intensity < 0:
            out.append("negative-intensity")
        return out + self.law.issues()


# --------------------------------------------------------------------------
# triggered jump laws
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Deterministic:
    """``U(x) = scale * x``."""

    scale: float = 1.0

    def conditional_poly(self, k: int) -> np.ndarray:
        """Coefficients (ascending in x) of ``E[U(x)^k]`` as a polynomial in x."""
        c = np.zeros(k + 1)
        c[k] = self.scale**k
        return c

    def sample(self, rng: np.random.Generator, parent: np.ndarray) -> np.ndarray:
        return self.scale * np.asarray(parent, dtype=float)

    def issues(self) -> list[str]:
        return [] if math.isfinite(self.scale) else ["nonfinite-parameter"]


@dataclass(frozen=True)
class Affine:
    """``U(x) = slope*x + intercept + noise*Z`` with Z standard normal."""

    slope: float = 1.0
    intercept: float = 0.0
    noise: float = 0.0

    def conditional_poly(self, k: int) -> np.ndarray:
        c = np.zeros(k + 1)
        a, b = self.slope, self.intercept
        for j in range(0, k + 1, 2):
            wz = math.comb(k, j) * self.noise**j * _std_normal_moment(j)
            r = k - j
            for i in range(r + 1):
                c[i] += wz * math.comb(r, i) * a**i * b ** (r - i)
        return c

    def sample(self, rng: np.random.Generator, parent: np.ndarray) -> np.ndarray:
        parent = np.asarray(parent, dtype=float)
        return self.slope * parent + self.intercept + self.noise * rng.standard_normal(parent.size)

    def issues(self) -> list[str]:
        vals = (self.slope, self.intercept, self.noise)
        if not all(math.isfinite(v) for v in vals):
            return ["nonfinite-parameter"]
        return ["affine-negative-noise"] if self.noise < 0 else []


@dataclass(frozen=True)
class Independent:
    """``U(x) ~ law`` regardless of x."""

    law: JumpLaw

    def conditional_poly(self, k: int) -> np.ndarray:
        return np.array([self.law.moment(k)]) if k else np.array([1.0])

    def sample(self, rng: np.random.Generator, parent: np.ndarray) -> np.ndarray:
        return self.law.sample(rng, np.asarray(parent).size)

    def issues(self) -> list[str]:
        return self.law.issues()


TriggeredJumpLaw = Union[Deterministic, Affine, Independent]


# --------------------------------------------------------------------------
# moment functionals
# --------------------------------------------------------------------------


def _check_order(k: int, k_max: int) -> None:
    if k_max > K_MAX_LIMIT:
        raise OrderTooHigh(f"k_max={k_max} exceeds supported limit {K_MAX_LIMIT}")
    if k > 2 * k_max:
        raise OrderTooHigh(f"moment order {k} exceeds 2*k_max = {2 * k_max}")


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NonFiniteMoment(f"{what} is not finite")
    return value


def scalar_moment(spec: LevyMeasureSpec, k: int, k_max: int = K_MAX_DEFAULT) -> float:
    """``int x^k nu(dx) = intensity * E[J^k]``."""
    if k < 1:
        raise ValueError("scalar_moment requires k >= 1")
    _check_order(k, k_max)
    if spec.is_zero:
        return 0.0
    return _finite(spec.intensity * spec.law.moment(k), f"moment of order {k}")


def joint_moment(
    modulator: LevyMeasureSpec, u: TriggeredJumpLaw, k: int, l: int, k_max: int = K_MAX_DEFAULT
) -> float:
    """``c_{k,l} = int int y^k x^l nu1(dx) P(U(x) in dy)``.

    Computed as ``lambda1 * E[E[U(J)^k | J] J^l]`` by expanding the
    conditional moment polynomial in J.
    """
    if k < 0 or l < 0 or k + l < 1:
        raise ValueError("joint_moment requires k, l >= 0 and k + l >= 1")
    _check_order(k + l, k_max)
    if modulator.is_zero:
        return 0.0
    poly = u.conditional_poly(k)
    law = modulator.law
    total = 0.0
    for i, coef in enumerate(poly):
        if coef == 0.0:
            continue
        order = i + l
        total += coef * (law.moment(order) if order else 1.0)
    return _finite(modulator.intensity * total, f"joint moment ({k},{l})")


def big_jump_mean(spec: LevyMeasureSpec) -> float:
    """``int_{|x|>=1} x nu(dx)``: the uncompensated part of the first moment."""
    if spec.is_zero:
        return 0.0
    return _finite(spec.intensity * spec.law.truncated_mean(), "big-jump mean")


def small_jump_mean(spec: LevyMeasureSpec) -> float:
    """``int_{|x|<1} x nu(dx)``: the part removed by the truncated compensation."""
    if spec.is_zero:
        return 0.0
    return spec.intensity * spec.law.moment(1) - big_jump_mean(spec)


def check_exponential_moment(spec: LevyMeasureSpec, lam: float) -> None:
    """Raise unless ``int_{|x|>=1} exp(lam*x) nu(dx)`` is finite."""
    law = spec.law
    if not spec.is_zero and isinstance(law, Exponential) and law.sign > 0 and lam >= law.rate:
        raise ValidationError([f"exponential-moment: need lam < rate ({lam} >= {law.rate})"])


@dataclass(frozen=True)
class MomentTable:
    """Moments of one measure, optionally joint with a triggered law.

    ``scalar[k]`` is ``m_k`` for ``k = 0..2*k_max`` (``m_0`` is the total mass).
    ``joint[k, l]`` is ``c_{k,l}`` for ``k + l <= 2*k_max`` and NaN elsewhere;
    it is ``None`` for a table built without a triggered law.
    """

    k_max: int
    scalar: np.ndarray
    big_jump_mean: float
    joint: np.ndarray | None = None

    def m(self, k: int) -> float:
        if k > 2 * self.k_max:
            raise OrderTooHigh(f"moment order {k} not in table (k_max={self.k_max})")
        return float(self.scalar[k])

    def c(self, k: int, l: int) -> float:
        if self.joint is None:
            raise ValueError("table has no joint moments")
        if k + l > 2 * self.k_max:
            raise OrderTooHigh(f"joint order {k + l} not in table (k_max={self.k_max})")
        return float(self.joint[k, l])

    def hankel(self, size: int, shift: int = 2) -> np.ndarray:
        """``[m_{i+j+shift}]_{i,j=0..size-1}``; shift 2 is the x^2-weighted Gram."""
        idx = np.add.outer(np.arange(size), np.arange(size)) + shift
        return self.scalar[idx]


@lru_cache(maxsize=256)
def moment_table(
    spec: LevyMeasureSpec, u: TriggeredJumpLaw | None = None, k_max: int = K_MAX_DEFAULT
) -> MomentTable:
    _check_order(0, k_max)
    top = 2 * k_max
    scalar = np.zeros(top + 1)
    scalar[0] = spec.intensity
    for k in range(1, top + 1):
        scalar[k] = scalar_moment(spec, k, k_max)
    scalar.flags.writeable = False
    joint = None
    if u is not None:
        joint = np.full((top + 1, top + 1), np.nan)
        joint[0, 0] = spec.intensity
        for k in range(top + 1):
            for l in range(top + 1 - k):
                if k + l:
                    joint[k, l] = joint_moment(spec, u, k, l, k_max)
        joint.flags.writeable = False
    return MomentTable(k_max=k_max, scalar=scalar, big_jump_mean=big_jump_mean(spec), joint=joint)


# --------------------------------------------------------------------------
# JSON fragments
# --------------------------------------------------------------------------

_LAWS = {"gaussian": Gaussian, "uniform": Uniform, "twopoint": TwoPoint, "exponential": Exponential}
_TRIGGERED = {"deterministic": Deterministic, "affine": Affine, "independent": Independent}


def law_from_dict(d: dict) -> JumpLaw:
    d = dict(d)
    cls = _LAWS[d.pop("type")]
    if cls is Exponential and "sign" in d:
        d["sign"] = int(d["sign"])
    return cls(**d)


def law_to_dict(law: JumpLaw) -> dict:
    name = {v: k for k, v in _LAWS.items()}[type(law)]
    return {"type": name, **law.__dict__}


def measure_from_dict(d: dict) -> LevyMeasureSpec:
    return LevyMeasureSpec(intensity=float(d["intensity"]), law=law_from_dict(d["law"]))


def measure_to_dict(spec: LevyMeasureSpec) -> dict:
    return {"intensity": spec.intensity, "law": law_to_dict(spec.law)}


def triggered_from_dict(d: dict) -> TriggeredJumpLaw:
    d = dict(d)
    kind = d.pop("type")
    if kind == "independent":
        return Independent(law=law_from_dict(d["law"]))
    return _TRIGGERED[kind](**d)


def triggered_to_dict(u: TriggeredJumpLaw) -> dict:
    name = {v: k for k, v in _TRIGGERED.items()}[type(u)]
    if isinstance(u, Independent):
        return {"type": name, "law": law_to_dict(u.law)}
    return {"type": name, **u.__dict__}
