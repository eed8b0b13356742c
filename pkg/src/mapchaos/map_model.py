"""The Markov additive process model and its compensators.

The modulator is the Lévy process

    Theta_t = mu1*t + sigma1*B_t + (jumps of nu1, |x| < 1 part compensated)

and the ordinate is ``xi = xi^L + xi^f`` with

    xi^L_t = xi0 + int mu2(Theta_s) ds + int sigma2(Theta_s) dW_s
             + (jumps of nu2, |x| < 1 part compensated)
    xi^f_t = sum_j U_j(dTheta_{tau_j})   over modulator jump times tau_j.

Because only the small jumps are compensated,
``E[Theta_t] = (mu1 + int_{|x|>=1} x nu1(dx)) t`` and, by conditional
independence of (W, M2) from Theta,
``E[xi^L_t | K_t] = xi0 + int_0^t mu2(Theta_s) ds + t int_{|x|>=1} x nu2(dx)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import levy_measures as lm
from .errors import ValidationError
from .levy_measures import LevyMeasureSpec, TriggeredJumpLaw


# --------------------------------------------------------------------------
# bounded coefficient functions mu2(theta), sigma2(theta)
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    value: float

    is_constant = True

    def __call__(self, theta):
        return np.full(np.shape(theta), self.value, dtype=float)

    def bound(self) -> float:
        return abs(self.value)


@dataclass(frozen=True)
class ClippedAffine:
    """``clip(slope*theta + intercept, lo, hi)``."""

    slope: float
    intercept: float
    lo: float
    hi: float

    is_constant = False

    def __call__(self, theta):
        return np.clip(self.slope * np.asarray(theta, dtype=float) + self.intercept, self.lo, self.hi)

    def bound(self) -> float:
        return max(abs(self.lo), abs(self.hi))


@dataclass(frozen=True)
class Table:
    """Piecewise-linear interpolation through ``(knots, values)``, flat outside."""

    knots: tuple[float, ...]
    values: tuple[float, ...]

    is_constant = False

    def __call__(self, theta):
        return np.interp(np.asarray(theta, dtype=float), self.knots, self.values)

    def bound(self) -> float:
        return max(abs(v) for v in self.values)


CoefficientFunction = Union[Constant, ClippedAffine, Table]


def _coef_issues(f: CoefficientFunction, name: str) -> list[str]:
    if isinstance(f, Constant):
        vals = [f.value]
    elif isinstance(f, ClippedAffine):
        vals = [f.slope, f.intercept, f.lo, f.hi]
    elif isinstance(f, Table):
        vals = list(f.knots) + list(f.values)
    else:
        return [f"{name}-unsupported-family"]
    if not all(math.isfinite(v) for v in vals):
        return [f"{name}-unbounded"]
    if isinstance(f, ClippedAffine) and f.lo > f.hi:
        return [f"{name}-clip-bounds"]
    if isinstance(f, Table):
        if len(f.knots) != len(f.values) or len(f.knots) == 0:
            return [f"{name}-table-shape"]
        if any(b <= a for a, b in zip(f.knots, f.knots[1:])):
            return [f"{name}-table-knots-unsorted"]
    return []


def coef_from_dict(d: dict) -> CoefficientFunction:
    d = dict(d)
    kind = d.pop("type")
    if kind == "constant":
        return Constant(float(d["value"]))
    if kind == "affine":
        return ClippedAffine(**{k: float(v) for k, v in d.items()})
    if kind == "table":
        return Table(tuple(map(float, d["knots"])), tuple(map(float, d["values"])))
    raise ValidationError([f"unknown-coefficient-family:{kind}"])


def coef_to_dict(f: CoefficientFunction) -> dict:
    if isinstance(f, Constant):
        return {"type": "constant", "value": f.value}
    if isinstance(f, ClippedAffine):
        return {"type": "affine", "slope": f.slope, "intercept": f.intercept, "lo": f.lo, "hi": f.hi}
    return {"type": "table", "knots": list(f.knots), "values": list(f.values)}


# --------------------------------------------------------------------------
# the model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MapSpec:
    mu1: float
    sigma1: float
    nu1: LevyMeasureSpec
    mu2: CoefficientFunction
    sigma2: CoefficientFunction
    nu2: LevyMeasureSpec
    u_law: TriggeredJumpLaw
    xi0: float = 0.0
    horizon: float = 1.0
    k_max: int = lm.K_MAX_DEFAULT

    def table1(self) -> lm.MomentTable:
        """Moments of nu1 joint with the triggered law."""
        return lm.moment_table(self.nu1, self.u_law, self.k_max)

    def table2(self) -> lm.MomentTable:
        return lm.moment_table(self.nu2, None, self.k_max)


def default_spec() -> MapSpec:
    """mu1=0.2, sigma1=1, nu1 = 1*Uniform(1,2); mu2=0.1, sigma2=0.5, nu2 = 2*N(0,1); U(x)=x/2."""
    return MapSpec(
        mu1=0.2,
        sigma1=1.0,
        nu1=LevyMeasureSpec(1.0, lm.Uniform(1.0, 2.0)),
        mu2=Constant(0.1),
        sigma2=Constant(0.5),
        nu2=LevyMeasureSpec(2.0, lm.Gaussian(0.0, 1.0)),
        u_law=lm.Deterministic(0.5),
    )


def validate(spec: MapSpec) -> MapSpec:
    """Return ``spec`` unchanged or raise :class:`ValidationError` naming every issue."""
    issues: list[str] = []
    if not math.isfinite(spec.mu1):
        issues.append("mu1-nonfinite")
    if spec.sigma1 == 0:
        issues.append("sigma1-zero")
    elif not math.isfinite(spec.sigma1):
        issues.append("sigma1-nonfinite")
    if not (spec.horizon > 0):
        issues.append("horizon-nonpositive")
    if not math.isfinite(spec.xi0):
        issues.append("xi0-nonfinite")
    if not 1 <= spec.k_max <= lm.K_MAX_LIMIT:
        issues.append("k-max-out-of-range")
    issues += [f"nu1.{i}" if i != "negative-intensity" else i for i in spec.nu1.issues()]
    issues += [f"nu2.{i}" if i != "negative-intensity" else i for i in spec.nu2.issues()]
    issues += [f"u_law.{i}" for i in spec.u_law.issues()]
    issues += _coef_issues(spec.mu2, "mu2") + _coef_issues(spec.sigma2, "sigma2")
    if issues:
        raise ValidationError(issues)
    return spec


@dataclass(frozen=True)
class CompensatorSpec:
    """Deterministic compensator rates plus the path-dependent drift of xi^L.

    Power rates are indexed by order: ``theta_power_rates[k] = m_k(nu1)``,
    ``xiL_power_rates[k] = m_k(nu2)``, ``xiF_power_rates[k] = c_{k,0}``
    (index 0 unused).  ``joint_rates[(l, k)] = c_{k,l}`` compensates the
    mixed jump sum ``sum dTheta^l U^k``.
    """

    theta_mean_rate: float
    xiL_jump_drift: float
    theta_power_rates: tuple[float, ...]
    xiL_power_rates: tuple[float, ...]
    xiF_power_rates: tuple[float, ...]
    joint_rates: dict = field(hash=False)
    mu2: CoefficientFunction = Constant(0.0)

    def xiL_cond_drift(self, grid: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """``int_0^t mu2(Theta_s) ds + t * int_{|x|>=1} x nu2(dx)`` on the grid.

        The Lebesgue integral is a left-point Riemann sum with ``theta`` the
        post-jump values at the grid points.
        """
        grid = np.asarray(grid, dtype=float)
        if isinstance(self.mu2, Constant):
            return (self.mu2.value + self.xiL_jump_drift) * grid
        h = np.diff(grid)
        out = np.empty_like(grid)
        out[0] = 0.0
        np.cumsum(self.mu2(theta[:-1]) * h, out=out[1:])
        return out + self.xiL_jump_drift * grid


def compensators(spec: MapSpec) -> CompensatorSpec:
    t1, t2 = spec.table1(), spec.table2()
    top = 2 * spec.k_max
    joint = {
        (l, k): t1.c(k, l) for k in range(1, top + 1) for l in range(1, top + 1 - k)
    }
    return CompensatorSpec(
        theta_mean_rate=spec.mu1 + t1.big_jump_mean,
        xiL_jump_drift=t2.big_jump_mean,
        theta_power_rates=tuple(float(v) for v in t1.scalar),
        xiL_power_rates=tuple(float(v) for v in t2.scalar),
        xiF_power_rates=(0.0,) + tuple(t1.c(k, 0) for k in range(1, top + 1)),
        joint_rates=joint,
        mu2=spec.mu2,
    )


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------


def spec_from_dict(d: dict) -> MapSpec:
    mod, ordn = d["modulator"], d["ordinate"]
    return MapSpec(
        mu1=float(mod["mu1"]),
        sigma1=float(mod["sigma1"]),
        nu1=lm.measure_from_dict(mod["nu1"]),
        mu2=coef_from_dict(ordn["mu2"]),
        sigma2=coef_from_dict(ordn["sigma2"]),
        nu2=lm.measure_from_dict(ordn["nu2"]),
        u_law=lm.triggered_from_dict(d["triggered"]),
        xi0=float(d.get("xi0", 0.0)),
        horizon=float(d.get("horizon", 1.0)),
        k_max=int(d.get("k_max", lm.K_MAX_DEFAULT)),
    )


def spec_to_dict(spec: MapSpec) -> dict:
    return {
        "modulator": {"mu1": spec.mu1, "sigma1": spec.sigma1, "nu1": lm.measure_to_dict(spec.nu1)},
        "ordinate": {
            "mu2": coef_to_dict(spec.mu2),
            "sigma2": coef_to_dict(spec.sigma2),
            "nu2": lm.measure_to_dict(spec.nu2),
        },
        "triggered": lm.triggered_to_dict(spec.u_law),
        "xi0": spec.xi0,
        "horizon": spec.horizon,
        "k_max": spec.k_max,
    }
