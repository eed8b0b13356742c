"""Power-jump processes and their compensated (Teugels) martingales.

For ``k >= 2`` the raw processes are the jump power sums

    Theta^(k)_t = sum (dTheta_s)^k,   xi^(k)_t = sum (dxi^L_s)^k,
    xi^[k]_t    = sum U_j^k           (over modulator jump times),

compensated by ``t*m_k(nu1)``, ``t*m_k(nu2)`` and ``t*c_{k,0}``.  Order 1
gives back the processes themselves: ``Theta_bar = Theta - E[Theta]``,
``xi_bar^L = xi^L - E[xi^L | K]`` (a random compensator) and
``xi_bar^f = xi^f - t*c_{1,0}``.

A fourth, mixed family ``sum dTheta^l U^k`` compensated by ``t*c_{k,l}``
appears in the Itô expansion of products of Theta and xi^f, where the
modulator and triggered jumps coincide.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Protocol, Union

import numpy as np

from .errors import MismatchedPath, OrderTooHigh, OrderZero
from .map_model import CompensatorSpec, compensators
from .path_sim import MapPath

Order = Union[int, tuple]


class Family(str, enum.Enum):
    THETA = "theta"
    XI_L = "xiL"
    XI_F = "xiF"
    JOINT = "joint"


_SOURCE = {Family.THETA: "mod", Family.XI_F: "mod", Family.JOINT: "mod", Family.XI_L: "ord"}


def label(family: Family, order: Order) -> str:
    if family is Family.THETA:
        return f"Theta_bar({order})"
    if family is Family.XI_L:
        return f"xi_bar({order})"
    if family is Family.XI_F:
        return f"xi_bar[{order}]"
    return f"Pi_bar({order[0]},{order[1]})"


class Martingale(Protocol):
    """What :func:`cross_variation` needs from a path-valued martingale."""

    path: MapPath
    values: np.ndarray
    jump_idx: np.ndarray
    jump_sizes: np.ndarray
    c_b: float
    c_w: float
    sources: frozenset


@dataclass(frozen=True, eq=False)
class PowerJumpPath:
    """``raw`` and ``compensated`` on the path grid plus the jump bookkeeping.

    ``c_b`` and ``c_w`` are the loadings on the Brownian parts ``sigma1*B`` and
    ``int sigma2(Theta) dW`` (nonzero only for the order-1 Theta / xi^L bars).
    """

    family: Family
    order: Order
    raw: np.ndarray
    compensated: np.ndarray
    jump_idx: np.ndarray
    jump_sizes: np.ndarray
    c_b: float
    c_w: float
    path: MapPath

    @property
    def values(self) -> np.ndarray:
        return self.compensated

    @property
    def sources(self) -> frozenset:
        return frozenset({_SOURCE[self.family]})

    @property
    def label(self) -> str:
        return label(self.family, self.order)

    def at(self, t: float) -> float:
        return float(self.compensated[self.path.index_at(t)])


def _cumulative_jumps(n: int, idx: np.ndarray, sizes: np.ndarray) -> np.ndarray:
    out = np.zeros(n)
    if idx.size:
        out[idx] = sizes
        np.cumsum(out, out=out)
    return out


def _comp(path: MapPath) -> CompensatorSpec:
    # cached per spec on the path object
    cache = path.__dict__.setdefault("_compensators", None)
    if cache is None:
        cache = compensators(path.spec)
        path.__dict__["_compensators"] = cache
    return cache


def power_jump(path: MapPath, family: Family | str, k: Order) -> PowerJumpPath:
    family = Family(family)
    comp = _comp(path)
    k_max = path.spec.k_max
    grid = path.grid
    n = grid.size
    if family is Family.JOINT:
        l, m = k
        if l < 1 or m < 1:
            raise OrderZero("joint orders must both be >= 1")
        if l + m > 2 * k_max:
            raise OrderTooHigh(f"joint order {l}+{m} exceeds 2*k_max")
        sizes = path.mod_sizes**l * path.trig_sizes**m
        raw = _cumulative_jumps(n, path.mod_idx, sizes)
        comp_vals = raw - comp.joint_rates[(l, m)] * grid
        return PowerJumpPath(family, (l, m), raw, comp_vals, path.mod_idx, sizes, 0.0, 0.0, path)
    if k < 1:
        raise OrderZero("power-jump order must be >= 1")
    if k > 2 * k_max:
        raise OrderTooHigh(f"order {k} exceeds 2*k_max = {2 * k_max}")

    if family is Family.THETA:
        sizes = path.mod_sizes**k
        if k == 1:
            raw = path.theta
            comp_vals = raw - comp.theta_mean_rate * grid
            return PowerJumpPath(family, 1, raw, comp_vals, path.mod_idx, sizes, 1.0, 0.0, path)
        raw = _cumulative_jumps(n, path.mod_idx, sizes)
        return PowerJumpPath(
            family, k, raw, raw - comp.theta_power_rates[k] * grid, path.mod_idx, sizes, 0.0, 0.0, path
        )
    if family is Family.XI_L:
        sizes = path.ord_sizes**k
        if k == 1:
            raw = path.xiL
            comp_vals = raw - path.spec.xi0 - comp.xiL_cond_drift(grid, path.theta)
            return PowerJumpPath(family, 1, raw, comp_vals, path.ord_idx, sizes, 0.0, 1.0, path)
        raw = _cumulative_jumps(n, path.ord_idx, sizes)
        return PowerJumpPath(
            family, k, raw, raw - comp.xiL_power_rates[k] * grid, path.ord_idx, sizes, 0.0, 0.0, path
        )
    sizes = path.trig_sizes**k
    raw = path.xiF if k == 1 else _cumulative_jumps(n, path.mod_idx, sizes)
    return PowerJumpPath(
        family, k, raw, raw - comp.xiF_power_rates[k] * grid, path.mod_idx, sizes, 0.0, 0.0, path
    )


def compensated_powers(path: MapPath, orders: int, families=(Family.THETA, Family.XI_L, Family.XI_F)):
    """All ``power_jump(path, f, k)`` for ``k = 1..orders``, keyed by ``(family, k)``."""
    return {(Family(f), k): power_jump(path, f, k) for f in families for k in range(1, orders + 1)}


def cross_variation(a: Martingale, b: Martingale, t: float | None = None) -> float:
    """Pathwise ``[a, b]_t``: products of shared jumps plus the Brownian covariation.

    Only ``sigma1*B`` (rate ``sigma1^2``) and ``int sigma2(Theta) dW`` carry
    continuous covariation; B and W are independent, so mixed loadings
    contribute nothing.
    """
    if a.path is not b.path:
        raise MismatchedPath("cross_variation of martingales from different paths")
    path = a.path
    if t is None:
        t = path.horizon
    total = 0.0
    if a.sources & b.sources and a.jump_idx.size and b.jump_idx.size:
        if a.jump_idx is b.jump_idx or np.array_equal(a.jump_idx, b.jump_idx):
            sa, sb, idx = a.jump_sizes, b.jump_sizes, a.jump_idx
        else:
            idx, ia, ib = np.intersect1d(a.jump_idx, b.jump_idx, assume_unique=True, return_indices=True)
            sa, sb = a.jump_sizes[ia], b.jump_sizes[ib]
        if t < path.horizon:
            keep = path.grid[idx] <= t
            sa, sb = sa[keep], sb[keep]
        total += float(np.dot(sa, sb))
    cb = a.c_b * b.c_b
    if cb:
        total += cb * path.spec.sigma1**2 * t
    cw = a.c_w * b.c_w
    if cw:
        total += cw * path.sigma2_sq_integral(t)
    return total
