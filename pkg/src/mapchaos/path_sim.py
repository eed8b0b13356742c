"""Exact-jump sample paths of (Theta, xi^L, xi^f) on a jump-adapted grid.

The grid is the uniform mesh of step ``dt`` united with every simulated
jump time, so jump functionals (power sums, cross-variations) carry no
discretisation error.  Diffusion and drift terms of xi^L are integrated by
left-point Euler with Theta sampled at the left end of each sub-interval.

Randomness comes from four Philox counter streams per path (jump skeleton,
triggered sizes, B, W).  The jump and triggered streams never depend on
``dt``, so refining the mesh leaves every jump record unchanged.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Iterator

import numpy as np

from . import levy_measures as lm
from .errors import JumpCollision, MapChaosError
from .map_model import MapSpec, validate

CSV_SCHEMA = "v1"
CSV_COLUMNS = ("time", "theta", "xiL", "xiF", "is_jump", "jump_source", "jump_size")

_STREAM_JUMPS, _STREAM_U, _STREAM_B, _STREAM_W = range(4)


class JumpSource(str, enum.Enum):
    MODULATOR = "modulator"
    ORDINATE_LEVY = "ordinate_levy"
    TRIGGERED = "triggered"


@dataclass(frozen=True)
class JumpRecord:
    time: float
    source: JumpSource
    size: float
    parent_size: float = math.nan


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class MapPath:
    """One realisation.  ``theta[i]`` is the post-jump value at ``grid[i]``,
    ``theta_left[i]`` the left limit (they differ only at jump indices)."""

    spec: MapSpec
    dt: float
    seed: int
    grid: np.ndarray
    theta: np.ndarray
    theta_left: np.ndarray
    xiL: np.ndarray
    xiL_left: np.ndarray
    xiF: np.ndarray
    xiF_left: np.ndarray
    dB: np.ndarray
    dW: np.ndarray
    mod_idx: np.ndarray
    mod_sizes: np.ndarray
    trig_sizes: np.ndarray
    ord_idx: np.ndarray
    ord_sizes: np.ndarray

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    @cached_property
    def steps(self) -> np.ndarray:
        return np.diff(self.grid)

    @cached_property
    def jumps(self) -> list[JumpRecord]:
        """Jump records in time order; a triggered record follows its modulator record."""
        out = []
        for i, x, u in zip(self.mod_idx, self.mod_sizes, self.trig_sizes):
            t = float(self.grid[i])
            out.append(JumpRecord(t, JumpSource.MODULATOR, float(x)))
            out.append(JumpRecord(t, JumpSource.TRIGGERED, float(u), parent_size=float(x)))
        for i, y in zip(self.ord_idx, self.ord_sizes):
            out.append(JumpRecord(float(self.grid[i]), JumpSource.ORDINATE_LEVY, float(y)))
        order = {JumpSource.MODULATOR: 0, JumpSource.TRIGGERED: 1, JumpSource.ORDINATE_LEVY: 2}
        out.sort(key=lambda r: (r.time, order[r.source]))
        return out

    @cached_property
    def sigma2_sq(self) -> np.ndarray:
        """``sigma2(Theta)^2`` at each grid point (left-point rate on the next step)."""
        return self.spec.sigma2(self.theta) ** 2

    @cached_property
    def sigma2_sq_cumulative(self) -> np.ndarray:
        """Left-point Riemann sums of ``int_0^t sigma2^2(Theta_s) ds`` on the grid."""
        out = np.zeros_like(self.grid)
        np.cumsum(self.sigma2_sq[:-1] * self.steps, out=out[1:])
        return out

    def index_at(self, t: float) -> int:
        """Index of the last grid point ``<= t``."""
        return int(np.searchsorted(self.grid, t, side="right")) - 1

    def sigma2_sq_integral(self, t: float | None = None) -> float:
        if t is None or t >= self.grid[-1]:
            return float(self.sigma2_sq_cumulative[-1])
        i = self.index_at(t)
        return float(self.sigma2_sq_cumulative[i] + self.sigma2_sq[i] * (t - self.grid[i]))


def derive_seed(base_seed: int, index: int) -> int:
    """Seed of path ``index`` in a batch: a spawned child of ``SeedSequence(base_seed)``."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _stream(seed: int, which: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, which]))


@lru_cache(maxsize=32)
def _mesh(horizon: float, dt: float) -> np.ndarray:
    n = max(1, math.ceil(horizon / dt - 1e-9))
    mesh = np.arange(n + 1, dtype=float) * dt
    mesh[-1] = horizon
    return _readonly(mesh)


def _jump_times(rng: np.random.Generator, measure: lm.LevyMeasureSpec, horizon: float):
    if measure.is_zero:
        return np.empty(0), np.empty(0)
    n = rng.poisson(measure.intensity * horizon)
    # (0, horizon]: 1 - U with U in [0, 1)
    times = np.sort(horizon * (1.0 - rng.random(n)))
    return times, measure.law.sample(rng, n)


def simulate(spec: MapSpec, dt: float, seed: int) -> MapPath:
    if not dt > 0:
        raise MapChaosError(f"dt must be positive, got {dt}", code="dt-nonpositive")
    if not spec.horizon > 0:
        raise MapChaosError("horizon must be positive", code="horizon-nonpositive")
    if dt > spec.horizon:
        raise MapChaosError(f"dt={dt} exceeds horizon {spec.horizon}", code="dt-exceeds-horizon")
    validate(spec)
    horizon = spec.horizon

    rj = _stream(seed, _STREAM_JUMPS)
    t1, x1 = _jump_times(rj, spec.nu1, horizon)
    t2, y2 = _jump_times(rj, spec.nu2, horizon)
    u = spec.u_law.sample(_stream(seed, _STREAM_U), x1) if x1.size else np.empty(0)

    mesh = _mesh(horizon, dt)
    grid = np.unique(np.concatenate([mesh, t1, t2])) if (t1.size or t2.size) else mesh.copy()
    mod_idx = np.searchsorted(grid, t1)
    ord_idx = np.searchsorted(grid, t2)
    if np.unique(mod_idx).size != mod_idx.size or np.unique(ord_idx).size != ord_idx.size:
        raise JumpCollision("two jumps of one source share a time")
    if np.intersect1d(mod_idx, ord_idx).size:
        raise JumpCollision("modulator and ordinate jumps share a time")

    n = grid.size
    h = np.diff(grid)
    sqrt_h = np.sqrt(h)
    dB = sqrt_h * _stream(seed, _STREAM_B).standard_normal(n - 1)
    dW = sqrt_h * _stream(seed, _STREAM_W).standard_normal(n - 1)

    jump1 = np.zeros(n)
    jump1[mod_idx] = x1
    theta = (spec.mu1 - lm.small_jump_mean(spec.nu1)) * grid
    theta[1:] += spec.sigma1 * np.cumsum(dB)
    theta += np.cumsum(jump1)
    theta_left = theta.copy()
    theta_left[mod_idx] -= x1

    th = theta[:-1]
    xiL = spec.xi0 - lm.small_jump_mean(spec.nu2) * grid
    xiL[1:] += np.cumsum(spec.mu2(th) * h + spec.sigma2(th) * dW)
    if y2.size:
        jump2 = np.zeros(n)
        jump2[ord_idx] = y2
        xiL += np.cumsum(jump2)
    xiL_left = xiL.copy()
    xiL_left[ord_idx] -= y2

    jumpf = np.zeros(n)
    jumpf[mod_idx] = u
    xiF = np.cumsum(jumpf)
    xiF_left = xiF.copy()
    xiF_left[mod_idx] -= u

    arrays = dict(
        grid=grid, theta=theta, theta_left=theta_left, xiL=xiL, xiL_left=xiL_left,
        xiF=xiF, xiF_left=xiF_left, dB=dB, dW=dW, mod_idx=mod_idx, mod_sizes=x1,
        trig_sizes=np.asarray(u, dtype=float), ord_idx=ord_idx, ord_sizes=y2,
    )
    return MapPath(spec=spec, dt=dt, seed=int(seed), **{k: _readonly(v) for k, v in arrays.items()})


def simulate_batch(spec: MapSpec, dt: float, base_seed: int, n_paths: int) -> Iterator[MapPath]:
    """Paths ``i = 0..n_paths-1`` with seeds ``derive_seed(base_seed, i)``, in order."""
    if n_paths < 1:
        raise MapChaosError("n_paths must be >= 1", code="n-paths-nonpositive")
    for i in range(n_paths):
        yield simulate(spec, dt, derive_seed(base_seed, i))


def write_csv(path: MapPath, fh, extra: dict[str, np.ndarray] | None = None) -> None:
    """Dump one path: a ``# schema`` comment line, a header, one row per grid point.

    Values are post-jump.  A modulator row carries the modulator jump size; the
    triggered size at that time is the step in ``xiF``.
    """
    extra = extra or {}
    source = np.full(path.grid.size, "", dtype=object)
    size = np.zeros(path.grid.size)
    source[path.mod_idx] = JumpSource.MODULATOR.value
    size[path.mod_idx] = path.mod_sizes
    source[path.ord_idx] = JumpSource.ORDINATE_LEVY.value
    size[path.ord_idx] = path.ord_sizes
    fh.write(f"# schema: {CSV_SCHEMA}; seed: {path.seed}; dt: {path.dt!r}\n")
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(list(CSV_COLUMNS) + list(extra))
    for i in range(path.grid.size):
        row = [
            repr(float(path.grid[i])), repr(float(path.theta[i])), repr(float(path.xiL[i])),
            repr(float(path.xiF[i])), int(bool(source[i])), source[i], repr(float(size[i])),
        ]
        row += [repr(float(v[i])) for v in extra.values()]
        writer.writerow(row)
