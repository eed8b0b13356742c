"""Least-squares Monte Carlo estimates of predictable integrands.

A square-integrable payoff ``F`` defines the martingale ``M_t = E[F | F_t]``,
which is replicated by stochastic integrals against

    xi_bar = xi_bar^(1) + xi_bar^[1],  xi_bar^(2..K),  xi_bar^[1..K],  Theta_bar^(1..K).

The horizon is cut into buckets.  On bucket ``[t_i, t_{i+1})`` each integrand
is a linear function of the bucket-start features ``(1, Theta_bar, xi_bar)``,
fitted by regressing the martingale increment ``M_{t_{i+1}} - M_{t_i}`` on
``(integrator increment) x (feature)`` products over a training set.  For
polynomial payoffs with constant ``mu2`` and ``sigma2`` the increments are
exact conditional expectations (the triple ``(Theta_bar, xi_bar^L, xi_bar^f)``
is then a Lévy process).  Otherwise the regression target is ``F - E F``
itself, which has the same projection because later increments are
orthogonal to the bucket's regressors.

The residual ``F - M_0 - sum h * dX`` is measured on a held-out set simulated
from a disjoint seed stream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MapChaosError
from .map_model import MapSpec, spec_to_dict
from .monomial_chaos import conditional_moment
from .path_sim import MapPath, simulate
from .path_sim import derive_seed
from .teugels import Family, power_jump

RIDGE_COND = 1e12
RIDGE_REL = 1e-10
FLOOR_REL = 1e-8
FEATURES = ("1", "Theta_bar", "xi_bar")


@dataclass(frozen=True)
class Payoff:
    """A polynomial in ``(Theta_bar_T, xi_bar^L_T, xi_bar^f_T)``.

    ``terms`` lists ``(weight, (g, p, b))``.  Use the constructors below.
    """

    kind: str
    terms: tuple

    @classmethod
    def terminal_ordinate(cls) -> "Payoff":
        return cls("terminal_ordinate", ((1.0, (0, 1, 0)), (1.0, (0, 0, 1))))

    @classmethod
    def terminal_square(cls) -> "Payoff":
        return cls("terminal_square", ((1.0, (0, 2, 0)), (2.0, (0, 1, 1)), (1.0, (0, 0, 2))))

    @classmethod
    def monomial(cls, g: int, p: int, b: int) -> "Payoff":
        return cls("monomial", ((1.0, (g, p, b)),))

    @classmethod
    def polynomial(cls, terms) -> "Payoff":
        return cls("polynomial", tuple((float(w), tuple(int(e) for e in m)) for w, m in terms))

    @classmethod
    def from_dict(cls, d: dict) -> "Payoff":
        kind = d["kind"]
        if kind == "terminal_ordinate":
            return cls.terminal_ordinate()
        if kind == "terminal_square":
            return cls.terminal_square()
        if kind == "monomial":
            return cls.monomial(*d["exponents"])
        if kind == "polynomial":
            return cls.polynomial((t["weight"], t["exponents"]) for t in d["terms"])
        raise MapChaosError(f"unknown payoff kind {kind!r}", code="unknown-payoff")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "terms": [{"weight": w, "exponents": list(m)} for w, m in self.terms]}

    @property
    def degree(self) -> int:
        return max(sum(m) for _, m in self.terms)

    def __call__(self, x, y, z):
        return sum(w * np.asarray(x, dtype=float) ** g * np.asarray(y, dtype=float) ** p
                   * np.asarray(z, dtype=float) ** b for w, (g, p, b) in self.terms)

    def conditional(self, spec: MapSpec, state, tau: float):
        return sum(w * conditional_moment(spec, *m, state, tau) for w, m in self.terms)


def integrator_names(K: int) -> list[str]:
    return (
        ["xi_bar"]
        + [f"xi_bar({k})" for k in range(2, K + 1)]
        + [f"xi_bar[{k}]" for k in range(1, K + 1)]
        + [f"Theta_bar({k})" for k in range(1, K + 1)]
    )


def _integrator_keys(K: int) -> list:
    return (
        ["xi_bar"]
        + [(Family.XI_L, k) for k in range(2, K + 1)]
        + [(Family.XI_F, k) for k in range(1, K + 1)]
        + [(Family.THETA, k) for k in range(1, K + 1)]
    )


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Integrator values at the bucket boundaries for a batch of paths.

    ``values[n, j, i]`` is integrator ``j`` on path ``n`` at boundary ``i``;
    ``state[n, :, i]`` holds ``(Theta_bar, xi_bar^L, xi_bar^f)``.
    """

    K: int
    times: np.ndarray
    values: np.ndarray
    state: np.ndarray


def _sample_path(path: MapPath, K: int, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    idx = np.searchsorted(path.grid, times, side="right") - 1
    th = power_jump(path, Family.THETA, 1).compensated[idx]
    yl = power_jump(path, Family.XI_L, 1).compensated[idx]
    zf = power_jump(path, Family.XI_F, 1).compensated[idx]
    rows = []
    for key in _integrator_keys(K):
        if key == "xi_bar":
            rows.append(yl + zf)
        elif key == (Family.XI_F, 1):
            rows.append(zf)
        elif key == (Family.THETA, 1):
            rows.append(th)
        else:
            rows.append(power_jump(path, *key).compensated[idx])
    return np.array(rows), np.array([th, yl, zf])


def sample(spec: MapSpec, K: int, n_paths: int, dt: float, seed: int, n_buckets: int, threads: int = 1) -> SampleSet:
    """Simulate paths ``derive_seed(seed, i)`` and record bucket-boundary values in path order."""
    times = np.linspace(0.0, spec.horizon, n_buckets + 1)

    def work(lo: int, hi: int):
        return [_sample_path(simulate(spec, dt, derive_seed(seed, i)), K, times) for i in range(lo, hi)]

    chunks = _chunks(n_paths, threads)
    if threads > 1 and len(chunks) > 1:
        from joblib import Parallel, delayed

        parts = Parallel(n_jobs=threads)(delayed(work)(a, b) for a, b in chunks)
    else:
        parts = [work(a, b) for a, b in chunks]
    rows = [r for part in parts for r in part]
    values = np.stack([r[0] for r in rows])
    state = np.stack([r[1] for r in rows])
    return SampleSet(K, times, values, state)


def _chunks(n: int, threads: int) -> list[tuple[int, int]]:
    size = max(1, math.ceil(n / max(1, threads * 4)))
    return [(a, min(n, a + size)) for a in range(0, n, size)]


@dataclass(frozen=True)
class BucketFit:
    coeffs: np.ndarray  # (n_integrators, n_features)
    ridge: float
    condition: float


def _design(s: SampleSet, i: int, n_int: int, n_feat: int) -> np.ndarray:
    dx = s.values[:, :n_int, i + 1] - s.values[:, :n_int, i]
    th, yl, zf = s.state[:, 0, i], s.state[:, 1, i], s.state[:, 2, i]
    feats = np.stack([np.ones_like(th), th, yl + zf], axis=1)[:, :n_feat]
    return (dx[:, :, None] * feats[:, None, :]).reshape(dx.shape[0], -1)


def _solve(a: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, float, float]:
    scale = np.sqrt(np.mean(a * a, axis=0))
    live = scale > 0
    coef = np.zeros(a.shape[1])
    if not live.any():
        return coef, 0.0, 1.0
    an = a[:, live] / scale[live]
    gram = an.T @ an
    rhs = an.T @ target
    cond = float(np.linalg.cond(gram))
    ridge = 0.0
    if not cond < RIDGE_COND:
        ridge = RIDGE_REL * float(np.trace(gram)) / gram.shape[0]
        gram = gram + ridge * np.eye(gram.shape[0])
    coef[live] = np.linalg.solve(gram, rhs) / scale[live]
    return coef, ridge, cond


@dataclass(frozen=True, eq=False)
class ReplicationReport:
    payoff: Payoff
    basis_order: int
    integrators: tuple[str, ...]
    features: tuple[str, ...]
    bucket_times: np.ndarray
    integrand_estimates: np.ndarray  # (n_buckets, n_integrators, n_features)
    ridge: np.ndarray  # per-bucket regulariser (0 when none was needed)
    m0: float
    residual_variance: float
    residual_variance_stderr: float
    floor: float
    target_mode: str
    n_paths: int
    dt: float
    seed: int
    spec: MapSpec = field(repr=False)
    residuals: np.ndarray = field(repr=False, default=None)

    def integrand(self, name: str) -> np.ndarray:
        """Per-bucket coefficient arrays of one integrator, shape ``(n_buckets, n_features)``."""
        return self.integrand_estimates[:, self.integrators.index(name), :]

    def to_dict(self) -> dict:
        return {
            "schema": "v1",
            "model": spec_to_dict(self.spec),
            "payoff": self.payoff.to_dict(),
            "basis_order": self.basis_order,
            "n_paths": self.n_paths,
            "dt": self.dt,
            "seed": self.seed,
            "target_mode": self.target_mode,
            "m0": self.m0,
            "residual_variance": self.residual_variance,
            "residual_variance_stderr": self.residual_variance_stderr,
            "floor": self.floor,
            "bucket_times": self.bucket_times.tolist(),
            "features": list(self.features),
            "ridge": self.ridge.tolist(),
            "integrands": {
                name: self.integrand(name).tolist() for name in self.integrators
            },
        }

    def write_csv(self, fh) -> None:
        """One row per (bucket, integrator): bucket bounds then one column per feature."""
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bucket", "t_start", "t_end", "integrator", *self.features])
        for i in range(len(self.bucket_times) - 1):
            for j, name in enumerate(self.integrators):
                w.writerow([i, repr(float(self.bucket_times[i])), repr(float(self.bucket_times[i + 1])), name,
                            *(repr(float(v)) for v in self.integrand_estimates[i, j])])


def _exact_targets(spec: MapSpec) -> bool:
    return spec.mu2.is_constant and spec.sigma2.is_constant


def _martingale_values(spec: MapSpec, payoff: Payoff, s: SampleSet) -> np.ndarray:
    """``M`` at each bucket boundary, shape ``(n, n_buckets + 1)``."""
    cols = [payoff.conditional(spec, tuple(s.state[:, :, i].T), spec.horizon - t) for i, t in enumerate(s.times)]
    return np.stack(cols, axis=1)


def fit(spec: MapSpec, payoff: Payoff, K: int, train: SampleSet, features: int = 3):
    """Per-bucket integrand coefficients plus ``M_0`` from a training set."""
    n_int = 1 + (K - 1) + 2 * K
    n_b = len(train.times) - 1
    if _exact_targets(spec):
        m = _martingale_values(spec, payoff, train)
        m0 = float(m[0, 0])
        targets = [m[:, i + 1] - m[:, i] for i in range(n_b)]
        mode = "conditional-expectation"
    else:
        f = payoff(*train.state[:, :, -1].T)
        m0 = float(f.mean())
        targets = [f - m0] * n_b
        mode = "terminal-projection"
    cols = _column_index(train.K, K)
    sub = SampleSet(K, train.times, train.values[:, cols, :], train.state)
    est = np.zeros((n_b, n_int, features))
    ridge = np.zeros(n_b)
    for i in range(n_b):
        a = _design(sub, i, n_int, features)
        coef, ridge[i], _ = _solve(a, targets[i])
        est[i] = coef.reshape(n_int, features)
    return est, ridge, m0, mode


def _column_index(K_have: int, K: int) -> list[int]:
    have = integrator_names(K_have)
    return [have.index(n) for n in integrator_names(K)]


def replicated_value(est: np.ndarray, m0: float, s: SampleSet, K: int) -> np.ndarray:
    n_int, n_feat = est.shape[1], est.shape[2]
    cols = _column_index(s.K, K)
    sub = SampleSet(K, s.times, s.values[:, cols, :], s.state)
    out = np.full(s.values.shape[0], m0)
    for i in range(len(s.times) - 1):
        out += _design(sub, i, n_int, n_feat) @ est[i].ravel()
    return out


def known_integrand_floor(payoff: Payoff, s: SampleSet) -> float | None:
    """Residual variance of the exact representation ``xi_bar_T = int 1 d xi_bar``.

    Only defined for the terminal ordinate; ``None`` otherwise.  The value is
    floored at ``(1e-8)^2 * Var F`` so round-off alone never counts as a miss.
    """
    f = payoff(*s.state[:, :, -1].T)
    var_f = float(np.var(f))
    if payoff.kind != "terminal_ordinate":
        return None
    xi = s.values[:, 0, :]
    rep = xi[:, 0] + np.sum(np.diff(xi, axis=1), axis=1)
    return max(float(np.var(f - rep)), FLOOR_REL**2 * var_f)


def _variance_with_stderr(r: np.ndarray) -> tuple[float, float]:
    c = r - r.mean()
    sq = c * c
    return float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(sq.size))


def replicate(
    spec: MapSpec,
    payoff: Payoff,
    K: int,
    n_paths: int,
    dt: float,
    seed: int,
    n_buckets: int = 10,
    features: int = 3,
    threads: int = 1,
    samples: tuple[SampleSet, SampleSet] | None = None,
) -> ReplicationReport:
    """Fit on ``n_paths // 2`` training paths and score on as many held-out paths.

    Training paths use seeds derived from ``(seed, 0)`` and held-out ones from
    ``(seed, 1)``, so the two sets never share a stream.
    """
    if not 1 <= K <= spec.k_max:
        raise MapChaosError(f"basis order {K} outside 1..{spec.k_max}", code="order-too-high")
    if n_paths < 4:
        raise MapChaosError("need at least 4 paths", code="n-paths-too-small")
    if samples is None:
        samples = split_samples(spec, K, n_paths, dt, seed, n_buckets, threads)
    train, test = samples
    est, ridge, m0, mode = fit(spec, payoff, K, train, features)
    f = payoff(*test.state[:, :, -1].T)
    resid = f - replicated_value(est, m0, test, K)
    var, var_se = _variance_with_stderr(resid)
    floor = known_integrand_floor(payoff, test)
    return ReplicationReport(
        payoff=payoff,
        basis_order=K,
        integrators=tuple(integrator_names(K)),
        features=FEATURES[:features],
        bucket_times=train.times,
        integrand_estimates=est,
        ridge=ridge,
        m0=m0,
        residual_variance=var,
        residual_variance_stderr=var_se,
        floor=math.nan if floor is None else floor,
        target_mode=mode,
        n_paths=n_paths,
        dt=dt,
        seed=seed,
        spec=spec,
        residuals=resid,
    )


def split_samples(spec, K, n_paths, dt, seed, n_buckets=10, threads=1) -> tuple[SampleSet, SampleSet]:
    half = n_paths // 2
    train = sample(spec, K, half, dt, derive_seed(seed, 0), n_buckets, threads)
    test = sample(spec, K, n_paths - half, dt, derive_seed(seed, 1), n_buckets, threads)
    return train, test


@dataclass(frozen=True)
class PairedComparison:
    """Held-out residual variance of order ``k_a`` minus that of ``k_b`` on the same paths."""

    k_a: int
    k_b: int
    difference: float
    stderr: float

    @property
    def z(self) -> float:
        return self.difference / self.stderr if self.stderr > 0 else math.copysign(math.inf, self.difference)


def compare(a: ReplicationReport, b: ReplicationReport) -> PairedComparison:
    ra = a.residuals - a.residuals.mean()
    rb = b.residuals - b.residuals.mean()
    d = ra * ra - rb * rb
    return PairedComparison(a.basis_order, b.basis_order, float(d.mean()), float(d.std(ddof=1) / math.sqrt(d.size)))


def sweep(spec: MapSpec, payoff: Payoff, orders, n_paths: int, dt: float, seed: int, n_buckets: int = 10,
          threads: int = 1) -> tuple[list[ReplicationReport], list[PairedComparison]]:
    """Replicate at each order on one shared sample; compare consecutive orders."""
    orders = list(orders)
    samples = split_samples(spec, max(orders), n_paths, dt, seed, n_buckets, threads)
    reports = [replicate(spec, payoff, k, n_paths, dt, seed, n_buckets, threads=threads, samples=samples)
               for k in orders]
    return reports, [compare(a, b) for a, b in zip(reports, reports[1:])]
