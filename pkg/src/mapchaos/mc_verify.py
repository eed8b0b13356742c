"""Monte Carlo harness: estimates with standard errors and verdicts per suite.

Every suite draws paths ``derive_seed(seed, i)`` for ``i = 0..n-1``, turns each
path into a vector of functionals and reduces the vectors in path order with
a chunked Welford accumulator, so a report depends only on
``(suite, spec, config)`` and never on the number of workers.

A test passes when ``|z| <= z_crit``.  A suite passes when every test does
and at most ``max(1, ceil(1% of tests))`` of them fall in the warning band
``(2.5, z_crit]``.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import MapChaosError, UnknownSuite
from .map_model import MapSpec, spec_to_dict
from .monomial_chaos import evaluate, expand
from .ortho_basis import build_basis, build_s1, build_s3, materialize, resolve_alpha
from .path_sim import MapPath, derive_seed, simulate
from .predictable_rep import Payoff, compare, replicate, split_samples
from .teugels import Family, compensated_powers, cross_variation, power_jump

REPORT_SCHEMA = "v1"
Z_CRIT = 3.0
Z_WARN = 2.5
EXACT_ATOL = 1e-12
SUITES = ("martingale", "isometry", "orthogonality", "chaos", "replication")


@dataclass(frozen=True)
class McEstimate:
    name: str
    mean: float
    stderr: float
    n: int
    seed: int
    target: float
    z_crit: float = Z_CRIT

    @property
    def z(self) -> float:
        diff = self.mean - self.target
        if self.stderr > 0:
            return diff / self.stderr
        # a functional with no spread: exact agreement or an outright miss
        return 0.0 if abs(diff) <= EXACT_ATOL * (1.0 + abs(self.target)) else math.inf

    @property
    def passed(self) -> bool:
        return abs(self.z) <= self.z_crit

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_dict(self) -> dict:
        z = self.z
        return {
            "name": self.name,
            "mean": self.mean,
            "stderr": self.stderr,
            "target": self.target,
            "z": z if math.isfinite(z) else ("inf" if z > 0 else "-inf"),
            "verdict": self.verdict,
            "n": self.n,
            "seed": self.seed,
        }


class Welford:
    """Running mean and sum of squared deviations of vector observations.

    Batches are merged with the pairwise update of Chan, Golub and LeVeque, in
    the order they are fed.
    """

    def __init__(self, dim: int):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, batch: np.ndarray) -> None:
        batch = np.atleast_2d(np.asarray(batch, dtype=float))
        nb = batch.shape[0]
        if nb == 0:
            return
        mb = batch.mean(axis=0)
        m2b = ((batch - mb) ** 2).sum(axis=0)
        n = self.n + nb
        delta = mb - self.mean
        self.mean = self.mean + delta * (nb / n)
        self.m2 = self.m2 + m2b + delta**2 * (self.n * nb / n)
        self.n = n

    @property
    def variance(self) -> np.ndarray:
        return self.m2 / (self.n - 1) if self.n > 1 else np.zeros_like(self.m2)

    @property
    def stderr(self) -> np.ndarray:
        return np.sqrt(self.variance / self.n) if self.n else np.zeros_like(self.m2)


def _chunk_bounds(n: int, size: int = 1000) -> list[tuple[int, int]]:
    return [(a, min(n, a + size)) for a in range(0, n, size)]


def collect(
    functional: Callable[[MapPath], Sequence[float]],
    spec: MapSpec,
    n: int,
    dt: float,
    seed: int,
    threads: int = 1,
) -> np.ndarray:
    """Rows ``functional(simulate(spec, dt, derive_seed(seed, i)))`` in path order."""

    def work(lo: int, hi: int) -> np.ndarray:
        return np.array([np.atleast_1d(functional(simulate(spec, dt, derive_seed(seed, i)))) for i in range(lo, hi)])

    bounds = _chunk_bounds(n)
    if threads > 1 and len(bounds) > 1:
        from joblib import Parallel, delayed

        parts = Parallel(n_jobs=threads)(delayed(work)(a, b) for a, b in bounds)
    else:
        parts = [work(a, b) for a, b in bounds]
    return np.concatenate(parts, axis=0)


def summarize(rows: np.ndarray, names: Sequence[str], targets: Sequence[float], seed: int,
              z_crit: float = Z_CRIT) -> list[McEstimate]:
    acc = Welford(rows.shape[1])
    for a, b in _chunk_bounds(rows.shape[0]):
        acc.update(rows[a:b])
    return [
        McEstimate(name, float(m), float(s), acc.n, seed, float(t), z_crit)
        for name, m, s, t in zip(names, acc.mean, acc.stderr, targets)
    ]


def estimate(functional, spec: MapSpec, n: int, dt: float, seed: int, target: float = 0.0,
             name: str = "functional", threads: int = 1) -> McEstimate:
    if n < 100:
        raise MapChaosError("estimate needs n >= 100", code="n-too-small")
    rows = collect(lambda p: [functional(p)], spec, n, dt, seed, threads)
    return summarize(rows, [name], [target], seed)[0]


# --------------------------------------------------------------------------
# suites
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SuiteConfig:
    n_paths: int = 100_000
    dt: float = 0.01
    seed: int = 20_240_917
    z_crit: float = Z_CRIT
    threads: int = 1
    max_order: int = 4  # martingale suite
    pair_order: int = 3  # isometry pairs and H-family size
    g_shape: tuple[int, int] = (3, 1)
    exact_paths: int = 1000  # pathwise cross-family check
    chaos_monomials: tuple = ((1, 0, 0), (0, 1, 1), (0, 2, 0), (2, 0, 0), (1, 1, 0), (0, 0, 2))
    chaos_dts: tuple = (1e-2, 5e-3, 2.5e-3)
    chaos_paths: int = 100
    chaos_fraction: float = 0.9
    replication_paths: int = 40_000
    replication_buckets: int = 10
    replication_tolerance: float = 1e-2
    floor_factor: float = 10.0
    reduce: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> "SuiteConfig":
        d = dict(d)
        for key in ("g_shape",):
            if key in d:
                d[key] = tuple(d[key])
        if "chaos_monomials" in d:
            d["chaos_monomials"] = tuple(tuple(m) for m in d["chaos_monomials"])
        if "chaos_dts" in d:
            d["chaos_dts"] = tuple(d["chaos_dts"])
        return cls(**d)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["g_shape"] = list(self.g_shape)
        out["chaos_monomials"] = [list(m) for m in self.chaos_monomials]
        out["chaos_dts"] = list(self.chaos_dts)
        return out


@dataclass
class CheckResult:
    """One report line.  Simulation tests wrap an :class:`McEstimate`; chaos and
    replication checks fill the fields directly."""

    name: str
    mean: float
    stderr: float
    target: float
    z: float
    verdict: str

    @classmethod
    def of(cls, e: McEstimate) -> "CheckResult":
        return cls(e.name, e.mean, e.stderr, e.target, e.z, e.verdict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self) -> dict:
        z = self.z
        if isinstance(z, float) and not math.isfinite(z):
            z = "inf" if z > 0 else ("-inf" if z < 0 else "nan")
        return {"name": self.name, "mean": self.mean, "stderr": self.stderr, "target": self.target,
                "z": z, "verdict": self.verdict}


@dataclass
class SuiteReport:
    suite: str
    spec: MapSpec = field(repr=False)
    config: SuiteConfig
    tests: list[CheckResult]
    verdict: str
    notes: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "suite": self.suite,
            "spec_hash": spec_hash(self.spec),
            "config": self.config.to_dict(),
            "tests": [t.to_dict() for t in self.tests],
            "notes": self.notes,
            "verdict": self.verdict,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=False) + "\n"

    def summary(self) -> str:
        lines = [f"suite {self.suite}: {self.verdict} ({sum(t.passed for t in self.tests)}/{len(self.tests)} tests)"]
        for t in self.tests:
            lines.append(f"  {t.verdict:4s} {t.name}: mean={t.mean:.6g} target={t.target:.6g} "
                         f"stderr={t.stderr:.3g} z={t.z if not isinstance(t.z, float) else round(t.z, 3)}")
        return "\n".join(lines)


def spec_hash(spec: MapSpec) -> str:
    canon = json.dumps(spec_to_dict(spec), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def guarded_verdict(tests: Sequence[CheckResult], z_crit: float = Z_CRIT) -> str:
    if not all(t.passed for t in tests):
        return "FAIL"
    zs = [abs(t.z) for t in tests if isinstance(t.z, float) and math.isfinite(t.z)]
    warn = sum(1 for z in zs if Z_WARN < z <= z_crit)
    return "PASS" if warn <= max(1, math.ceil(0.01 * len(tests))) else "FAIL"


_FAMILIES = (Family.THETA, Family.XI_L, Family.XI_F)


def martingale_suite(spec: MapSpec, cfg: SuiteConfig) -> SuiteReport:
    orders = range(1, cfg.max_order + 1)
    keys = [(f, k) for f in _FAMILIES for k in orders]

    def functional(path):
        return [power_jump(path, f, k).compensated[-1] for f, k in keys]

    rows = collect(functional, spec, cfg.n_paths, cfg.dt, cfg.seed, cfg.threads)
    names = [f"E[{_label(f, k)}(T)] = 0" for f, k in keys]
    ests = summarize(rows, names, [0.0] * len(keys), cfg.seed, cfg.z_crit)
    tests = [CheckResult.of(e) for e in ests]
    return SuiteReport("martingale", spec, cfg, tests, guarded_verdict(tests, cfg.z_crit))


def _label(f: Family, k) -> str:
    from .teugels import label

    return label(f, k)


def isometry_suite(spec: MapSpec, cfg: SuiteConfig) -> SuiteReport:
    """``E[[a, b]_T]`` against ``T`` times the Gram entries of S1 and S3."""
    K = cfg.pair_order
    T = spec.horizon
    alpha = resolve_alpha(spec, dt=cfg.dt, seed=derive_seed(cfg.seed, 1 << 20))
    s1 = build_s1(spec.table2(), alpha.value / T, K)
    s3 = build_s3(spec.table1(), spec.sigma1, K, K)
    pairs1 = [(i, j) for i in range(K) for j in range(i, K)]
    n3 = len(s3.labels)
    pairs3 = [(i, j) for i in range(n3) for j in range(i, n3)]

    def functional(path):
        pw = compensated_powers(path, K)
        xs = [pw[key] for key in s1.integrators]
        gs = [pw[key] for key in s3.integrators]
        return [cross_variation(xs[i], xs[j]) for i, j in pairs1] + [
            cross_variation(gs[i], gs[j]) for i, j in pairs3
        ]

    rows = collect(functional, spec, cfg.n_paths, cfg.dt, cfg.seed, cfg.threads)
    names = [f"S1 [{_label(*s1.integrators[i])},{_label(*s1.integrators[j])}]" for i, j in pairs1]
    names += [f"S3 [{_label(*s3.integrators[i])},{_label(*s3.integrators[j])}]" for i, j in pairs3]
    targets = [T * s1.gram[i, j] for i, j in pairs1] + [T * s3.gram[i, j] for i, j in pairs3]
    tests = [CheckResult.of(e) for e in summarize(rows, names, targets, cfg.seed, cfg.z_crit)]
    return SuiteReport("isometry", spec, cfg, tests, guarded_verdict(tests, cfg.z_crit),
                       notes={"alpha": alpha.to_dict()})


def _basis(spec: MapSpec, cfg: SuiteConfig):
    alpha = resolve_alpha(spec, dt=cfg.dt, seed=derive_seed(cfg.seed, 1 << 20))
    return build_basis(spec, K=cfg.pair_order, g_shape=cfg.g_shape, alpha=alpha, reduce=cfg.reduce)


def orthogonality_suite(spec: MapSpec, cfg: SuiteConfig) -> SuiteReport:
    basis = _basis(spec, cfg)
    T = spec.horizon
    nh, ng = len(basis.h), len(basis.g)
    top = max([nh] + [k for _, k in basis.g.space.integrators])

    def elements(path):
        pw = compensated_powers(path, top)
        return materialize(basis.h, pw), materialize(basis.g, pw)

    pairs_h = [(i, j) for i in range(nh) for j in range(i, nh)]
    pairs_g = [(i, j) for i in range(ng) for j in range(i, ng)]

    def functional(path):
        hs, gs = elements(path)
        return [cross_variation(hs[i], hs[j]) for i, j in pairs_h] + [
            cross_variation(gs[i], gs[j]) for i, j in pairs_g
        ]

    rows = collect(functional, spec, cfg.n_paths, cfg.dt, cfg.seed, cfg.threads)
    names = [f"[{basis.h.names[i]},{basis.h.names[j]}]" for i, j in pairs_h]
    names += [f"[{basis.g.names[i]},{basis.g.names[j]}]" for i, j in pairs_g]
    targets = [T * basis.h.norms[i] if i == j else 0.0 for i, j in pairs_h]
    targets += [T * basis.g.norms[i] if i == j else 0.0 for i, j in pairs_g]
    tests = [CheckResult.of(e) for e in summarize(rows, names, targets, cfg.seed, cfg.z_crit)]

    # cross-family brackets vanish identically: no shared jumps, independent Brownian parts
    times = (0.5 * T, T)

    def cross(path):
        hs, gs = elements(path)
        return [max(abs(cross_variation(h, g, t)) for h in hs for g in gs for t in times)]

    worst = float(collect(cross, spec, cfg.exact_paths, cfg.dt, derive_seed(cfg.seed, 1 << 21), cfg.threads).max())
    tests.append(CheckResult("max |[H,G]_t| pathwise", worst, 0.0, 0.0, 0.0 if worst == 0.0 else math.inf,
                            "PASS" if worst == 0.0 else "FAIL"))
    return SuiteReport("orthogonality", spec, cfg, tests, guarded_verdict(tests, cfg.z_crit),
                       notes={"H": list(basis.h.names), "G": list(basis.g.names), "alpha": basis.alpha.to_dict()})


def chaos_suite(spec: MapSpec, cfg: SuiteConfig) -> SuiteReport:
    """RMS pathwise error of each expansion across the mesh sequence.

    Degree-1 expansions must be exact to ``1e-12 (1 + |lhs|)``; for the rest
    each refinement counts as a success when the RMS error drops, and the
    suite needs a ``chaos_fraction`` share of successes.
    """
    tests: list[CheckResult] = []
    decreasing, comparisons = 0, 0
    seeds = [derive_seed(cfg.seed, i) for i in range(cfg.chaos_paths)]
    for mono in cfg.chaos_monomials:
        tree = expand(*mono)
        rms, rel = [], []
        for dt in cfg.chaos_dts:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                checks = [evaluate(tree, simulate(spec, dt, s)) for s in seeds]
            err = np.array([c.abs_error for c in checks])
            rms.append(float(np.sqrt(np.mean(err**2))))
            rel.append(float(np.max(err / (1.0 + np.abs([c.lhs for c in checks])))))
        if sum(mono) == 1:
            worst = max(rel)
            ok = worst <= 1e-12
            tests.append(CheckResult(f"exact {mono}", worst, 0.0, 0.0, 0.0 if ok else math.inf,
                                    "PASS" if ok else "FAIL"))
            continue
        for k in range(1, len(rms)):
            comparisons += 1
            ok = rms[k] < rms[k - 1]
            decreasing += ok
            tests.append(CheckResult(f"rms {mono} dt={cfg.chaos_dts[k]:g}", rms[k], 0.0, rms[k - 1],
                                    rms[k] / rms[k - 1] if rms[k - 1] > 0 else math.nan,
                                    "PASS" if ok else "WARN"))
    exact_ok = all(t.passed for t in tests if t.name.startswith("exact"))
    frac = decreasing / comparisons if comparisons else 1.0
    verdict = "PASS" if exact_ok and frac >= cfg.chaos_fraction else "FAIL"
    return SuiteReport("chaos", spec, cfg, tests, verdict,
                       notes={"decreasing": decreasing, "comparisons": comparisons, "fraction": frac,
                              "z_column": "ratio of RMS error to the previous mesh"})


def replication_suite(spec: MapSpec, cfg: SuiteConfig) -> SuiteReport:
    tests: list[CheckResult] = []
    samples = split_samples(spec, 2, cfg.replication_paths, cfg.dt, cfg.seed, cfg.replication_buckets, cfg.threads)
    rep = replicate(spec, Payoff.terminal_ordinate(), 1, cfg.replication_paths, cfg.dt, cfg.seed,
                    cfg.replication_buckets, threads=cfg.threads, samples=samples)
    h = rep.integrand("xi_bar")
    state = samples[0].state
    for i in range(h.shape[0]):
        feats = np.array([1.0, state[:, 0, i].mean(), (state[:, 1, i] + state[:, 2, i]).mean()])
        worst = max(abs(h[i, 0] - 1.0), abs(h[i] @ feats - 1.0))
        ok = worst <= cfg.replication_tolerance
        tests.append(CheckResult(f"h_xi bucket {i}", float(h[i, 0]), 0.0, 1.0, worst, "PASS" if ok else "FAIL"))
    ok = rep.residual_variance <= cfg.floor_factor * rep.floor
    tests.append(CheckResult("terminal ordinate residual <= 10 x floor", rep.residual_variance,
                            rep.residual_variance_stderr, cfg.floor_factor * rep.floor,
                            rep.residual_variance / rep.floor, "PASS" if ok else "FAIL"))
    sq = [replicate(spec, Payoff.terminal_square(), k, cfg.replication_paths, cfg.dt, cfg.seed,
                    cfg.replication_buckets, threads=cfg.threads, samples=samples) for k in (1, 2)]
    c = compare(sq[0], sq[1])
    ok = c.z > 2.0
    tests.append(CheckResult("terminal square residual K=1 - K=2 > 2 stderr", c.difference, c.stderr, 0.0, c.z,
                            "PASS" if ok else "FAIL"))
    verdict = "PASS" if all(t.passed for t in tests) else "FAIL"
    return SuiteReport("replication", spec, cfg, tests, verdict, notes={
        "residual_variance": {f"K={r.basis_order}": r.residual_variance for r in sq},
        "terminal_ordinate_floor": rep.floor,
        "target_mode": rep.target_mode,
    })


_RUNNERS = {
    "martingale": martingale_suite,
    "isometry": isometry_suite,
    "orthogonality": orthogonality_suite,
    "chaos": chaos_suite,
    "replication": replication_suite,
}


def run_suite(name: str, spec: MapSpec, config: SuiteConfig | dict | None = None) -> SuiteReport:
    if name not in _RUNNERS:
        raise UnknownSuite(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    if config is None:
        config = SuiteConfig()
    elif isinstance(config, dict):
        config = SuiteConfig.from_dict(config)
    return _RUNNERS[name](spec, config)
