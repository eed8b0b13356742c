"""End-to-end acceptance checks at full scale.

Each test records its sub-checks through the ``acceptance`` fixture; the
terminal summary prints one PASS/FAIL line per criterion.
"""

import dataclasses
import time

import numpy as np
import pytest

from mapchaos import levy_measures as lm
from mapchaos import mc_verify as mv
from mapchaos.map_model import default_spec
from mapchaos.ortho_basis import build_basis, build_s1, build_s3, gram_schmidt
from mapchaos.path_sim import derive_seed, simulate
from mapchaos.teugels import Family, power_jump

pytestmark = pytest.mark.slow

CFG = mv.SuiteConfig()
NO_JUMPS_1 = lm.LevyMeasureSpec(0.0, lm.Uniform(1.0, 2.0))
NO_JUMPS_2 = lm.LevyMeasureSpec(0.0, lm.Gaussian(0.0, 1.0))
SPECS = {
    "default": default_spec(),
    "no modulator jumps": dataclasses.replace(default_spec(), nu1=NO_JUMPS_1),
    "no ordinate jumps": dataclasses.replace(default_spec(), nu2=NO_JUMPS_2),
}
_CACHE: dict = {}


def report(suite: str, spec_name: str) -> tuple[mv.SuiteReport, float]:
    key = (suite, spec_name)
    if key not in _CACHE:
        t0 = time.perf_counter()
        rep = mv.run_suite(suite, SPECS[spec_name], CFG)
        _CACHE[key] = (rep, time.perf_counter() - t0)
    return _CACHE[key]


def _worst(rep: mv.SuiteReport) -> str:
    zs = [abs(t.z) for t in rep.tests if isinstance(t.z, float) and np.isfinite(t.z)]
    return f"max |z| {max(zs):.2f}" if zs else ""


def test_martingale_suite(acceptance):
    rep, secs = report("martingale", "default")
    acceptance(1, f"all compensated powers k<=4 within 3 stderr ({_worst(rep)})", rep.passed)
    acceptance(1, f"runtime {secs:.0f}s < 120s", secs < 120)
    assert len(rep.tests) == 12
    assert rep.passed
    assert all(abs(t.z) <= 3 for t in rep.tests)


def test_isometry_suite(acceptance):
    rep, _ = report("isometry", "default")
    s1 = [t for t in rep.tests if t.name.startswith("S1")]
    s3 = [t for t in rep.tests if t.name.startswith("S3")]
    acceptance(2, f"S1 brackets match Gram ({len(s1)} pairs)", all(t.passed for t in s1))
    acceptance(2, f"S3 brackets match Gram ({len(s3)} pairs)", all(t.passed for t in s3))
    acceptance(2, "suite verdict", rep.passed)
    assert len(s1) == 6 and len(s3) == 21
    assert rep.passed


def test_orthogonality_suite(acceptance):
    rep, _ = report("orthogonality", "default")
    off = [t for t in rep.tests if t.target == 0.0 and t.name.startswith("[")]
    cross = rep.tests[-1]
    acceptance(3, f"off-diagonal brackets within 3 stderr ({len(off)} pairs)", all(t.passed for t in off))
    acceptance(3, f"[H,G] identically 0 on {CFG.exact_paths} paths", cross.mean == 0.0)
    acceptance(3, "suite verdict", rep.passed)
    assert cross.name == "max |[H,G]_t| pathwise" and cross.mean == 0.0
    assert rep.passed


def test_chaos_suite(acceptance):
    rep = mv.run_suite("chaos", default_spec(), CFG)
    exact = [t for t in rep.tests if t.name.startswith("exact")]
    acceptance(4, "degree-1 expansions exact to 1e-12", all(t.passed for t in exact) and len(exact) == 1)
    frac = rep.notes["fraction"]
    acceptance(4, f"RMS error decreases in {frac:.0%} of refinements (>= 90%)", frac >= 0.9)
    assert rep.passed


def test_replication_suite(acceptance):
    rep = mv.run_suite("replication", default_spec(), CFG)
    buckets = [t for t in rep.tests if t.name.startswith("h_xi")]
    acceptance(5, "terminal ordinate h_xi within 1e-2 of 1 in every bucket", all(t.passed for t in buckets))
    floor = next(t for t in rep.tests if "floor" in t.name)
    acceptance(5, "terminal ordinate residual <= 10 x floor", floor.passed)
    sq = rep.tests[-1]
    acceptance(5, f"terminal square K=1 -> K=2 decrease z={sq.z:.1f} > 2", sq.passed)
    assert len(buckets) == CFG.replication_buckets
    assert rep.passed


def test_algebraic_checks(acceptance):
    t0 = time.perf_counter()
    spec = default_spec()
    basis = build_basis(spec)
    spaces = [basis.h.space, basis.g.space, build_s3(spec.table1(), spec.sigma1, 3, 1)]
    psd = True
    for sp in spaces:
        try:
            sp.check_psd()
        except Exception:
            psd = False
    offdiag = max(basis.h.max_relative_offdiag(), basis.g.max_relative_offdiag())
    monic = all(np.allclose(np.diag(f.coeffs), 1.0) and np.allclose(np.triu(f.coeffs, 1), 0.0)
                for f in (basis.h, basis.g))
    scaled = True
    for c in (0.1, 3.0, 50.0):
        nu = dataclasses.replace(spec.nu2, intensity=c * spec.nu2.intensity)
        a = gram_schmidt(build_s1(lm.moment_table(spec.nu2, None, 4), 0.25, 4))
        b = gram_schmidt(build_s1(lm.moment_table(nu, None, 4), 0.25 * c, 4))
        scaled &= bool(np.allclose(a.coeffs, b.coeffs, rtol=1e-9, atol=1e-12))
    secs = time.perf_counter() - t0
    acceptance(6, "Gram matrices PSD", psd)
    acceptance(6, f"coefficient-level orthogonality {offdiag:.1e} <= 1e-9", offdiag <= 1e-9)
    acceptance(6, "monic normalization", monic)
    acceptance(6, "coefficients invariant under intensity scaling", scaled)
    acceptance(6, f"runtime {secs:.2f}s < 1s", secs < 1.0)
    assert psd and offdiag <= 1e-9 and monic and scaled and secs < 1.0


def test_no_modulator_jumps_reduction(acceptance):
    spec = SPECS["no modulator jumps"]
    zero = True
    for i in range(100):
        p = simulate(spec, 0.01, derive_seed(CFG.seed, i))
        zero &= bool(np.all(p.xiF == 0.0))
        zero &= all(np.all(power_jump(p, Family.XI_F, k).compensated == 0.0) for k in range(1, 5))
    g = build_basis(spec, reduce=True).g
    acceptance(7, "nu1 = 0: xi^f and every xi_bar[k] identically 0", zero)
    acceptance(7, f"nu1 = 0: G-family is {list(g.names)}", g.names == ("G(1,0)",))
    for suite in ("martingale", "isometry", "orthogonality"):
        rep, _ = report(suite, "no modulator jumps")
        acceptance(7, f"nu1 = 0: {suite} suite", rep.passed)
        assert rep.passed
    assert zero and g.names == ("G(1,0)",)


def test_no_ordinate_jumps_reduction(acceptance):
    spec = SPECS["no ordinate jumps"]
    h = build_basis(spec, reduce=True).h
    acceptance(7, f"nu2 = 0: H-family is {list(h.names)}", h.names == ("H(1)",))
    for suite in ("martingale", "isometry", "orthogonality"):
        rep, _ = report(suite, "no ordinate jumps")
        acceptance(7, f"nu2 = 0: {suite} suite", rep.passed)
        assert rep.passed
    assert h.names == ("H(1)",)
