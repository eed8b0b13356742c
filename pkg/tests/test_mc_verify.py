import dataclasses
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mapchaos import levy_measures as lm
from mapchaos import mc_verify as mv
from mapchaos.errors import MapChaosError, UnknownSuite
from mapchaos.map_model import default_spec

NO_JUMPS = lm.LevyMeasureSpec(0.0, lm.Gaussian())
SMALL = mv.SuiteConfig(n_paths=400, dt=0.1, seed=3, exact_paths=50)


@settings(max_examples=50, deadline=None)
@given(
    data=st.lists(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3), min_size=2, max_size=60),
    cut=st.integers(1, 30),
)
def test_welford_matches_numpy(data, cut):
    x = np.array(data)
    acc = mv.Welford(3)
    acc.update(x[:cut])
    acc.update(x[cut:])
    assert acc.n == len(x)
    assert np.allclose(acc.mean, x.mean(axis=0), rtol=1e-10, atol=1e-9)
    assert np.allclose(acc.variance, x.var(axis=0, ddof=1), rtol=1e-8, atol=1e-6)


def test_zero_spread_z():
    assert mv.McEstimate("a", 1.0, 0.0, 10, 1, 1.0).z == 0.0
    e = mv.McEstimate("b", 1.0, 0.0, 10, 1, 1.5)
    assert e.z == math.inf and e.verdict == "FAIL"
    assert e.to_dict()["z"] == "inf"
    assert mv.McEstimate("c", 0.3, 0.1, 10, 1, 0.0).z == pytest.approx(3.0)


def _row(z):
    return mv.CheckResult("t", 0.0, 1.0, 0.0, z, "PASS" if abs(z) <= 3 else "FAIL")


def test_guard_band():
    base = [_row(0.1)] * 98
    assert mv.guarded_verdict(base + [_row(2.7)]) == "PASS"
    assert mv.guarded_verdict(base + [_row(2.7), _row(-2.9)]) == "FAIL"
    assert mv.guarded_verdict(base + [_row(3.1)]) == "FAIL"
    # 1% of 300 lets three through
    assert mv.guarded_verdict([_row(0.0)] * 297 + [_row(2.6)] * 3) == "PASS"


def test_estimate_requires_enough_paths():
    with pytest.raises(MapChaosError):
        mv.estimate(lambda p: 0.0, default_spec(), 99, 0.1, 1)


def test_identically_zero_functional_passes():
    e = mv.estimate(lambda p: 0.0, default_spec(), 100, 0.5, 1)
    assert (e.mean, e.stderr, e.z, e.verdict) == (0.0, 0.0, 0.0, "PASS")


def test_estimate_terminal_modulator_mean():
    # E[Theta_T] = mu1 + E J = 1.7
    e = mv.estimate(lambda p: p.theta[-1], default_spec(), 4000, 1.0, 2, target=1.7)
    assert e.passed


def test_unknown_suite():
    with pytest.raises(UnknownSuite) as e:
        mv.run_suite("nope", default_spec())
    assert e.value.code == "unknown-suite" and "nope" in str(e.value)


def test_martingale_trivial_without_jumps():
    s = dataclasses.replace(default_spec(), nu1=NO_JUMPS, nu2=NO_JUMPS)
    r = mv.run_suite("martingale", s, SMALL)
    assert r.passed
    by_name = {t.name: t for t in r.tests}
    assert by_name["E[xi_bar[3](T)] = 0"].stderr == 0.0
    assert by_name["E[xi_bar(2)(T)] = 0"].mean == 0.0


def test_report_is_reproducible_across_runs_and_threads():
    cfg = dataclasses.replace(SMALL, n_paths=2200)
    a = mv.run_suite("martingale", default_spec(), cfg).to_json()
    b = mv.run_suite("martingale", default_spec(), cfg).to_json()
    c = json.loads(mv.run_suite("martingale", default_spec(), dataclasses.replace(cfg, threads=2)).to_json())
    assert a == b
    da = json.loads(a)
    assert da["tests"] == c["tests"]
    assert da["spec_hash"] == mv.spec_hash(default_spec()) and len(da["spec_hash"]) == 64
    assert set(da) == {"schema", "suite", "spec_hash", "config", "tests", "notes", "verdict"}


def test_config_round_trip():
    cfg = dataclasses.replace(SMALL, g_shape=(2, 1), chaos_dts=(0.1, 0.05))
    assert mv.SuiteConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg


def test_small_isometry_and_orthogonality():
    iso = mv.run_suite("isometry", default_spec(), dataclasses.replace(SMALL, pair_order=2))
    assert len(iso.tests) == 3 + 10
    orth = mv.run_suite("orthogonality", default_spec(), SMALL)
    names = [t.name for t in orth.tests]
    assert names[-1] == "max |[H,G]_t| pathwise" and orth.tests[-1].mean == 0.0
    assert "[H(1),H(2)]" in names and "[G(3,0),G(3,1)]" in names


def test_chaos_suite_small():
    cfg = dataclasses.replace(SMALL, chaos_paths=10, chaos_monomials=((1, 0, 0), (0, 2, 0)),
                              chaos_dts=(0.1, 0.01))
    r = mv.run_suite("chaos", default_spec(), cfg)
    assert r.tests[0].name == "exact (1, 0, 0)" and r.tests[0].passed
    assert r.notes["comparisons"] == 1


def test_summary_lists_every_test():
    r = mv.run_suite("martingale", default_spec(), dataclasses.replace(SMALL, max_order=1))
    lines = r.summary().splitlines()
    assert lines[0].startswith("suite martingale:") and len(lines) == 1 + 3
