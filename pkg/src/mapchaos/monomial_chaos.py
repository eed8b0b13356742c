"""Iterated-integral representation of the monomials ``Theta_bar^g (xi_bar^L)^p (xi_bar^f)^b``.

Write ``X = Theta_bar``, ``Y = xi_bar^L`` and ``Z = xi_bar^f``.  Itô's formula for
``f = X^g Y^p Z^b`` splits ``df`` into

* first-order martingale terms ``g X^{g-1}Y^pZ^b dX`` and the like,
* the continuous corrections ``1/2 g(g-1) sigma1^2 X^{g-2}Y^pZ^b ds`` and
  ``1/2 p(p-1) sigma2^2(Theta_{s-}) X^gY^{p-2}Z^b ds`` (B and W are independent,
  so there is no X-Y term),
* higher jump powers.  Ordinate jumps give ``C(p,m) X^gY^{p-m}Z^b d xi^(m)``;
  modulator jumps move X and Z together and give
  ``C(g,m1) C(b,m3) X^{g-m1}Y^pZ^{b-m3} d(sum dTheta^{m1} U^{m3})``.
  Each raw power sum is then split into its compensated martingale plus a
  deterministic drift (``m_m(nu2)``, ``m_{m1}(nu1)``, ``c_{m3,0}`` or
  ``c_{m3,m1}``).

Every ``ds`` term ``int Q(s-) kappa(s) ds`` with ``deg Q >= 1`` is rewritten by
parts as ``Q_t K_t - int K_{s} dQ_s`` with ``K = int kappa ds``, and ``dQ`` is
expanded again.  The recursion lowers the total degree at every step, so the
tree ends in pure Lebesgue leaves ``int kappa ds``.

:func:`expand` builds the tree symbolically (cached by ``(g, p, b)``),
:func:`evaluate` computes it on a path with left-point sums on the
jump-adapted grid, and :func:`expectation` gives its mean as a polynomial in
``t`` when ``sigma2`` is constant.  :func:`increment_moment` supplies an
independent route to the same means through the joint cumulants of the Lévy
triple ``(X, Y, Z)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np
from numpy.polynomial import Polynomial

from .errors import DegreeCapExceeded, MapChaosError, MismatchedPath
from .map_model import MapSpec
from .path_sim import MapPath
from .teugels import Family, PowerJumpPath, label, power_jump

DEGREE_CAP = 5
COARSE_MESH_REL_ERROR = 0.5

Monomial = tuple  # (g, p, b)
Integrator = tuple  # (Family, order)

# --------------------------------------------------------------------------
# symbolic nodes (identity semantics; sharing comes from the caches below)
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Const:
    value: float


@dataclass(frozen=True, eq=False)
class Kappa:
    """A compensator rate: ``sigma1^2``, ``sigma2^2(Theta_{s-})``, ``m_k(nu)`` or ``c_{k,l}``."""

    symbol: str
    args: tuple = ()


@dataclass(frozen=True, eq=False)
class LebInt:
    """``int_0^t rate(s) ds``."""

    rate: "Node"


@dataclass(frozen=True, eq=False)
class StochInt:
    """``int_0^t integrand(s-) dM_s`` for the compensated martingale ``M``."""

    integrand: "Node"
    integrator: Integrator


@dataclass(frozen=True, eq=False)
class Prod:
    left: "Node"
    right: "Node"


@dataclass(frozen=True, eq=False)
class Sum:
    terms: tuple  # of (coefficient, Node)


@dataclass(frozen=True, eq=False)
class Expansion:
    """The representation of one monomial; its value is the monomial itself."""

    monomial: Monomial
    body: Sum

    @property
    def degree(self) -> int:
        return sum(self.monomial)


Node = Union[Const, Kappa, LebInt, StochInt, Prod, Sum, Expansion]

ONE = Const(1.0)


@lru_cache(maxsize=None)
def kappa(symbol: str, *args) -> Kappa:
    return Kappa(symbol, tuple(args))


@lru_cache(maxsize=None)
def _leb(rate: Node) -> LebInt:
    return LebInt(rate)


@lru_cache(maxsize=None)
def _prod(a: Node, b: Node) -> Prod:
    return Prod(a, b)


# --------------------------------------------------------------------------
# the Itô differential of a monomial
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DiffTerm:
    """``coef * Q(s-) dM`` (``integrator`` set) or ``coef * Q(s-) kappa ds``."""

    coef: float
    monomial: Monomial
    integrator: Integrator | None = None
    rate: Kappa | None = None


@lru_cache(maxsize=None)
def differential(g: int, p: int, b: int) -> tuple[DiffTerm, ...]:
    C = math.comb
    out: list[DiffTerm] = []
    if g:
        out.append(DiffTerm(g, (g - 1, p, b), (Family.THETA, 1)))
    if p:
        out.append(DiffTerm(p, (g, p - 1, b), (Family.XI_L, 1)))
    if b:
        out.append(DiffTerm(b, (g, p, b - 1), (Family.XI_F, 1)))
    if p >= 2:
        out.append(DiffTerm(0.5 * p * (p - 1), (g, p - 2, b), rate=kappa("sigma2^2")))
    if g >= 2:
        out.append(DiffTerm(0.5 * g * (g - 1), (g - 2, p, b), rate=kappa("sigma1^2")))
    for m in range(2, p + 1):
        q = (g, p - m, b)
        out.append(DiffTerm(C(p, m), q, (Family.XI_L, m)))
        out.append(DiffTerm(C(p, m), q, rate=kappa("m_nu2", m)))
    for m1 in range(0, g + 1):
        for m3 in range(0, b + 1):
            if m1 + m3 < 2:
                continue
            coef = C(g, m1) * C(b, m3)
            q = (g - m1, p, b - m3)
            if m3 == 0:
                out.append(DiffTerm(coef, q, (Family.THETA, m1)))
                out.append(DiffTerm(coef, q, rate=kappa("m_nu1", m1)))
            elif m1 == 0:
                out.append(DiffTerm(coef, q, (Family.XI_F, m3)))
                out.append(DiffTerm(coef, q, rate=kappa("c", m3, 0)))
            else:
                out.append(DiffTerm(coef, q, (Family.JOINT, (m1, m3))))
                out.append(DiffTerm(coef, q, rate=kappa("c", m3, m1)))
    return tuple(out)


def _check_degree(g: int, p: int, b: int) -> None:
    if min(g, p, b) < 0:
        raise MapChaosError("monomial exponents must be >= 0", code="negative-degree")
    if g + p + b < 1:
        raise MapChaosError("monomial degree must be >= 1", code="degree-zero")
    if g + p + b > DEGREE_CAP:
        raise DegreeCapExceeded(f"degree {g + p + b} exceeds cap {DEGREE_CAP}")


@lru_cache(maxsize=None)
def _expand(mono: Monomial) -> Node:
    if sum(mono) == 0:
        return ONE
    terms = []
    for t in differential(*mono):
        if t.integrator is not None:
            terms.append((t.coef, StochInt(_expand(t.monomial), t.integrator)))
        else:
            terms.append((t.coef, _lebesgue(t.monomial, t.rate)))
    return Expansion(mono, Sum(tuple(terms)))


@lru_cache(maxsize=None)
def _lebesgue(mono: Monomial, rate: Node) -> Node:
    """``int_0^t Q(s-) rate(s) ds`` with ``Q`` the monomial, integrated by parts."""
    K = _leb(rate)
    if sum(mono) == 0:
        return K
    terms = [(1.0, _prod(_expand(mono), K))]
    for t in differential(*mono):
        if t.integrator is not None:
            terms.append((-t.coef, StochInt(_prod(K, _expand(t.monomial)), t.integrator)))
        else:
            terms.append((-t.coef, _lebesgue(t.monomial, _prod(K, t.rate))))
    return Sum(tuple(terms))


def expand(g: int, p: int, b: int) -> Node:
    """Representation tree of ``Theta_bar^g (xi_bar^L)^p (xi_bar^f)^b``.

    A degree-1 monomial is a single stochastic integral of the constant 1.
    """
    _check_degree(g, p, b)
    return _expand((g, p, b))


def children(node: Node) -> tuple[Node, ...]:
    if isinstance(node, (Const, Kappa)):
        return ()
    if isinstance(node, LebInt):
        return (node.rate,)
    if isinstance(node, StochInt):
        return (node.integrand,)
    if isinstance(node, Prod):
        return (node.left, node.right)
    if isinstance(node, Sum):
        return tuple(n for _, n in node.terms)
    return (node.body,)


def integrators(node: Node) -> set:
    """Every integrator referenced anywhere in the tree."""
    seen, out, stack = set(), set(), [node]
    while stack:
        n = stack.pop()
        if id(n) in seen:
            continue
        seen.add(id(n))
        if isinstance(n, StochInt):
            out.add(n.integrator)
        stack.extend(children(n))
    return out


def expansion_depth(node: Node) -> int:
    """Nesting depth counted in :class:`Expansion` nodes."""

    @lru_cache(maxsize=None)
    def depth(n) -> int:
        below = max((depth(c) for c in children(n)), default=0)
        return below + (1 if isinstance(n, Expansion) else 0)

    return depth(node)


# --------------------------------------------------------------------------
# rendering
# --------------------------------------------------------------------------


def _mono_name(m: Monomial) -> str:
    names = ("Theta_bar", "xi_bar^L", "xi_bar^f")
    parts = [n if e == 1 else f"{n}^{e}" for n, e in zip(names, m) if e]
    return " ".join(parts) if parts else "1"


def _integrator_name(key: Integrator) -> str:
    return label(*key)


def _kappa_name(k: Kappa) -> str:
    if k.symbol == "sigma1^2":
        return "sigma1^2"
    if k.symbol == "sigma2^2":
        return "sigma2^2(Theta_{s-})"
    if k.symbol == "m_nu1":
        return f"m_{k.args[0]}(nu1)"
    if k.symbol == "m_nu2":
        return f"m_{k.args[0]}(nu2)"
    return f"c_{{{k.args[0]},{k.args[1]}}}"


def render_node(node: Node) -> str:
    if isinstance(node, Const):
        return f"{node.value:g}"
    if isinstance(node, Kappa):
        return _kappa_name(node)
    if isinstance(node, LebInt):
        return f"\\int {render_node(node.rate)} ds"
    if isinstance(node, StochInt):
        inner = node.integrand
        body = "" if inner is ONE else f"{render_node(inner)}_{{s-}} "
        return f"\\int {body}d{_integrator_name(node.integrator)}"
    if isinstance(node, Prod):
        return f"({render_node(node.left)})({render_node(node.right)})"
    if isinstance(node, Expansion):
        return _mono_name(node.monomial)
    return " + ".join(f"{c:g}*[{render_node(n)}]" for c, n in node.terms)


def render(tree: Node) -> str:
    """One line per top-level term: ``coefficient * term``."""
    if isinstance(tree, Expansion):
        head = _mono_name(tree.monomial) + " ="
        return "\n".join([head] + [f"  {c:+g} * {render_node(n)}" for c, n in tree.body.terms])
    return render_node(tree)


# --------------------------------------------------------------------------
# pathwise evaluation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PathwiseCheck:
    """``rel_error = abs_error / (1 + |lhs|)``, finite even when ``lhs = 0``."""

    lhs: float
    rhs: float
    dt: float
    abs_error: float
    rel_error: float


def _kappa_values(k: Kappa, path: MapPath, comp) -> float | np.ndarray:
    spec = path.spec
    if k.symbol == "sigma1^2":
        return spec.sigma1**2
    if k.symbol == "sigma2^2":
        if spec.sigma2.is_constant:
            return spec.sigma2.value**2
        return path.sigma2_sq
    if k.symbol == "m_nu1":
        return comp.theta_power_rates[k.args[0]]
    if k.symbol == "m_nu2":
        return comp.xiL_power_rates[k.args[0]]
    kk, ll = k.args
    return comp.xiF_power_rates[kk] if ll == 0 else comp.joint_rates[(ll, kk)]


class _Evaluator:
    def __init__(self, path: MapPath, powers: dict):
        from .map_model import compensators

        self.path = path
        self.powers = powers
        self.comp = compensators(path.spec)
        self.memo: dict[int, object] = {}
        self.keep: list = []  # keep nodes alive while their ids are memo keys

    def power(self, key: Integrator) -> PowerJumpPath:
        p = self.powers.get(key)
        if p is None:
            p = power_jump(self.path, *key)
            self.powers[key] = p
        elif p.path is not self.path:
            raise MismatchedPath("power-jump path built from a different path")
        return p

    def __call__(self, node: Node):
        key = id(node)
        if key in self.memo:
            return self.memo[key]
        val = self._eval(node)
        self.memo[key] = val
        self.keep.append(node)
        return val

    def _eval(self, node: Node):
        path = self.path
        if isinstance(node, Const):
            return node.value
        if isinstance(node, Kappa):
            return _kappa_values(node, path, self.comp)
        if isinstance(node, LebInt):
            r = self(node.rate)
            out = np.zeros(path.grid.size)
            if np.ndim(r) == 0:
                return float(r) * path.grid
            np.cumsum(r[:-1] * path.steps, out=out[1:])
            return out
        if isinstance(node, StochInt):
            m = self.power(node.integrator).compensated
            f = self(node.integrand)
            if np.ndim(f) == 0:
                # a constant integrand integrates exactly
                return float(f) * m if float(f) != 1.0 else m
            out = np.zeros(path.grid.size)
            np.cumsum(f[:-1] * np.diff(m), out=out[1:])
            return out
        if isinstance(node, Prod):
            return self(node.left) * self(node.right)
        if isinstance(node, Sum):
            total = 0.0
            for c, n in node.terms:
                total = total + c * self(n)
            return total
        return self(node.body)


def evaluate_array(tree: Node, path: MapPath, powers: dict | None = None) -> np.ndarray:
    """The tree's value at every grid point."""
    ev = _Evaluator(path, {} if powers is None else dict(powers))
    val = ev(tree)
    return np.broadcast_to(np.asarray(val, dtype=float), path.grid.shape).copy()


def monomial_path(path: MapPath, g: int, p: int, b: int, powers: dict | None = None) -> np.ndarray:
    powers = powers or {}

    def bar(f):
        pj = powers.get((f, 1))
        return (pj if pj is not None else power_jump(path, f, 1)).compensated

    return bar(Family.THETA) ** g * bar(Family.XI_L) ** p * bar(Family.XI_F) ** b


def evaluate(tree: Node, path: MapPath, powers: dict | None = None) -> PathwiseCheck:
    """Compare the monomial at the horizon with the discretised expansion."""
    if not isinstance(tree, Expansion):
        raise MapChaosError("evaluate expects the tree returned by expand", code="not-an-expansion")
    powers = {} if powers is None else dict(powers)
    ev = _Evaluator(path, powers)
    rhs_arr = ev(tree.body)
    rhs = float(rhs_arr[-1]) if np.ndim(rhs_arr) else float(rhs_arr)
    lhs = float(monomial_path(path, *tree.monomial, powers=ev.powers)[-1])
    err = abs(lhs - rhs)
    rel = err / (1.0 + abs(lhs))
    if rel > COARSE_MESH_REL_ERROR:
        warnings.warn(f"mesh too coarse: relative error {rel:.3g} at dt={path.dt}", RuntimeWarning, stacklevel=2)
    return PathwiseCheck(lhs, rhs, path.dt, err, rel)


# --------------------------------------------------------------------------
# means
# --------------------------------------------------------------------------


def _is_deterministic(node: Node, spec: MapSpec) -> bool:
    if isinstance(node, Const):
        return True
    if isinstance(node, Kappa):
        return node.symbol != "sigma2^2" or spec.sigma2.is_constant
    if isinstance(node, (StochInt, Expansion)):
        return False
    return all(_is_deterministic(c, spec) for c in children(node))


def _kappa_constant(k: Kappa, spec: MapSpec) -> float:
    t1, t2 = spec.table1(), spec.table2()
    if k.symbol == "sigma1^2":
        return spec.sigma1**2
    if k.symbol == "sigma2^2":
        if not spec.sigma2.is_constant:
            raise MapChaosError("analytic mean needs a constant sigma2", code="nonconstant-sigma2")
        return spec.sigma2.value**2
    if k.symbol == "m_nu1":
        return t1.m(k.args[0])
    if k.symbol == "m_nu2":
        return t2.m(k.args[0])
    return t1.c(*k.args)


def expectation(tree: Node, spec: MapSpec) -> Polynomial:
    """Mean of the tree as a polynomial in ``t``.

    Stochastic integrals have mean zero; every product in the tree has a
    deterministic factor, so means factor.
    """
    memo: dict[int, Polynomial] = {}
    keep = []

    def go(n: Node) -> Polynomial:
        if id(n) in memo:
            return memo[id(n)]
        if isinstance(n, Const):
            out = Polynomial([n.value])
        elif isinstance(n, Kappa):
            out = Polynomial([_kappa_constant(n, spec)])
        elif isinstance(n, LebInt):
            out = go(n.rate).integ(lbnd=0)
        elif isinstance(n, StochInt):
            out = Polynomial([0.0])
        elif isinstance(n, Prod):
            if not (_is_deterministic(n.left, spec) or _is_deterministic(n.right, spec)):
                raise MapChaosError("product of two random factors", code="nonfactorable-mean")
            out = go(n.left) * go(n.right)
        elif isinstance(n, Sum):
            out = Polynomial([0.0])
            for c, m in n.terms:
                out = out + c * go(m)
        else:
            out = go(n.body)
        memo[id(n)] = out
        keep.append(n)
        return out

    return go(tree)


def unit_cumulant(spec: MapSpec, a: int, c: int, d: int) -> float:
    """Joint cumulant per unit time of the increments of ``(Theta_bar, xi_bar^L, xi_bar^f)``.

    Requires constant ``mu2`` and ``sigma2`` (the triple is then a Lévy process).
    First cumulants vanish because all three are compensated.
    """
    n = a + c + d
    if n < 2:
        return 0.0
    if c and (a or d):
        return 0.0
    if c:
        val = spec.table2().m(c)
        if c == 2:
            val += spec.sigma2.value**2
        return val
    val = spec.table1().c(d, a)
    if (a, d) == (2, 0):
        val += spec.sigma1**2
    return val


def increment_moment(spec: MapSpec, a: int, c: int, d: int, tau: float) -> float:
    """``E[dX^a dY^c dZ^d]`` over an increment of length ``tau``.

    Moments follow from cumulants through
    ``mu_n = sum_{m <= n-e} C(n-e, m) kappa_{m+e} mu_{n-e-m}`` with ``e`` a unit
    index vector; cumulants of a length-``tau`` increment are ``tau`` times
    the unit-time cumulants.
    """
    if not (spec.sigma2.is_constant and spec.mu2.is_constant):
        raise MapChaosError("increment moments need constant mu2 and sigma2", code="nonconstant-coefficients")

    @lru_cache(maxsize=None)
    def mu(n: tuple) -> float:
        if sum(n) == 0:
            return 1.0
        e = next(i for i in range(3) if n[i])
        r = list(n)
        r[e] -= 1
        total = 0.0
        for m0 in range(r[0] + 1):
            for m1 in range(r[1] + 1):
                for m2 in range(r[2] + 1):
                    m = [m0, m1, m2]
                    k = list(m)
                    k[e] += 1
                    coef = math.comb(r[0], m0) * math.comb(r[1], m1) * math.comb(r[2], m2)
                    total += coef * tau * unit_cumulant(spec, *k) * mu((r[0] - m0, r[1] - m1, r[2] - m2))
        return total

    return mu((a, c, d))


def conditional_moment(spec: MapSpec, g: int, p: int, b: int, state, tau: float) -> np.ndarray:
    """``E[X_T^g Y_T^p Z_T^b | F_t]`` with ``state = (X_t, Y_t, Z_t)`` and ``tau = T - t``.

    ``state`` entries may be arrays (vectorised over paths).
    """
    x, y, z = (np.asarray(s, dtype=float) for s in state)
    out = np.zeros(np.broadcast(x, y, z).shape)
    C = math.comb
    for i in range(g + 1):
        for j in range(p + 1):
            for k in range(b + 1):
                mom = increment_moment(spec, g - i, p - j, b - k, tau)
                if mom:
                    out = out + C(g, i) * C(p, j) * C(b, k) * mom * x**i * y**j * z**k
    return out
