"""Gram matrices of the polynomial inner-product spaces and the orthogonal families.

Two spaces carry the isometries used here.

* **S1** (ordinate): labels ``x^0 .. x^{K-1}`` stand for ``xi_bar^(1..K)`` and

      <x^i, x^j>_1 = m_{i+j+2}(nu2) + alpha * 1{i = j = 0},

  with ``alpha = E int_0^T sigma2(Theta_s)^2 ds``.  Then
  ``E[[xi_bar^(i+1), xi_bar^(j+1)]_T] = T * <x^i, x^j>_1`` for unit horizon.

* **S3** (modulator + triggered): labels ``x^0 .. x^{k-1}`` stand for
  ``Theta_bar^(1..k)`` and ``y^1 .. y^l`` for ``xi_bar^[1..l]``, with blocks

      xx: m_{i+j+2}(nu1) + sigma1^2 * 1{i = j = 0}
      xy: c_{j, i+1}      (x^i against y^j)
      yy: c_{i+j, 0}.

Gram-Schmidt in the Gram metric turns each label sequence into an orthogonal
family: ``H^(k)`` from S1 and ``G^(k,0)``, then ``G^(k,1) .. G^(k,l)`` from S3.
Every element is monic in its last label.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import DegenerateDirection, MismatchedPath, MissingOrder, PsdViolation
from .levy_measures import MomentTable
from .map_model import MapSpec, spec_to_dict
from .path_sim import MapPath
from .teugels import Family, PowerJumpPath

DEGENERATE_RTOL = 1e-12
PSD_RTOL = 1e-10
DEFAULT_G_SHAPE = (3, 1)


class SpaceKind(str, enum.Enum):
    S1 = "S1"
    S3 = "S3"


@dataclass(frozen=True)
class AlphaValue:
    """The S1 point-mass weight and how it was obtained."""

    value: float
    provenance: str  # "analytic" | "monte-carlo" | "user"
    stderr: float = 0.0
    n_paths: int = 0

    def to_dict(self) -> dict:
        return {"value": self.value, "provenance": self.provenance, "stderr": self.stderr, "n_paths": self.n_paths}


@dataclass(frozen=True, eq=False)
class InnerProductSpec:
    kind: SpaceKind
    gram: np.ndarray
    labels: tuple[str, ...]
    alpha: float = 0.0
    # (family, order) of the martingale each label stands for
    integrators: tuple[tuple[Family, int], ...] = ()

    def __post_init__(self):
        g = np.asarray(self.gram, dtype=float)
        if g.shape != (len(self.labels), len(self.labels)):
            raise ValueError("gram shape does not match labels")
        g = g.copy()
        g.flags.writeable = False
        object.__setattr__(self, "gram", g)

    def check_psd(self) -> float:
        """Return the smallest eigenvalue; raise if it is below ``-PSD_RTOL * trace``."""
        if not np.allclose(self.gram, self.gram.T, rtol=0, atol=1e-12 * max(1.0, np.abs(self.gram).max())):
            raise PsdViolation("gram matrix is not symmetric")
        lam = float(np.linalg.eigvalsh(self.gram).min()) if self.gram.size else 0.0
        if lam < -PSD_RTOL * float(np.trace(self.gram)):
            raise PsdViolation(f"gram matrix has eigenvalue {lam:.3e}")
        return lam


def build_s1(moments: MomentTable, alpha: float, K: int) -> InnerProductSpec:
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > moments.k_max:
        raise ValueError(f"K={K} exceeds table k_max={moments.k_max}")
    if not alpha >= 0:
        raise ValueError("alpha must be >= 0")
    gram = np.array(moments.hankel(K, shift=2), dtype=float)
    gram[0, 0] += alpha
    space = InnerProductSpec(
        SpaceKind.S1,
        gram,
        tuple(f"x^{i}" for i in range(K)),
        alpha=float(alpha),
        integrators=tuple((Family.XI_L, i + 1) for i in range(K)),
    )
    space.check_psd()
    return space


def build_s3(moments: MomentTable, sigma1: float, k: int, l: int) -> InnerProductSpec:
    if k < 0 or l < 0 or k + l < 1:
        raise ValueError("need k >= 1 or l >= 1")
    if moments.joint is None:
        raise ValueError("S3 needs a moment table joint with the triggered law")
    n = k + l
    gram = np.empty((n, n))
    for i in range(k):
        for j in range(k):
            gram[i, j] = moments.m(i + j + 2)
        for j in range(1, l + 1):
            gram[i, k + j - 1] = gram[k + j - 1, i] = moments.c(j, i + 1)
    for i in range(1, l + 1):
        for j in range(1, l + 1):
            gram[k + i - 1, k + j - 1] = moments.c(i + j, 0)
    if k:
        gram[0, 0] += sigma1**2
    labels = tuple(f"x^{i}" for i in range(k)) + tuple(f"y^{j}" for j in range(1, l + 1))
    integrators = tuple((Family.THETA, i + 1) for i in range(k)) + tuple(
        (Family.XI_F, j) for j in range(1, l + 1)
    )
    space = InnerProductSpec(SpaceKind.S3, gram, labels, alpha=0.0, integrators=integrators)
    space.check_psd()
    return space


@dataclass(frozen=True, eq=False)
class OrthogonalFamily:
    """Row ``r`` of ``coeffs`` is element ``r`` in the coordinates of ``space.labels``.

    ``coeffs`` is lower triangular with unit diagonal; ``norms[r]`` is the
    squared Gram norm of row ``r``.
    """

    space: InnerProductSpec
    coeffs: np.ndarray
    norms: np.ndarray
    names: tuple[str, ...]

    def __len__(self) -> int:
        return self.coeffs.shape[0]

    def inner(self, i: int, j: int) -> float:
        return float(self.coeffs[i] @ self.space.gram @ self.coeffs[j])

    def max_relative_offdiag(self) -> float:
        """Largest ``|v_i^T G v_j| / (|v_i|_G |v_j|_G)`` over ``i != j``."""
        m = self.coeffs @ self.space.gram @ self.coeffs.T
        d = np.sqrt(np.clip(np.diag(m), 0, None))
        out = 0.0
        for i in range(len(self)):
            for j in range(i):
                out = max(out, abs(m[i, j]) / (d[i] * d[j]))
        return out

    def to_dict(self) -> dict:
        return {
            "space": self.space.kind.value,
            "labels": list(self.space.labels),
            "gram": self.space.gram.tolist(),
            "elements": [
                {"name": n, "coeffs": c.tolist(), "norm": float(s)}
                for n, c, s in zip(self.names, self.coeffs, self.norms)
            ],
        }


def _element_names(space: InnerProductSpec) -> tuple[str, ...]:
    if space.kind is SpaceKind.S1:
        return tuple(f"H({i + 1})" for i in range(len(space.labels)))
    k = sum(1 for f, _ in space.integrators if f is Family.THETA)
    l = len(space.labels) - k
    return tuple(f"G({i},0)" for i in range(1, k + 1)) + tuple(f"G({k},{j})" for j in range(1, l + 1))


def gram_schmidt(space: InnerProductSpec) -> OrthogonalFamily:
    """Monic modified Gram-Schmidt of the label sequence in the Gram metric.

    Each new vector is projected twice against the previous ones, which keeps
    the coefficient-level orthogonality at round-off even for the badly
    conditioned Hankel matrices of heavier-tailed measures.
    """
    g = space.gram
    space.check_psd()
    n = g.shape[0]
    scale = float(np.max(np.diag(g))) if n else 0.0
    coeffs = np.zeros((n, n))
    norms = np.zeros(n)
    for r in range(n):
        v = np.zeros(n)
        v[r] = 1.0
        for _ in range(2):
            for i in range(r):
                v -= (coeffs[i] @ g @ v) / norms[i] * coeffs[i]
        v[r] = 1.0
        nv = float(v @ g @ v)
        if not nv >= DEGENERATE_RTOL * scale:
            raise DegenerateDirection(space.labels[r], nv, scale)
        coeffs[r] = v
        norms[r] = nv
    coeffs.flags.writeable = False
    norms.flags.writeable = False
    return OrthogonalFamily(space, coeffs, norms, _element_names(space))


# --------------------------------------------------------------------------
# alpha and full basis construction
# --------------------------------------------------------------------------


def resolve_alpha(spec: MapSpec, n_paths: int = 20_000, dt: float = 0.01, seed: int = 0) -> AlphaValue:
    """``E int_0^T sigma2(Theta_s)^2 ds``: exact for constant sigma2, else Monte Carlo."""
    if spec.sigma2.is_constant:
        return AlphaValue(spec.sigma2.value**2 * spec.horizon, "analytic")
    from .path_sim import simulate_batch

    vals = np.fromiter(
        (p.sigma2_sq_integral() for p in simulate_batch(spec, dt, seed, n_paths)), float, n_paths
    )
    return AlphaValue(float(vals.mean()), "monte-carlo", float(vals.std(ddof=1) / math.sqrt(n_paths)), n_paths)


def reduced_shape(spec: MapSpec, K: int, g_shape: tuple[int, int]) -> tuple[int, tuple[int, int]]:
    """Drop the labels a degenerate model makes null.

    With ``nu2 = 0`` only the Brownian part of ``xi_bar^(1)`` survives, so the
    H-family is ``{H(1)}``.  With ``nu1 = 0`` there are no modulator or
    triggered jumps and the G-family is ``{Theta_bar}``.
    """
    if spec.nu2.is_zero:
        K = 1
    if spec.nu1.is_zero:
        g_shape = (1, 0)
    return K, g_shape


@dataclass(frozen=True, eq=False)
class OrthogonalBasis:
    h: OrthogonalFamily
    g: OrthogonalFamily
    alpha: AlphaValue
    spec: MapSpec = field(repr=False)

    @property
    def h_coeffs(self) -> np.ndarray:
        return self.h.coeffs

    @property
    def g_coeffs(self) -> np.ndarray:
        return self.g.coeffs

    def to_dict(self) -> dict:
        return {
            "schema": "v1",
            "model": spec_to_dict(self.spec),
            "alpha": self.alpha.to_dict(),
            "H": self.h.to_dict(),
            "G": self.g.to_dict(),
            "max_relative_offdiag": max(self.h.max_relative_offdiag(), self.g.max_relative_offdiag()),
        }


def build_basis(
    spec: MapSpec,
    K: int | None = None,
    g_shape: tuple[int, int] | None = None,
    alpha: AlphaValue | float | None = None,
    reduce: bool = False,
) -> OrthogonalBasis:
    """Both orthogonal families for ``spec``.

    ``K`` defaults to ``spec.k_max`` and ``g_shape`` to ``(3, 1)``, the largest
    S3 shape that stays nondegenerate for a deterministic triggered law.
    """
    K = spec.k_max if K is None else K
    g_shape = DEFAULT_G_SHAPE if g_shape is None else tuple(g_shape)
    if reduce:
        K, g_shape = reduced_shape(spec, K, g_shape)
    if alpha is None:
        alpha = resolve_alpha(spec)
    elif not isinstance(alpha, AlphaValue):
        alpha = AlphaValue(float(alpha), "user")
    # per unit time: the bracket expectations grow linearly in the horizon
    s1 = build_s1(spec.table2(), alpha.value / spec.horizon, K)
    s3 = build_s3(spec.table1(), spec.sigma1, *g_shape)
    return OrthogonalBasis(gram_schmidt(s1), gram_schmidt(s3), alpha, spec)


# --------------------------------------------------------------------------
# pathwise realisation
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OrthogonalMartingalePath:
    """A fixed linear combination of compensated power-jump paths."""

    name: str
    values: np.ndarray
    jump_idx: np.ndarray
    jump_sizes: np.ndarray
    c_b: float
    c_w: float
    path: MapPath
    sources: frozenset

    def at(self, t: float) -> float:
        return float(self.values[self.path.index_at(t)])


def _index_powers(powers: Iterable[PowerJumpPath] | Mapping) -> dict:
    if isinstance(powers, Mapping):
        return dict(powers)
    return {(p.family, p.order): p for p in powers}


def materialize(family: OrthogonalFamily, powers) -> list[OrthogonalMartingalePath]:
    """Evaluate every element of ``family`` on the path the ``powers`` come from."""
    table = _index_powers(powers)
    parts = []
    for key in family.space.integrators:
        if key not in table:
            raise MissingOrder(f"no power-jump path for {key[0].value} order {key[1]}")
        parts.append(table[key])
    path = parts[0].path
    if any(p.path is not path for p in parts):
        raise MismatchedPath("powers come from different paths")
    # within one family every integrator jumps on the same index set
    jump_idx = parts[0].jump_idx
    values = np.stack([p.compensated for p in parts])
    sizes = np.stack([p.jump_sizes for p in parts]) if jump_idx.size else np.zeros((len(parts), 0))
    c_b = np.array([p.c_b for p in parts])
    c_w = np.array([p.c_w for p in parts])
    sources = frozenset().union(*(p.sources for p in parts))
    out = []
    for name, a in zip(family.names, family.coeffs):
        out.append(
            OrthogonalMartingalePath(
                name, a @ values, jump_idx, a @ sizes, float(a @ c_b), float(a @ c_w), path, sources
            )
        )
    return out
