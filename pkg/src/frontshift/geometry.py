"""Metric geometry and extended-field gradients at tangent-bundle points.

All tensor assembly is numeric (einsum over batched arrays); all
differentiation behind it is exact and symbolic, performed once on the
metric and force component expressions.  Batched methods carry a leading
axis ``B`` so front simulations evaluate all directions in one call;
the single-point operations are thin wrappers over the same code path.

Index conventions (fixed, and pinned by the dynamics cross-checks):

* ``gamma[k, i, j]``   connection, upper index first, symmetric in (i, j)
* ``dgamma[s, k, i, j]`` coordinate derivative of the connection
* ``riemann[k, m, s, r] = d_s gamma[k,m,r] - d_r gamma[k,m,s]
  + sum_j (gamma[k,s,j] gamma[j,m,r] - gamma[k,r,j] gamma[j,m,s])``
* spatial/velocity gradients of a force are stored ``[i, k]`` with the
  derivative index first: ``spatial[i, k]`` is the i-th covariant
  derivative of the k-th component.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import exprlang
from .exprlang import Node


class GeometryError(ValueError):
    pass


class NonPositiveDefiniteError(GeometryError):
    pass


class ZeroVelocityError(GeometryError):
    pass


def coord_names(n: int) -> list[str]:
    return [f"x{k + 1}" for k in range(n)]


def velocity_names(n: int) -> list[str]:
    return [f"v{k + 1}" for k in range(n)]


@dataclass(frozen=True)
class TangentPoint:
    """A point of the tangent bundle: chart coordinates plus velocity."""

    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float))
        if self.x.shape != self.v.shape or self.x.ndim != 1:
            raise GeometryError("x and v must be 1-d arrays of equal length")


@dataclass(frozen=True)
class FrameData:
    """Speed, unit velocity vector/covector and the orthogonal projector."""

    speed: float
    unit: np.ndarray          # N^r
    unit_cov: np.ndarray      # N_i
    projector: np.ndarray     # P[r, i]


@dataclass(frozen=True)
class GradientPair:
    spatial: np.ndarray       # [i, k]
    velocity: np.ndarray      # [i, k]


def _parse(entry, names: Sequence[str]) -> Node:
    if isinstance(entry, Node):
        return entry
    return exprlang.parse(str(entry), names)


class Manifold:
    """Chart of dimension n with metric components g_ij(x1..xn)."""

    def __init__(self, dimension: int, metric: Sequence[Sequence]):
        if dimension < 2:
            raise GeometryError("dimension must be >= 2")
        self.dimension = n = dimension
        self.coords = coord_names(n)
        self.velocities = velocity_names(n)
        if len(metric) != n or any(len(row) != n for row in metric):
            raise GeometryError("metric must be an n x n expression array")

        g_ast = [[exprlang.simplify(_parse(metric[i][j], self.coords))
                  for j in range(n)] for i in range(n)]
        for i in range(n):
            for j in range(i + 1, n):
                if g_ast[i][j] != g_ast[j][i]:
                    raise GeometryError(
                        f"metric not symmetric: entry ({i},{j}) differs from "
                        f"({j},{i}) after simplification")
        self.metric_ast = g_ast
        # Exact symbolic derivatives of the metric; everything downstream
        # (connection, curvature) is assembled numerically from these.
        self._dg_ast = [[[exprlang.differentiate(g_ast[i][j], self.coords[k])
                          for j in range(n)] for i in range(n)]
                        for k in range(n)]
        self._ddg_ast = [[[[exprlang.differentiate(
            self._dg_ast[k][i][j], self.coords[ell])
            for j in range(n)] for i in range(n)]
            for k in range(n)] for ell in range(n)]

        self._g_fn = [[exprlang.compile_fn(g_ast[i][j], self.coords)
                       for j in range(n)] for i in range(n)]
        self._dg_fn = [[[exprlang.compile_fn(self._dg_ast[k][i][j], self.coords)
                         for j in range(n)] for i in range(n)]
                       for k in range(n)]
        self._ddg_fn = [[[[exprlang.compile_fn(
            self._ddg_ast[ell][k][i][j], self.coords)
            for j in range(n)] for i in range(n)]
            for k in range(n)] for ell in range(n)]

    # -- batched evaluation (leading axis B) --------------------------------

    def _args(self, xs: np.ndarray) -> tuple:
        return tuple(xs[:, k] for k in range(self.dimension))

    def metric(self, xs: np.ndarray) -> np.ndarray:
        n = self.dimension
        args = self._args(xs)
        g = np.empty((xs.shape[0], n, n))
        for i in range(n):
            for j in range(i, n):
                g[:, i, j] = self._g_fn[i][j](*args)
                if j != i:
                    g[:, j, i] = g[:, i, j]
        return g

    def metric_pair(self, xs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        g = self.metric(xs)
        return g, np.linalg.inv(g)

    def metric_partials(self, xs: np.ndarray) -> np.ndarray:
        """dg[b, k, i, j] = d g_ij / d x^k."""
        n = self.dimension
        args = self._args(xs)
        dg = np.empty((xs.shape[0], n, n, n))
        for k in range(n):
            for i in range(n):
                for j in range(i, n):
                    dg[:, k, i, j] = self._dg_fn[k][i][j](*args)
                    if j != i:
                        dg[:, k, j, i] = dg[:, k, i, j]
        return dg

    def metric_second_partials(self, xs: np.ndarray) -> np.ndarray:
        """ddg[b, l, k, i, j] = d^2 g_ij / (d x^l d x^k)."""
        n = self.dimension
        args = self._args(xs)
        ddg = np.empty((xs.shape[0], n, n, n, n))
        for ell in range(n):
            for k in range(ell, n):
                for i in range(n):
                    for j in range(i, n):
                        val = self._ddg_fn[ell][k][i][j](*args)
                        ddg[:, ell, k, i, j] = val
                        ddg[:, ell, k, j, i] = ddg[:, ell, k, i, j]
                        if k != ell:
                            ddg[:, k, ell, i, j] = ddg[:, ell, k, i, j]
                            ddg[:, k, ell, j, i] = ddg[:, ell, k, i, j]
        return ddg

    def christoffel(self, xs: np.ndarray, ginv: np.ndarray | None = None,
                    dg: np.ndarray | None = None) -> np.ndarray:
        """gamma[b, k, i, j] of the metric connection."""
        if ginv is None:
            ginv = np.linalg.inv(self.metric(xs))
        if dg is None:
            dg = self.metric_partials(xs)
        sym = (np.einsum('birj->brij', dg) + np.einsum('bjri->brij', dg) - dg)
        return 0.5 * np.einsum('bkr,brij->bkij', ginv, sym)

    def christoffel_partials(self, xs: np.ndarray) -> np.ndarray:
        """dgamma[b, s, k, i, j] = d gamma[k,i,j] / d x^s, exact.

        Uses d(g^-1) = -g^-1 (dg) g^-1 with symbolic dg/ddg, so no finite
        differences enter the curvature.
        """
        g, ginv = self.metric_pair(xs)
        dg = self.metric_partials(xs)
        ddg = self.metric_second_partials(xs)
        sym = (np.einsum('birj->brij', dg) + np.einsum('bjri->brij', dg) - dg)
        dsym = (np.einsum('bsirj->bsrij', ddg)
                + np.einsum('bsjri->bsrij', ddg)
                - ddg)
        dginv = -np.einsum('bka,bsac,bcr->bskr', ginv, dg, ginv)
        return (0.5 * np.einsum('bskr,brij->bskij', dginv, sym)
                + 0.5 * np.einsum('bkr,bsrij->bskij', ginv, dsym))

    def riemann(self, xs: np.ndarray,
                gamma: np.ndarray | None = None) -> np.ndarray:
        """riemann[b, k, m, s, r], antisymmetric in (s, r)."""
        if gamma is None:
            gamma = self.christoffel(xs)
        dgamma = self.christoffel_partials(xs)
        return (np.einsum('bskmr->bkmsr', dgamma)
                - np.einsum('brkms->bkmsr', dgamma)
                + np.einsum('bksj,bjmr->bkmsr', gamma, gamma)
                - np.einsum('bkrj,bjms->bkmsr', gamma, gamma))

    def frame(self, xs: np.ndarray, vs: np.ndarray,
              g: np.ndarray | None = None):
        """speed[b], unit[b,r], unit_cov[b,i], projector[b,r,i]."""
        if g is None:
            g = self.metric(xs)
        speed2 = np.einsum('bij,bi,bj->b', g, vs, vs)
        speed = np.sqrt(speed2)
        if np.any(speed == 0.0) or not np.all(np.isfinite(speed)):
            raise ZeroVelocityError("zero or non-finite g-speed")
        unit = vs / speed[:, None]
        unit_cov = np.einsum('bij,bj->bi', g, unit)
        n = self.dimension
        proj = np.broadcast_to(np.eye(n), (xs.shape[0], n, n)).copy()
        proj -= np.einsum('br,bi->bri', unit, unit_cov)
        return speed, unit, unit_cov, proj

    # -- single-point checked interface -------------------------------------

    def check_positive_definite(self, x: np.ndarray, g: np.ndarray):
        eigs = np.linalg.eigvalsh(g)
        if eigs[0] <= 1e-10:
            raise NonPositiveDefiniteError(
                "metric not positive definite at "
                f"x={[float(t) for t in np.asarray(x)]}: "
                f"eigenvalues {[float(t) for t in eigs]}")


class ForceField:
    """Extended vector field F^k(x, v) given componentwise as expressions."""

    def __init__(self, manifold: Manifold, components: Sequence):
        n = manifold.dimension
        if len(components) != n:
            raise GeometryError("force needs one component per dimension")
        names = manifold.coords + manifold.velocities
        self.manifold = manifold
        self.component_ast = [exprlang.simplify(_parse(c, names))
                              for c in components]
        self._f_fn = [exprlang.compile_fn(a, names) for a in self.component_ast]
        # [i][k]: derivative of component k in direction i
        self._dfdx_fn = [[exprlang.compile_fn(
            exprlang.differentiate(self.component_ast[k], manifold.coords[i]),
            names) for k in range(n)] for i in range(n)]
        self._dfdv_fn = [[exprlang.compile_fn(
            exprlang.differentiate(self.component_ast[k],
                                   manifold.velocities[i]),
            names) for k in range(n)] for i in range(n)]

    def _args(self, xs: np.ndarray, vs: np.ndarray) -> tuple:
        n = self.manifold.dimension
        return tuple(xs[:, k] for k in range(n)) + tuple(
            vs[:, k] for k in range(n))

    def components(self, xs: np.ndarray, vs: np.ndarray) -> np.ndarray:
        n = self.manifold.dimension
        args = self._args(xs, vs)
        out = np.empty((xs.shape[0], n))
        for k in range(n):
            out[:, k] = self._f_fn[k](*args)
        return out

    def jacobians(self, xs: np.ndarray, vs: np.ndarray):
        """(dfdx[b,i,k], dfdv[b,i,k]) of plain partial derivatives."""
        n = self.manifold.dimension
        args = self._args(xs, vs)
        dfdx = np.empty((xs.shape[0], n, n))
        dfdv = np.empty((xs.shape[0], n, n))
        for i in range(n):
            for k in range(n):
                dfdx[:, i, k] = self._dfdx_fn[i][k](*args)
                dfdv[:, i, k] = self._dfdv_fn[i][k](*args)
        return dfdx, dfdv


def extended_gradients(man: Manifold, force: ForceField, xs: np.ndarray,
                       vs: np.ndarray, gamma: np.ndarray | None = None,
                       f_vals: np.ndarray | None = None):
    """Batched spatial and velocity gradients of the force field.

    velocity[b,i,k] is the plain v-derivative; spatial[b,i,k] adds the
    connection correction for the vector index and the chase of the
    velocity argument along coordinate directions.
    """
    if gamma is None:
        gamma = man.christoffel(xs)
    if f_vals is None:
        f_vals = force.components(xs, vs)
    dfdx, dfdv = force.jacobians(xs, vs)
    spatial = (dfdx
               - np.einsum('bjis,bs,bjk->bik', gamma, vs, dfdv)
               + np.einsum('bkis,bs->bik', gamma, f_vals))
    return spatial, dfdv


# -- single-point operations -------------------------------------------------

def metric_at(man: Manifold, x) -> tuple[np.ndarray, np.ndarray]:
    """(g, g^-1) at one point, positive-definiteness checked."""
    xs = np.asarray(x, dtype=float)[None, :]
    g = man.metric(xs)[0]
    man.check_positive_definite(x, g)
    return g, np.linalg.inv(g)


def christoffel_at(man: Manifold, x) -> np.ndarray:
    xs = np.asarray(x, dtype=float)[None, :]
    g = man.metric(xs)
    man.check_positive_definite(x, g[0])
    return man.christoffel(xs, ginv=np.linalg.inv(g))[0]


def riemann_at(man: Manifold, x) -> np.ndarray:
    xs = np.asarray(x, dtype=float)[None, :]
    return man.riemann(xs)[0]


def frame_at(man: Manifold, q: TangentPoint) -> FrameData:
    speed, unit, unit_cov, proj = man.frame(q.x[None, :], q.v[None, :])
    return FrameData(float(speed[0]), unit[0], unit_cov[0], proj[0])


def gradients_at(man: Manifold, force: ForceField,
                 q: TangentPoint) -> GradientPair:
    spatial, velocity = extended_gradients(
        man, force, q.x[None, :], q.v[None, :])
    return GradientPair(spatial[0], velocity[0])


def lower_index(g: np.ndarray, vec: np.ndarray) -> np.ndarray:
    return np.einsum('...ij,...j->...i', g, vec)


def raise_index(ginv: np.ndarray, cov: np.ndarray) -> np.ndarray:
    return np.einsum('...ij,...j->...i', ginv, cov)


def inner(g: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.einsum('...ij,...i,...j->...', g, a, b)


def speed_at(man: Manifold, q: TangentPoint) -> float:
    g = man.metric(q.x[None, :])[0]
    return float(np.sqrt(inner(g, q.v, q.v)))
