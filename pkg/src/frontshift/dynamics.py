"""Flow equations and fixed-step integration with variation vectors.

The integrated state is kept in plain time derivatives; the variation
rate stored alongside each variation vector is its covariant rate, and
the connection terms are folded into the right-hand side on the fly.
Classic fourth-order Runge-Kutta on a uniform grid; no adaptivity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import (ForceField, Manifold, TangentPoint,
                       extended_gradients, gradients_at)


class DynamicsError(ValueError):
    pass


class IntegrationAbort(RuntimeError):
    """Non-finite state encountered; carries the partial record."""

    def __init__(self, record, node_index: int, batch_indices):
        self.record = record
        self.node_index = node_index
        self.batch_indices = [int(i) for i in batch_indices]
        super().__init__(
            f"non-finite state after node {node_index} "
            f"(batch rows {self.batch_indices})")


@dataclass(frozen=True)
class VariationState:
    """Variation vector tau and its covariant rate along the trajectory."""

    tau: np.ndarray
    rho: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=float))
        object.__setattr__(self, "rho", np.asarray(self.rho, dtype=float))


@dataclass(frozen=True)
class FlowState:
    q: TangentPoint
    variations: list[VariationState] = field(default_factory=list)


@dataclass(frozen=True)
class BatchTrajectory:
    """Uniform-grid record of B trajectories with J variations each.

    Axes: times (M+1,), x/v/force (M+1, B, n), tau/rho (M+1, B, J, n).
    rho holds covariant rates of tau.
    """

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    tau: np.ndarray
    rho: np.ndarray
    force: np.ndarray
    step: float

    @property
    def node_count(self) -> int:
        return self.times.shape[0]


@dataclass(frozen=True)
class TrajectoryRecord:
    """Single-trajectory view: x/v/force (M+1, n), tau/rho (M+1, J, n)."""

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    tau: np.ndarray
    rho: np.ndarray
    force: np.ndarray
    step: float

    @property
    def node_count(self) -> int:
        return self.times.shape[0]


def _rhs(man: Manifold, force: ForceField, x, v, tau, rho,
         riemann_sign: float):
    """Plain time derivatives of the batched state.

    x, v: (B, n); tau, rho: (B, J, n).  riemann_sign flips the curvature
    term (debug hook for the selftest convention arbiter).
    """
    g = man.metric(x)
    ginv = np.linalg.inv(g)
    dg = man.metric_partials(x)
    gamma = man.christoffel(x, ginv=ginv, dg=dg)
    f_vals = force.components(x, v)
    dx = v
    dv = f_vals - np.einsum('bkij,bi,bj->bk', gamma, v, v)
    if tau.shape[1] == 0:
        return dx, dv, np.zeros_like(tau), np.zeros_like(rho), f_vals
    riem = man.riemann(x, gamma=gamma)
    spatial, velocity = extended_gradients(man, force, x, v,
                                           gamma=gamma, f_vals=f_vals)
    curv = -riemann_sign * np.einsum('bkmsr,bjs,br,bm->bjk',
                                     riem, tau, v, v)
    rho_rate = (curv
                + np.einsum('bjs,bsk->bjk', rho, velocity)
                + np.einsum('bjs,bsk->bjk', tau, spatial))
    conn_tau = np.einsum('bkrs,br,bjs->bjk', gamma, v, tau)
    conn_rho = np.einsum('bkrs,br,bjs->bjk', gamma, v, rho)
    dtau = rho - conn_tau
    drho = rho_rate - conn_rho
    return dx, dv, dtau, drho, f_vals


def newton_rhs(man: Manifold, force: ForceField, q: TangentPoint):
    """(dx, dv) of the flow: dx = v, dv^k = F^k - gamma^k_ij v^i v^j."""
    empty = np.zeros((1, 0, man.dimension))
    dx, dv, _, _, _ = _rhs(man, force, q.x[None, :], q.v[None, :],
                           empty, empty, 1.0)
    return dx[0], dv[0]


def variation_rhs(man: Manifold, force: ForceField, q: TangentPoint,
                  vs: VariationState, riemann_sign: float = 1.0):
    """Covariant rates (d_t tau, d_t rho) of one variation state."""
    g = man.metric(q.x[None, :])
    gamma = man.christoffel(q.x[None, :], ginv=np.linalg.inv(g))
    riem = man.riemann(q.x[None, :], gamma=gamma)[0]
    grads = gradients_at(man, force, q)
    curv = -riemann_sign * np.einsum('kmsr,s,r,m->k',
                                     riem, vs.tau, q.v, q.v)
    drho = (curv + vs.rho @ grads.velocity + vs.tau @ grads.spatial)
    return vs.rho.copy(), drho


def integrate_batch(man: Manifold, force: ForceField, x0, v0, tau0, rho0,
                    t_end: float, h: float,
                    riemann_sign: float = 1.0) -> BatchTrajectory:
    """RK4 on the combined system for B trajectories at once.

    Raises IntegrationAbort with the truncated record when any state
    component becomes non-finite; nothing is clamped.
    """
    if h <= 0.0:
        raise DynamicsError("step must be positive")
    steps = int(round(t_end / h))
    if steps < 1 or abs(steps * h - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise DynamicsError("t_end must be an integer multiple of the step")
    x0 = np.asarray(x0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    tau0 = np.asarray(tau0, dtype=float)
    rho0 = np.asarray(rho0, dtype=float)
    nb, n = x0.shape
    nvar = tau0.shape[1]

    times = np.arange(steps + 1) * h
    xs = np.empty((steps + 1, nb, n))
    vs = np.empty((steps + 1, nb, n))
    taus = np.empty((steps + 1, nb, nvar, n))
    rhos = np.empty((steps + 1, nb, nvar, n))
    forces = np.empty((steps + 1, nb, n))

    x, v, tau, rho = x0.copy(), v0.copy(), tau0.copy(), rho0.copy()
    with np.errstate(all='ignore'):
        forces[0] = force.components(x, v)
        xs[0], vs[0], taus[0], rhos[0] = x, v, tau, rho
        for i in range(steps):
            k1 = _rhs(man, force, x, v, tau, rho, riemann_sign)
            k2 = _rhs(man, force,
                      x + 0.5 * h * k1[0], v + 0.5 * h * k1[1],
                      tau + 0.5 * h * k1[2], rho + 0.5 * h * k1[3],
                      riemann_sign)
            k3 = _rhs(man, force,
                      x + 0.5 * h * k2[0], v + 0.5 * h * k2[1],
                      tau + 0.5 * h * k2[2], rho + 0.5 * h * k2[3],
                      riemann_sign)
            k4 = _rhs(man, force,
                      x + h * k3[0], v + h * k3[1],
                      tau + h * k3[2], rho + h * k3[3],
                      riemann_sign)
            x = x + (h / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            v = v + (h / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            tau = tau + (h / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            rho = rho + (h / 6.0) * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
            ok = (np.isfinite(x).all(axis=1) & np.isfinite(v).all(axis=1)
                  & np.isfinite(tau).all(axis=(1, 2))
                  & np.isfinite(rho).all(axis=(1, 2)))
            if not ok.all():
                partial = BatchTrajectory(
                    times[:i + 1], xs[:i + 1], vs[:i + 1],
                    taus[:i + 1], rhos[:i + 1], forces[:i + 1], h)
                raise IntegrationAbort(partial, i, np.nonzero(~ok)[0])
            xs[i + 1], vs[i + 1] = x, v
            taus[i + 1], rhos[i + 1] = tau, rho
            forces[i + 1] = force.components(x, v)
    return BatchTrajectory(times, xs, vs, taus, rhos, forces, h)


def integrate(man: Manifold, force: ForceField, init: FlowState,
              t_end: float, h: float,
              riemann_sign: float = 1.0) -> TrajectoryRecord:
    """Integrate one trajectory with its variations."""
    n = man.dimension
    nvar = len(init.variations)
    tau0 = np.zeros((1, nvar, n))
    rho0 = np.zeros((1, nvar, n))
    for j, vst in enumerate(init.variations):
        tau0[0, j] = vst.tau
        rho0[0, j] = vst.rho
    try:
        batch = integrate_batch(man, force, init.q.x[None, :],
                                init.q.v[None, :], tau0, rho0, t_end, h,
                                riemann_sign=riemann_sign)
    except IntegrationAbort as abort:
        abort.record = single_record(abort.record, 0)
        raise
    return single_record(batch, 0)


def single_record(batch: BatchTrajectory, row: int) -> TrajectoryRecord:
    return TrajectoryRecord(batch.times, batch.x[:, row], batch.v[:, row],
                            batch.tau[:, row], batch.rho[:, row],
                            batch.force[:, row], batch.step)


def covariant_rate(man: Manifold, record: TrajectoryRecord,
                   series: np.ndarray) -> np.ndarray:
    """Covariant time derivative of a vector series along the record.

    Central differences inside, second-order one-sided at the ends, plus
    the connection term gamma^k_rs v^r series^s per node.
    """
    series = np.asarray(series, dtype=float)
    m = record.node_count
    if m < 3:
        raise DynamicsError("record must have at least 3 nodes")
    if series.shape[0] != m:
        raise DynamicsError("series not aligned with record nodes")
    h = record.step
    deriv = np.empty_like(series)
    deriv[1:-1] = (series[2:] - series[:-2]) / (2.0 * h)
    deriv[0] = (-3.0 * series[0] + 4.0 * series[1] - series[2]) / (2.0 * h)
    deriv[-1] = (3.0 * series[-1] - 4.0 * series[-2] + series[-3]) / (2.0 * h)
    gamma = man.christoffel(record.x)
    return deriv + np.einsum('bkrs,br,bs->bk', gamma, record.v, series)


def nabla_t_force(man: Manifold, force: ForceField,
                  q: TangentPoint) -> np.ndarray:
    """Covariant rate of the force along the flow through q (chain rule)."""
    grads = gradients_at(man, force, q)
    f_val = force.components(q.x[None, :], q.v[None, :])[0]
    return q.v @ grads.spatial + f_val @ grads.velocity
