"""Rollouts of canonical algorithms on sector-bounded quadratic ensembles.

Used to cross-validate certificates: a certified rate must dominate the
empirical tail rate of every simulated instance in its class, and the
certificate's envelope gamma * rho^k must bound the per-agent state
errors.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AlgebraicLoop, InsufficientDecay, InvariantViolated
from .realization import construct_fixed_point, validate

__all__ = [
    "QuadraticEnsemble",
    "Trajectory",
    "EmpiricalRate",
    "simulate",
    "diging_initial_state",
    "empirical_rate",
    "trajectory_lyapunov_state",
]


@dataclass(frozen=True, eq=False)
class QuadraticEnsemble:
    """Per-agent quadratics 0.5 (y - a_i) H_i (y - a_i)^T with every
    Hessian spectrum inside [m, L]; gradients are row vectors."""

    hessians: np.ndarray  # (n, d, d)
    anchors: np.ndarray   # (n, d)
    m: float
    L: float

    @classmethod
    def random(cls, n, d=2, m=1.0, L=10.0, seed=None, anchor_scale=1.0):
        """Random ensemble; the first agent is pinned to the sector
        endpoints so the class bound is attained."""
        rng = np.random.default_rng(seed)
        hessians = np.empty((n, d, d))
        for i in range(n):
            basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
            eigs = rng.uniform(m, L, size=d)
            if i == 0 and d >= 2:
                eigs[0], eigs[1] = m, L
            hessians[i] = basis @ np.diag(eigs) @ basis.T
        anchors = anchor_scale * rng.standard_normal((n, d))
        return cls(hessians=hessians, anchors=anchors, m=float(m), L=float(L))

    @property
    def n(self):
        return self.hessians.shape[0]

    @property
    def d(self):
        return self.hessians.shape[1]

    @property
    def y_star(self):
        """Global optimizer row: y* sum(H_i) = sum(a_i H_i)."""
        lhs = self.hessians.sum(axis=0)
        rhs = np.einsum("nd,nde->e", self.anchors, self.hessians)
        return np.linalg.solve(lhs.T, rhs).reshape(1, -1)

    def gradients(self, y):
        """Gradients of all agents at per-agent rows y of shape (n, 1, d)."""
        diff = y[:, 0, :] - self.anchors
        return np.einsum("nd,nde->ne", diff, self.hessians)[:, None, :]

    def gradients_at_optimum(self):
        y = np.broadcast_to(self.y_star[None, :, :],
                            (self.n, 1, self.d)).copy()
        return self.gradients(y)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded rollout: states x (n, K+1, s, d), outputs y and inputs u
    (n, K, 1, d), averages v (n, K, c, d), error norms e (K+1,), and the
    running invariant drift."""

    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    errors: np.ndarray
    y_errors: np.ndarray  # (n, K) distances of y_i(k) from y*
    invariant_drift: np.ndarray
    witness: object

    @property
    def K(self):
        return self.y.shape[1]


def diging_initial_state(ensemble, x_init=None, rng=None):
    """Canonical DIGing initial state honoring its stated initialization:
    tracker and stored gradient both start at the local gradient of the
    initial iterate."""
    rng = np.random.default_rng(rng)
    n, d = ensemble.n, ensemble.d
    if x_init is None:
        x_init = rng.standard_normal((n, d))
    x_init = np.asarray(x_init, dtype=float).reshape(n, 1, d)
    grads = ensemble.gradients(x_init)
    return np.concatenate([x_init, grads, grads], axis=1)  # (n, 3, d)


def simulate(realization, sequence, ensemble, x0, K, witness=None,
             init_tol=1e-9):
    """Exact rollout of the canonical recursion for K steps.

    Supports the explicit-causal subclass (D_yu = D_zu = 0, D_zv = 0);
    other feedthrough terms make the per-step signals an implicit system
    across agents.  Raises InvariantViolated when x0 breaks the linear
    invariant, and records the drift of that invariant along the way.
    """
    validate(realization)
    for block in ("Dyu", "Dzu", "Dzv"):
        if np.any(getattr(realization, block) != 0.0):
            raise AlgebraicLoop(
                f"simulation needs {block} = 0 (explicit-causal realization)"
            )
    n, d = ensemble.n, ensemble.d
    s, c = realization.s, realization.c
    if sequence.n != n:
        raise ValueError(f"sequence has n={sequence.n}, ensemble n={n}")
    x = np.asarray(x0, dtype=float).reshape(n, s, d)

    if witness is None:
        witness = construct_fixed_point(
            realization, ensemble.y_star, ensemble.gradients_at_optimum()
        )

    xs = np.empty((n, K + 1, s, d))
    ys = np.empty((n, K, 1, d))
    us = np.empty((n, K, 1, d))
    vs = np.empty((n, K, c, d))
    drift = np.empty(K)
    xs[:, 0] = x

    for k in range(K):
        W = sequence.matrix_at(k)
        z = np.einsum("cs,nsd->ncd", realization.Cz, x)
        v = np.einsum("ij,jcd->icd", W, z)
        y = (np.einsum("os,nsd->nod", realization.Cy, x)
             + np.einsum("oc,ncd->nod", realization.Dyv, v))
        u = ensemble.gradients(y)
        if realization.r:
            residual = (np.einsum("rs,nsd->rd", realization.Fx, x)
                        + np.einsum("ro,nod->rd", realization.Fu, u))
            drift[k] = float(np.abs(residual).max())
        else:
            drift[k] = 0.0
        if k == 0 and drift[0] > init_tol:
            raise InvariantViolated(
                f"initial state breaks the invariant by {drift[0]:.3e}"
            )
        ys[:, k] = y
        us[:, k] = u
        vs[:, k] = v
        x = (np.einsum("st,ntd->nsd", realization.A, x)
             + np.einsum("so,nod->nsd", realization.Bu, u)
             + np.einsum("sc,ncd->nsd", realization.Bv, v))
        xs[:, k + 1] = x

    err = np.linalg.norm(xs - witness.x_star[:, None, :, :], axis=(2, 3))
    y_err = np.linalg.norm(ys - witness.y_star[None, None, :, :], axis=(2, 3))
    return Trajectory(
        x=xs, y=ys, u=us, v=vs,
        errors=err.max(axis=0),
        y_errors=y_err,
        invariant_drift=drift,
        witness=witness,
    )


@dataclass(frozen=True)
class EmpiricalRate:
    rho: float
    fit_residual: float
    k_start: int
    k_end: int


def empirical_rate(errors, tail_fraction=0.5, min_points=50):
    """Least-squares slope of log e(k) over the trailing window.

    The tail fit averages out the oscillation that time-varying gossip
    induces in per-step ratios; the envelope, not per-step decay, is what
    a certificate bounds.
    """
    e = np.asarray(errors, dtype=float)
    if isinstance(tail_fraction, float) and not (0.0 < tail_fraction <= 1.0):
        raise ValueError("tail_fraction must be in (0, 1]")
    k_start = int(len(e) * (1.0 - tail_fraction))
    tail = e[k_start:]
    if np.any(tail <= 0.0) or np.any(tail < 1e-280):
        raise InsufficientDecay(
            "error trajectory underflows inside the tail window"
        )
    if len(tail) < min_points:
        raise ValueError(
            f"need at least {min_points} tail iterations, got {len(tail)}"
        )
    ks = np.arange(k_start, len(e))
    coeffs, residuals, *_ = np.polyfit(ks, np.log(tail), 1, full=True)
    rms = float(np.sqrt(residuals[0] / len(tail))) if residuals.size else 0.0
    return EmpiricalRate(
        rho=float(np.exp(coeffs[0])),
        fit_residual=rms,
        k_start=k_start,
        k_end=len(e) - 1,
    )


def trajectory_lyapunov_state(trajectory, B, k=0):
    """Per-agent unravelled Lyapunov error state at window start k.

    Stacks (x(k) - x*, u(k..k+B-2) - u*, v(k..k+B-2) - v*) per agent,
    shape (n, a, d); requires the trajectory to extend B-1 steps past k.
    """
    w = trajectory.witness
    n = trajectory.x.shape[0]
    parts = [trajectory.x[:, k] - w.x_star]
    for l in range(B - 1):
        parts.append(trajectory.u[:, k + l] - w.u_star)
    for l in range(B - 1):
        parts.append(trajectory.v[:, k + l] - w.v_bar[None, :, :])
    return np.concatenate(parts, axis=1)
