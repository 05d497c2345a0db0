"""Canonical algorithm realizations and fixed-point structure.

A distributed first-order algorithm is written in the canonical per-agent
form

    x(k+1) = A x(k) + B_u u(k) + B_v v(k)
    y(k)   = C_y x(k) + D_yu u(k) + D_yv v(k)
    z(k)   = C_z x(k) + D_zu u(k) + D_zv v(k)

where u(k) is the local gradient evaluated at y(k), z(k) is communicated
to neighbors, v(k) is the gossip-weighted average of received z's, and an
optional linear invariant sum_j (F_x x_j(k) + F_u u_j(k)) = 0 is enforced
by the initialization.

This module validates realizations, decides whether an optimum-aligned
fixed point can exist (for every function ensemble and every
weight-balanced gossip sequence), and constructs explicit fixed points.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConditionsViolated,
    DimensionMismatch,
    GradientSumNonzero,
    NonpositiveStepsize,
)

DEFAULT_RANK_TOL = 1e-9


def _as_matrix(value, rows=None, cols=None):
    """Coerce to a float 2-D array, reshaping 0/1-D input when unambiguous."""
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        if rows == 1 or cols is None:
            arr = arr.reshape(1, -1)
        else:
            arr = arr.reshape(-1, 1)
    return arr


@dataclass(frozen=True, eq=False)
class Realization:
    """Block matrices of one algorithm in canonical form.

    Shapes: A (s,s), B_u (s,1), B_v (s,c), C_y (1,s), D_yu (1,1),
    D_yv (1,c), C_z (c,s), D_zu (c,1), D_zv (c,c), F_x (r,s), F_u (r,1)
    with r >= 0 invariant rows (F blocks may be empty).
    """

    A: np.ndarray
    Bu: np.ndarray
    Bv: np.ndarray
    Cy: np.ndarray
    Dyu: np.ndarray
    Dyv: np.ndarray
    Cz: np.ndarray
    Dzu: np.ndarray
    Dzv: np.ndarray
    Fx: np.ndarray = field(default=None)
    Fu: np.ndarray = field(default=None)
    name: str = ""

    def __post_init__(self):
        coerce = object.__setattr__
        coerce(self, "A", _as_matrix(self.A))
        s = self.A.shape[0]
        coerce(self, "Bu", _as_matrix(self.Bu, rows=s, cols=1))
        coerce(self, "Bv", _as_matrix(self.Bv, rows=s))
        coerce(self, "Cy", _as_matrix(self.Cy, rows=1))
        coerce(self, "Dyu", _as_matrix(self.Dyu, rows=1, cols=1))
        coerce(self, "Dyv", _as_matrix(self.Dyv, rows=1))
        coerce(self, "Cz", _as_matrix(self.Cz))
        c = self.Cz.shape[0]
        coerce(self, "Dzu", _as_matrix(self.Dzu, rows=c, cols=1))
        coerce(self, "Dzv", _as_matrix(self.Dzv, rows=c))
        if self.Fx is None or np.size(self.Fx) == 0:
            coerce(self, "Fx", np.zeros((0, s)))
            coerce(self, "Fu", np.zeros((0, 1)))
        else:
            coerce(self, "Fx", _as_matrix(self.Fx, rows=None))
            if self.Fx.ndim == 1:
                coerce(self, "Fx", self.Fx.reshape(1, -1))
            fu = self.Fu if self.Fu is not None else np.zeros((self.Fx.shape[0], 1))
            coerce(self, "Fu", _as_matrix(fu, cols=1))
            if self.Fu.shape == (1, self.Fx.shape[0]) and self.Fx.shape[0] > 1:
                coerce(self, "Fu", self.Fu.reshape(-1, 1))

    @property
    def s(self):
        return self.A.shape[0]

    @property
    def c(self):
        return self.Cz.shape[0]

    @property
    def r(self):
        return self.Fx.shape[0]

    @property
    def G(self):
        """Stacked update matrix [[A, B_u, B_v], [C_y, ...], [C_z, ...]]."""
        return np.block(
            [
                [self.A, self.Bu, self.Bv],
                [self.Cy, self.Dyu, self.Dyv],
                [self.Cz, self.Dzu, self.Dzv],
            ]
        )


def validate(realization):
    """Check every block shape against (s, c, r); raise on first mismatch.

    Returns the validated realization so calls can be chained.
    """
    s, c, r = realization.s, realization.c, realization.r
    if s < 1:
        raise DimensionMismatch("A", ("s>=1", "s>=1"), realization.A.shape)
    if c < 1:
        raise DimensionMismatch("Cz", ("c>=1", s), realization.Cz.shape)
    expected = {
        "A": (s, s),
        "Bu": (s, 1),
        "Bv": (s, c),
        "Cy": (1, s),
        "Dyu": (1, 1),
        "Dyv": (1, c),
        "Cz": (c, s),
        "Dzu": (c, 1),
        "Dzv": (c, c),
        "Fx": (r, s),
        "Fu": (r, 1),
    }
    for block, shape in expected.items():
        actual = getattr(realization, block).shape
        if actual != shape:
            raise DimensionMismatch(block, shape, actual)
    return realization


def _rank(matrix, tol):
    """Rank by singular values with a relative threshold."""
    if matrix.size == 0:
        return 0
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.count_nonzero(sv > tol * sv[0]))


def _fixed_point_blocks(realization):
    s, c = realization.s, realization.c
    K = np.block(
        [
            [realization.A - np.eye(s), realization.Bv],
            [realization.Cz, realization.Dzv - np.eye(c)],
            [realization.Fx, np.zeros((realization.r, c))],
        ]
    )
    cyv = np.hstack([realization.Cy, realization.Dyv])
    col_lhs = np.vstack([realization.A - np.eye(s), realization.Cy, realization.Cz])
    col_rhs = np.vstack([realization.Bu, realization.Dyu, realization.Dzu])
    return K, cyv, col_lhs, col_rhs


@dataclass(frozen=True)
class FixedPointConditions:
    """Verdicts of the two fixed-point existence conditions.

    `cond_a` is the operational form (some nullspace direction of K
    produces a nonzero y-output), which is what the explicit construction
    needs.  `cond_a_literal` is the literal reading (the y-output row
    itself lies in the nullspace of K); `literal_agrees` records whether
    the two coincide so a disagreement is visible rather than silently
    resolved.
    """

    cond_a: bool
    cond_b: bool
    cond_a_literal: bool
    literal_agrees: bool
    singular_values: dict

    @property
    def both(self):
        return self.cond_a and self.cond_b


def check_fixed_point_conditions(realization, tol=DEFAULT_RANK_TOL):
    """Decide whether an optimum-aligned fixed point exists for the class.

    Condition (a): the matrix K = [A-I, B_v; C_z, D_zv - I; F_x, 0] has a
    nullspace vector on which [C_y, D_yv] is nonzero.  Condition (b):
    [B_u; D_yu; D_zu] lies in the column space of [A-I; C_y; C_z].  Rank
    decisions use singular values with relative threshold `tol`.
    """
    validate(realization)
    K, cyv, col_lhs, col_rhs = _fixed_point_blocks(realization)

    rank_k = _rank(K, tol)
    rank_k_aug = _rank(np.vstack([K, cyv]), tol)
    cond_a = rank_k_aug > rank_k

    # Literal reading: rowspace([C_y, D_yv]) is the span of a single
    # vector; its intersection with null(K) is nontrivial iff the vector
    # itself is annihilated by K.
    w = cyv.ravel()
    w_norm = np.linalg.norm(w)
    k_scale = np.linalg.norm(K, 2) if K.size else 0.0
    cond_a_literal = bool(
        w_norm > 0.0
        and np.linalg.norm(K @ w) <= tol * max(1.0, k_scale) * w_norm
    )

    rank_col = _rank(col_lhs, tol)
    rank_col_aug = _rank(np.hstack([col_lhs, col_rhs]), tol)
    cond_b = rank_col_aug == rank_col

    sv = {
        "K": np.linalg.svd(K, compute_uv=False) if K.size else np.zeros(0),
        "K_aug": np.linalg.svd(np.vstack([K, cyv]), compute_uv=False),
        "col": np.linalg.svd(col_lhs, compute_uv=False),
        "col_aug": np.linalg.svd(np.hstack([col_lhs, col_rhs]), compute_uv=False),
    }
    return FixedPointConditions(
        cond_a=bool(cond_a),
        cond_b=bool(cond_b),
        cond_a_literal=cond_a_literal,
        literal_agrees=bool(cond_a == cond_a_literal),
        singular_values=sv,
    )


def nullspace(matrix, tol=DEFAULT_RANK_TOL):
    """Orthonormal basis of the (right) nullspace via SVD."""
    if matrix.size == 0:
        return np.eye(matrix.shape[1])
    _, sv, vt = np.linalg.svd(matrix)
    if sv.size and sv[0] > 0.0:
        rank = int(np.count_nonzero(sv > tol * sv[0]))
    else:
        rank = 0
    return vt[rank:].T


@dataclass(frozen=True)
class FixedPointWitness:
    """Explicit per-agent fixed point aligned with the optimizer.

    x_star has shape (n, s, d), u_star (n, 1, d); y_star is the common
    output (1, d) and every agent's z and v equal v_bar (c, d).
    """

    x_bar: np.ndarray
    v_bar: np.ndarray
    x_hat: np.ndarray
    y_star: np.ndarray
    x_star: np.ndarray
    u_star: np.ndarray

    @property
    def n(self):
        return self.x_star.shape[0]

    @property
    def d(self):
        return self.y_star.shape[1]


def construct_fixed_point(realization, y_star, grads_at_opt, tol=DEFAULT_RANK_TOL,
                          sum_tol=1e-8):
    """Build the explicit fixed point for given optimum data.

    `y_star` is the common output (length-d row); `grads_at_opt` holds one
    gradient row per agent, required to sum to zero.  The construction
    picks a nullspace direction of K with unit y-output for (x_bar,
    v_bar), solves the column-space system for x_hat, and sets
    x_i = x_bar - x_hat u_i.
    """
    validate(realization)
    conditions = check_fixed_point_conditions(realization, tol=tol)
    if not conditions.both:
        raise ConditionsViolated(
            f"fixed-point conditions fail: cond_a={conditions.cond_a}, "
            f"cond_b={conditions.cond_b}"
        )

    y_star = np.atleast_2d(np.asarray(y_star, dtype=float))
    d = y_star.shape[1]
    u_star = np.asarray(grads_at_opt, dtype=float)
    if u_star.ndim == 2:
        u_star = u_star[:, None, :]
    n = u_star.shape[0]
    u_sum = u_star.sum(axis=0)
    u_scale = max(1.0, float(np.abs(u_star).max(initial=0.0)))
    if np.abs(u_sum).max() > sum_tol * u_scale:
        raise GradientSumNonzero(
            f"gradients at the optimum sum to {u_sum.ravel()} (tol {sum_tol})"
        )

    s, c = realization.s, realization.c
    K, cyv, col_lhs, col_rhs = _fixed_point_blocks(realization)

    basis = nullspace(K, tol=tol)
    out = (cyv @ basis).ravel()
    out_sq = float(out @ out)
    if out_sq <= 0.0:
        raise ConditionsViolated("no nullspace direction with nonzero y-output")
    zeta = (basis @ out) / out_sq  # cyv @ zeta == 1
    x_bar = np.outer(zeta[:s], y_star.ravel()).reshape(s, d)
    v_bar = np.outer(zeta[s:], y_star.ravel()).reshape(c, d)

    x_hat, *_ = np.linalg.lstsq(col_lhs, col_rhs, rcond=None)

    x_star = x_bar[None, :, :] - x_hat[None, :, :] * u_star  # (n, s, d)
    return FixedPointWitness(
        x_bar=x_bar,
        v_bar=v_bar,
        x_hat=x_hat,
        y_star=y_star,
        x_star=x_star,
        u_star=u_star,
    )


def fixed_point_residual(realization, witness, W=None):
    """Max deviation when the witness is pushed once through the update.

    Direct evaluation of the canonical recursion with gossip matrix `W`
    (default: complete-graph averaging), treating the stored gradients as
    the inputs.  A valid witness reproduces itself.
    """
    n = witness.n
    if W is None:
        W = np.full((n, n), 1.0 / n)
    z = np.stack(
        [
            realization.Cz @ witness.x_star[i]
            + realization.Dzu @ witness.u_star[i]
            + realization.Dzv @ witness.v_bar
            for i in range(n)
        ]
    )
    v = np.einsum("ij,jcd->icd", W, z)
    res = 0.0
    for i in range(n):
        y_i = (
            realization.Cy @ witness.x_star[i]
            + realization.Dyu @ witness.u_star[i]
            + realization.Dyv @ v[i]
        )
        x_next = (
            realization.A @ witness.x_star[i]
            + realization.Bu @ witness.u_star[i]
            + realization.Bv @ v[i]
        )
        res = max(res, float(np.abs(x_next - witness.x_star[i]).max()))
        res = max(res, float(np.abs(y_i - witness.y_star).max()))
        res = max(res, float(np.abs(z[i] - witness.v_bar).max()))
        res = max(res, float(np.abs(v[i] - witness.v_bar).max()))
    invariant = sum(
        realization.Fx @ witness.x_star[i] + realization.Fu @ witness.u_star[i]
        for i in range(n)
    )
    if realization.r:
        res = max(res, float(np.abs(invariant).max()))
    return res


@dataclass(frozen=True)
class FunctionClass:
    """Sector-bound parameters 0 < m <= L of the local gradients."""

    m: float
    L: float

    def __post_init__(self):
        if not (0.0 < self.m <= self.L):
            raise ValueError(f"need 0 < m <= L, got m={self.m}, L={self.L}")

    @property
    def kappa(self):
        return self.L / self.m


@dataclass(frozen=True)
class NetworkClass:
    """Joint spectral gap sigma over windows of B consecutive steps."""

    sigma: float
    B: int

    def __post_init__(self):
        if not (0.0 <= self.sigma < 1.0):
            raise ValueError(f"need 0 <= sigma < 1, got {self.sigma}")
        if int(self.B) != self.B or self.B < 1:
            raise ValueError(f"need integer B >= 1, got {self.B}")
        object.__setattr__(self, "B", int(self.B))


def diging_realization(alpha):
    """Gradient-tracking (DIGing) realization with stepsize alpha.

    Per-agent state is (iterate, tracker, stored gradient); s=3, c=2 and
    one invariant row enforcing sum_j (tracker_j - stored_grad_j) = 0.
    """
    if alpha <= 0:
        raise NonpositiveStepsize(f"alpha must be positive, got {alpha}")
    a = float(alpha)
    return Realization(
        A=[[0.0, -a, 0.0], [0.0, 0.0, -1.0], [0.0, 0.0, 0.0]],
        Bu=[[0.0], [1.0], [1.0]],
        Bv=[[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]],
        Cy=[[0.0, -a, 0.0]],
        Dyu=[[0.0]],
        Dyv=[[1.0, 0.0]],
        Cz=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
        Dzu=[[0.0], [0.0]],
        Dzv=[[0.0, 0.0], [0.0, 0.0]],
        Fx=[[0.0, 1.0, -1.0]],
        Fu=[[0.0]],
        name=f"diging(alpha={a})",
    )


def dgd_realization(alpha):
    """Plain decentralized gradient descent: x+ = v - alpha*u, y = z = x.

    No gradient tracking and no invariant; kept as the canonical example
    of a realization that fails the fixed-point conditions.
    """
    if alpha <= 0:
        raise NonpositiveStepsize(f"alpha must be positive, got {alpha}")
    a = float(alpha)
    return Realization(
        A=[[0.0]],
        Bu=[[-a]],
        Bv=[[1.0]],
        Cy=[[1.0]],
        Dyu=[[0.0]],
        Dyv=[[0.0]],
        Cz=[[1.0]],
        Dzu=[[0.0]],
        Dzv=[[0.0]],
        name=f"dgd(alpha={a})",
    )


BUILTIN_REALIZATIONS = {
    "diging": diging_realization,
    "dgd": dgd_realization,
}
