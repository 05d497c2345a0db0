"""Assembly of the coupled consensus/disagreement feasibility program.

For a prospective rate rho, the certificate search is a semidefinite
feasibility problem in (P, Q, R, S(l), lambda(l)):

    X(P, lambda) <= 0   (p x p, in Psi-projected coordinates)
    Y(Q, R, S, lambda) <= 0   (b x b)
    P >= eps_pd I, Q >= eps_pd I, R >= 0, S(l) >= 0, lambda(l) >= 0

where X carries the consensus-direction decrease plus the sector-bound
multipliers, Y the disagreement decrease plus the same sector terms, the
joint-spectrum term weighted by M1 = diag(sigma^(2B), -1) on
(w(0), w(B)), and per-step gossip contraction terms weighted by
M2 = diag(1, -1) on the pairs (z(l), w(l)) -> (v(l), w(l+1)).  The
lambda(l) multipliers are shared between the two blocks, which is what
couples them.

Both blocks are linear in the decision variables.  The map objects
evaluate with plain ndarrays (for independent certificate verification)
and equally with cvxpy variables (for the solver backend).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .basis import build_basis_maps, build_psi
from .realization import check_fixed_point_conditions, validate

__all__ = [
    "MultiplierConstants",
    "ConsensusMap",
    "DisagreementMap",
    "ConicProgram",
    "build_multipliers",
    "build_consensus_map",
    "build_disagreement_map",
    "assemble_feasibility",
]

DEFAULT_EPS_PD = 1e-6


@dataclass(frozen=True)
class MultiplierConstants:
    """Constant 2x2 weights of the three quadratic constraints."""

    M0: np.ndarray
    M1: np.ndarray
    M2: np.ndarray
    m: float
    L: float
    sigma: float
    B: int


def build_multipliers(m, L, sigma, B):
    """Sector weight M0 = [-2mL, L+m; L+m, -2], joint-spectrum weight
    M1 = diag(sigma^(2B), -1), per-step weight M2 = diag(1, -1)."""
    if not (0.0 < m <= L):
        raise ValueError(f"need 0 < m <= L, got m={m}, L={L}")
    if not (0.0 <= sigma < 1.0):
        raise ValueError(f"need 0 <= sigma < 1, got {sigma}")
    if int(B) != B or B < 1:
        raise ValueError(f"need integer B >= 1, got {B}")
    M0 = np.array([[-2.0 * m * L, L + m], [L + m, -2.0]])
    M1 = np.diag([float(sigma) ** (2 * int(B)), -1.0])
    M2 = np.diag([1.0, -1.0])
    return MultiplierConstants(M0=M0, M1=M1, M2=M2, m=float(m), L=float(L),
                               sigma=float(sigma), B=int(B))


def _sector_forms(maps, M0):
    """b x b quadratic forms [y(l); u(l)]^T M0 [y(l); u(l)], one per step."""
    forms = []
    for l in range(maps.B):
        yu = np.vstack([maps.ym[l], maps.um[l]])
        forms.append(yu.T @ M0 @ yu)
    return forms


@dataclass(frozen=True, eq=False)
class ConsensusMap:
    """Linear map (P, lambda) -> X, already projected by Psi."""

    Psi: np.ndarray
    Xi_proj: np.ndarray       # Xi @ Psi
    Xi_plus_proj: np.ndarray  # Xi_plus @ Psi
    sector_proj: tuple        # Psi^T H(l) Psi
    rho: float

    def __call__(self, P, lam, rho_sq=None):
        rho_sq = self.rho**2 if rho_sq is None else rho_sq
        X = (
            self.Xi_plus_proj.T @ P @ self.Xi_plus_proj
            - rho_sq * (self.Xi_proj.T @ P @ self.Xi_proj)
        )
        for l, H in enumerate(self.sector_proj):
            X = X + lam[l] * H
        return X


@dataclass(frozen=True, eq=False)
class DisagreementMap:
    """Linear map (Q, R, S, lambda) -> Y on the full b x b coordinates."""

    Xi: np.ndarray
    Xi_plus: np.ndarray
    sector: tuple
    w0: np.ndarray
    wB: np.ndarray
    pre: tuple   # stacked [z(l); w(l)]
    post: tuple  # stacked [v(l); w(l+1)]
    sigma_2B: float
    rho: float

    def __call__(self, Q, R, S, lam, rho_sq=None):
        rho_sq = self.rho**2 if rho_sq is None else rho_sq
        Y = self.Xi_plus.T @ Q @ self.Xi_plus - rho_sq * (self.Xi.T @ Q @ self.Xi)
        for l, H in enumerate(self.sector):
            Y = Y + lam[l] * H
        Y = Y + self.sigma_2B * (self.w0.T @ R @ self.w0) - self.wB.T @ R @ self.wB
        for l in range(len(self.pre)):
            Y = Y + self.pre[l].T @ S[l] @ self.pre[l]
            Y = Y - self.post[l].T @ S[l] @ self.post[l]
        return Y


def build_consensus_map(maps, multipliers, rho, Psi):
    if rho <= 0:
        raise ValueError(f"need rho > 0, got {rho}")
    forms = _sector_forms(maps, multipliers.M0)
    return ConsensusMap(
        Psi=Psi,
        Xi_proj=maps.Xi @ Psi,
        Xi_plus_proj=maps.Xi_plus @ Psi,
        sector_proj=tuple(Psi.T @ H @ Psi for H in forms),
        rho=float(rho),
    )


def build_disagreement_map(maps, multipliers, rho):
    if rho <= 0:
        raise ValueError(f"need rho > 0, got {rho}")
    return DisagreementMap(
        Xi=maps.Xi,
        Xi_plus=maps.Xi_plus,
        sector=tuple(_sector_forms(maps, multipliers.M0)),
        w0=maps.wm[0],
        wB=maps.wm[maps.B],
        pre=tuple(np.vstack([maps.zm[l], maps.wm[l]]) for l in range(maps.B)),
        post=tuple(np.vstack([maps.vm[l], maps.wm[l + 1]]) for l in range(maps.B)),
        sigma_2B=float(multipliers.M1[0, 0]),
        rho=float(rho),
    )


@dataclass(frozen=True, eq=False)
class ConicProgram:
    """One joint feasibility program at a fixed prospective rate.

    Decision variables: P, Q symmetric (a,a); R symmetric (c,c); S(l)
    symmetric (2c,2c) and lambda(l) >= 0 for l in 0..B-1 (shared between
    the blocks unless `decoupled` diagnostics mode is on).
    """

    maps: object
    Psi: np.ndarray
    multipliers: MultiplierConstants
    consensus: ConsensusMap
    disagreement: DisagreementMap
    rho: float
    eps_pd: float
    scale: float
    decoupled: bool = False
    metadata: dict = field(default_factory=dict)

    @property
    def a(self):
        return self.maps.a

    @property
    def b(self):
        return self.maps.b

    @property
    def c(self):
        return self.maps.c

    @property
    def B(self):
        return self.maps.B

    @property
    def p(self):
        return self.Psi.shape[1]

    def variable_count(self):
        a, c, B = self.a, self.c, self.B
        n_sym = lambda k: k * (k + 1) // 2
        lam = 2 * B if self.decoupled else B
        return 2 * n_sym(a) + n_sym(c) + B * n_sym(2 * c) + lam

    def X(self, P, lam):
        return self.consensus(P, lam)

    def Y(self, Q, R, S, lam):
        return self.disagreement(Q, R, S, lam)


def assemble_feasibility(realization, function_class, network_class, rho,
                         eps_pd=DEFAULT_EPS_PD, tol=1e-9, decouple_lambda=False):
    """Build the joint program for (realization, m, L, sigma, B, rho).

    A realization failing the fixed-point conditions is analyzed anyway
    (the SDP is still well defined); a warning records that the certified
    rate then has no optimum-aligned fixed point behind it.
    """
    validate(realization)
    if rho <= 0:
        raise ValueError(f"need rho > 0, got {rho}")
    conditions = check_fixed_point_conditions(realization, tol=tol)
    if not conditions.both:
        warnings.warn(
            "realization fails the fixed-point conditions; certifying it "
            "anyway (rate certificate will not reference an optimum-aligned "
            "fixed point)",
            stacklevel=2,
        )
    maps = build_basis_maps(realization, network_class.B)
    Psi = build_psi(realization, maps, tol=tol)
    mult = build_multipliers(function_class.m, function_class.L,
                             network_class.sigma, network_class.B)
    g_max = float(np.abs(realization.G).max())
    eps_eff = eps_pd * max(1.0, g_max)
    scale = max(1.0, float(np.abs(realization.G).sum(axis=1).max()))
    metadata = {
        "rho": float(rho),
        "m": float(function_class.m),
        "L": float(function_class.L),
        "sigma": float(network_class.sigma),
        "B": int(network_class.B),
        "eps_pd": float(eps_eff),
        "scale": float(scale),
        "decoupled_lambda": bool(decouple_lambda),
        "psi_vz_range": f"l in 0..{network_class.B - 1}",
        "psi_w_range": f"l in 0..{network_class.B - 1}",
        "m1_indices": "w(0), w(B)",
        "fixed_point_conditions": [conditions.cond_a, conditions.cond_b],
    }
    return ConicProgram(
        maps=maps,
        Psi=Psi,
        multipliers=mult,
        consensus=build_consensus_map(maps, mult, rho, Psi),
        disagreement=build_disagreement_map(maps, mult, rho),
        rho=float(rho),
        eps_pd=eps_eff,
        scale=scale,
        decoupled=bool(decouple_lambda),
        metadata=metadata,
    )
