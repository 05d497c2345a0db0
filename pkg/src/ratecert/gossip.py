"""Generation and validation of B-connected gossip sequences.

Sequences are finite lists of n x n symmetric doubly stochastic matrices,
repeated cyclically.  Generators keep every diagonal at or above the
laziness parameter theta >= 1/2, which guarantees the per-step spectrum
property by construction; the joint spectral gap is then measured over
every window start of one period.
"""

from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleScheme

__all__ = [
    "GossipSequence",
    "Assumption2Report",
    "generate_sequence",
    "verify_assumption2",
    "joint_spectral_gap",
]

SCHEMES = ("periodic_edge_cycle", "random_matchings", "complete")


@dataclass(frozen=True, eq=False)
class GossipSequence:
    """Cyclic gossip-matrix sequence with its measured joint gap."""

    n: int
    matrices: tuple
    B_claimed: int
    sigma_measured: float
    scheme: str = ""
    theta: float = 0.5
    seed: int = None

    @property
    def period(self):
        return len(self.matrices)

    def matrix_at(self, k):
        return self.matrices[k % self.period]


def _edge_matrix(n, i, j, theta):
    W = np.eye(n)
    W[i, i] = W[j, j] = theta
    W[i, j] = W[j, i] = 1.0 - theta
    return W


def _matching_matrix(n, pairs, theta):
    W = np.eye(n)
    for i, j in pairs:
        W[i, i] = W[j, j] = theta
        W[i, j] = W[j, i] = 1.0 - theta
    return W


def _union_connected(matrices):
    """BFS connectivity of the union graph of nonzero off-diagonals."""
    n = matrices[0].shape[0]
    adj = np.zeros((n, n), dtype=bool)
    for W in matrices:
        adj |= np.abs(W) > 1e-15
    seen = np.zeros(n, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.nonzero(adj[i])[0]:
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    return bool(seen.all())


def joint_spectral_gap(matrices, B):
    """Max over window starts of ||product - ones/n||_2^(1/B).

    The cyclic sequence makes one period of window starts exhaustive.
    Returns (sigma, worst_start).
    """
    matrices = [np.asarray(W, dtype=float) for W in matrices]
    n = matrices[0].shape[0]
    period = len(matrices)
    avg = np.full((n, n), 1.0 / n)
    worst = (0.0, 0)
    for k in range(period):
        prod = np.eye(n)
        for l in range(B):
            prod = matrices[(k + l) % period] @ prod
        norm = float(np.linalg.norm(prod - avg, 2))
        value = norm ** (1.0 / B)
        if value > worst[0]:
            worst = (value, k)
    return worst


def generate_sequence(n, B, scheme="periodic_edge_cycle", theta=0.5, seed=None,
                      max_tries=500):
    """Manufacture a B-connected gossip sequence.

    periodic_edge_cycle activates one spanning-path edge per step (period
    n-1, needs B >= n-1); random_matchings draws one maximal matching per
    step for a period of B steps, rejection-sampling until every window's
    union is connected; complete returns the single averaging matrix
    ones/n.
    """
    if n < 2:
        raise ValueError(f"need n >= 2, got {n}")
    if B < 1 or int(B) != B:
        raise ValueError(f"need integer B >= 1, got {B}")
    if not (0.5 <= theta < 1.0):
        raise ValueError(f"need laziness theta in [0.5, 1), got {theta}")
    B = int(B)

    if scheme == "complete":
        matrices = [np.full((n, n), 1.0 / n)]
    elif scheme == "periodic_edge_cycle":
        if B < n - 1:
            raise InfeasibleScheme(
                f"one edge per step cannot jointly connect {n} agents "
                f"within B={B} < n-1 steps"
            )
        matrices = [_edge_matrix(n, i, i + 1, theta) for i in range(n - 1)]
    elif scheme == "random_matchings":
        if B == 1 and n > 2:
            raise InfeasibleScheme(
                f"a single matching cannot connect {n} > 2 agents at B=1"
            )
        rng = np.random.default_rng(seed)
        matrices = None
        for _ in range(max_tries):
            draws = []
            for _ in range(B):
                order = rng.permutation(n)
                pairs = [(order[2 * i], order[2 * i + 1])
                         for i in range(n // 2)]
                draws.append(_matching_matrix(n, pairs, theta))
            if _union_connected(draws):
                matrices = draws
                break
        if matrices is None:
            raise InfeasibleScheme(
                f"random matchings failed to jointly connect n={n} within "
                f"B={B} after {max_tries} tries"
            )
    else:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")

    sigma, _ = joint_spectral_gap(matrices, B)
    if sigma >= 1.0:
        raise InfeasibleScheme(
            f"generated sequence has joint spectral gap {sigma} >= 1"
        )
    return GossipSequence(
        n=n,
        matrices=tuple(np.asarray(W) for W in matrices),
        B_claimed=B,
        sigma_measured=sigma,
        scheme=scheme,
        theta=theta,
        seed=seed,
    )


@dataclass(frozen=True)
class Assumption2Report:
    """Property-by-property verdicts for a gossip sequence."""

    weight_balanced: bool
    max_sum_deviation: float
    spectrum_ok: bool
    max_step_norm: float
    joint_ok: bool
    sigma_measured: float
    worst_window: int
    edges_per_step: tuple

    @property
    def all_ok(self):
        return self.weight_balanced and self.spectrum_ok and self.joint_ok


def verify_assumption2(sequence, B=None, tol=1e-12):
    """Check weight balance, the per-step spectrum property, and the
    joint-spectrum property over one period.

    Sparsity (item 1) holds by construction for generated sequences and
    is reported informationally as the off-diagonal edge count per step.
    """
    B = sequence.B_claimed if B is None else int(B)
    matrices = [np.asarray(W, dtype=float) for W in sequence.matrices]
    n = matrices[0].shape[0]
    ones = np.ones(n)
    avg = np.full((n, n), 1.0 / n)

    dev = 0.0
    step_norm = 0.0
    edges = []
    for W in matrices:
        dev = max(dev, float(np.abs(W @ ones - ones).max()),
                  float(np.abs(W.T @ ones - ones).max()))
        step_norm = max(step_norm, float(np.linalg.norm(W - avg, 2)))
        off = np.abs(W) > 1e-15
        np.fill_diagonal(off, False)
        edges.append(int(off.sum()) // 2)

    sigma, worst = joint_spectral_gap(matrices, B)
    return Assumption2Report(
        weight_balanced=bool(dev <= tol),
        max_sum_deviation=dev,
        spectrum_ok=bool(step_norm <= 1.0 + tol),
        max_step_norm=step_norm,
        joint_ok=bool(sigma < 1.0),
        sigma_measured=sigma,
        worst_window=worst,
        edges_per_step=tuple(edges),
    )
