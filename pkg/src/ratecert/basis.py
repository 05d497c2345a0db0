"""Maps from the unravelled basis vector to algorithm iterates.

Over a horizon of B steps, every iterate of the canonical recursion is a
linear function of the basis vector

    eta = vcat(x(0), u(0..B-1), v(0..B-1), w(2..B))

of size b = s - c + B(2c+1).  This module builds those linear maps
(0/1 selector rows for the free signals, the G-recursion for the rest),
the Lyapunov state maps Xi/Xi_plus of size a = s + (c+1)(B-1), and the
orthonormal basis Psi of the subspace on which the consensus-direction
identities hold (invariant rows vanish, v = z, and the virtual signal w
is constant).
"""

from dataclasses import dataclass

import numpy as np

from .errors import EmptyIntersection
from .realization import DEFAULT_RANK_TOL, validate

__all__ = [
    "BasisMaps",
    "basis_size",
    "state_size",
    "build_basis_maps",
    "build_state_maps",
    "build_psi",
]


def basis_size(s, c, B):
    return s - c + B * (2 * c + 1)


def state_size(s, c, B):
    return s + (c + 1) * (B - 1)


@dataclass(frozen=True, eq=False)
class BasisMaps:
    """Linear maps from the basis vector to iterates over the horizon.

    xm[l] (s,b) for l in 0..B; um[l] (1,b), vm[l] (c,b), ym[l] (1,b),
    zm[l] (c,b) for l in 0..B-1; wm[l] (c,b) for l in 0..B.  Xi and
    Xi_plus are the (a,b) maps onto the current and shifted Lyapunov
    state.
    """

    B: int
    s: int
    c: int
    b: int
    a: int
    xm: tuple
    um: tuple
    vm: tuple
    ym: tuple
    zm: tuple
    wm: tuple
    Xi: np.ndarray
    Xi_plus: np.ndarray


def build_basis_maps(realization, B):
    """Construct all iterate maps for a validated realization."""
    validate(realization)
    if int(B) != B or B < 1:
        raise ValueError(f"need integer B >= 1, got {B}")
    B = int(B)
    s, c = realization.s, realization.c
    b = basis_size(s, c, B)
    eye = np.eye(b)

    # Selector rows, in the basis-vector order: x(0), u-block, v-block,
    # then w(2..B).
    xm = [eye[:s]]
    um = [eye[s + l : s + l + 1] for l in range(B)]
    v0 = s + B
    vm = [eye[v0 + l * c : v0 + (l + 1) * c] for l in range(B)]
    w0 = v0 + B * c
    wm_tail = [eye[w0 + j * c : w0 + (j + 1) * c] for j in range(B - 1)]

    # Remaining maps follow from one pass of the G-recursion.
    G = realization.G
    ym, zm = [], []
    for l in range(B):
        stacked = G @ np.vstack([xm[l], um[l], vm[l]])
        xm.append(stacked[:s])
        ym.append(stacked[s : s + 1])
        zm.append(stacked[s + 1 :])
    wm = [zm[0], vm[0], *wm_tail]

    Xi, Xi_plus = _state_maps(xm, um, vm, B)
    return BasisMaps(
        B=B,
        s=s,
        c=c,
        b=b,
        a=state_size(s, c, B),
        xm=tuple(xm),
        um=tuple(um),
        vm=tuple(vm),
        ym=tuple(ym),
        zm=tuple(zm),
        wm=tuple(wm),
        Xi=Xi,
        Xi_plus=Xi_plus,
    )


def _state_maps(xm, um, vm, B):
    Xi = np.vstack([xm[0], *um[: B - 1], *vm[: B - 1]])
    Xi_plus = np.vstack([xm[1], *um[1:B], *vm[1:B]])
    return Xi, Xi_plus


def build_state_maps(maps):
    """Lyapunov state maps: Xi stacks (x(0), u(0..B-2), v(0..B-2)),
    Xi_plus the same signals shifted by one step."""
    return _state_maps(list(maps.xm), list(maps.um), list(maps.vm), maps.B)


def consensus_constraints(realization, maps):
    """Stacked rows whose common nullspace is the consensus subspace.

    Three groups, each over l in 0..B-1: the invariant rows
    F_x xm(l) + F_u um(l), the gossip passthrough vm(l) - zm(l), and the
    virtual-signal differences wm(l) - wm(l+1).
    """
    rows = []
    if realization.r:
        for l in range(maps.B):
            rows.append(realization.Fx @ maps.xm[l] + realization.Fu @ maps.um[l])
    for l in range(maps.B):
        rows.append(maps.vm[l] - maps.zm[l])
    for l in range(maps.B):
        rows.append(maps.wm[l] - maps.wm[l + 1])
    return np.vstack(rows)


def build_psi(realization, maps, tol=DEFAULT_RANK_TOL):
    """Orthonormal basis (b,p) of the consensus-identity subspace.

    Computed by one SVD of the stacked constraint rows: right singular
    vectors whose singular value falls below tol * sigma_max span the
    intersection.  Raises EmptyIntersection when p = 0.
    """
    constraints = consensus_constraints(realization, maps)
    _, sv, vt = np.linalg.svd(constraints)
    if sv.size and sv[0] > 0.0:
        rank = int(np.count_nonzero(sv > tol * sv[0]))
    else:
        rank = 0
    psi = vt[rank:].T
    if psi.shape[1] == 0:
        raise EmptyIntersection(
            "consensus-identity subspace is trivial for this realization/horizon"
        )
    return psi
