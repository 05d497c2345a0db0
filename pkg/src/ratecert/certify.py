"""Solving the feasibility program, rate bisection, and post-processing.

The default backend hands the joint program to cvxpy (CLARABEL, with a
tightened retry falling back to SCS).  Solver output is never trusted
directly: every candidate certificate is re-verified by independent
eigenvalue computations on the numeric constraint blocks before it is
accepted.  Bisection on the prospective rate maintains an
(infeasible, feasible) bracket and returns the tightest certified rate
plus the certificate backing it.
"""

import hashlib
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NonpositiveV0, SolverFailure
from .lmi import DEFAULT_EPS_PD, assemble_feasibility
from .realization import FunctionClass, NetworkClass

__all__ = [
    "Certificate",
    "SolveOutcome",
    "RateBound",
    "NoCertificate",
    "CvxpyBackend",
    "solve_feasibility",
    "verify_certificate",
    "bisect_rate",
    "certificate_gamma",
    "lyapunov_value",
    "StepsizeSearch",
    "optimize_stepsize",
]

DEFAULT_FEAS_TOL = 1e-7
DEFAULT_BISECT_TOL = 1e-3


@dataclass(frozen=True, eq=False)
class Certificate:
    """Feasible decision variables plus independently measured residuals."""

    rho: float
    P: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: tuple
    lam: np.ndarray
    residuals: dict
    metadata: dict
    lam_consensus: np.ndarray = None  # only in decoupled diagnostics mode

    def cond_T(self):
        """Condition number of Pi (x) P + (I - Pi) (x) Q, which is n-free:
        its eigenvalues are the union of those of P and Q."""
        p_eigs = np.linalg.eigvalsh(self.P)
        q_eigs = np.linalg.eigvalsh(self.Q)
        return max(p_eigs[-1], q_eigs[-1]) / min(p_eigs[0], q_eigs[0])


@dataclass(frozen=True)
class SolveOutcome:
    """Result of one feasibility solve: 'certificate', 'infeasible', or
    'solver_failure', with the certificate when there is one."""

    status: str
    certificate: Certificate = None
    detail: str = ""


def _scales_close(old, new, factor=4.0):
    """Variable re-parameterizations within a moderate factor keep the
    cached canonicalized problem; only order-of-magnitude drift rebuilds."""
    log_cap = np.log(factor)
    for a, b in zip(old, new):
        a_list = a if isinstance(a, list) else [a]
        b_list = b if isinstance(b, list) else [b]
        for ai, bi in zip(a_list, b_list):
            if np.any(np.abs(np.log(np.asarray(ai) / np.asarray(bi))) > log_cap):
                return False
    return True


class CvxpyBackend:
    """Default conic backend: cvxpy over CLARABEL with parametric caching.

    Problems sharing everything but rho reuse one canonicalized cvxpy
    problem with rho^2 as a parameter, which makes bisection cheap.

    Certificates are intrinsically ill-ranged at small stepsizes (the
    slow, iterate-like coordinates carry weights growing like the inverse
    stepsize), which can break an interior-point solver in double
    precision.  When the plain solve fails, the backend probes rough
    variable magnitudes (from the last available iterate, else a loose
    first-order solve), re-parameterizes each variable by a diagonal
    congruence so the solved unknowns are O(1), and solves that equally
    valid program instead; the returned values are always mapped back to
    the original variables and re-verified outside the backend.
    """

    def __init__(self, solver="CLARABEL", solver_opts=None, cache_size=16,
                 probe_opts=None):
        self.solver = solver
        self.solver_opts = dict(solver_opts or {})
        self.probe_opts = dict(probe_opts or {"eps": 1e-4, "max_iters": 5000})
        self.cache_size = cache_size
        self._cache = {}

    def _fingerprint(self, program):
        h = hashlib.sha256()
        maps = program.maps
        for block in (maps.Xi, maps.Xi_plus, program.Psi):
            h.update(np.ascontiguousarray(block).tobytes())
        for group in (maps.ym, maps.um, maps.vm, maps.zm, maps.wm):
            for mat in group:
                h.update(np.ascontiguousarray(mat).tobytes())
        h.update(np.ascontiguousarray(program.multipliers.M0).tobytes())
        h.update(
            repr(
                (
                    program.multipliers.sigma,
                    program.multipliers.B,
                    program.eps_pd,
                    program.scale,
                    program.decoupled,
                    self.solver,
                )
            ).encode()
        )
        return h.digest()

    def _build(self, program, scales=None):
        """Canonicalize the program, optionally under a diagonal variable
        re-parameterization P = Dp P' Dp (and likewise R, S, lambda)."""
        import cvxpy as cp

        a, c, B = program.a, program.c, program.B
        P = cp.Variable((a, a), symmetric=True, name="P")
        Q = cp.Variable((a, a), symmetric=True, name="Q")
        R = cp.Variable((c, c), symmetric=True, name="R")
        S = [cp.Variable((2 * c, 2 * c), symmetric=True, name=f"S{l}")
             for l in range(B)]
        lam = cp.Variable(B, nonneg=True, name="lam")
        lam_x = cp.Variable(B, nonneg=True, name="lam_x") if program.decoupled else lam
        rho_sq = cp.Parameter(nonneg=True, name="rho_sq")

        if scales is None:
            d_state = np.ones(a)
            d_r = np.ones(c)
            d_s = [np.ones(2 * c)] * B
            d_lam = np.ones(B)
        else:
            d_state, d_r, d_s, d_lam = scales

        cons, dis = program.consensus, program.disagreement
        Dp = np.diag(d_state)
        Xi_c = Dp @ cons.Xi_proj
        Xi1_c = Dp @ cons.Xi_plus_proj
        X = Xi1_c.T @ P @ Xi1_c - rho_sq * (Xi_c.T @ P @ Xi_c)
        for l in range(B):
            X = X + (d_lam[l] * lam_x[l]) * cons.sector_proj[l]

        Xi_d = Dp @ dis.Xi
        Xi1_d = Dp @ dis.Xi_plus
        Y = Xi1_d.T @ Q @ Xi1_d - rho_sq * (Xi_d.T @ Q @ Xi_d)
        for l in range(B):
            Y = Y + (d_lam[l] * lam[l]) * dis.sector[l]
        w0 = np.diag(d_r) @ dis.w0
        wB = np.diag(d_r) @ dis.wB
        Y = Y + dis.sigma_2B * (w0.T @ R @ w0) - wB.T @ R @ wB
        for l in range(B):
            Ds = np.diag(d_s[l])
            pre = Ds @ dis.pre[l]
            post = Ds @ dis.post[l]
            Y = Y + pre.T @ S[l] @ pre - post.T @ S[l] @ post

        scale = program.scale
        # The program is homogeneous in the variables, so feasibility with
        # floor eps_pd is equivalent to feasibility with floor 1; solving
        # at the unit floor keeps the variables well scaled, and any
        # solution satisfies the eps_pd cone a fortiori.
        eps = max(program.eps_pd, 1.0)
        floor = np.diag(eps / d_state**2)
        constraints = [
            X / scale << 0,
            Y / scale << 0,
            P >> floor,
            Q >> floor,
            R >> 0,
        ]
        constraints += [Si >> 0 for Si in S]
        # Every variable appears in the objective so the solution is
        # bounded and crisp (all cones contain 0; unpenalized directions
        # such as R at sigma = 0 would otherwise drift).
        objective = (cp.trace(P) + cp.trace(Q) + cp.trace(R)
                     + sum(cp.trace(Si) for Si in S) + cp.sum(lam))
        if program.decoupled:
            objective = objective + cp.sum(lam_x)
        problem = cp.Problem(cp.Minimize(objective), constraints)
        return {
            "problem": problem,
            "rho_sq": rho_sq,
            "vars": {"P": P, "Q": Q, "R": R, "S": S, "lam": lam, "lam_x": lam_x},
            "scales": scales,
        }

    def _entry(self, program):
        key = self._fingerprint(program)
        if key not in self._cache:
            if len(self._cache) >= self.cache_size:
                self._cache.pop(next(iter(self._cache)))
            self._cache[key] = {"plain": self._build(program),
                                "scaled": None, "last_values": None,
                                "prefer_scaled": False}
        return self._cache[key]

    @staticmethod
    def _extract(built, program, scales=None):
        v = built["vars"]
        values = {
            "P": np.array(v["P"].value),
            "Q": np.array(v["Q"].value),
            "R": np.array(v["R"].value),
            "S": [np.array(Si.value) for Si in v["S"]],
            "lam": np.asarray(v["lam"].value, dtype=float).reshape(-1),
        }
        if program.decoupled:
            values["lam_x"] = np.asarray(v["lam_x"].value,
                                         dtype=float).reshape(-1)
        if scales is not None:
            d_state, d_r, d_s, d_lam = scales
            Dp = np.diag(d_state)
            Dr = np.diag(d_r)
            values["P"] = Dp @ values["P"] @ Dp
            values["Q"] = Dp @ values["Q"] @ Dp
            values["R"] = Dr @ values["R"] @ Dr
            values["S"] = [np.diag(d_s[l]) @ values["S"][l] @ np.diag(d_s[l])
                           for l in range(len(values["S"]))]
            values["lam"] = d_lam * values["lam"]
            if "lam_x" in values:
                values["lam_x"] = d_lam * values["lam_x"]
        for key in ("P", "Q", "R"):
            values[key] = 0.5 * (values[key] + values[key].T)
        values["S"] = [0.5 * (Si + Si.T) for Si in values["S"]]
        return values

    @staticmethod
    def _scales_from(values):
        """Per-coordinate magnitudes (square roots of diagonals) used to
        re-parameterize the variables to O(1)."""
        d_state = np.sqrt(np.clip(np.maximum(np.abs(np.diag(values["P"])),
                                             np.abs(np.diag(values["Q"]))),
                                  1.0, None))
        d_r = np.sqrt(np.clip(np.abs(np.diag(values["R"])), 1.0, None))
        d_s = [np.sqrt(np.clip(np.abs(np.diag(Si)), 1.0, None))
               for Si in values["S"]]
        d_lam = np.clip(np.abs(values["lam"]), 1.0, None)
        return d_state, d_r, d_s, d_lam

    def _run(self, built, program, solver, opts):
        import cvxpy as cp

        built["rho_sq"].value = program.rho**2
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                built["problem"].solve(solver=solver, **opts)
        except cp.error.SolverError as exc:
            return "failure", None, f"{solver}: {exc}"
        status = built["problem"].status
        if status in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
            values = self._extract(built, program, built.get("scales"))
            return "candidate", values, f"{solver}:{status}"
        if status == cp.INFEASIBLE:
            return "infeasible", None, f"{solver}:{status}"
        return "failure", None, f"{solver}:{status}"

    def solve(self, program, tightened=False):
        """Returns (status, values, detail) with status one of
        'candidate', 'infeasible', 'failure'."""
        entry = self._entry(program)
        details = []

        if not tightened and not entry["prefer_scaled"]:
            status, values, detail = self._run(entry["plain"], program,
                                               self.solver, self.solver_opts)
            if status == "candidate":
                entry["last_values"] = values
                return status, values, detail
            if status == "infeasible":
                return status, None, detail
            details.append(detail)
            entry["prefer_scaled"] = True

        # Rescue path: re-parameterize the variables to O(1) using the
        # freshest magnitude estimate available.
        probe = entry["last_values"]
        if probe is None:
            status, values, detail = self._run(entry["plain"], program,
                                               "SCS", self.probe_opts)
            if status == "candidate":
                probe = values
            details.append(f"probe {detail}")
        if probe is None:
            return "failure", None, "; ".join(details) or "no probe iterate"

        scales = self._scales_from(probe)
        if entry["scaled"] is None or not _scales_close(
                entry["scaled"]["scales"], scales):
            entry["scaled"] = self._build(program, scales=scales)

        opts = dict(self.solver_opts)
        if tightened and self.solver == "CLARABEL":
            opts.update(tol_gap_abs=1e-11, tol_gap_rel=1e-11,
                        tol_feas=1e-11, max_iter=20_000)
        status, values, detail = self._run(entry["scaled"], program,
                                           self.solver, opts)
        details.append(f"scaled {detail}")
        if status == "candidate":
            entry["last_values"] = values
            return status, values, "; ".join(details)
        if status == "infeasible":
            return status, None, "; ".join(details)
        return "failure", None, "; ".join(details)


def verify_certificate(program, values, feas_tol=DEFAULT_FEAS_TOL):
    """Independent eigenvalue residuals of a candidate certificate."""

    def sym_eigs(M):
        return np.linalg.eigvalsh(0.5 * (M + M.T))

    lam_x = values.get("lam_x", values["lam"])
    X = program.X(values["P"], lam_x)
    Y = program.Y(values["Q"], values["R"], values["S"], values["lam"])
    residuals = {
        "lam_max_X": float(sym_eigs(X)[-1]),
        "lam_max_Y": float(sym_eigs(Y)[-1]),
        "lam_min_P": float(sym_eigs(values["P"])[0]),
        "lam_min_Q": float(sym_eigs(values["Q"])[0]),
        "lam_min_R": float(sym_eigs(values["R"])[0]),
        "lam_min_S": float(min(sym_eigs(Si)[0] for Si in values["S"])),
        "lam_min_lambda": float(np.min(values["lam"])),
    }
    eps = program.eps_pd
    ok = (
        residuals["lam_max_X"] <= feas_tol
        and residuals["lam_max_Y"] <= feas_tol
        and residuals["lam_min_P"] >= eps - feas_tol
        and residuals["lam_min_Q"] >= eps - feas_tol
        and residuals["lam_min_R"] >= -feas_tol
        and residuals["lam_min_S"] >= -feas_tol
        and residuals["lam_min_lambda"] >= -feas_tol
    )
    return residuals, bool(ok)


def solve_feasibility(program, backend=None, feas_tol=DEFAULT_FEAS_TOL,
                      tightened=False):
    """Solve one program; accept a certificate only if the independent
    residual verification passes at `feas_tol`."""
    backend = backend or CvxpyBackend()
    status, values, detail = backend.solve(program, tightened=tightened)
    if status == "infeasible":
        return SolveOutcome(status="infeasible", detail=detail)
    if status == "failure":
        return SolveOutcome(status="solver_failure", detail=detail)
    residuals, ok = verify_certificate(program, values, feas_tol=feas_tol)
    if not ok:
        return SolveOutcome(
            status="solver_failure",
            detail=f"residual verification failed ({detail}): {residuals}",
        )
    metadata = dict(program.metadata)
    metadata.update(solver=detail, feas_tol=feas_tol)
    cert = Certificate(
        rho=program.rho,
        P=values["P"],
        Q=values["Q"],
        R=values["R"],
        S=tuple(values["S"]),
        lam=values["lam"],
        lam_consensus=values.get("lam_x"),
        residuals=residuals,
        metadata=metadata,
    )
    return SolveOutcome(status="certificate", certificate=cert, detail=detail)


@dataclass(frozen=True, eq=False)
class RateBound:
    """Outcome of a successful rate bisection."""

    rho_star: float
    rho_lo: float
    rho_hi: float
    certificate: Certificate
    flags: tuple = ()
    n_solves: int = 0

    def iterations_to_eps(self, eps=1e-6):
        """Iteration count for the envelope to shrink by 1/eps."""
        return math.ceil(math.log(1.0 / eps) / math.log(1.0 / self.rho_hi))


@dataclass(frozen=True)
class NoCertificate:
    """Bisection could not certify any rate below one."""

    rho_tried: float
    flags: tuple = ()
    detail: str = ""


def bisect_rate(realization, function_class, network_class,
                rho_range=(0.01, 1.0), bisect_tol=DEFAULT_BISECT_TOL,
                feas_tol=DEFAULT_FEAS_TOL, eps_pd=DEFAULT_EPS_PD,
                backend=None, decouple_lambda=False):
    """Find the tightest certified rate by bisection on rho.

    Starts from rho_hi0 = rho_max - bisect_tol; if that is already
    infeasible, returns NoCertificate.  The lower end starts at 0.5 and
    auto-expands downward while still feasible.  A solver failure is
    retried once tightened, then conservatively treated as infeasible and
    flagged with the rho at which it occurred.
    """
    if not (0.0 < rho_range[0] < rho_range[1] <= 1.0):
        raise ValueError(f"rho_range must be inside (0, 1], got {rho_range}")
    if bisect_tol <= 0:
        raise ValueError("bisect_tol must be positive")
    backend = backend or CvxpyBackend()
    flags = []
    n_solves = 0

    def attempt(rho):
        nonlocal n_solves
        program = assemble_feasibility(
            realization, function_class, network_class, rho,
            eps_pd=eps_pd, decouple_lambda=decouple_lambda,
        )
        n_solves += 1
        out = solve_feasibility(program, backend=backend, feas_tol=feas_tol)
        if out.status == "solver_failure":
            n_solves += 1
            out = solve_feasibility(program, backend=backend,
                                    feas_tol=feas_tol, tightened=True)
            if out.status == "solver_failure":
                flags.append(f"solver_failure_at_rho={rho!r}: {out.detail}")
                return SolveOutcome(status="infeasible", detail=out.detail)
        return out

    rho_min = rho_range[0]
    hi = rho_range[1] - bisect_tol
    out = attempt(hi)
    if out.status != "certificate":
        return NoCertificate(rho_tried=hi, flags=tuple(flags),
                             detail=out.detail or "infeasible at rho_hi0")
    best = out.certificate

    lo = None
    probe = 0.5 if rho_min < 0.5 < hi else rho_min
    while True:
        if probe >= hi:
            lo = rho_min if rho_min < hi else 0.0
            break
        out = attempt(probe)
        if out.status != "certificate":
            lo = probe
            break
        hi, best = probe, out.certificate
        if probe <= rho_min:
            flags.append("rho_min_feasible")
            lo = 0.0
            break
        probe = max(rho_min, probe / 2.0)

    while hi - lo > bisect_tol:
        mid = 0.5 * (hi + lo)
        out = attempt(mid)
        if out.status == "certificate":
            hi, best = mid, out.certificate
        else:
            lo = mid

    # Re-validate the returned certificate at its own rho.
    program = assemble_feasibility(realization, function_class, network_class,
                                   hi, eps_pd=eps_pd,
                                   decouple_lambda=decouple_lambda)
    values = {"P": best.P, "Q": best.Q, "R": best.R, "S": list(best.S),
              "lam": best.lam}
    if best.lam_consensus is not None:
        values["lam_x"] = best.lam_consensus
    _, ok = verify_certificate(program, values, feas_tol=feas_tol)
    if not ok:
        raise SolverFailure("final certificate failed re-validation")

    return RateBound(
        rho_star=hi,
        rho_lo=lo,
        rho_hi=hi,
        certificate=best,
        flags=tuple(flags),
        n_solves=n_solves,
    )


def lyapunov_value(P, Q, xi0):
    """Evaluate the consensus/disagreement Lyapunov function at a stacked
    per-agent state xi0 of shape (n, a, d) or (n, a)."""
    xi = np.asarray(xi0, dtype=float)
    if xi.ndim == 2:
        xi = xi[:, :, None]
    n = xi.shape[0]
    mean = xi.mean(axis=0)
    v = n * float(np.einsum("ad,ab,bd->", mean, P, mean))
    diff = xi - mean
    v += float(np.einsum("nad,ab,nbd->", diff, Q, diff))
    return v


def certificate_gamma(certificate, v0):
    """Envelope constant gamma = sqrt(cond(T) * V(0)).

    `v0` is either the initial Lyapunov value itself or the initial
    aggregated error state (n, a, d), in which case V(0) is evaluated
    with (P, Q) rescaled so min(lam_min(P), lam_min(Q)) = 1 (the
    normalization under which the envelope bound is valid; the LMIs are
    homogeneous, so this is without loss).
    """
    cond = certificate.cond_T()
    if np.isscalar(v0) or np.ndim(v0) == 0:
        value = float(v0)
        if value < 0.0:
            raise NonpositiveV0(f"V(0) = {value} < 0")
        return math.sqrt(cond * value)
    xi = np.asarray(v0, dtype=float)
    lam_min = min(np.linalg.eigvalsh(certificate.P)[0],
                  np.linalg.eigvalsh(certificate.Q)[0])
    scale = 1.0 / lam_min
    value = lyapunov_value(scale * certificate.P, scale * certificate.Q, xi)
    if value <= 0.0:
        if np.linalg.norm(xi) > 0.0:
            raise NonpositiveV0(
                f"V(0) = {value} <= 0 for a nonzero state; certificate invalid"
            )
        return 0.0
    return math.sqrt(cond * value)


@dataclass(frozen=True)
class StepsizeSearch:
    """Record of a logarithmic stepsize search with refinement."""

    alpha: float
    bound: RateBound
    evaluations: tuple  # (alpha, rho_hi or None) in evaluation order


def optimize_stepsize(realization_factory, function_class, network_class,
                      alpha_range=None, grid_points=12, refine_rounds=1,
                      bisect_tol=DEFAULT_BISECT_TOL, feas_tol=DEFAULT_FEAS_TOL,
                      eps_pd=DEFAULT_EPS_PD, backend=None):
    """Grid-optimize the certified rate over the stepsize.

    Evaluates bisect_rate on a logarithmic alpha grid (default spanning
    [1e-4/L, 2/L]; the certifiable window shrinks sharply as sigma and B
    grow, so the default reaches far down), then refines around the best
    point.  Returns the best stepsize with its bound and the full
    evaluation record.
    """
    backend = backend or CvxpyBackend()
    if alpha_range is None:
        alpha_range = (1e-4 / function_class.L, 2.0 / function_class.L)
    evaluations = []
    best = (None, None)  # (alpha, RateBound)

    def evaluate(alpha):
        nonlocal best
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = bisect_rate(
                realization_factory(alpha), function_class, network_class,
                bisect_tol=bisect_tol, feas_tol=feas_tol, eps_pd=eps_pd,
                backend=backend,
            )
        if isinstance(result, RateBound):
            evaluations.append((alpha, result.rho_hi))
            if best[1] is None or result.rho_hi < best[1].rho_hi:
                best = (alpha, result)
        else:
            evaluations.append((alpha, None))

    grid = np.geomspace(alpha_range[0], alpha_range[1], grid_points)
    for alpha in grid:
        evaluate(float(alpha))
    if best[1] is None:
        return None

    step = (alpha_range[1] / alpha_range[0]) ** (1.0 / (grid_points - 1))
    for _ in range(refine_rounds):
        center = best[0]
        fine = np.geomspace(center / step, center * step, grid_points)
        step = step ** (2.0 / (grid_points - 1))
        for alpha in fine:
            if not any(abs(alpha - a) / a < 1e-12 for a, _ in evaluations):
                evaluate(float(alpha))

    return StepsizeSearch(alpha=best[0], bound=best[1],
                          evaluations=tuple(evaluations))
