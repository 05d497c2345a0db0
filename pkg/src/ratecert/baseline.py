"""Closed-form DIGing baseline stepsize and rate for comparison.

The literature bound for gradient tracking over B-connected graphs takes
the form rho = (1 - alpha*m/1.5)^(1/(2B)), valid for stepsizes up to

    alpha_bar = 1.5 (sqrt(J^2 - (1 - delta^2) J) - delta J)^2 / (m J (J+1)^2)

with J = 3 kappa B^2 (1 + 4 sqrt(n kappa)); alpha_bar is also the
stepsize that optimizes the bound.  The symbol delta is identified with
the spectral gap sigma (the only quantity in scope it can denote).  The
bound depends on the number of agents n through J and is flagged vacuous
whenever it yields no valid rate or the admissible-stepsize premise
fails.
"""

import math
from dataclasses import dataclass

__all__ = ["BaselineResult", "baseline_stepsize", "baseline_rate_given_alpha"]


@dataclass(frozen=True)
class BaselineResult:
    J: float
    alpha: float
    rho: float
    n: int
    vacuous: bool
    note: str = "delta in the stepsize formula identified with sigma"


def baseline_stepsize(m, L, n, B, sigma):
    """Optimal baseline stepsize and its rate for (m, L, n, B, sigma)."""
    if m <= 0 or L < m:
        raise ValueError(f"need 0 < m <= L, got m={m}, L={L}")
    if n < 1 or int(n) != n:
        raise ValueError(f"need integer n >= 1, got {n}")
    if B < 1 or int(B) != B:
        raise ValueError(f"need integer B >= 1, got {B}")
    if not (0.0 <= sigma < 1.0):
        raise ValueError(f"need 0 <= sigma < 1, got {sigma}")
    kappa = L / m
    J = 3.0 * kappa * B * B * (1.0 + 4.0 * math.sqrt(n * kappa))
    delta = sigma
    radicand = J * J - (1.0 - delta * delta) * J
    if radicand < 0.0:
        return BaselineResult(J=J, alpha=float("nan"), rho=float("nan"),
                              n=int(n), vacuous=True)
    alpha = 1.5 * (math.sqrt(radicand) - delta * J) ** 2 / (m * J * (J + 1.0) ** 2)
    base = 1.0 - alpha * m / 1.5
    if alpha <= 0.0 or not (0.0 < base < 1.0):
        return BaselineResult(J=J, alpha=alpha, rho=float("nan"),
                              n=int(n), vacuous=True)
    rho = base ** (1.0 / (2.0 * B))
    return BaselineResult(J=J, alpha=alpha, rho=rho, n=int(n), vacuous=False)


def baseline_rate_given_alpha(alpha, m, B, alpha_max=None):
    """Baseline rate at a given stepsize, or None when vacuous.

    Vacuous when 1 - alpha*m/1.5 leaves (0, 1), and also when `alpha_max`
    (the admissible stepsize from baseline_stepsize) is supplied and
    exceeded, since the rate formula's premise then fails.
    """
    if alpha <= 0.0:
        raise ValueError(f"need alpha > 0, got {alpha}")
    if alpha_max is not None and alpha > alpha_max:
        return None
    base = 1.0 - alpha * m / 1.5
    if not (0.0 < base < 1.0):
        return None
    return base ** (1.0 / (2.0 * B))
