"""Closed-form tuning rules and order-wise convergence predictors.

The bounds here evaluate big-O expressions with unit constants. They are
order-wise predictors for comparing settings (monotonicity in Q, decay
slopes), not calibrated error estimates.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from delicoco.errors import ConfigurationError, OutsideRegimeWarning
from delicoco.objectives import DistributedObjective, Optimum, centralized_optimum

PREDICTOR_LABEL = "order-wise predictor"


@dataclass(frozen=True)
class ProblemConstants:
    l_avg: float
    l_hat: float
    mu: float
    mu_hat: float
    n: int
    r0: float = 0.0
    d0: float = 0.0
    delta_sq: float = 0.0

    def __post_init__(self):
        if not self.l_hat >= self.l_avg > 0:
            raise ConfigurationError(f"need l_hat >= l_avg > 0, got {self.l_hat}, {self.l_avg}")
        if not 0 < self.mu <= self.l_avg:
            raise ConfigurationError(f"need 0 < mu <= l_avg, got mu={self.mu}")
        if min(self.r0, self.d0, self.delta_sq) < 0:
            raise ConfigurationError("r0, d0 and delta_sq must be nonnegative")

    @property
    def rho_bar(self) -> float:
        return 1.0 - self.mu / (self.n * self.l_hat)

    @property
    def ell(self) -> float:
        return 1.0 - self.mu_hat / self.l_hat


def consensus_lr(delta: float, omega: float, lambda_max_i_minus_w: float) -> float:
    """Consensus step size ``gamma`` guaranteeing the compressed gossip contracts."""
    if delta <= 0:
        raise ConfigurationError("spectral gap is 0: the graph is disconnected, no consensus step size exists")
    if not 0 < delta <= 1 or not 0 < omega <= 1 or not 0 <= lambda_max_i_minus_w <= 2:
        raise ConfigurationError(
            f"need delta, omega in (0, 1] and lambda_max(I-W) in [0, 2]; got {delta}, {omega}, {lambda_max_i_minus_w}"
        )
    sw = math.sqrt(omega)
    den = 16 * delta + delta ** 2 - 8 * delta * sw + (4 + 2 * delta) * lambda_max_i_minus_w ** 2
    return delta * sw / den


def gossip_rate(delta: float, gamma: float) -> float:
    """Per-round contraction factor ``1 - delta gamma / 2``."""
    return 1.0 - delta * gamma / 2.0


def gossip_rate_shorthand(delta: float, omega: float) -> float:
    """The simplified upper bound ``1 - delta^2 sqrt(omega) / 82`` on :func:`gossip_rate`."""
    return 1.0 - delta ** 2 * math.sqrt(omega) / 82.0


def q_min_plc(rho_bar: float, delta: float, gamma: float) -> int:
    """Minimum gossip steps ``ceil(log(rho_bar / 46) / log(1 - delta gamma / 2))``, at least 1.

    Also serves the strongly convex case with ``1 - mu_hat / L_hat`` in place
    of ``rho_bar``.
    """
    if not 0 < rho_bar < 1:
        raise ConfigurationError(f"rho_bar must be in (0, 1), got {rho_bar}")
    h = delta * gamma / 2.0
    if not 0 < h < 1:
        raise ConfigurationError(f"delta*gamma/2 must be in (0, 1), got {h}")
    ratio = math.log(rho_bar / 46.0) / math.log1p(-h)
    # absorb round-off when the ratio is an exact integer
    return max(1, math.ceil(ratio - 1e-12 * abs(ratio)))


class Bound(NamedTuple):
    value: float
    radius_term: float
    rate_term: float
    in_regime: bool
    label: str = PREDICTOR_LABEL


def _regime(q, q0):
    if q <= q0:
        warnings.warn(f"Q={q} <= Q0={q0}: outside the regime where the bound holds", OutsideRegimeWarning, stacklevel=3)
        return False
    return True


def plc_bound(consts: ProblemConstants, delta: float, gamma: float, q: int, t: int) -> Bound:
    """Predicted ``F(X_T) - f*`` under the PL condition (unit constants)."""
    rho = consts.rho_bar
    in_regime = _regime(q, q_min_plc(rho, delta, gamma))
    a = gossip_rate(delta, gamma) ** (q / 2.0)
    radius = consts.delta_sq / (1.0 - rho) * a
    coef = 1.0 + consts.l_avg / (consts.mu * rho) * (1.0 + a)
    rate = coef * consts.r0 * rho ** t
    return Bound(radius + rate, radius, rate, in_regime)


def sc_bound(consts: ProblemConstants, delta: float, gamma: float, q: int, t: int) -> Bound:
    """Predicted ``||X_T - X*||^2`` under strong convexity (unit constants)."""
    ell = consts.ell
    if consts.l_hat <= consts.mu_hat:
        raise ConfigurationError("need l_hat > mu_hat for the strongly convex bound")
    in_regime = _regime(q, q_min_plc(ell, delta, gamma))
    a = gossip_rate(delta, gamma) ** q
    radius = consts.delta_sq / consts.mu_hat ** 2 * a
    coef = 1.0 + t / (ell ** 2 * (consts.l_hat - consts.mu_hat)) * a
    rate = coef * consts.d0 * ell ** t
    return Bound(radius + rate, radius, rate, in_regime)


def budget_tradeoff(delta: float, omega_base: float, q_base: int, c: int) -> float:
    """``g(c)``: gossip decay over one iteration when ``Q = c q_base`` and ``omega = omega_base / c``."""
    if c < 1 or int(c) != c:
        raise ConfigurationError(f"c must be a positive integer, got {c}")
    if not 0 < omega_base / c <= 1:
        raise ConfigurationError(f"omega_base / c must be in (0, 1], got {omega_base / c}")
    return (1.0 - delta ** 2 * math.sqrt(omega_base) / (82.0 * math.sqrt(c))) ** (c * q_base / 2.0)


class HeterogeneityDiag(NamedTuple):
    value: float
    approximate: bool


def delta_sq_diag(obj: DistributedObjective, x_star, converged: bool = True) -> HeterogeneityDiag:
    """``sum_i ||grad f_i(x*)||^2`` at a single optimum; flagged approximate if GD did not converge."""
    x_star = np.asarray(x_star, dtype=np.float64)
    total = 0.0
    for i in range(obj.n):
        g = obj.local_grad(i, x_star)
        total += float(g @ g)
    return HeterogeneityDiag(total, not converged)


def estimate_constants(obj: DistributedObjective, opt: Optimum | None = None) -> ProblemConstants:
    """Problem constants from data, with ``X_0 = 0``.

    ``mu`` is the node average of the per-node strong convexity estimates,
    floored at a tiny positive value so the predictors stay defined.
    """
    if opt is None:
        opt = centralized_optimum(obj)
    ls, mus = obj.smoothness()
    floor = 1e-12 * float(ls.max())
    mus = np.maximum(mus, floor)
    d0 = obj.n * float(opt.x_star @ opt.x_star)
    r0 = max(obj.global_loss(np.zeros(obj.d)) - opt.f_star, 0.0)
    return ProblemConstants(
        l_avg=float(ls.mean()),
        l_hat=float(ls.max()),
        mu=float(min(mus.mean(), ls.mean())),
        mu_hat=float(mus.min()),
        n=obj.n,
        r0=r0,
        d0=d0,
        delta_sq=delta_sq_diag(obj, opt.x_star, opt.converged).value,
    )
