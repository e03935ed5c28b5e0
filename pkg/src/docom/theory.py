"""Step-size bounds and analysis constants for compressed gradient tracking.

All functions are direct evaluations of closed-form expressions in the
problem/graph/compressor constants ``L, rho, delta, omega_bar, n`` and the
algorithm parameters ``eta, gamma, beta``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

__all__ = [
    "gamma_infinity",
    "eta_infinity",
    "beta_bar",
    "c_sigma",
    "c_gbar",
    "safe_step_sizes",
    "TheoryConstants",
    "theory_constants",
    "initial_lyapunov_bound",
    "pl_rate",
    "rate_optimal_schedule",
]


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise ValueError(f"{k} must be > 0, got {v}")


def _check_graph(rho, delta, omega_bar):
    if omega_bar == 0:
        raise ValueError("omega_bar = 0 (single-agent topology); the step-size bounds are undefined")
    _positive(rho=rho, delta=delta, omega_bar=omega_bar)
    if rho > 1 or delta > 1:
        raise ValueError(f"rho and delta must lie in (0, 1], got rho={rho}, delta={delta}")
    if omega_bar < 1:
        warnings.warn(
            f"omega_bar={omega_bar:.4g} < 1: the simplified step-size conditions assume omega_bar in [1, 2]",
            stacklevel=3,
        )


def _gamma_rhs(gamma, rho, delta, omega_bar, n):
    return min(
        1.0 / (4.0 * rho),
        rho * n / (64.0 * omega_bar**2),
        delta / (10.0 * omega_bar),
        delta * rho * math.sqrt(max(0.0, 1.0 - gamma)) / (259.0 * omega_bar**2),
    )


def gamma_infinity(rho, delta, omega_bar, n, tol=1e-12, max_iter=10_000) -> float:
    """Largest ``gamma`` with ``gamma <= min{1/(4 rho), rho n/(64 w^2), delta/(10 w), delta rho sqrt(1-gamma)/(259 w^2)}``.

    The bound depends on ``gamma`` itself through ``sqrt(1 - gamma)``; it is
    resolved by fixed-point iteration from ``gamma = 0``.  The right-hand side
    is non-increasing in ``gamma``, so the fixed point is unique; bisection on
    ``gamma - rhs(gamma)`` is the fallback should the iteration stall.
    """
    _check_graph(rho, delta, omega_bar)
    g = 0.0
    for _ in range(max_iter):
        nxt = _gamma_rhs(g, rho, delta, omega_bar, n)
        if abs(nxt - g) <= tol:
            return nxt
        g = nxt
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid - _gamma_rhs(mid, rho, delta, omega_bar, n) > 0:
            hi = mid
        else:
            lo = mid
    return lo


def eta_infinity(gamma, L, rho, omega_bar, n, beta) -> float:
    """``(gamma/L) min{ sqrt((1-beta)/(beta n)) sqrt(gamma rho^3)/45, rho^2/(240 w) }``."""
    return (gamma / L) * min(
        math.sqrt((1.0 - beta) / (beta * n)) * math.sqrt(gamma * rho**3) / 45.0,
        rho**2 / (240.0 * omega_bar),
    )


def beta_bar(rho, delta, beta, gamma) -> float:
    return min(rho * gamma / 8.0, delta * gamma / 8.0, beta)


def c_sigma(L, rho, delta, omega_bar, n, eta, gamma) -> float:
    return (
        4.0
        + (eta**2 / gamma**3) * 672.0 * L**2 * n / rho**3
        + (eta**2 / gamma) * 6.0 * L**2 * n * rho**4 * delta / (25.0 * omega_bar**2)
        + (eta**2 / gamma**2) * 4.0 * L**2 * n / omega_bar**2
    )


def c_gbar(L, rho, omega_bar, n, beta, gamma) -> float:
    return 8.0 * (1.0 - beta) ** 2 * L**2 * (1.0 - rho * gamma) ** 2 + (L**2 * n / (rho * gamma)) * (
        96.0 + (141.0 / 400.0) * rho**2 / omega_bar**2
    )


def safe_step_sizes(L, rho, delta, omega_bar, n, beta) -> tuple[float, float]:
    """Return ``(eta_max, gamma_max)`` meeting the sufficient step-size conditions.

    ``gamma_max = gamma_infinity(...)``; ``eta_max = min{eta_inf(gamma_max),
    sqrt(beta_bar n / (8 C_gbar))}`` with ``beta_bar`` and ``C_gbar``
    evaluated at ``gamma_max``.
    """
    _positive(L=L, n=n)
    if not 0 < beta < 1:
        raise ValueError(f"beta must be in (0, 1) for the momentum bounds, got {beta}")
    gamma = gamma_infinity(rho, delta, omega_bar, n)
    bb = beta_bar(rho, delta, beta, gamma)
    eta = min(
        eta_infinity(gamma, L, rho, omega_bar, n, beta),
        math.sqrt(bb * n / (8.0 * c_gbar(L, rho, omega_bar, n, beta, gamma))),
    )
    return eta, gamma


@dataclass(frozen=True)
class TheoryConstants:
    L: float
    rho: float
    delta: float
    omega_bar: float
    n: int
    beta: float
    eta: float
    gamma: float
    C_sigma: float
    C_gbar: float
    a: float
    b: float
    c: float
    beta_bar: float


def theory_constants(L, rho, delta, omega_bar, n, beta, eta, gamma) -> TheoryConstants:
    """Evaluate ``C_sigma, C_gbar``, the Lyapunov weights ``a, b, c`` and ``beta_bar``.

    Step sizes above the :func:`safe_step_sizes` bounds only trigger a warning.
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must be in (0, 1), got {gamma}")
    _positive(L=L, n=n, beta=beta)
    if eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _check_graph(rho, delta, omega_bar)
        if beta < 1:
            eta_max, gamma_max = safe_step_sizes(L, rho, delta, omega_bar, n, beta)
        else:
            eta_max = gamma_max = math.inf
    if eta > eta_max or gamma > gamma_max:
        warnings.warn(
            f"step sizes (eta={eta:.3g}, gamma={gamma:.3g}) exceed the safe bounds "
            f"(eta_max={eta_max:.3g}, gamma_max={gamma_max:.3g})",
            stacklevel=2,
        )
    w2 = omega_bar**2
    return TheoryConstants(
        L=L, rho=rho, delta=delta, omega_bar=omega_bar, n=n, beta=beta, eta=eta, gamma=gamma,
        C_sigma=c_sigma(L, rho, delta, omega_bar, n, eta, gamma),
        C_gbar=c_gbar(L, rho, omega_bar, n, beta, gamma),
        a=96.0 * L**2 * eta**2 / (rho**2 * gamma**2),
        b=(eta**2 / (gamma * (1.0 - gamma))) * 3072.0 * w2 * L**2 / (delta * rho**3),
        c=(gamma / (1.0 - gamma)) * 48.0 * L**2 * w2 / (delta * rho),
        beta_bar=beta_bar(rho, delta, beta, gamma),
    )


def initial_lyapunov_bound(k: TheoryConstants, sigma2: float, b0: int, g0_mean_sq: float) -> float:
    """Upper bound on the initial Lyapunov value.

    ``2 sigma^2 / b0 + 192 L^2 n eta^2 G0 / (rho^2 gamma^2 (1-gamma))`` with
    ``G0 = (1/n) sum_i ||g_i^0||^2``.
    """
    return 2.0 * sigma2 / b0 + 192.0 * k.L**2 * k.n * k.eta**2 * g0_mean_sq / (k.rho**2 * k.gamma**2 * (1.0 - k.gamma))


def pl_rate(k: TheoryConstants, mu: float) -> float:
    """Per-iteration contraction ``min{eta mu, beta_bar/2}`` of the PL-case bound."""
    return min(k.eta * mu, k.beta_bar / 2.0)


def rate_optimal_schedule(n, T, L, c_beta=1.0, c_eta=1.0, c_b0=1.0) -> dict:
    """Order-optimal parameter scalings with explicit leading multipliers.

    ``beta = c_beta n^(1/3)/T^(2/3)``, ``eta = c_eta n^(2/3)/(L T^(1/3))``,
    ``b0 = ceil(c_b0 T^(1/3)/n^(2/3))``.
    """
    beta = min(1.0, c_beta * n ** (1 / 3) / T ** (2 / 3))
    return {
        "beta": beta,
        "eta": c_eta * n ** (2 / 3) / (L * T ** (1 / 3)),
        "b0": max(1, math.ceil(c_b0 * T ** (1 / 3) / n ** (2 / 3))),
    }
