"""Transfer closures: bulk-interface sorption, Marangoni slip, and mass transfer
across a triple junction.

Sign conventions: a positive sorption flux ``J`` adds mass to the interface; a
positive junction rate ``mdot[k]`` adds mass to curve ``k`` at its junction end.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ClosureSolveFailed, SlipDegenerate


@dataclass(frozen=True)
class SorptionParams:
    a_sigma: float
    k_de: float
    include_kinetic: bool = False

    def __post_init__(self):
        if not (self.a_sigma > 0 and self.k_de > 0):
            raise ValueError("a_sigma and k_de must be positive")


@dataclass(frozen=True)
class SlipParams:
    beta_plus: float
    beta_minus: float

    @property
    def total(self) -> float:
        return self.beta_plus + self.beta_minus


@dataclass(frozen=True)
class JunctionClosure:
    mode: str = "linear"  # "linear" | "ideal"
    L: float = 1.0
    newton_tol: float = 1e-12
    max_iter: int = 50

    def __post_init__(self):
        if self.mode not in ("linear", "ideal"):
            raise ValueError(f"unknown junction closure {self.mode!r}")
        if self.mode == "linear" and not self.L > 0:
            raise ValueError("linear junction closure needs L > 0")


@dataclass(frozen=True)
class SorptionResult:
    J: float
    dissipation_rate: float


@dataclass(frozen=True)
class JunctionResult:
    mdot: np.ndarray
    mu_c: float
    dissipation_rate: float


def sorption_rates(params: SorptionParams, mu_bulk, mu_surf, rho_s):
    """Vectorised kinetic-free closure: J = k_de rho_s (exp((mu - mu_s)/a) - 1).

    Returns (J, dissipation rate per unit measure). A clean interface (rho_s = 0)
    neither adsorbs nor desorbs.
    """
    rho_s = np.asarray(rho_s, dtype=float)
    clean = rho_s <= 0
    with np.errstate(invalid="ignore", over="ignore"):
        aff = np.where(clean, 0.0, mu_bulk - mu_surf)
        J = params.k_de * rho_s * np.expm1(aff / params.a_sigma)
    J = np.where(clean, 0.0, J)
    if not np.all(np.isfinite(J)):
        raise ClosureSolveFailed("sorption flux overflow", {"affinity_max": float(np.max(np.abs(aff)))})
    return J, aff * J


def sorption_flux(params: SorptionParams, mu_bulk: float, mu_surf: float, rho_s: float, rho_bulk: float) -> SorptionResult:
    if rho_s < 0 or not rho_bulk > 0:
        raise ValueError("need rho_s >= 0 and rho_bulk > 0")
    if rho_s == 0:
        return SorptionResult(0.0, 0.0)
    aff0 = mu_bulk - mu_surf
    if not params.include_kinetic:
        J, d = sorption_rates(params, mu_bulk, mu_surf, rho_s)
        return SorptionResult(float(J), float(d))
    # implicit in J: the kinetic contribution (J/rho_bulk)^2/2 enters the affinity
    a, k = params.a_sigma, params.k_de
    J = float(sorption_rates(params, mu_bulk, mu_surf, rho_s)[0])

    def residual(j):
        aff = aff0 + 0.5 * (j / rho_bulk) ** 2
        try:
            return j - k * rho_s * math.expm1(aff / a), aff
        except OverflowError:
            return -math.inf, aff

    r, aff = residual(J)
    for _ in range(100):
        if not math.isfinite(r):
            break
        if abs(r) <= 1e-13 * max(1.0, abs(J)):
            return SorptionResult(J, aff * J)
        try:
            dr = 1.0 - k * rho_s * math.exp(aff / a) * (J / rho_bulk**2) / a
        except OverflowError:
            break
        if dr == 0 or not math.isfinite(dr):
            break
        delta = -r / dr
        lam = 1.0
        while lam > 1e-8:
            r_new, aff_new = residual(J + lam * delta)
            if math.isfinite(r_new) and abs(r_new) < abs(r):
                break
            lam *= 0.5
        else:
            break
        J, r, aff = J + lam * delta, r_new, aff_new
    raise ClosureSolveFailed(
        "sorption Newton iteration did not converge",
        {"affinity": aff0, "last_J": J, "residual": r},
    )


def slip_velocity(params: SlipParams, dgamma_ds: float, tangent) -> np.ndarray:
    """Tangential interface velocity balancing the Marangoni force against slip friction."""
    beta = params.total
    if not beta > 0:
        raise SlipDegenerate("beta_plus + beta_minus must be positive")
    return (dgamma_ds / beta) * np.asarray(tangent, dtype=float)


def slip_dissipation(params: SlipParams, v_tangential) -> float:
    v = np.asarray(v_tangential, dtype=float)
    return float(params.total * (v @ v))


def junction_solve(closure: JunctionClosure, mu_surf: Sequence[float], rho_surf: Sequence[float]) -> JunctionResult:
    mu = np.asarray(mu_surf, dtype=float)
    rho = np.asarray(rho_surf, dtype=float)
    if mu.shape != (3,) or rho.shape != (3,):
        raise ValueError("junction_solve expects three values per argument")
    if closure.mode == "linear":
        if np.any(rho < 0):
            raise ValueError("surface densities must be nonnegative")
        mu_c = float(np.mean(mu))
        mdot = -closure.L * (mu - mu_c)
        # exact balance: the last rate closes the sum
        mdot[2] = -(mdot[0] + mdot[1])
        return JunctionResult(mdot, mu_c, float(closure.L * np.sum((mu - mu_c) ** 2)))
    return _ideal_solve(closure, mu, rho)


def _ideal_solve(closure: JunctionClosure, mu: np.ndarray, rho: np.ndarray) -> JunctionResult:
    if np.any(rho <= 0):
        raise ClosureSolveFailed("ideal junction closure needs positive surface densities", {"rho": rho.tolist()})
    spread = float(np.max(mu) - np.min(mu))
    if spread <= closure.newton_tol:
        return JunctionResult(np.zeros(3), float(np.max(mu)), 0.0)

    # mdot_k = s_k rho_k sqrt(2 (mu_c - mu_k)); find mu_c >= max(mu) with sum mdot = 0
    def g(mu_c, signs):
        return float(np.sum(signs * rho * np.sqrt(2.0 * np.maximum(mu_c - mu, 0.0))))

    preferred = np.where(mu < np.mean(mu), 1.0, -1.0)
    patterns = [preferred] + [np.array(s, dtype=float) for s in itertools.product((1.0, -1.0), repeat=3)]
    lo = float(np.max(mu))
    for signs in patterns:
        if abs(np.sum(signs)) == 3:
            continue
        hi = lo + spread
        g_lo = g(lo, signs)
        g_hi = g(hi, signs)
        for _ in range(60):
            if g_lo * g_hi <= 0:
                break
            hi = lo + 2 * (hi - lo)
            g_hi = g(hi, signs)
        if g_lo * g_hi > 0:
            continue
        a, b = lo, hi
        for _ in range(200):
            m = 0.5 * (a + b)
            if g(a, signs) * g(m, signs) <= 0:
                b = m
            else:
                a = m
            if b - a <= 1e-15 * max(1.0, abs(b)):
                break
        mu_c = 0.5 * (a + b)
        mdot = signs * rho * np.sqrt(2.0 * np.maximum(mu_c - mu, 0.0))
        mdot, mu_c = _ideal_newton(closure, mu, rho, mdot, mu_c)
        return JunctionResult(mdot, mu_c, 0.0)
    raise ClosureSolveFailed(
        "ideal junction system has no real solution",
        {"affinities": (mu - np.mean(mu)).tolist(), "rho": rho.tolist()},
    )


def ideal_residual(mu, rho, mdot, mu_c) -> np.ndarray:
    return np.concatenate([[np.sum(mdot)], mu - mu_c + 0.5 * (mdot / rho) ** 2])


def _ideal_newton(closure, mu, rho, mdot, mu_c):
    x = np.append(mdot, mu_c)
    for _ in range(closure.max_iter):
        r = ideal_residual(mu, rho, x[:3], x[3])
        if np.max(np.abs(r)) <= closure.newton_tol:
            return x[:3], float(x[3])
        jac = np.zeros((4, 4))
        jac[0, :3] = 1.0
        jac[1:, :3] = np.diag(x[:3] / rho**2)
        jac[1:, 3] = -1.0
        try:
            x = x - np.linalg.solve(jac, r)
        except np.linalg.LinAlgError as exc:
            raise ClosureSolveFailed("singular Jacobian in ideal junction solve", {"x": x.tolist()}) from exc
    r = ideal_residual(mu, rho, x[:3], x[3])
    if np.max(np.abs(r)) <= closure.newton_tol:
        return x[:3], float(x[3])
    raise ClosureSolveFailed("ideal junction Newton stalled", {"residual": r.tolist()})


def kirchhoff_residual(gammas, conormals, line_tension: float, junction_curvature) -> np.ndarray:
    """Net capillary force on the junction, -sum_k gamma_k N^k + gamma_C kappa_C.

    Each interface pulls the junction into itself (against its outer conormal);
    line tension pulls along the triple-line curvature vector. The vector vanishes
    exactly when the Kirchhoff balance sum_k gamma_k N^k = gamma_C kappa_C holds.
    """
    g = np.asarray(gammas, dtype=float)
    N = np.asarray(conormals, dtype=float)
    return -(g[:, None] * N).sum(axis=0) + line_tension * np.asarray(junction_curvature, dtype=float)


def neumann_angles(gammas) -> np.ndarray:
    """Angles (degrees) between conormals N^i and N^j, ordered (01, 12, 20), that balance
    sum_k gamma_k N^k = 0, from the law of cosines."""
    g = np.asarray(gammas, dtype=float)
    out = np.empty(3)
    for k in range(3):
        i, j, m = k, (k + 1) % 3, (k + 2) % 3
        c = (g[m] ** 2 - g[i] ** 2 - g[j] ** 2) / (2 * g[i] * g[j])
        if not -1 <= c <= 1:
            raise ValueError(f"tensions {g.tolist()} violate the triangle inequality")
        out[k] = math.degrees(math.acos(c))
    return out
