"""Equations of state for the bulk reservoirs and the interfaces.

Bulk phases use a linear pressure law p(rho) = p_ref + c2 (rho - rho_ref).
Its free energy follows from p = rho^2 psi'(rho):

    psi(rho) = a (1/rho_ref - 1/rho) + c2 ln(rho/rho_ref),   a = p_ref - c2 rho_ref
    mu(rho)  = psi + p/rho = p_ref/rho_ref + c2 ln(rho/rho_ref)

Interfaces use a linear tension law gamma(rho_s) = gamma0 (1 - rho_s/rho_star),
with surface pressure p_s = -gamma and

    psi_s(rho_s) = gamma0/rho_s + (gamma0/rho_star) ln(rho_s/rho_star) + C
    e(rho_s)     = rho_s psi_s = gamma0 + (gamma0/rho_star) rho_s ln(rho_s/rho_star) + C rho_s
    mu_s(rho_s)  = (gamma0/rho_star) (ln(rho_s/rho_star) + 1) + C

so e(0+) = gamma0: a clean interface still stores energy gamma0 per unit area.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import NonPositiveDensity, TensionDepleted

#: Largest admissible fraction of rho_star before the tension is considered depleted.
ADMISSIBLE_FRACTION = 1.0 - 1e-6


@dataclass(frozen=True)
class BulkEos:
    rho_ref: float
    p_ref: float
    c2: float

    def __post_init__(self):
        if not (self.c2 > 0):
            raise ValueError("c2 must be positive")
        if not (self.rho_ref > 0):
            raise ValueError("rho_ref must be positive")

    def pressure(self, rho):
        return self.p_ref + self.c2 * (rho - self.rho_ref)

    def psi(self, rho):
        a = self.p_ref - self.c2 * self.rho_ref
        return a * (1.0 / self.rho_ref - 1.0 / rho) + self.c2 * np.log(rho / self.rho_ref)

    def mu(self, rho):
        return self.p_ref / self.rho_ref + self.c2 * np.log(rho / self.rho_ref)

    def check(self, rho):
        if np.any(np.asarray(rho) <= 0) or not np.all(np.isfinite(rho)):
            raise NonPositiveDensity(f"bulk density must be positive, got {rho}")


@dataclass(frozen=True)
class SurfaceEos:
    gamma0: float
    rho_star: float
    psi_offset: float = 0.0

    def __post_init__(self):
        if not (self.gamma0 > 0):
            raise ValueError("gamma0 must be positive")
        if not (self.rho_star > 0):
            raise ValueError("rho_star must be positive")

    @property
    def slope(self):
        """gamma0 / rho_star, the magnitude of d gamma / d rho_s."""
        return self.gamma0 / self.rho_star

    def check(self, rho_s):
        rho_s = np.asarray(rho_s)
        if np.any(rho_s < 0) or not np.all(np.isfinite(rho_s)):
            raise NonPositiveDensity("surface density must be nonnegative")
        if np.any(rho_s >= self.rho_star * ADMISSIBLE_FRACTION):
            raise TensionDepleted(
                f"surface density reached {float(np.max(rho_s)):.6g} >= rho_star "
                f"{self.rho_star:.6g} (tension would be nonpositive)"
            )

    def gamma(self, rho_s):
        return self.gamma0 * (1.0 - rho_s / self.rho_star)

    def energy_density(self, rho_s):
        """rho_s * psi_s(rho_s), continuous at rho_s = 0 with value gamma0."""
        rho_s = np.asarray(rho_s, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            xlogx = np.where(rho_s > 0, rho_s * np.log(rho_s / self.rho_star), 0.0)
        out = self.gamma0 + self.slope * xlogx + self.psi_offset * rho_s
        return out if out.ndim else float(out)

    def psi(self, rho_s):
        return self.gamma0 / rho_s + self.slope * np.log(rho_s / self.rho_star) + self.psi_offset

    def mu(self, rho_s):
        """Surface chemical potential; -inf on a clean interface."""
        rho_s = np.asarray(rho_s, dtype=float)
        with np.errstate(divide="ignore"):
            out = self.slope * (np.log(rho_s / self.rho_star) + 1.0) + self.psi_offset
        return out if out.ndim else float(out)


Eos = Union[BulkEos, SurfaceEos]


@dataclass(frozen=True)
class BulkState:
    p: float
    psi: float
    mu: float


@dataclass(frozen=True)
class SurfaceState:
    gamma: float
    p_s: float
    psi_s: float
    mu_s: float
    energy_density: float


def bulk_eval(eos: BulkEos, rho: float) -> BulkState:
    if not rho > 0:
        raise NonPositiveDensity(f"bulk density must be positive, got {rho}")
    p = float(eos.pressure(rho))
    psi = float(eos.psi(rho))
    # mu assembled from psi and p so that mu = psi + p/rho holds to rounding
    return BulkState(p=p, psi=psi, mu=psi + p / rho)


def surface_eval(eos: SurfaceEos, rho_s: float) -> SurfaceState:
    eos.check(rho_s)
    gamma = float(eos.gamma(rho_s))
    e = float(eos.energy_density(rho_s))
    if rho_s == 0:
        return SurfaceState(gamma=gamma, p_s=-gamma, psi_s=math.inf, mu_s=-math.inf, energy_density=e)
    psi_s = e / rho_s
    return SurfaceState(gamma=gamma, p_s=-gamma, psi_s=psi_s, mu_s=psi_s - gamma / rho_s, energy_density=e)


def gibbs_duhem_residual(eos: Eos, rho: float, step: float) -> float:
    """|rho^2 dpsi/drho - p| with dpsi/drho by central differences.

    For an interface p is the surface pressure -gamma.
    """
    if not step > 0:
        raise ValueError("step must be positive")
    if isinstance(eos, SurfaceEos):
        eos.check(rho)
        eos.check(rho - step)
        eos.check(rho + step)
        if rho - step <= 0:
            raise NonPositiveDensity("finite-difference stencil leaves the admissible range")
        dpsi = (eos.psi(rho + step) - eos.psi(rho - step)) / (2 * step)
        return float(abs(rho * rho * dpsi + eos.gamma(rho)))
    if rho - step <= 0:
        raise NonPositiveDensity("finite-difference stencil leaves the admissible range")
    dpsi = (eos.psi(rho + step) - eos.psi(rho - step)) / (2 * step)
    return float(abs(rho * rho * dpsi - eos.pressure(rho)))


@dataclass(frozen=True)
class EosScan:
    n: int
    worst_residual: float  # max of |GD residual| / max(1, |p|)
    monotone_mu: bool
    lo: float
    hi: float


def sample_range(eos: Eos):
    """Default sampling interval for scans: a decade either side of rho_ref for bulk
    phases, (1e-3, 0.99) rho_star for interfaces."""
    if isinstance(eos, SurfaceEos):
        return 1e-3 * eos.rho_star, 0.99 * eos.rho_star
    return 0.1 * eos.rho_ref, 10.0 * eos.rho_ref


def eos_scan(eos: Eos, n: int = 100, seed: int = 0, rel_step: float = 1e-5) -> EosScan:
    """Gibbs-Duhem residuals at ``n`` log-uniform random densities plus a monotonicity
    scan of mu over a sorted grid of the same size."""
    lo, hi = sample_range(eos)
    rng = np.random.default_rng(seed)
    rho = np.exp(rng.uniform(math.log(lo), math.log(hi), n))
    worst = 0.0
    for r in rho:
        p = -float(eos.gamma(r)) if isinstance(eos, SurfaceEos) else float(eos.pressure(r))
        worst = max(worst, gibbs_duhem_residual(eos, float(r), rel_step * float(r)) / max(1.0, abs(p)))
    grid = np.geomspace(lo, hi, n)
    mu = np.asarray(eos.mu(grid), dtype=float)
    return EosScan(n, worst, bool(np.all(np.diff(mu) > 0)), lo, hi)
