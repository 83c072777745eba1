"""Discrete available energy, its exact gradient, and the dissipation audit.

The discrete energy of a state is

    E = sum_k M_k psi_k(M_k / V_k)                    (bulk reservoirs)
      + sum_segments A_s e(m_s / A_s)                 (interfaces, e = rho_s psi_s)
      + gamma_C * |triple line|                       (2 pi r per junction, axisymmetric only)

where V_k are region measures and A_s segment measures. Kinetic energies are
identically zero in the overdamped reduction but are carried as explicit fields.
Since d(A e(m/A))/dA = gamma and d(M psi(M/V))/dV = -p, the marker gradient is
sum_s gamma_s dA_s/dx - sum_k p_k dV_k/dx + gamma_C d|line|/dx.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .errors import NonPositiveDensity
from .geometry import (
    AXISYMMETRIC,
    region_measures,
    segment_measure_gradients,
    segment_measures,
    scatter_segments,
)
from .state import Model, SimState

CHANNELS = ("D_normal", "D_slip", "D_sorption", "D_junction")


@dataclass
class EnergyLedger:
    t: float
    E_bulk: float
    E_interface: float
    E_line: float
    E_kin_bulk: float = 0.0
    E_kin_interface: float = 0.0
    D_normal: float = 0.0
    D_slip: float = 0.0
    D_sorption: float = 0.0
    D_junction: float = 0.0

    @property
    def E_total(self) -> float:
        return self.E_bulk + self.E_interface + self.E_line + self.E_kin_bulk + self.E_kin_interface

    @property
    def D_total(self) -> float:
        return self.D_normal + self.D_slip + self.D_sorption + self.D_junction

    def channels(self) -> Dict[str, float]:
        return {c: getattr(self, c) for c in CHANNELS}


@dataclass
class CurveEval:
    measures: np.ndarray
    ga: np.ndarray
    gb: np.ndarray
    rho_s: np.ndarray
    gamma: np.ndarray
    mu_s: np.ndarray
    energy: float


@dataclass
class Evaluation:
    """Everything derived from one state: energies, thermodynamic fields and the gradient."""

    ledger: EnergyLedger
    curves: Dict[str, CurveEval]
    region_measure: Dict[str, float]
    rho: Dict[str, float]
    p: Dict[str, float]
    mu: Dict[str, float]
    grad: Optional[Dict[str, np.ndarray]] = None
    line_grad: Optional[Dict[str, np.ndarray]] = None


def evaluate(state: SimState, model: Model, with_grad: bool = True) -> Evaluation:
    mode = state.mode
    cev: Dict[str, CurveEval] = {}
    E_int = 0.0
    for cid, c in state.curves.items():
        eos = model.surface_eos[cid]
        if with_grad:
            meas, ga, gb = segment_measure_gradients(c.markers, mode, c.closed)
        else:
            meas, ga, gb = segment_measures(c.markers, mode, c.closed), None, None
        rho_s = c.segment_mass / meas
        eos.check(rho_s)
        e = eos.energy_density(rho_s)
        energy = float(np.sum(meas * e))
        E_int += energy
        cev[cid] = CurveEval(meas, ga, gb, rho_s, eos.gamma(rho_s), eos.mu(rho_s), energy)

    if with_grad:
        vol, vgrad = region_measures(state.topology, state.curves, with_grad=True)
    else:
        vol, vgrad = region_measures(state.topology, state.curves), None
    rho, p, mu = {}, {}, {}
    E_bulk = 0.0
    for label, ph in state.phases.items():
        v = vol[label]
        if not v > 0 or not ph.mass > 0:
            raise NonPositiveDensity(f"phase {label}: measure {v:.6g}, mass {ph.mass:.6g}")
        r = ph.mass / v
        rho[label] = r
        p[label] = float(ph.eos.pressure(r))
        mu[label] = float(ph.eos.mu(r))
        E_bulk += ph.mass * float(ph.eos.psi(r))

    E_line = 0.0
    line_grad = {}
    for jid, j in state.junctions.items():
        if mode == AXISYMMETRIC:
            E_line += j.line_tension * 2 * math.pi * j.position[0]
            line_grad[jid] = np.array([2 * math.pi * j.line_tension, 0.0])
        else:
            line_grad[jid] = np.zeros(2)

    ledger = EnergyLedger(t=state.t, E_bulk=E_bulk, E_interface=E_int, E_line=E_line)
    ev = Evaluation(ledger, cev, vol, rho, p, mu, line_grad=line_grad)
    if with_grad:
        grad = {}
        for cid, c in state.curves.items():
            ce = cev[cid]
            g = scatter_segments(ce.gamma[:, None] * ce.ga, ce.gamma[:, None] * ce.gb, c.n_markers, c.closed)
            for label in state.phases:
                gv = vgrad[label].get(cid)
                if gv is not None:
                    g -= p[label] * gv
            grad[cid] = g
        ev.grad = grad
    return ev


def total_available_energy(state: SimState, model: Model) -> EnergyLedger:
    return evaluate(state, model, with_grad=False).ledger


def dissipation_budget(state: SimState, model: Model, velocities, fluxes, ev: Optional[Evaluation] = None) -> Dict[str, float]:
    """Per-channel dissipation rates from velocities and mass fluxes of one step.

    ``velocities`` provides per-marker ``normal``, ``tangential``, ``friction`` and
    ``lumped`` arrays (lumped measure zero for markers whose motion dissipates
    elsewhere) and ``junction[jid]``; ``fluxes`` provides ``sorption[(cid, side)]`` (per-segment J) and
    ``junction[jid]`` (three rates per unit line measure).
    """
    if ev is None:
        ev = evaluate(state, model, with_grad=False)
    m_n = model.mobility.m_n
    d_norm = 0.0
    d_slip = 0.0
    for cid in state.curves:
        lump = velocities.lumped[cid]
        d_norm += float(np.sum(lump * velocities.normal[cid] ** 2)) / m_n
        d_slip += float(np.sum(lump * velocities.friction[cid] * velocities.tangential[cid] ** 2))
    d_sorp = 0.0
    for (cid, side), J in fluxes.sorption.items():
        c = state.curves[cid]
        phase = c.side_plus if side == "plus" else c.side_minus
        ce = ev.curves[cid]
        active = ce.rho_s > 0
        aff = np.where(active, ev.mu[phase] - np.where(active, ce.mu_s, 0.0), 0.0)
        d_sorp += float(np.sum(aff * J * ce.measures))
    d_junc = 0.0
    for jid, j in state.junctions.items():
        lm = 2 * math.pi * j.position[0] if state.mode == AXISYMMETRIC else 1.0
        mdot = fluxes.junction.get(jid)
        if mdot is not None and j.closure == "linear":
            d_junc += lm * float(np.sum(np.asarray(mdot) ** 2)) / j.transfer_coefficient
        vc = velocities.junction.get(jid)
        if vc is not None and j.mobility > 0:
            d_junc += lm * float(vc @ vc) / j.mobility
    return {"D_normal": d_norm, "D_slip": d_slip, "D_sorption": d_sorp, "D_junction": d_junc}


@dataclass
class DecayReport:
    monotone: bool
    worst_violation: float  # largest relative energy increase over one step (<= 0 when none)
    worst_step: int
    budget_mismatch: float  # max |dE/dt + sum D|
    strict: bool
    min_channel: float
    n_rows: int

    def lines(self):
        yield f"monotone={self.monotone} worst_violation={self.worst_violation:.3e} at step {self.worst_step}"
        yield f"budget_mismatch={self.budget_mismatch:.3e} min_channel={self.min_channel:.3e} strict={self.strict}"


def decay_certificate(rows: Sequence[dict], rel_tol: float = 1e-9, speed_threshold: float = 0.0) -> DecayReport:
    """Check the Lyapunov property on a time series.

    Each row needs ``t``, ``E_total``, the four channel columns and ``max_V``; rows
    with ``remeshed`` set start an interval that is excluded from the checks.
    """
    if len(rows) < 3:
        raise ValueError("need at least three ledger rows")
    worst = -math.inf
    worst_step = -1
    mismatch = 0.0
    strict = True
    min_ch = math.inf
    for k, r in enumerate(rows):
        ch = [float(r[c]) for c in CHANNELS]
        min_ch = min(min_ch, min(ch))
        if float(r.get("max_V", 0.0)) > speed_threshold and sum(ch) <= 0:
            strict = False
    for k in range(len(rows) - 1):
        a, b = rows[k], rows[k + 1]
        if int(float(b.get("remeshed", 0))):
            continue
        dE = float(b["E_total"]) - float(a["E_total"])
        dt = float(b["t"]) - float(a["t"])
        rel = dE / max(abs(float(a["E_total"])), 1e-300)
        if rel > worst:
            worst, worst_step = rel, k
        if dt > 0:
            d = sum(float(a[c]) for c in CHANNELS)
            mismatch = max(mismatch, abs(dE / dt + d))
    monotone = worst <= rel_tol and min_ch >= -1e-14
    return DecayReport(monotone, worst, worst_step, mismatch, strict, min_ch, len(rows))


def convergence_order(steps: Sequence[float], errors: Sequence[float]) -> List[float]:
    """Observed orders between successive refinements."""
    out = []
    for (h0, e0), (h1, e1) in zip(zip(steps, errors), zip(steps[1:], errors[1:])):
        out.append(math.log(e0 / e1) / math.log(h0 / h1) if e0 > 0 and e1 > 0 else math.nan)
    return out
