"""Equilibrium diagnostics: junction angles, pressure jumps, force balance, affinities."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from .dynamics import exchange_rates, compute_forces
from .energy import Evaluation, evaluate
from .geometry import junction_angles, junction_tangent_directions, lumped_measures, signed_curvatures
from .state import Model, SimState


@dataclass
class LaplaceCheck:
    curve: str
    jump: float  # p_plus - p_minus
    gamma_kappa: float  # measure-weighted mean of gamma * kappa over interior markers
    rel_error: float


def young_laplace(state: SimState, model: Model, ev: Optional[Evaluation] = None) -> List[LaplaceCheck]:
    """Compare the bulk pressure jump across every curve with gamma * kappa.

    kappa is taken with respect to the left normal, so on a counter-clockwise loop
    whose plus side is the inside both sides of the comparison are positive.
    End markers of open curves are left out: their one-sided stencils are not
    curvature approximations.
    """
    ev = ev or evaluate(state, model, with_grad=False)
    out = []
    for cid, c in state.curves.items():
        ce = ev.curves[cid]
        kappa = signed_curvatures(c)
        lump = lumped_measures(ce.measures, c.n_markers, c.closed)
        gam_m = lumped_measures(ce.measures * ce.gamma, c.n_markers, c.closed) / lump
        sl = slice(None) if c.closed else slice(1, -1)
        w = lump[sl]
        gk = float(np.sum(w * gam_m[sl] * kappa[sl]) / np.sum(w))
        jump = ev.p[c.side_plus] - ev.p[c.side_minus]
        rel = abs(jump - gk) / abs(gk) if gk != 0 else math.inf
        out.append(LaplaceCheck(cid, jump, gk, rel))
    return out


@dataclass
class JunctionCheck:
    junction: str
    angles: np.ndarray
    kirchhoff: np.ndarray  # net capillary force per unit line measure
    gammas: np.ndarray

    @property
    def kirchhoff_rel(self) -> float:
        return float(np.hypot(*self.kirchhoff) / np.max(self.gammas))


def junction_checks(state: SimState, model: Model, ev: Optional[Evaluation] = None) -> List[JunctionCheck]:
    ev = ev or evaluate(state, model)
    forces = compute_forces(state, model, ev)
    out = []
    for jid, j in state.junctions.items():
        gam = np.array([ev.curves[cid].gamma[0 if w == "start" else -1] for cid, w in j.incident])
        out.append(JunctionCheck(jid, junction_angles(j, state.curves), forces.kirchhoff[jid], gam))
    return out


def contact_angle(state: SimState, junction: str, curve: str, wall_direction) -> float:
    """Angle (degrees) between a curve leaving the junction and a wall direction."""
    j = state.junctions[junction]
    k = [cid for cid, _ in j.incident].index(curve)
    t = junction_tangent_directions(j, state.curves)[k]
    d = np.asarray(wall_direction, dtype=float)
    c = float(t @ d) / math.hypot(*d)
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


@dataclass
class Affinities:
    sorption: Dict[str, float]  # "curve.side" -> max |mu_bulk - mu_s|
    junction: Dict[str, float]  # junction -> max |mu_s,k - mu_C|

    @property
    def worst(self) -> float:
        vals = list(self.sorption.values()) + list(self.junction.values())
        return max(vals) if vals else 0.0


def chemical_affinities(state: SimState, model: Model, ev: Optional[Evaluation] = None) -> Affinities:
    """Chemical-potential mismatches on every sorbing side and at every transferring junction."""
    ev = ev or evaluate(state, model, with_grad=False)
    sorp = {}
    for (cid, side) in model.sorption:
        c = state.curves[cid]
        phase = c.side_plus if side == "plus" else c.side_minus
        ce = ev.curves[cid]
        live = ce.rho_s > 0
        sorp[f"{cid}.{side}"] = float(np.max(np.abs(ev.mu[phase] - ce.mu_s[live]))) if np.any(live) else math.inf
    flux = exchange_rates(state, model, ev)
    junc = {}
    for jid, mu_c in flux.mu_c.items():
        j = state.junctions[jid]
        mus = [ev.curves[cid].mu_s[0 if w == "start" else -1] for cid, w in j.incident]
        junc[jid] = float(np.max(np.abs(np.asarray(mus) - mu_c)))
    return Affinities(sorp, junc)
