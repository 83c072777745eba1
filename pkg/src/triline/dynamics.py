"""Overdamped time evolution of marker interfaces, junctions and reservoirs.

Every moving degree of freedom follows mobility times the exact negative
gradient of the discrete energy, so in continuous time
dE/dt = -(sum of the dissipation channels) holds identically. Degrees of freedom:

* free markers: normal mobility m_n, tangential mobility 1/(beta+ + beta-);
* markers on a box wall slide along it (corners are fixed);
* curves with a ``pinned_direction`` are straight and slaved: their interior
  markers follow the ends affinely;
* junctions move with v = m_C F / |line|, optionally along a slide direction.

Mass moves through sorption (bulk reservoir <-> segment) and junction transfer
(end segment <-> end segment). Masses ride with the segments, so advection is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from .energy import CHANNELS, Evaluation, dissipation_budget, evaluate
from .errors import DegenerateJunction, StepRejected, TrilineError
from .exchange import junction_solve, kirchhoff_residual, sorption_flux, sorption_rates
from .geometry import (
    BOUNDARY,
    JUNCTION,
    MarkerCurve,
    end_index,
    junction_angles,
    junction_circle_curvature,
    junction_conormals,
    junction_line_measure,
    lumped_measures,
    marker_normals,
    remesh,
)
from .state import Model, SimState

MIN_JUNCTION_ANGLE = 5.0


@dataclass
class Forces:
    markers: Dict[str, np.ndarray]
    junction: Dict[str, np.ndarray]  # energy-consistent total force on each junction
    kirchhoff: Dict[str, np.ndarray]  # per unit line measure, from end-segment conormals
    line: Dict[str, np.ndarray]  # line-tension force on each junction


@dataclass
class Velocities:
    markers: Dict[str, np.ndarray]
    normal: Dict[str, np.ndarray]
    tangential: Dict[str, np.ndarray]
    friction: Dict[str, np.ndarray]  # tangential friction coefficient per marker
    lumped: Dict[str, np.ndarray]  # lumped measure of markers that dissipate through the interface
    junction: Dict[str, np.ndarray]


@dataclass
class Fluxes:
    sorption: Dict[Tuple[str, str], np.ndarray] = field(default_factory=dict)  # J per segment
    junction: Dict[str, np.ndarray] = field(default_factory=dict)  # mdot per unit line measure
    mu_c: Dict[str, float] = field(default_factory=dict)
    max_affinity: float = 0.0


def compute_forces(state: SimState, model: Model, ev: Optional[Evaluation] = None) -> Forces:
    if ev is None or ev.grad is None:
        ev = evaluate(state, model, with_grad=True)
    markers = {cid: -g for cid, g in ev.grad.items()}
    junction = {}
    kirch = {}
    line = {}
    for jid, j in state.junctions.items():
        line[jid] = -ev.line_grad[jid]
        f = line[jid].copy()
        for cid, which in j.incident:
            f += markers[cid][end_index(state.curves[cid], which)[0]]
        junction[jid] = f
        gam = [ev.curves[cid].gamma[0 if w == "start" else -1] for cid, w in j.incident]
        kirch[jid] = kirchhoff_residual(
            gam, junction_conormals(j, state.curves), j.line_tension, junction_circle_curvature(j, state.mode)
        )
    return Forces(markers, junction, kirch, line)


def _walls(state: SimState, p) -> List[np.ndarray]:
    x0, y0, x1, y1 = state.topology.box
    tol = 1e-9 * max(x1 - x0, y1 - y0)
    out = []
    if abs(p[0] - x0) <= tol or abs(p[0] - x1) <= tol:
        out.append(np.array([0.0, 1.0]))
    if abs(p[1] - y0) <= tol or abs(p[1] - y1) <= tol:
        out.append(np.array([1.0, 0.0]))
    return out


def _constraint(state: SimState, curve: MarkerCurve, which: str) -> Optional[np.ndarray]:
    """Allowed direction for a boundary end; None when fixed."""
    p = curve.markers[0 if which == "start" else -1]
    walls = _walls(state, p)
    if len(walls) != 1 or curve.pinned_direction is not None:
        return None
    return walls[0]


def _slaved_weights(curve: MarkerCurve) -> np.ndarray:
    s = np.concatenate([[0.0], np.cumsum(curve.lengths())])
    return s / s[-1]


def velocities(state: SimState, model: Model, forces: Forces) -> Velocities:
    mob = model.mobility
    m_n = mob.m_n
    vel, vn, vt, fr, lump_out = {}, {}, {}, {}, {}
    # slaved curves hand their interior forces to their ends first
    F = {cid: f.copy() for cid, f in forces.markers.items()}
    lam = {}
    for cid, c in state.curves.items():
        if c.pinned_direction is not None:
            w = _slaved_weights(c)
            lam[cid] = w
            inner = F[cid][1:-1]
            F[cid][0] += ((1 - w[1:-1])[:, None] * inner).sum(axis=0)
            F[cid][-1] += (w[1:-1][:, None] * inner).sum(axis=0)
            F[cid][1:-1] = 0.0

    vj = {}
    for jid, j in state.junctions.items():
        f = forces.line[jid].copy()
        for cid, which in j.incident:
            f = f + F[cid][0 if which == "start" else -1]
        lm = junction_line_measure(j, state.mode)
        if j.mobility <= 0:
            v = np.zeros(2)
        elif j.slide_direction is not None:
            d = np.asarray(j.slide_direction, dtype=float)
            d = d / np.hypot(*d)
            v = j.mobility * (f @ d) / lm * d
        else:
            v = j.mobility * f / lm
        vj[jid] = v

    for cid, c in state.curves.items():
        n = c.n_markers
        f = F[cid]
        nrm = marker_normals(c)
        tau = np.stack([nrm[:, 1], -nrm[:, 0]], axis=1)
        lump = lumped_measures(c.measures(), n, c.closed)
        slip = model.slip.get(cid)
        m_t = 1.0 / slip.total if (mob.tangential and slip is not None and slip.total > 0) else 0.0
        b = np.full(n, slip.total if m_t > 0 else 1.0 / m_n)
        fn = np.einsum("ij,ij->i", f, nrm)
        ft = np.einsum("ij,ij->i", f, tau)
        v = (m_n * fn[:, None] * nrm + m_t * ft[:, None] * tau) / lump[:, None]
        active = np.ones(n, dtype=bool)
        if not c.closed:
            for which, ep in (("start", c.start), ("end", c.end)):
                i = 0 if which == "start" else n - 1
                if ep.kind == JUNCTION:
                    v[i] = vj[ep.junction]
                    active[i] = False
                elif ep.kind == BOUNDARY:
                    d = _constraint(state, c, which)
                    if d is None:
                        v[i] = 0.0
                        active[i] = False
                    else:
                        dn, dt_ = d @ nrm[i], d @ tau[i]
                        w = dn * dn / m_n + dt_ * dt_ * b[i]
                        v[i] = (f[i] @ d) / (w * lump[i]) * d
                elif c.pinned_direction is not None:
                    v[i] = 0.0
                    active[i] = False
        if cid in lam:
            w = lam[cid]
            v[1:-1] = (1 - w[1:-1])[:, None] * v[0] + w[1:-1][:, None] * v[-1]
            active[1:-1] = False
        vel[cid] = v
        vn[cid] = np.einsum("ij,ij->i", v, nrm)
        vt[cid] = np.einsum("ij,ij->i", v, tau)
        fr[cid] = b
        lump_out[cid] = np.where(active, lump, 0.0)
    return Velocities(vel, vn, vt, fr, lump_out, vj)


def exchange_rates(state: SimState, model: Model, ev: Evaluation) -> Fluxes:
    out = Fluxes()
    worst = 0.0
    for (cid, side), params in model.sorption.items():
        c = state.curves[cid]
        phase = c.side_plus if side == "plus" else c.side_minus
        ce = ev.curves[cid]
        if params.include_kinetic:
            J = np.array([
                sorption_flux(params, ev.mu[phase], float(m), float(r), ev.rho[phase]).J
                for m, r in zip(ce.mu_s, ce.rho_s)
            ])
        else:
            J, _ = sorption_rates(params, ev.mu[phase], ce.mu_s, ce.rho_s)
        out.sorption[(cid, side)] = J
        live = ce.rho_s > 0
        if np.any(live):
            worst = max(worst, float(np.max(np.abs(ev.mu[phase] - ce.mu_s[live]))))
    for jid, j in state.junctions.items():
        closure = model.junction_closure(j)
        if closure is None:
            continue
        mus, rhos = [], []
        for cid, which in j.incident:
            k = 0 if which == "start" else -1
            mus.append(ev.curves[cid].mu_s[k])
            rhos.append(ev.curves[cid].rho_s[k])
        if not np.all(np.isfinite(mus)):
            # a clean end segment has mu_s = -inf; transfer toward it only
            mus = np.where(np.isfinite(mus), mus, np.min(np.asarray(mus)[np.isfinite(mus)], initial=0.0) - 50.0)
        res = junction_solve(closure, mus, rhos)
        out.junction[jid] = res.mdot
        out.mu_c[jid] = res.mu_c
        worst = max(worst, float(np.max(np.abs(np.asarray(mus) - res.mu_c))))
    out.max_affinity = worst
    return out


def stable_dt(state: SimState, model: Model, ev: Evaluation) -> float:
    """Largest explicit step: the curvature-flow bound cfl * h^2 / (m_n gamma_max), tightened
    by the tangential, junction and mass-exchange stiffnesses when those are active."""
    mob = model.mobility
    cfl = mob.cfl_safety
    bound = math.inf
    h_all = math.inf
    g_all = 0.0
    for cid, c in state.curves.items():
        ce = ev.curves[cid]
        eos = model.surface_eos[cid]
        h = float(np.min(c.lengths()))
        g = float(np.max(ce.gamma))
        h_all = min(h_all, h)
        g_all = max(g_all, g)
        if c.pinned_direction is not None:
            continue
        stiff = mob.m_n * g
        slip = model.slip.get(cid)
        if mob.tangential and slip is not None and slip.total > 0:
            stiff = max(stiff, eos.slope * float(np.max(ce.rho_s)) / slip.total)
        bound = min(bound, cfl * h * h / stiff)
    for jid, j in state.junctions.items():
        if j.mobility > 0:
            gsum = sum(float(ev.curves[cid].gamma[0 if w == "start" else -1]) for cid, w in j.incident)
            bound = min(bound, cfl * h_all / (j.mobility * gsum))
        if j.closure == "linear":
            lm = junction_line_measure(j, state.mode)
            for cid, which in j.incident:
                m_end = float(state.curves[cid].segment_mass[0 if which == "start" else -1])
                if m_end > 0:
                    bound = min(bound, cfl * m_end / (j.transfer_coefficient * lm * model.surface_eos[cid].slope))
    for (cid, side), params in model.sorption.items():
        bound = min(bound, cfl * params.a_sigma / (params.k_de * model.surface_eos[cid].slope))
    return bound


def advance_surface_density(curve: MarkerCurve, velocities: np.ndarray, fluxes: np.ndarray, dt: float,
                            end_transfer: Tuple[float, float] = (0.0, 0.0)) -> Tuple[MarkerCurve, np.ndarray]:
    """Move the markers and update segment masses.

    ``fluxes`` is the sorption mass added per segment over the step (already
    multiplied by measure and dt, already capped); ``end_transfer`` the mass added
    to the first and last segment by junction transfer. Returns the new curve and
    the per-segment mass change (the donors' bookkeeping uses it).
    """
    out = curve.copy()
    if dt == 0:
        return out, np.zeros(curve.n_segments)
    out.markers = curve.markers + dt * np.asarray(velocities)
    dm = np.array(fluxes, dtype=float, copy=True)
    dm[0] += end_transfer[0]
    dm[-1] += end_transfer[1]
    out.segment_mass = curve.segment_mass + dm
    neg = out.segment_mass < 0
    if np.any(neg):
        if np.all(out.segment_mass[neg] > -1e-15 * max(1.0, curve.total_mass())):
            out.segment_mass[neg] = 0.0
        else:
            raise AssertionError(f"negative segment mass on curve {curve.id} after capping")
    return out, dm


def _mass_changes(state: SimState, ev: Evaluation, flux: Fluxes, dt: float):
    """Capped per-segment sorption masses and junction end transfers for one step."""
    sorp: Dict[str, np.ndarray] = {cid: np.zeros(c.n_segments) for cid, c in state.curves.items()}
    phase_dm: Dict[str, float] = {p: 0.0 for p in state.phases}
    for (cid, side), J in flux.sorption.items():
        c = state.curves[cid]
        phase = c.side_plus if side == "plus" else c.side_minus
        dm = J * ev.curves[cid].measures * dt
        # desorption cannot remove more than the segment holds (shared between sides)
        dm = np.maximum(dm, -(c.segment_mass + np.minimum(sorp[cid], 0.0)))
        sorp[cid] += dm
        phase_dm[phase] -= float(np.sum(dm))
    ends: Dict[str, List[float]] = {cid: [0.0, 0.0] for cid in state.curves}
    for jid, mdot in flux.junction.items():
        j = state.junctions[jid]
        lm = junction_line_measure(j, state.mode)
        dm = np.asarray(mdot) * lm * dt
        scale = 1.0
        for k, (cid, which) in enumerate(j.incident):
            seg = 0 if which == "start" else -1
            avail = state.curves[cid].segment_mass[seg] + sorp[cid][seg]
            if dm[k] < 0 and -dm[k] > avail:
                scale = min(scale, avail / -dm[k])
        dm = dm * scale
        dm[2] = -(dm[0] + dm[1])
        for k, (cid, which) in enumerate(j.incident):
            ends[cid][0 if which == "start" else 1] += float(dm[k])
    return sorp, ends, phase_dm


def _apply(state: SimState, ev: Evaluation, vel: Velocities, flux: Fluxes, dt: float) -> SimState:
    sorp, ends, phase_dm = _mass_changes(state, ev, flux, dt)
    new = state.copy()
    for cid, c in state.curves.items():
        new.curves[cid], _ = advance_surface_density(c, vel.markers[cid], sorp[cid], dt, tuple(ends[cid]))
    for jid, j in new.junctions.items():
        j.position = state.junctions[jid].position + dt * vel.junction[jid]
    new.attach_junctions()
    for p, dm in phase_dm.items():
        new.phases[p].mass = state.phases[p].mass + dm
    new.t = state.t + dt
    new.step = state.step + 1
    return new


@dataclass
class StepInfo:
    ev: Evaluation
    velocities: Velocities
    fluxes: Fluxes
    channels: Dict[str, float]
    dt: float
    forces: Forces


def rates(state: SimState, model: Model):
    ev = evaluate(state, model, with_grad=True)
    forces = compute_forces(state, model, ev)
    vel = velocities(state, model, forces)
    flux = exchange_rates(state, model, ev)
    return ev, forces, vel, flux


def check_junctions(state: SimState):
    for jid, j in state.junctions.items():
        ang = junction_angles(j, state.curves)
        if np.min(ang) < MIN_JUNCTION_ANGLE:
            raise DegenerateJunction(f"junction {jid}: angle {np.min(ang):.3g} deg below {MIN_JUNCTION_ANGLE}")


def step(state: SimState, model: Model, dt: Optional[float] = None) -> Tuple[SimState, StepInfo]:
    """One explicit step. Returns the new state and the rates evaluated at the old one."""
    mob = model.mobility
    dt = mob.dt if dt is None else dt
    ev, forces, vel, flux = rates(state, model)
    dt_max = stable_dt(state, model, ev)
    if dt > dt_max:
        if not mob.adaptive:
            raise StepRejected(f"dt={dt:.3e} exceeds the stability bound {dt_max:.3e}", dt_max)
        dt = dt_max
    channels = dissipation_budget(state, model, vel, flux, ev)
    if mob.integrator == "rk2":
        half = _apply(state, ev, vel, flux, 0.5 * dt)
        ev2, _, vel2, flux2 = rates(half, model)
        new = _apply(state, ev, vel2, flux2, dt)
    else:
        new = _apply(state, ev, vel, flux, dt)
    check_junctions(new)
    return new, StepInfo(ev, vel, flux, channels, dt, forces)


# --------------------------------------------------------------------------- run loop


@dataclass
class RunSettings:
    t_end: float = 1.0
    max_steps: int = 10**6
    output_every: int = 1
    remesh_every: int = 0
    remesh_h: float = 0.0
    converge_speed: float = 0.0
    converge_affinity: float = math.inf
    min_steps: int = 10


@dataclass
class RunSummary:
    state: SimState
    rows: List[dict]
    converged: bool
    reason: str
    steps: int
    last_info: Optional[StepInfo] = None


def ledger_row(state: SimState, info: StepInfo, remeshed: bool = False) -> dict:
    ev = info.ev
    led = ev.ledger
    row = {
        "t": state.t,
        "E_total": led.E_total,
        "E_bulk": led.E_bulk,
        "E_interface": led.E_interface,
        "E_line": led.E_line,
        "E_kin_bulk": 0.0,
        "E_kin_interface": 0.0,
    }
    row.update(info.channels)
    row["M_total"] = state.total_mass()
    for p, ph in state.phases.items():
        row[f"M_{p}"] = ph.mass
    for jid, j in state.junctions.items():
        ang = junction_angles(j, state.curves)
        for k in range(3):
            row[f"angle_{jid}_{k}"] = float(ang[k])
        row[f"kirchhoff_{jid}"] = float(np.hypot(*info.forces.kirchhoff[jid]))
    speeds = [np.max(np.abs(v)) for v in info.velocities.normal.values()]
    row["max_V"] = float(max(speeds)) if speeds else 0.0
    row["max_affinity"] = info.fluxes.max_affinity
    row["remeshed"] = int(remeshed)
    return row


def max_speed(info: StepInfo) -> float:
    s = 0.0
    for v in info.velocities.markers.values():
        s = max(s, float(np.max(np.hypot(v[:, 0], v[:, 1]))))
    for v in info.velocities.junction.values():
        s = max(s, float(np.hypot(*v)))
    return s


def _remesh_state(state: SimState, h: float) -> SimState:
    new = state.copy()
    for cid, c in state.curves.items():
        new.curves[cid] = remesh(c, h)
    return new


def run(
    state0: SimState,
    model: Model,
    settings: RunSettings,
    on_row: Optional[Callable[[dict], None]] = None,
    on_step: Optional[Callable[[SimState], None]] = None,
    on_error: Optional[Callable[[SimState, Exception], Optional[str]]] = None,
) -> RunSummary:
    """Advance until t_end, max_steps or convergence.

    ``max_steps`` caps the absolute step counter, so a resumed run stops where the
    uninterrupted one would. A row is produced whenever the step counter is a
    multiple of ``output_every``, and once more for the final state.
    ``on_error`` receives the last good state and may return a checkpoint path,
    which is attached to the exception as ``checkpoint``.
    """
    state = state0
    rows: List[dict] = []
    remeshed = False
    info = None
    reason = "t_end"
    converged = False
    n = 0
    end_tol = settings.t_end * (1 - 1e-12)
    try:
        check_junctions(state)
        while True:
            if (settings.remesh_every and settings.remesh_h > 0 and state.step > 0
                    and state.step % settings.remesh_every == 0 and not remeshed):
                state = _remesh_state(state, settings.remesh_h)
                remeshed = True
            if state.t >= end_tol or state.step >= settings.max_steps:
                reason = "t_end" if state.t >= end_tol else "max_steps"
                break
            dt = min(model.mobility.dt, settings.t_end - state.t)
            new, info = step(state, model, dt)
            if state.step % settings.output_every == 0:
                row = ledger_row(state, info, remeshed)
                rows.append(row)
                if on_row:
                    on_row(row)
            remeshed = False
            if (
                n >= settings.min_steps
                and settings.converge_speed > 0
                and max_speed(info) < settings.converge_speed
                and info.fluxes.max_affinity < settings.converge_affinity
            ):
                converged = True
                reason = "converged"
                break
            state = new
            n += 1
            if on_step:
                on_step(state)
        if reason != "converged":
            ev, forces, vel, flux = rates(state, model)
            info = StepInfo(ev, vel, flux, dissipation_budget(state, model, vel, flux, ev), 0.0, forces)
            row = ledger_row(state, info, remeshed)
            rows.append(row)
            if on_row:
                on_row(row)
    except TrilineError as exc:
        path = on_error(state, exc) if on_error else None
        exc.checkpoint = path
        raise
    return RunSummary(state, rows, converged, reason, n, info)
