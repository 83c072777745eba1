"""Independent high-precision evaluation of the discrete available energy.

Written directly from the energy definition (bulk reservoirs, interface segments,
axisymmetric line term) with mpmath arithmetic, sharing no numerics with the
package; only the loop bookkeeping (which curve pieces bound which phase) is
taken from the state.
"""

import mpmath as mp
import numpy as np

from triline.geometry import AXISYMMETRIC

mp.mp.dps = 40


def _psi_bulk(eos, rho):
    a = mp.mpf(eos.p_ref) - mp.mpf(eos.c2) * mp.mpf(eos.rho_ref)
    return a * (1 / mp.mpf(eos.rho_ref) - 1 / rho) + mp.mpf(eos.c2) * mp.log(rho / mp.mpf(eos.rho_ref))


def _e_surf(eos, rho):
    g0, rs = mp.mpf(eos.gamma0), mp.mpf(eos.rho_star)
    if rho == 0:
        return g0
    return g0 + (g0 / rs) * rho * mp.log(rho / rs) + mp.mpf(eos.psi_offset) * rho


def _seg_measure(a, b, axi):
    ln = mp.sqrt((b[0] - a[0]) ** 2 + (b[1] - a[1]) ** 2)
    return mp.pi * (a[0] + b[0]) * ln if axi else ln


def _loop_measure(pts, axi):
    tot = mp.mpf(0)
    n = len(pts)
    for i in range(n):
        a, b = pts[i], pts[(i + 1) % n]
        if axi:
            # volume swept by the region: closed-loop integral of pi r^2 dz, exact per edge
            tot += mp.pi * (b[1] - a[1]) * (a[0] ** 2 + a[0] * b[0] + b[0] ** 2) / 3
        else:
            tot += (a[0] * b[1] - b[0] * a[1]) / 2
    return tot


def energy(state, model, markers=None, junctions=None):
    """E_a with optional replacement marker arrays (lists of mp points per curve)."""
    axi = state.mode == AXISYMMETRIC
    pts = markers or {cid: [(mp.mpf(float(x)), mp.mpf(float(y))) for x, y in c.markers] for cid, c in state.curves.items()}
    E = mp.mpf(0)
    for cid, c in state.curves.items():
        p = pts[cid]
        n = len(p)
        nseg = n if c.closed else n - 1
        eos = model.surface_eos[cid]
        for s in range(nseg):
            A = _seg_measure(p[s], p[(s + 1) % n], axi)
            E += A * _e_surf(eos, mp.mpf(float(c.segment_mass[s])) / A)
    for label, ph in state.phases.items():
        vol = mp.mpf(0)
        for loop in state.topology.regions[label]:
            lp = []
            for item in loop:
                if item[0] == "point":
                    lp.append((mp.mpf(float(item[1][0])), mp.mpf(float(item[1][1]))))
                    continue
                _, cid, sgn = item
                c = state.curves[cid]
                seq = list(pts[cid]) + ([pts[cid][0]] if c.closed else [])
                lp.extend(seq if sgn > 0 else seq[::-1])
            vol += _loop_measure(lp, axi)
        M = mp.mpf(float(ph.mass))
        E += M * _psi_bulk(ph.eos, M / vol)
    if axi:
        for jid, j in state.junctions.items():
            r = junctions[jid][0] if junctions else mp.mpf(float(j.position[0]))
            E += mp.mpf(j.line_tension) * 2 * mp.pi * r
    return E


def fd_forces(state, model, rel_step=1e-7):
    """-dE/dx per marker by central differences in 40-digit arithmetic, step rel_step * h."""
    base = {cid: [(mp.mpf(float(x)), mp.mpf(float(y))) for x, y in c.markers] for cid, c in state.curves.items()}
    h = min(float(np.min(c.lengths())) for c in state.curves.values())
    d = mp.mpf(rel_step * h)
    out = {}
    for cid, c in state.curves.items():
        F = np.zeros((c.n_markers, 2))
        for i in range(c.n_markers):
            for ax in range(2):
                vals = []
                for sgn in (1, -1):
                    pts = {k: list(v) for k, v in base.items()}
                    q = list(pts[cid][i])
                    q[ax] += sgn * d
                    pts[cid][i] = tuple(q)
                    vals.append(energy(state, model, pts))
                F[i, ax] = float(-(vals[0] - vals[1]) / (2 * d))
        out[cid] = F
    return out


def fd_junction_forces(state, model, rel_step=1e-7):
    """-dE/d(junction position), moving the junction together with its attached curve ends."""
    base = {cid: [(mp.mpf(float(x)), mp.mpf(float(y))) for x, y in c.markers] for cid, c in state.curves.items()}
    h = min(float(np.min(c.lengths())) for c in state.curves.values())
    d = mp.mpf(rel_step * h)
    out = {}
    for jid, j in state.junctions.items():
        F = np.zeros(2)
        for ax in range(2):
            vals = []
            for sgn in (1, -1):
                pts = {k: list(v) for k, v in base.items()}
                for cid, which in j.incident:
                    i = 0 if which == "start" else len(pts[cid]) - 1
                    q = list(pts[cid][i])
                    q[ax] += sgn * d
                    pts[cid][i] = tuple(q)
                pos = [mp.mpf(float(j.position[0])), mp.mpf(float(j.position[1]))]
                pos[ax] += sgn * d
                vals.append(energy(state, model, pts, {jid: pos}))
            F[ax] = float(-(vals[0] - vals[1]) / (2 * d))
        out[jid] = F
    return out


def neumann_angles(gammas, coarse=0.5, fine=0.002):
    """Sector angles (deg) between tension directions 0-1, 1-2, 2-0 at force balance.

    Plain grid search for the two free directions (direction 0 fixed along x),
    refined once around the coarse optimum.
    """
    g = np.asarray(gammas, dtype=float)

    def search(c1, c2, half, step):
        a1 = np.radians(np.arange(c1 - half, c1 + half + step / 2, step))
        a2 = np.radians(np.arange(c2 - half, c2 + half + step / 2, step))
        A1, A2 = np.meshgrid(a1, a2, indexing="ij")
        fx = g[0] + g[1] * np.cos(A1) + g[2] * np.cos(A2)
        fy = g[1] * np.sin(A1) + g[2] * np.sin(A2)
        k = np.unravel_index(np.argmin(fx * fx + fy * fy), A1.shape)
        return np.degrees(A1[k]), np.degrees(A2[k])

    p1, p2 = search(180.0, 180.0, 180.0, coarse)
    p1, p2 = search(p1, p2, 2 * coarse, fine)
    d = np.radians([0.0, p1, p2])
    t = np.c_[np.cos(d), np.sin(d)]
    return np.array([np.degrees(np.arccos(np.clip(t[k] @ t[(k + 1) % 3], -1, 1))) for k in range(3)])
