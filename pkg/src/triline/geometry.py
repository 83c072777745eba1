"""Marker-chain interfaces, triple junctions and phase regions.

Points are stored as ``(n, 2)`` arrays holding ``(x, y)`` in planar mode or
``(r, z)`` in axisymmetric mode. The unit normal of a segment is the left
normal of the traversal direction and points from ``side_minus`` into
``side_plus``.

The "measure" of a segment is its length (planar, per unit depth) or the area
of the frustum it sweeps around the axis (axisymmetric). Curvature vectors are
defined variationally as minus the gradient of the total measure with respect
to a marker, divided by the lumped marker measure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import CurveTooShort, DegenerateGeometry, TopologyError

PLANAR = "planar"
AXISYMMETRIC = "axisymmetric"
MODES = (PLANAR, AXISYMMETRIC)

FREE = "free"
BOUNDARY = "boundary"
JUNCTION = "junction"


@dataclass(frozen=True)
class Endpoint:
    kind: str = FREE
    junction: Optional[str] = None

    def __str__(self):
        return f"junction:{self.junction}" if self.kind == JUNCTION else self.kind

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        text = text.strip()
        if text.startswith("junction:"):
            return cls(JUNCTION, text.split(":", 1)[1].strip())
        if text in (FREE, BOUNDARY):
            return cls(text)
        raise ValueError(f"unknown endpoint {text!r}")


@dataclass
class MarkerCurve:
    id: str
    markers: np.ndarray
    segment_mass: np.ndarray
    side_minus: str
    side_plus: str
    start: Endpoint = Endpoint()
    end: Endpoint = Endpoint()
    mode: str = PLANAR
    closed: bool = False
    pinned_direction: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        self.markers = np.asarray(self.markers, dtype=float)
        self.segment_mass = np.asarray(self.segment_mass, dtype=float)
        if self.markers.ndim != 2 or self.markers.shape[1] != 2:
            raise ValueError("markers must have shape (n, 2)")
        if self.segment_mass.shape != (self.n_segments,):
            raise ValueError(
                f"curve {self.id}: expected {self.n_segments} segment masses, "
                f"got {self.segment_mass.shape}"
            )

    @property
    def n_markers(self) -> int:
        return len(self.markers)

    @property
    def n_segments(self) -> int:
        return len(self.markers) if self.closed else len(self.markers) - 1

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Start and end points of every segment."""
        a = self.markers
        b = np.roll(a, -1, axis=0) if self.closed else a[1:]
        return (a if self.closed else a[:-1]), b

    def lengths(self) -> np.ndarray:
        a, b = self.edges()
        return np.hypot(*(b - a).T)

    def measures(self) -> np.ndarray:
        return segment_measures(self.markers, self.mode, self.closed)

    def density(self) -> np.ndarray:
        return self.segment_mass / self.measures()

    def total_mass(self) -> float:
        return float(np.sum(self.segment_mass))

    def copy(self) -> "MarkerCurve":
        return replace(self, markers=self.markers.copy(), segment_mass=self.segment_mass.copy())

    def reversed(self) -> "MarkerCurve":
        """Same interface traversed backwards, sides swapped so n is unchanged."""
        if self.closed:
            markers = np.concatenate([self.markers[:1], self.markers[:0:-1]])
            mass = self.segment_mass[::-1].copy()
        else:
            markers = self.markers[::-1].copy()
            mass = self.segment_mass[::-1].copy()
        return replace(
            self,
            markers=markers,
            segment_mass=mass,
            side_minus=self.side_plus,
            side_plus=self.side_minus,
            start=self.end,
            end=self.start,
        )

    def validate(self):
        seg = self.lengths()
        if self.n_markers < 3:
            raise DegenerateGeometry(f"curve {self.id} needs at least 3 markers")
        if np.any(seg <= 0):
            raise DegenerateGeometry(f"curve {self.id} has coincident consecutive markers")
        if np.any(self.segment_mass < 0):
            raise DegenerateGeometry(f"curve {self.id} has negative segment mass")
        if self.mode == AXISYMMETRIC and np.any(self.markers[:, 0] < -1e-14):
            raise DegenerateGeometry(f"curve {self.id} has markers with r < 0")
        if _self_intersects(self.markers, self.closed):
            raise DegenerateGeometry(f"curve {self.id} self-intersects")


def _self_intersects(p: np.ndarray, closed: bool) -> bool:
    a = p if closed else p[:-1]
    b = np.roll(p, -1, axis=0) if closed else p[1:]
    m = len(a)
    if m < 3:
        return False
    # bounding-box prefilter, then exact orientation tests
    lo = np.minimum(a, b)
    hi = np.maximum(a, b)
    for i in range(m):
        overlap = np.all((lo <= hi[i]) & (hi >= lo[i]), axis=1)
        overlap[max(0, i - 1): i + 2] = False
        if closed:
            overlap[(i - 1) % m] = False
            overlap[(i + 1) % m] = False
        for j in np.nonzero(overlap)[0]:
            if j <= i:
                continue
            if _segments_cross(a[i], b[i], a[j], b[j]):
                return True
    return False


def _cross2(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _segments_cross(p1, p2, q1, q2) -> bool:
    d1 = _cross2(q2 - q1, p1 - q1)
    d2 = _cross2(q2 - q1, p2 - q1)
    d3 = _cross2(p2 - p1, q1 - p1)
    d4 = _cross2(p2 - p1, q2 - p1)
    return (d1 * d2 < 0) and (d3 * d4 < 0)


def left_normal(t: np.ndarray) -> np.ndarray:
    return np.stack([-t[..., 1], t[..., 0]], axis=-1)


def segment_measures(points: np.ndarray, mode: str, closed: bool = False) -> np.ndarray:
    a = points if closed else points[:-1]
    b = np.roll(points, -1, axis=0) if closed else points[1:]
    length = np.hypot(*(b - a).T)
    if mode == AXISYMMETRIC:
        return math.pi * (a[:, 0] + b[:, 0]) * length
    return length


def segment_measure_gradients(points: np.ndarray, mode: str, closed: bool = False):
    """Measures and their gradients w.r.t. the start and end point of each segment."""
    a = points if closed else points[:-1]
    b = np.roll(points, -1, axis=0) if closed else points[1:]
    d = b - a
    length = np.hypot(d[:, 0], d[:, 1])
    if np.any(length == 0):
        raise DegenerateGeometry("coincident consecutive markers")
    t = d / length[:, None]
    if mode == AXISYMMETRIC:
        rsum = a[:, 0] + b[:, 0]
        meas = math.pi * rsum * length
        er = np.zeros_like(t)
        er[:, 0] = length
        ga = math.pi * (er - rsum[:, None] * t)
        gb = math.pi * (er + rsum[:, None] * t)
        return meas, ga, gb
    return length, -t, t


def scatter_segments(ga: np.ndarray, gb: np.ndarray, n: int, closed: bool) -> np.ndarray:
    """Sum per-segment start/end contributions onto markers."""
    out = np.zeros((n, ga.shape[1]) if ga.ndim == 2 else n)
    if closed:
        out += ga
        out += np.roll(gb, 1, axis=0)
    else:
        out[:-1] += ga
        out[1:] += gb
    return out


def lumped_measures(meas: np.ndarray, n: int, closed: bool) -> np.ndarray:
    return 0.5 * scatter_segments(meas, meas, n, closed)


def marker_normals(curve: MarkerCurve) -> np.ndarray:
    """Unit normal per marker: normalised sum of the adjacent segment normals."""
    a, b = curve.edges()
    d = b - a
    t = d / np.hypot(d[:, 0], d[:, 1])[:, None]
    nseg = left_normal(t)
    nm = scatter_segments(nseg, nseg, curve.n_markers, curve.closed)
    norm = np.hypot(nm[:, 0], nm[:, 1])
    bad = norm < 1e-12
    if np.any(bad):
        # hairpin: fall back to the normal of the preceding segment
        idx = np.nonzero(bad)[0]
        nm[idx] = nseg[np.minimum(idx, len(nseg) - 1)]
        norm[idx] = 1.0
    return nm / norm[:, None]


def curvature_vectors(curve: MarkerCurve) -> np.ndarray:
    """Variational curvature vector (kappa * n) at every marker."""
    meas, ga, gb = segment_measure_gradients(curve.markers, curve.mode, curve.closed)
    grad = scatter_segments(ga, gb, curve.n_markers, curve.closed)
    lump = lumped_measures(meas, curve.n_markers, curve.closed)
    return -grad / lump[:, None]


def curvature_normal(curve: MarkerCurve, index: int) -> np.ndarray:
    """Curvature vector at one marker; end markers use the one-sided stencil."""
    n = curve.n_markers
    if not -n <= index < n:
        raise IndexError(index)
    index %= n
    if curve.closed:
        ids = [(index - 1) % n, index, (index + 1) % n]
    else:
        ids = [i for i in (index - 1, index, index + 1) if 0 <= i < n]
    pts = curve.markers[ids]
    if np.any(np.hypot(*np.diff(pts, axis=0).T) == 0):
        raise DegenerateGeometry(f"coincident markers around index {index} of curve {curve.id}")
    meas, ga, gb = segment_measure_gradients(pts, curve.mode, False)
    grad = scatter_segments(ga, gb, len(pts), False)
    lump = lumped_measures(meas, len(pts), False)
    k = ids.index(index)
    return -grad[k] / lump[k]


def signed_curvatures(curve: MarkerCurve) -> np.ndarray:
    """kappa = (curvature vector) . n, i.e. div_Sigma(-n); negative on a circle with outward n."""
    return np.einsum("ij,ij->i", curvature_vectors(curve), marker_normals(curve))


# --------------------------------------------------------------------------- junctions


@dataclass
class TripleJunction:
    id: str
    position: np.ndarray
    incident: List[Tuple[str, str]]  # (curve id, "start" | "end")
    line_tension: float = 0.0
    mobility: float = 1.0
    transfer_coefficient: float = 1.0
    closure: str = "linear"  # linear | ideal | none
    slide_direction: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        if len(self.incident) != 3:
            raise TopologyError(f"junction {self.id} must join exactly three curve ends")

    def copy(self) -> "TripleJunction":
        return replace(self, position=self.position.copy(), incident=list(self.incident))


def end_index(curve: MarkerCurve, which: str) -> Tuple[int, int]:
    """(end marker index, adjacent marker index) for the given end."""
    if which == "start":
        return 0, 1
    if which == "end":
        return curve.n_markers - 1, curve.n_markers - 2
    raise ValueError(which)


def junction_conormals(junction: TripleJunction, curves: Dict[str, MarkerCurve]) -> np.ndarray:
    """Outer conormals N^k: unit tangents at the junction pointing away from each curve."""
    out = np.empty((3, 2))
    for k, (cid, which) in enumerate(junction.incident):
        c = curves[cid]
        i, j = end_index(c, which)
        d = c.markers[i] - c.markers[j]
        nd = math.hypot(d[0], d[1])
        if nd == 0:
            raise DegenerateGeometry(f"zero-length end segment on curve {cid}")
        out[k] = d / nd
    return out


def junction_tangent_directions(junction: TripleJunction, curves: Dict[str, MarkerCurve]) -> np.ndarray:
    """Directions into each curve at the junction, from the circle through the three end markers.

    Second-order accurate in the marker spacing, unlike the end-segment chord.
    """
    out = np.empty((3, 2))
    for k, (cid, which) in enumerate(junction.incident):
        c = curves[cid]
        pts = c.markers if which == "start" else c.markers[::-1]
        p0, p1, p2 = pts[0], pts[1], pts[2]
        out[k] = _circle_tangent(p0, p1, p2)
    return out


def _circle_tangent(p0, p1, p2):
    # tangent at p0 of the circle (or line) through p0, p1, p2, oriented toward p1
    a = p1 - p0
    b = p2 - p0
    den = 2.0 * _cross2(a, b)
    chord = a / math.hypot(*a)
    if abs(den) < 1e-14 * (a @ a) * math.sqrt(b @ b):
        return chord
    aa, bb = a @ a, b @ b
    center = np.array([b[1] * aa - a[1] * bb, a[0] * bb - b[0] * aa]) / den
    radial = -center
    t = left_normal(radial)
    t /= math.hypot(*t)
    return t if t @ a > 0 else -t


def junction_angles(junction: TripleJunction, curves: Dict[str, MarkerCurve], tangents=None) -> np.ndarray:
    """Angle (degrees) between curve k and curve k+1 (mod 3), measured across the sector
    that does not contain the third curve."""
    t = junction_tangent_directions(junction, curves) if tangents is None else tangents
    ang = np.arctan2(t[:, 1], t[:, 0])
    out = np.empty(3)
    for k in range(3):
        i, j, m = k, (k + 1) % 3, (k + 2) % 3
        ccw = _ccw(ang[i], ang[j])
        contains_m = _ccw(ang[i], ang[m]) < ccw
        out[k] = math.degrees(2 * math.pi - ccw if contains_m else ccw)
    return out


def _ccw(a, b):
    return (b - a) % (2 * math.pi)


def junction_circle_curvature(junction: TripleJunction, mode: str) -> np.ndarray:
    """Curvature vector of the triple line: zero for a planar point, 1/r toward the axis otherwise."""
    if mode == AXISYMMETRIC:
        r = junction.position[0]
        if r <= 0:
            raise DegenerateGeometry("junction circle on the axis")
        return np.array([-1.0 / r, 0.0])
    return np.zeros(2)


def junction_line_measure(junction: TripleJunction, mode: str) -> float:
    return 2 * math.pi * junction.position[0] if mode == AXISYMMETRIC else 1.0


# --------------------------------------------------------------------------- regions


@dataclass
class PhaseTopology:
    """Regions are lists of closed loops; a loop is a list of items

    ``("curve", curve_id, +1 | -1)`` (traverse forward or backward) or
    ``("point", (x, y))`` (a fixed boundary corner). Loops are closed by a
    straight edge from the last point back to the first; counter-clockwise
    loops add measure, clockwise loops subtract it.
    """

    phases: List[str]
    regions: Dict[str, List[list]]
    box: Tuple[float, float, float, float]
    mode: str = PLANAR

    def domain_measure(self) -> float:
        x0, y0, x1, y1 = self.box
        if self.mode == AXISYMMETRIC:
            return math.pi * (x1 * x1 - x0 * x0) * (y1 - y0)
        return (x1 - x0) * (y1 - y0)

    def box_corners(self):
        x0, y0, x1, y1 = self.box
        return [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]


def _loop_points(loop, curves):
    pts = []
    owners = []  # (curve id, marker indices) for each chunk, None for fixed points
    for item in loop:
        if item[0] == "point":
            pts.append(np.asarray(item[1], dtype=float)[None, :])
            owners.append(None)
            continue
        _, cid, sgn = item
        c = curves[cid]
        idx = np.arange(c.n_markers)
        if c.closed:
            idx = np.append(idx, 0)
        if sgn < 0:
            idx = idx[::-1]
        pts.append(c.markers[idx])
        owners.append((cid, idx))
    return np.concatenate(pts), owners


def loop_measure(points: np.ndarray, mode: str, with_grad: bool = False):
    a = points
    b = np.roll(points, -1, axis=0)
    cr = a[:, 0] * b[:, 1] - b[:, 0] * a[:, 1]
    if mode == AXISYMMETRIC:
        s = a[:, 0] + b[:, 0]
        val = math.pi / 3.0 * float(np.sum(cr * s))
        if not with_grad:
            return val
        ga = np.stack([b[:, 1] * s + cr, -b[:, 0] * s], axis=1)
        gb = np.stack([-a[:, 1] * s + cr, a[:, 0] * s], axis=1)
        grad = (ga + np.roll(gb, 1, axis=0)) * (math.pi / 3.0)
        return val, grad
    val = 0.5 * float(np.sum(cr))
    if not with_grad:
        return val
    nxt = np.roll(points, -1, axis=0)
    prv = np.roll(points, 1, axis=0)
    grad = 0.5 * np.stack([nxt[:, 1] - prv[:, 1], prv[:, 0] - nxt[:, 0]], axis=1)
    return val, grad


def region_measures(topology: PhaseTopology, curves: Dict[str, MarkerCurve], with_grad: bool = False):
    """Per-phase measure, optionally with d(measure)/d(marker) per curve."""
    meas = {}
    grads = {}
    for phase in topology.phases:
        total = 0.0
        g: Dict[str, np.ndarray] = {}
        for loop in topology.regions[phase]:
            pts, owners = _loop_points(loop, curves)
            if with_grad:
                val, gl = loop_measure(pts, topology.mode, True)
                pos = 0
                for own in owners:
                    if own is None:
                        pos += 1
                        continue
                    cid, idx = own
                    acc = g.get(cid)
                    if acc is None:
                        acc = g[cid] = np.zeros((curves[cid].n_markers, 2))
                    np.add.at(acc, idx, gl[pos: pos + len(idx)])
                    pos += len(idx)
            else:
                val = loop_measure(pts, topology.mode)
            total += val
        meas[phase] = total
        grads[phase] = g
    return (meas, grads) if with_grad else meas


def region_measure(topology: PhaseTopology, curves: Dict[str, MarkerCurve]) -> Dict[str, float]:
    """Checked per-phase measures (area in planar mode, volume in axisymmetric mode)."""
    check_topology(topology, curves)
    meas = region_measures(topology, curves)
    bad = [p for p, v in meas.items() if not v > 0]
    if bad:
        raise TopologyError(f"non-positive region measure for phases {bad}")
    return meas


def check_topology(topology: PhaseTopology, curves: Dict[str, MarkerCurve]):
    problems = []
    for phase, loops in topology.regions.items():
        if phase not in topology.phases:
            problems.append(f"region for unknown phase {phase}")
        for loop in loops:
            for item in loop:
                if item[0] != "curve":
                    continue
                _, cid, sgn = item
                if cid not in curves:
                    problems.append(f"phase {phase} references unknown curve {cid}")
                    continue
                c = curves[cid]
                want = c.side_plus if sgn > 0 else c.side_minus
                if want != phase:
                    problems.append(
                        f"curve {cid} traversed {'forward' if sgn > 0 else 'backward'} in region "
                        f"{phase} but that side is labelled {want}"
                    )
    for cid, c in curves.items():
        for side in (c.side_minus, c.side_plus):
            if side not in topology.phases:
                problems.append(f"curve {cid} borders unknown phase {side}")
    if problems:
        raise TopologyError("; ".join(problems))


# --------------------------------------------------------------------------- remeshing


def remesh(curve: MarkerCurve, h: float) -> MarkerCurve:
    """Redistribute markers to near-uniform arclength spacing ``h`` on the current polyline.

    Segment masses are reassigned in proportion to overlapped length, so the total is
    conserved up to rounding; end markers (and therefore junction attachments) stay put.
    """
    if not h > 0:
        raise ValueError("target spacing must be positive")
    pts = curve.markers
    if curve.closed:
        pts = np.vstack([pts, pts[:1]])
    seg = np.hypot(*np.diff(pts, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total_len = s[-1]
    if total_len < 2 * h:
        raise CurveTooShort(f"curve {curve.id} has length {total_len:.6g} < 2h = {2 * h:.6g}")
    nseg = max(2, int(round(total_len / h)))
    if not curve.closed:
        nseg = max(nseg, 2)
    s_new = np.linspace(0.0, total_len, nseg + 1)
    s_new[-1] = total_len
    new = np.column_stack([np.interp(s_new, s, pts[:, 0]), np.interp(s_new, s, pts[:, 1])])
    new[0] = pts[0]
    new[-1] = pts[-1]
    cum = np.concatenate([[0.0], np.cumsum(curve.segment_mass)])
    cum_new = np.interp(s_new, s, cum)
    cum_new[0] = 0.0
    cum_new[-1] = cum[-1]
    mass = np.maximum(np.diff(cum_new), 0.0)
    if curve.closed:
        new = new[:-1]
    return replace(curve, markers=new, segment_mass=mass)


# --------------------------------------------------------------------------- constructors


def arc_points(p0, p1, bulge: float, n: int) -> np.ndarray:
    """n markers on the circular arc from p0 to p1 whose apex sits ``bulge`` to the left of
    the chord midpoint (negative: to the right, zero: straight)."""
    p0 = np.asarray(p0, dtype=float)
    p1 = np.asarray(p1, dtype=float)
    if n < 2:
        raise ValueError("need at least two markers")
    if bulge == 0:
        w = np.linspace(0.0, 1.0, n)[:, None]
        return (1 - w) * p0 + w * p1
    d = p1 - p0
    c = math.hypot(*d)
    u = d / c
    left = np.array([-u[1], u[0]])
    b = abs(bulge)
    radius = (c * c / 4 + b * b) / (2 * b)
    apex = 0.5 * (p0 + p1) + bulge * left
    center = apex - math.copysign(radius, bulge) * left
    half = math.atan2(c / 2, radius - b)
    th0 = math.atan2(*(p0 - center)[::-1])
    # bulge to the left of travel means clockwise motion around the center
    sweep = -2 * half if bulge > 0 else 2 * half
    th = th0 + sweep * np.linspace(0.0, 1.0, n)
    pts = center + radius * np.column_stack([np.cos(th), np.sin(th)])
    pts[0], pts[-1] = p0, p1
    return pts


def circle_points(center, radius: float, n: int, start_angle: float = 0.0) -> np.ndarray:
    """n markers counter-clockwise on a circle (no repeated end point)."""
    th = start_angle + 2 * math.pi * np.arange(n) / n
    return np.asarray(center, dtype=float) + radius * np.column_stack([np.cos(th), np.sin(th)])
