"""Scenario files: a sectioned key = value text format read with configparser.

Sections::

    [scenario]              name, mode (planar | axisymmetric), description
    [domain]                box = x0, y0, x1, y1
    [curve.<id>]            shape (arc | arc_center | line | circle), geometry keys,
                            markers, rho_s, side_minus, side_plus, start, end,
                            pinned_direction
    [region.<phase>]        loops, density (or mass)
    [eos.bulk.<phase>]      rho_ref, p_ref, c2
    [eos.surface.<curve>]   gamma0, rho_star, psi_offset
    [sorption.<curve>.<side>]  a_sigma, k_de, include_kinetic   (side: plus | minus)
    [slip.<curve>]          beta_plus, beta_minus
    [junction.<id>]         incident, line_tension, mobility, transfer_coefficient,
                            closure, slide_direction
    [mobility]              m_n, tangential
    [integrator]            scheme, dt, cfl_safety, adaptive, t_end, max_steps,
                            converge_speed, converge_affinity
    [output]                every, snapshot_every
    [remesh]                every, h

Region loops are whitespace-separated items, loops separated by ``|``:
``+A`` / ``-A`` traverse curve A forward / backward, ``@x,y`` is a fixed corner.
"""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .dynamics import MIN_JUNCTION_ANGLE, RunSettings
from .errors import ParseError, TrilineError, ValidationError
from .exchange import SlipParams, SorptionParams
from .geometry import (
    AXISYMMETRIC,
    JUNCTION,
    MODES,
    Endpoint,
    MarkerCurve,
    PhaseTopology,
    TripleJunction,
    arc_points,
    check_topology,
    circle_points,
    junction_angles,
    region_measures,
    segment_measures,
)
from .state import MobilityParams, Model, PhaseReservoir, SimState
from .thermo import BulkEos, SurfaceEos

PRESET_DIR = Path(__file__).with_name("scenarios")

SHAPES = {
    "arc": ("p0", "p1", "bulge"),
    "arc_center": ("center", "radius", "angle0", "angle1"),
    "line": ("p0", "p1"),
    "circle": ("center", "radius"),
}
POINT_KEYS = {"p0", "p1", "center"}


@dataclass
class CurveSpec:
    id: str
    shape: str
    geometry: Dict[str, object]
    markers: int
    rho_s: float
    side_minus: str
    side_plus: str
    start: str = "free"
    end: str = "free"
    pinned_direction: Optional[Tuple[float, float]] = None


@dataclass
class RegionSpec:
    loops: List[list]
    density: Optional[float] = None
    mass: Optional[float] = None


@dataclass
class JunctionSpec:
    id: str
    incident: List[Tuple[str, str]]
    line_tension: float = 0.0
    mobility: float = 1.0
    transfer_coefficient: float = 1.0
    closure: str = "linear"
    slide_direction: Optional[Tuple[float, float]] = None


@dataclass
class ScenarioConfig:
    name: str
    mode: str
    box: Tuple[float, float, float, float]
    curves: Dict[str, CurveSpec]
    regions: Dict[str, RegionSpec]
    bulk_eos: Dict[str, BulkEos]
    surface_eos: Dict[str, SurfaceEos]
    sorption: Dict[Tuple[str, str], SorptionParams] = field(default_factory=dict)
    slip: Dict[str, SlipParams] = field(default_factory=dict)
    junctions: Dict[str, JunctionSpec] = field(default_factory=dict)
    mobility: MobilityParams = field(default_factory=MobilityParams)
    run: RunSettings = field(default_factory=RunSettings)
    snapshot_every: int = 0
    description: str = ""


# --------------------------------------------------------------------------- parsing helpers


class _Reader:
    """Typed access to one parsed file that records problems instead of stopping."""

    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp
        self.problems: List[Tuple[str, str]] = []
        self.used = set()

    def _raw(self, sec, key, default, required):
        self.used.add((sec, key))
        if self.cp.has_option(sec, key):
            return self.cp.get(sec, key).strip()
        if required:
            self.problems.append((f"{sec}.{key}", "missing"))
        return default

    def str(self, sec, key, default=None, required=False):
        return self._raw(sec, key, default, required)

    def float(self, sec, key, default=None, required=False, positive=False, nonneg=False):
        raw = self._raw(sec, key, None, required)
        if raw is None:
            return default
        try:
            v = float(raw)
        except ValueError:
            self.problems.append((f"{sec}.{key}", f"not a number: {raw!r}"))
            return default
        if not math.isfinite(v):
            self.problems.append((f"{sec}.{key}", "must be finite"))
        elif positive and not v > 0:
            self.problems.append((f"{sec}.{key}", "must be positive"))
        elif nonneg and v < 0:
            self.problems.append((f"{sec}.{key}", "must be nonnegative"))
        return v

    def int(self, sec, key, default=None, required=False, minimum=None):
        raw = self._raw(sec, key, None, required)
        if raw is None:
            return default
        try:
            v = int(raw)
        except ValueError:
            self.problems.append((f"{sec}.{key}", f"not an integer: {raw!r}"))
            return default
        if minimum is not None and v < minimum:
            self.problems.append((f"{sec}.{key}", f"must be >= {minimum}"))
        return v

    def bool(self, sec, key, default=False):
        raw = self._raw(sec, key, None, False)
        if raw is None:
            return default
        if raw.lower() in ("1", "true", "yes", "on"):
            return True
        if raw.lower() in ("0", "false", "no", "off"):
            return False
        self.problems.append((f"{sec}.{key}", f"not a boolean: {raw!r}"))
        return default

    def vec(self, sec, key, size, default=None, required=False):
        raw = self._raw(sec, key, None, required)
        if raw is None:
            return default
        try:
            v = tuple(float(x) for x in raw.split(","))
        except ValueError:
            self.problems.append((f"{sec}.{key}", f"not a list of numbers: {raw!r}"))
            return default
        if len(v) != size:
            self.problems.append((f"{sec}.{key}", f"expected {size} numbers, got {len(v)}"))
            return default
        return v


def _parse_loops(text: str, where: str, problems) -> List[list]:
    loops = []
    for chunk in text.split("|"):
        loop = []
        for tok in chunk.split():
            if tok.startswith("@"):
                try:
                    x, y = (float(t) for t in tok[1:].split(","))
                except ValueError:
                    problems.append((where, f"bad corner {tok!r}"))
                    continue
                loop.append(("point", (x, y)))
            elif tok[0] in "+-" and len(tok) > 1:
                loop.append(("curve", tok[1:], 1 if tok[0] == "+" else -1))
            else:
                problems.append((where, f"bad loop item {tok!r}"))
        if loop:
            loops.append(loop)
    if not loops:
        problems.append((where, "no loops"))
    return loops


def _format_loops(loops) -> str:
    parts = []
    for loop in loops:
        items = []
        for it in loop:
            if it[0] == "point":
                items.append(f"@{_num(it[1][0])},{_num(it[1][1])}")
            else:
                items.append(("+" if it[2] > 0 else "-") + it[1])
        parts.append(" ".join(items))
    return " | ".join(parts)


def _read_text(text: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        cp.read_string(text)
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError("content before the first [section] header", exc.lineno) from exc
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ParseError(f"cannot parse {line.strip()!r}", lineno) from exc
    except (configparser.DuplicateSectionError, configparser.DuplicateOptionError) as exc:
        raise ParseError(exc.message.split(":")[-1].strip() if hasattr(exc, "message") else str(exc), exc.lineno) from exc
    return cp


def parse_scenario(text: str) -> ScenarioConfig:
    """Parse and validate scenario text; all problems are reported together."""
    cp = _read_text(text)
    r = _Reader(cp)
    P = r.problems
    known_prefixes = ("curve.", "region.", "eos.bulk.", "eos.surface.", "sorption.", "slip.", "junction.")
    known = {"scenario", "domain", "mobility", "integrator", "output", "remesh"}
    for sec in cp.sections():
        if sec not in known and not sec.startswith(known_prefixes):
            P.append((sec, "unknown section"))
    if not cp.has_section("scenario"):
        P.append(("scenario", "missing section"))
    name = r.str("scenario", "name", "unnamed")
    mode = r.str("scenario", "mode", "planar")
    if mode not in MODES:
        P.append(("scenario.mode", f"must be one of {MODES}"))
    description = r.str("scenario", "description", "")
    box = r.vec("domain", "box", 4, required=True) or (0.0, 0.0, 1.0, 1.0)
    if box[2] <= box[0] or box[3] <= box[1]:
        P.append(("domain.box", "empty box"))
    if mode == AXISYMMETRIC and box[0] < 0:
        P.append(("domain.box", "axisymmetric domains need r >= 0"))

    curves: Dict[str, CurveSpec] = {}
    for sec in cp.sections():
        if not sec.startswith("curve."):
            continue
        cid = sec[len("curve."):]
        shape = r.str(sec, "shape", required=True)
        geo: Dict[str, object] = {}
        if shape not in SHAPES:
            P.append((f"{sec}.shape", f"must be one of {sorted(SHAPES)}"))
        else:
            for key in SHAPES[shape]:
                if key in POINT_KEYS:
                    geo[key] = r.vec(sec, key, 2, required=True)
                else:
                    geo[key] = r.float(sec, key, required=True)
            if shape == "circle":
                geo["start_angle"] = r.float(sec, "start_angle", 0.0)
        pin = r.vec(sec, "pinned_direction", 2)
        curves[cid] = CurveSpec(
            id=cid,
            shape=shape,
            geometry=geo,
            markers=r.int(sec, "markers", 100, minimum=3),
            rho_s=r.float(sec, "rho_s", 0.0, nonneg=True),
            side_minus=r.str(sec, "side_minus", required=True),
            side_plus=r.str(sec, "side_plus", required=True),
            start=r.str(sec, "start", "free"),
            end=r.str(sec, "end", "free"),
            pinned_direction=pin,
        )
        for key in ("start", "end"):
            try:
                Endpoint.parse(getattr(curves[cid], key))
            except ValueError as exc:
                P.append((f"{sec}.{key}", str(exc)))

    regions: Dict[str, RegionSpec] = {}
    bulk: Dict[str, BulkEos] = {}
    surface: Dict[str, SurfaceEos] = {}
    sorption: Dict[Tuple[str, str], SorptionParams] = {}
    slip: Dict[str, SlipParams] = {}
    junctions: Dict[str, JunctionSpec] = {}
    for sec in cp.sections():
        if sec.startswith("region."):
            ph = sec[len("region."):]
            loops = _parse_loops(r.str(sec, "loops", "", required=True), f"{sec}.loops", P)
            dens = r.float(sec, "density", positive=True)
            mass = r.float(sec, "mass", positive=True)
            if (dens is None) == (mass is None):
                P.append((sec, "give exactly one of density, mass"))
            regions[ph] = RegionSpec(loops, dens, mass)
        elif sec.startswith("eos.bulk."):
            ph = sec[len("eos.bulk."):]
            vals = (r.float(sec, "rho_ref", required=True, positive=True),
                    r.float(sec, "p_ref", 0.0),
                    r.float(sec, "c2", required=True, positive=True))
            if None not in vals and vals[0] > 0 and vals[2] > 0:
                bulk[ph] = BulkEos(*vals)
        elif sec.startswith("eos.surface."):
            cid = sec[len("eos.surface."):]
            vals = (r.float(sec, "gamma0", required=True, positive=True),
                    r.float(sec, "rho_star", required=True, positive=True),
                    r.float(sec, "psi_offset", 0.0))
            if None not in vals and vals[0] > 0 and vals[1] > 0:
                surface[cid] = SurfaceEos(*vals)
        elif sec.startswith("sorption."):
            parts = sec.split(".")
            if len(parts) != 3 or parts[2] not in ("plus", "minus"):
                P.append((sec, "expected [sorption.<curve>.<plus|minus>]"))
                continue
            a = r.float(sec, "a_sigma", required=True, positive=True)
            k = r.float(sec, "k_de", required=True, positive=True)
            kin = r.bool(sec, "include_kinetic", False)
            if a and k and a > 0 and k > 0:
                sorption[(parts[1], parts[2])] = SorptionParams(a, k, kin)
        elif sec.startswith("slip."):
            cid = sec[len("slip."):]
            bp = r.float(sec, "beta_plus", 0.0, nonneg=True)
            bm = r.float(sec, "beta_minus", 0.0, nonneg=True)
            slip[cid] = SlipParams(bp, bm)
        elif sec.startswith("junction."):
            jid = sec[len("junction."):]
            inc = []
            for item in (r.str(sec, "incident", "", required=True) or "").split(","):
                item = item.strip()
                if not item:
                    continue
                cid, _, which = item.partition(":")
                if which not in ("start", "end"):
                    P.append((f"{sec}.incident", f"bad item {item!r}, expected <curve>:<start|end>"))
                inc.append((cid, which))
            if len(inc) != 3:
                P.append((f"{sec}.incident", "a junction joins exactly three curve ends"))
            closure = r.str(sec, "closure", "linear")
            if closure not in ("linear", "ideal", "none"):
                P.append((f"{sec}.closure", "must be linear, ideal or none"))
            tc = r.float(sec, "transfer_coefficient", 1.0, nonneg=True)
            if closure == "linear" and tc is not None and not tc > 0:
                P.append((f"{sec}.transfer_coefficient", "linear closure needs L > 0"))
            junctions[jid] = JunctionSpec(
                jid, inc,
                line_tension=r.float(sec, "line_tension", 0.0, nonneg=True),
                mobility=r.float(sec, "mobility", 1.0, nonneg=True),
                transfer_coefficient=tc,
                closure=closure,
                slide_direction=r.vec(sec, "slide_direction", 2),
            )

    m_n = r.float("mobility", "m_n", 1.0, positive=True)
    tangential = r.bool("mobility", "tangential", True)
    scheme = r.str("integrator", "scheme", "euler")
    if scheme not in ("euler", "rk2"):
        P.append(("integrator.scheme", "must be euler or rk2"))
        scheme = "euler"
    dt = r.float("integrator", "dt", 1e-4, positive=True)
    cfl = r.float("integrator", "cfl_safety", 0.5, positive=True)
    if cfl is not None and cfl > 1:
        P.append(("integrator.cfl_safety", "must lie in (0, 1]"))
    mobility = None
    try:
        mobility = MobilityParams(m_n=m_n, dt=dt, cfl_safety=cfl, tangential=tangential,
                                  integrator=scheme, adaptive=r.bool("integrator", "adaptive", False))
    except (ValueError, TypeError) as exc:
        P.append(("mobility", str(exc)))
    run = RunSettings(
        t_end=r.float("integrator", "t_end", 1.0, positive=True),
        max_steps=r.int("integrator", "max_steps", 10**6, minimum=1),
        output_every=r.int("output", "every", 1, minimum=1),
        remesh_every=r.int("remesh", "every", 0, minimum=0),
        remesh_h=r.float("remesh", "h", 0.0, nonneg=True),
        converge_speed=r.float("integrator", "converge_speed", 0.0, nonneg=True),
        converge_affinity=r.float("integrator", "converge_affinity", math.inf, positive=True),
    )
    snapshot_every = r.int("output", "snapshot_every", 0, minimum=0)

    # cross references
    for cid, c in curves.items():
        for side in (c.side_minus, c.side_plus):
            if side not in regions:
                P.append((f"curve.{cid}", f"borders phase {side!r} without a [region.{side}] section"))
        if cid not in surface:
            P.append((f"eos.surface.{cid}", "missing section"))
        for key in ("start", "end"):
            ep = getattr(c, key)
            if ep.startswith("junction:") and ep.split(":", 1)[1] not in junctions:
                P.append((f"curve.{cid}.{key}", f"unknown junction {ep.split(':', 1)[1]!r}"))
        if c.shape == "circle" and (c.start != "free" or c.end != "free"):
            P.append((f"curve.{cid}", "closed curves have no endpoints"))
    for ph in regions:
        if ph not in bulk:
            P.append((f"eos.bulk.{ph}", "missing section"))
    for key in list(surface) + [k[0] for k in sorption] + list(slip):
        if key not in curves:
            P.append((key, "refers to an unknown curve"))
    for jid, j in junctions.items():
        for cid, which in j.incident:
            if cid not in curves:
                P.append((f"junction.{jid}.incident", f"unknown curve {cid!r}"))
            elif getattr(curves[cid], which, None) != f"junction:{jid}":
                P.append((f"junction.{jid}.incident", f"curve {cid} {which} is not attached to {jid}"))
    if tangential:
        for cid, s in slip.items():
            if not s.total > 0:
                P.append((f"slip.{cid}", "beta_plus + beta_minus must be positive when tangential motion is on"))
    for ph, reg in regions.items():
        for loop in reg.loops:
            for it in loop:
                if it[0] == "curve" and it[1] not in curves:
                    P.append((f"region.{ph}.loops", f"unknown curve {it[1]!r}"))

    if P:
        raise ValidationError(P)
    cfg = ScenarioConfig(
        name=name, mode=mode, box=box, curves=curves, regions=regions, bulk_eos=bulk,
        surface_eos=surface, sorption=sorption, slip=slip, junctions=junctions,
        mobility=mobility, run=run, snapshot_every=snapshot_every, description=description,
    )
    # geometric checks need the built state
    try:
        build_state(cfg)
    except ValidationError:
        raise
    except (TrilineError, ValueError) as exc:  # anything the geometry layer rejects
        raise ValidationError([("geometry", str(exc))]) from exc
    return cfg


def resolve_path(path_or_name) -> Path:
    p = Path(path_or_name)
    if p.exists():
        return p
    preset = PRESET_DIR / f"{p.name}.ini"
    if preset.exists():
        return preset
    raise FileNotFoundError(f"no scenario file or preset named {path_or_name!r}")


def load_scenario(path_or_name) -> ScenarioConfig:
    return parse_scenario(resolve_path(path_or_name).read_text())


def list_presets() -> List[str]:
    return sorted(p.stem for p in PRESET_DIR.glob("*.ini"))


# --------------------------------------------------------------------------- writing


def _num(x) -> str:
    return repr(float(x))


def _vec(v) -> str:
    return ", ".join(_num(x) for x in v)


def format_scenario(cfg: ScenarioConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["scenario"] = {"name": cfg.name, "mode": cfg.mode}
    if cfg.description:
        cp["scenario"]["description"] = cfg.description
    cp["domain"] = {"box": _vec(cfg.box)}
    for cid, c in cfg.curves.items():
        sec = {"shape": c.shape}
        for k, v in c.geometry.items():
            sec[k] = _vec(v) if isinstance(v, tuple) else _num(v)
        sec.update(markers=str(c.markers), rho_s=_num(c.rho_s), side_minus=c.side_minus,
                   side_plus=c.side_plus, start=c.start, end=c.end)
        if c.pinned_direction is not None:
            sec["pinned_direction"] = _vec(c.pinned_direction)
        cp[f"curve.{cid}"] = sec
    for ph, reg in cfg.regions.items():
        sec = {"loops": _format_loops(reg.loops)}
        if reg.density is not None:
            sec["density"] = _num(reg.density)
        if reg.mass is not None:
            sec["mass"] = _num(reg.mass)
        cp[f"region.{ph}"] = sec
    for ph, e in cfg.bulk_eos.items():
        cp[f"eos.bulk.{ph}"] = {"rho_ref": _num(e.rho_ref), "p_ref": _num(e.p_ref), "c2": _num(e.c2)}
    for cid, e in cfg.surface_eos.items():
        cp[f"eos.surface.{cid}"] = {"gamma0": _num(e.gamma0), "rho_star": _num(e.rho_star),
                                    "psi_offset": _num(e.psi_offset)}
    for (cid, side), s in cfg.sorption.items():
        cp[f"sorption.{cid}.{side}"] = {"a_sigma": _num(s.a_sigma), "k_de": _num(s.k_de),
                                        "include_kinetic": str(s.include_kinetic).lower()}
    for cid, s in cfg.slip.items():
        cp[f"slip.{cid}"] = {"beta_plus": _num(s.beta_plus), "beta_minus": _num(s.beta_minus)}
    for jid, j in cfg.junctions.items():
        sec = {"incident": ", ".join(f"{c}:{w}" for c, w in j.incident),
               "line_tension": _num(j.line_tension), "mobility": _num(j.mobility),
               "transfer_coefficient": _num(j.transfer_coefficient), "closure": j.closure}
        if j.slide_direction is not None:
            sec["slide_direction"] = _vec(j.slide_direction)
        cp[f"junction.{jid}"] = sec
    m = cfg.mobility
    cp["mobility"] = {"m_n": _num(m.m_n), "tangential": str(m.tangential).lower()}
    rs = cfg.run
    cp["integrator"] = {"scheme": m.integrator, "dt": _num(m.dt), "cfl_safety": _num(m.cfl_safety),
                        "adaptive": str(m.adaptive).lower(), "t_end": _num(rs.t_end),
                        "max_steps": str(rs.max_steps), "converge_speed": _num(rs.converge_speed)}
    if math.isfinite(rs.converge_affinity):
        cp["integrator"]["converge_affinity"] = _num(rs.converge_affinity)
    cp["output"] = {"every": str(rs.output_every), "snapshot_every": str(cfg.snapshot_every)}
    cp["remesh"] = {"every": str(rs.remesh_every), "h": _num(rs.remesh_h)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def write_scenario(cfg: ScenarioConfig, path) -> Path:
    path = Path(path)
    path.write_text(format_scenario(cfg))
    return path


# --------------------------------------------------------------------------- state construction


def curve_points(spec: CurveSpec) -> Tuple[np.ndarray, bool]:
    g = spec.geometry
    n = spec.markers
    if spec.shape == "arc":
        return arc_points(g["p0"], g["p1"], g["bulge"], n), False
    if spec.shape == "line":
        return arc_points(g["p0"], g["p1"], 0.0, n), False
    if spec.shape == "arc_center":
        th = np.radians(np.linspace(g["angle0"], g["angle1"], n))
        pts = np.asarray(g["center"]) + g["radius"] * np.column_stack([np.cos(th), np.sin(th)])
        # snap coordinates that should sit exactly on an axis or wall
        pts[np.abs(pts) < 1e-15] = 0.0
        return pts, False
    if spec.shape == "circle":
        return circle_points(g["center"], g["radius"], n, math.radians(g.get("start_angle", 0.0))), True
    raise ValueError(f"unknown shape {spec.shape}")


def build_state(cfg: ScenarioConfig) -> Tuple[SimState, Model, RunSettings]:
    problems = []
    curves: Dict[str, MarkerCurve] = {}
    for cid, spec in cfg.curves.items():
        pts, closed = curve_points(spec)
        meas = segment_measures(pts, cfg.mode, closed)
        c = MarkerCurve(
            id=cid, markers=pts, segment_mass=spec.rho_s * meas,
            side_minus=spec.side_minus, side_plus=spec.side_plus,
            start=Endpoint.parse(spec.start), end=Endpoint.parse(spec.end),
            mode=cfg.mode, closed=closed, pinned_direction=spec.pinned_direction,
        )
        try:
            c.validate()
        except TrilineError as exc:
            problems.append((f"curve.{cid}", str(exc)))
        curves[cid] = c
    scale = max(cfg.box[2] - cfg.box[0], cfg.box[3] - cfg.box[1])
    junctions: Dict[str, TripleJunction] = {}
    for jid, js in cfg.junctions.items():
        ends = []
        for cid, which in js.incident:
            c = curves[cid]
            ends.append(c.markers[0 if which == "start" else -1])
        pos = ends[0].copy()
        if max(float(np.max(np.abs(e - pos))) for e in ends) > 1e-12 * scale:
            problems.append((f"junction.{jid}", "incident curve ends do not coincide"))
        junctions[jid] = TripleJunction(
            id=jid, position=pos, incident=list(js.incident), line_tension=js.line_tension,
            mobility=js.mobility, transfer_coefficient=js.transfer_coefficient,
            closure=js.closure, slide_direction=js.slide_direction,
        )
    topo = PhaseTopology(phases=list(cfg.regions), regions={p: r.loops for p, r in cfg.regions.items()},
                         box=tuple(cfg.box), mode=cfg.mode)
    if problems:
        raise ValidationError(problems)
    try:
        check_topology(topo, curves)
    except TrilineError as exc:
        raise ValidationError([("topology", str(exc))]) from exc
    meas = region_measures(topo, curves)
    total = sum(meas.values())
    dom = topo.domain_measure()
    if abs(total - dom) > 1e-9 * dom:
        problems.append(("topology", f"regions cover {total:.12g}, domain is {dom:.12g}"))
    phases = {}
    for ph, reg in cfg.regions.items():
        if not meas[ph] > 0:
            problems.append((f"region.{ph}", f"non-positive measure {meas[ph]:.6g}"))
            continue
        mass = reg.mass if reg.mass is not None else reg.density * meas[ph]
        phases[ph] = PhaseReservoir(ph, mass, cfg.bulk_eos[ph])
    state = SimState(curves, junctions, phases, topo)
    state.attach_junctions()
    for jid, j in junctions.items():
        try:
            ang = junction_angles(j, curves)
        except TrilineError as exc:
            problems.append((f"junction.{jid}", str(exc)))
            continue
        if np.min(ang) < MIN_JUNCTION_ANGLE:
            problems.append((f"junction.{jid}", f"initial angle {np.min(ang):.3g} deg below {MIN_JUNCTION_ANGLE}"))
    for cid, c in curves.items():
        try:
            cfg.surface_eos[cid].check(c.density())
        except TrilineError as exc:
            problems.append((f"curve.{cid}.rho_s", str(exc)))
    if problems:
        raise ValidationError(problems)
    model = Model(surface_eos=dict(cfg.surface_eos), sorption=dict(cfg.sorption), slip=dict(cfg.slip),
                  mobility=cfg.mobility)
    return state, model, cfg.run
