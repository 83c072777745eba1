"""Simulation state and model parameters."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numpy as np

from .exchange import JunctionClosure, SlipParams, SorptionParams
from .geometry import MarkerCurve, PhaseTopology, TripleJunction
from .thermo import BulkEos, SurfaceEos


@dataclass
class PhaseReservoir:
    """Well-mixed compressible bulk phase; density follows from mass and region measure."""

    label: str
    mass: float
    eos: BulkEos


@dataclass
class MobilityParams:
    m_n: float = 1.0
    dt: float = 1e-4
    cfl_safety: float = 0.5
    tangential: bool = True
    integrator: str = "euler"  # euler | rk2
    adaptive: bool = False

    def __post_init__(self):
        if not self.m_n > 0:
            raise ValueError("m_n must be positive")
        if not 0 < self.cfl_safety <= 1:
            raise ValueError("cfl_safety must lie in (0, 1]")
        if self.integrator not in ("euler", "rk2"):
            raise ValueError(f"unknown integrator {self.integrator!r}")


@dataclass
class Model:
    """Constitutive data that does not change during a run."""

    surface_eos: Dict[str, SurfaceEos]
    sorption: Dict[Tuple[str, str], SorptionParams] = field(default_factory=dict)
    slip: Dict[str, SlipParams] = field(default_factory=dict)
    mobility: MobilityParams = field(default_factory=MobilityParams)

    def junction_closure(self, junction: TripleJunction) -> Optional[JunctionClosure]:
        if junction.closure == "none":
            return None
        return JunctionClosure(mode=junction.closure, L=junction.transfer_coefficient)


@dataclass
class SimState:
    curves: Dict[str, MarkerCurve]
    junctions: Dict[str, TripleJunction]
    phases: Dict[str, PhaseReservoir]
    topology: PhaseTopology
    t: float = 0.0
    step: int = 0

    @property
    def mode(self) -> str:
        return self.topology.mode

    def copy(self) -> "SimState":
        return replace(
            self,
            curves={k: c.copy() for k, c in self.curves.items()},
            junctions={k: j.copy() for k, j in self.junctions.items()},
            phases={k: replace(p) for k, p in self.phases.items()},
        )

    def total_mass(self) -> float:
        return sum(p.mass for p in self.phases.values()) + sum(c.total_mass() for c in self.curves.values())

    def attach_junctions(self):
        """Snap every incident curve end onto its junction position."""
        for j in self.junctions.values():
            for cid, which in j.incident:
                c = self.curves[cid]
                c.markers[0 if which == "start" else -1] = j.position

    def attachment_error(self) -> float:
        err = 0.0
        for j in self.junctions.values():
            for cid, which in j.incident:
                c = self.curves[cid]
                p = c.markers[0 if which == "start" else -1]
                err = max(err, float(np.max(np.abs(p - j.position))))
        return err
