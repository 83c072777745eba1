"""Time-series and snapshot CSV files, checkpoints, and the run-to-directory driver."""

from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .dynamics import run
from .errors import ParseError
from .scenario import ScenarioConfig, build_state, format_scenario, parse_scenario
from .state import SimState

CHECKPOINT_FORMAT = "triline-checkpoint"
CHECKPOINT_VERSION = 1

SNAPSHOT_COLUMNS = ("curve_id", "marker_index", "x", "y", "segment_mass", "side_minus", "side_plus")


def units_header(mode: str) -> List[str]:
    if mode == "axisymmetric":
        scope = "axisymmetric run: extensive quantities are per full revolution (kg, J, W); coordinates are (r, z)"
    else:
        scope = "planar run: extensive quantities are per unit depth (kg/m, J/m, W/m)"
    return [f"# SI units; {scope}"]


def timeseries_columns(state: SimState) -> List[str]:
    cols = ["t", "E_total", "E_bulk", "E_interface", "E_line", "E_kin_bulk", "E_kin_interface",
            "D_normal", "D_slip", "D_sorption", "D_junction", "M_total"]
    cols += [f"M_{p}" for p in state.phases]
    for jid in state.junctions:
        cols += [f"angle_{jid}_{k}" for k in range(3)]
    cols += [f"kirchhoff_{jid}" for jid in state.junctions]
    cols += ["max_V", "max_affinity", "remeshed"]
    return cols


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % v


class TimeseriesWriter:
    def __init__(self, path, columns, mode: str, append: bool = False):
        self.path = Path(path)
        self.columns = list(columns)
        fresh = not (append and self.path.exists())
        self._fh = open(self.path, "w" if fresh else "a", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        if fresh:
            for line in units_header(mode):
                self._fh.write(line + "\n")
            self._w.writerow(self.columns)

    def write(self, row: Dict[str, float]):
        self._w.writerow([_fmt(row[c]) for c in self.columns])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _data_lines(path):
    with open(path, newline="") as fh:
        for line in fh:
            if not line.startswith("#") and line.strip():
                yield line


def read_timeseries(path) -> List[Dict[str, float]]:
    reader = csv.DictReader(_data_lines(path))
    return [{k: float(v) for k, v in row.items()} for row in reader]


def write_snapshot(state: SimState, path, mode: Optional[str] = None) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        for line in units_header(mode or state.mode):
            fh.write(line + "\n")
        fh.write(f"# t = {state.t!r}, step = {state.step}; segment_mass is the segment starting at the marker\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_COLUMNS)
        for cid, c in state.curves.items():
            for i, (x, y) in enumerate(c.markers):
                m = _fmt(c.segment_mass[i]) if i < c.n_segments else ""
                w.writerow([cid, i, _fmt(x), _fmt(y), m, c.side_minus, c.side_plus])
    return path


def read_snapshot(path) -> Dict[str, Dict[str, np.ndarray]]:
    out: Dict[str, Dict[str, list]] = {}
    for row in csv.DictReader(_data_lines(path)):
        d = out.setdefault(row["curve_id"], {"markers": [], "segment_mass": []})
        d["markers"].append((float(row["x"]), float(row["y"])))
        if row["segment_mass"]:
            d["segment_mass"].append(float(row["segment_mass"]))
    return {k: {"markers": np.array(v["markers"]), "segment_mass": np.array(v["segment_mass"])} for k, v in out.items()}


# --------------------------------------------------------------------------- checkpoints


def save_checkpoint(state: SimState, path, config_text: str) -> Path:
    path = Path(path)
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": config_text,
        "t": state.t,
        "step": state.step,
        "curves": {cid: {"markers": c.markers.tolist(), "segment_mass": c.segment_mass.tolist()}
                   for cid, c in state.curves.items()},
        "junctions": {jid: j.position.tolist() for jid, j in state.junctions.items()},
        "phases": {p: ph.mass for p, ph in state.phases.items()},
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc))
    os.replace(tmp, path)
    return path


def load_checkpoint(path):
    """Returns (config, state, model, settings) with the saved state restored exactly."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(f"{path} is not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {doc.get('version')}")
    cfg = parse_scenario(doc["config"])
    state, model, settings = build_state(cfg)
    for cid, d in doc["curves"].items():
        c = state.curves[cid]
        c.markers = np.array(d["markers"], dtype=float)
        c.segment_mass = np.array(d["segment_mass"], dtype=float)
    for jid, pos in doc["junctions"].items():
        state.junctions[jid].position = np.array(pos, dtype=float)
    for p, m in doc["phases"].items():
        state.phases[p].mass = float(m)
    state.t = float(doc["t"])
    state.step = int(doc["step"])
    return cfg, state, model, settings


# --------------------------------------------------------------------------- driver


def output_dir(default) -> Path:
    return Path(os.environ.get("TRILINE_OUT") or default)


def run_to_dir(cfg: ScenarioConfig, out_dir, checkpoint_every: int = 0, resume=None, config_text: Optional[str] = None):
    """Run a scenario and write timeseries.csv, snapshots and checkpoints into ``out_dir``.

    On a runtime failure a checkpoint of the last good state is written and its path
    attached to the exception as ``checkpoint``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = config_text if config_text is not None else format_scenario(cfg)
    if resume is not None:
        cfg, state, model, settings = load_checkpoint(resume)
        text = json.loads(Path(resume).read_text())["config"]
    else:
        state, model, settings = build_state(cfg)
    ts_path = out / "timeseries.csv"
    # an interrupted run already wrote a row for the checkpointed state
    last_t = -math.inf
    if resume is not None and ts_path.exists():
        prior = read_timeseries(ts_path)
        last_t = prior[-1]["t"] if prior else last_t
    writer = TimeseriesWriter(ts_path, timeseries_columns(state), state.mode, append=resume is not None)

    def on_row(row):
        if row["t"] > last_t:
            writer.write(row)
    snap_every = cfg.snapshot_every
    snapshots = []
    if resume is None:
        snapshots.append(write_snapshot(state, out / f"snapshot_{state.step:07d}.csv"))

    def on_step(s: SimState):
        if snap_every and s.step % snap_every == 0:
            snapshots.append(write_snapshot(s, out / f"snapshot_{s.step:07d}.csv"))
        if checkpoint_every and s.step % checkpoint_every == 0:
            save_checkpoint(s, out / "checkpoint.json", text)

    def on_error(s: SimState, exc):
        return str(save_checkpoint(s, out / "checkpoint_failed.json", text))

    try:
        summary = run(state, model, settings, on_row=on_row, on_step=on_step, on_error=on_error)
    finally:
        writer.close()
    snapshots.append(write_snapshot(summary.state, out / "snapshot_final.csv"))
    return summary, ts_path, snapshots
