import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from triline.errors import ParseError, ValidationError
from triline.io import (
    load_checkpoint,
    read_snapshot,
    read_timeseries,
    run_to_dir,
    save_checkpoint,
    timeseries_columns,
    write_snapshot,
)
from triline.scenario import build_state, format_scenario, list_presets, load_scenario, parse_scenario
from _util import FLAT, flat, preset

PRESETS = ["bubble", "bubble_axisym", "lens_equal_tensions", "lens_sorption", "lens_unequal", "young_flat"]


def test_presets_listed():
    assert sorted(list_presets()) == PRESETS


@pytest.mark.parametrize("name", PRESETS)
def test_presets_build(name):
    state, model, settings = build_state(load_scenario(name))
    assert state.total_mass() > 0
    assert state.attachment_error() == 0.0


@pytest.mark.parametrize("name", PRESETS)
def test_round_trip(name):
    cfg = load_scenario(name)
    again = parse_scenario(format_scenario(cfg))
    assert again == cfg


@hsettings(max_examples=25, deadline=None)
@given(markers=st.integers(3, 200), rho_s=st.floats(1e-6, 0.9))
def test_round_trip_generated(markers, rho_s):
    cfg = parse_scenario(FLAT.format(markers=markers, rho_s=rho_s))
    assert parse_scenario(format_scenario(cfg)) == cfg


def test_zero_slip_rejected():
    text = FLAT.format(markers=11, rho_s=0.01).replace("beta_plus = 0.5", "beta_plus = 0").replace(
        "beta_minus = 0.5", "beta_minus = 0")
    with pytest.raises(ValidationError) as exc:
        parse_scenario(text)
    assert "slip.F" in exc.value.fields


def test_zero_slip_allowed_without_tangential_motion():
    text = FLAT.format(markers=11, rho_s=0.01).replace("beta_plus = 0.5", "beta_plus = 0").replace(
        "beta_minus = 0.5", "beta_minus = 0").replace("tangential = true", "tangential = false")
    parse_scenario(text)


def test_all_problems_reported_together():
    text = FLAT.format(markers=11, rho_s=0.01).replace("c2 = 10", "c2 = -1").replace("gamma0 = 1", "gamma0 = -2")
    with pytest.raises(ValidationError) as exc:
        parse_scenario(text)
    assert len(exc.value.problems) >= 3


def test_parse_error_reports_line():
    text = "[scenario]\nname = x\nthis line has no separator\n"
    with pytest.raises(ParseError) as exc:
        parse_scenario(text)
    assert exc.value.line == 3
    with pytest.raises(ParseError) as exc:
        parse_scenario("name = x\n")
    assert exc.value.line == 1


def test_unknown_preset():
    with pytest.raises(FileNotFoundError):
        load_scenario("no_such_scenario")


def test_snapshot_round_trip(tmp_path):
    state, model, _ = preset("lens_sorption", markers=12)
    path = write_snapshot(state, tmp_path / "s.csv")
    back = read_snapshot(path)
    assert path.read_text().startswith("# SI units")
    for cid, c in state.curves.items():
        assert np.array_equal(back[cid]["markers"], c.markers)
        assert np.array_equal(back[cid]["segment_mass"], c.segment_mass)


def test_checkpoint_round_trip(tmp_path):
    state, model, _ = preset("lens_sorption", markers=12)
    text = format_scenario(load_scenario("lens_sorption")).replace("markers = 40", "markers = 12")
    save_checkpoint(state, tmp_path / "c.json", text)
    _, back, _, _ = load_checkpoint(tmp_path / "c.json")
    for cid, c in state.curves.items():
        assert np.array_equal(back.curves[cid].markers, c.markers)
    assert back.total_mass() == state.total_mass()
    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(ParseError):
        load_checkpoint(tmp_path / "bad.json")


def _short(name="lens_unequal", steps=40):
    cfg = load_scenario(name)
    for c in cfg.curves.values():
        c.markers = 20
    cfg.mobility.dt = 1e-4
    cfg.run.max_steps = steps
    cfg.run.output_every = 5
    cfg.run.remesh_every = 15
    return cfg


def test_resume_matches_uninterrupted_run(tmp_path):
    full, _, _ = run_to_dir(_short(steps=40), tmp_path / "full")
    run_to_dir(_short(steps=20), tmp_path / "half", checkpoint_every=20)
    ck = tmp_path / "half" / "checkpoint.json"
    # the checkpoint stores the 20-step config; lift the cap before resuming
    doc = json.loads(ck.read_text())
    doc["config"] = doc["config"].replace("max_steps = 20", "max_steps = 40")
    ck.write_text(json.dumps(doc))
    resumed, _, _ = run_to_dir(_short(steps=40), tmp_path / "half", resume=ck)
    assert resumed.state.step == full.state.step == 40
    for cid, c in full.state.curves.items():
        assert np.max(np.abs(resumed.state.curves[cid].markers - c.markers)) <= 1e-12
        assert np.max(np.abs(resumed.state.curves[cid].segment_mass - c.segment_mass)) <= 1e-12
    a = read_timeseries(tmp_path / "full" / "timeseries.csv")
    b = read_timeseries(tmp_path / "half" / "timeseries.csv")
    assert [r["t"] for r in a] == [r["t"] for r in b]
    assert abs(a[-1]["E_total"] - b[-1]["E_total"]) <= 1e-12 * abs(a[-1]["E_total"])


def test_runs_are_deterministic(tmp_path):
    run_to_dir(_short("lens_sorption", 30), tmp_path / "a")
    run_to_dir(_short("lens_sorption", 30), tmp_path / "b")
    assert (tmp_path / "a" / "timeseries.csv").read_bytes() == (tmp_path / "b" / "timeseries.csv").read_bytes()
    assert (tmp_path / "a" / "snapshot_final.csv").read_bytes() == (tmp_path / "b" / "snapshot_final.csv").read_bytes()


def test_timeseries_columns_and_units(tmp_path):
    summary, ts, snaps = run_to_dir(_short("lens_sorption", 10), tmp_path)
    lines = ts.read_text().splitlines()
    assert lines[0].startswith("# SI units") and "per unit depth" in lines[0]
    header = next(csv.reader([lines[1]]))
    assert header == timeseries_columns(summary.state)
    for col in ("E_total", "D_normal", "D_slip", "D_sorption", "D_junction", "M_total", "kirchhoff_J1"):
        assert col in header
    cfg = load_scenario("bubble_axisym")
    cfg.run.max_steps = 2
    _, ts, _ = run_to_dir(cfg, tmp_path / "ax")
    assert "per full revolution" in ts.read_text().splitlines()[0]
