from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

import sepwalk as sw
from sepwalk.harness import build_config, load_config
from sepwalk.harness.cli import main
from sepwalk.harness.experiments import initial_entropy_limit

INI_SMALL = """\
[model]
n = 8 16
T = 0.25
rates = intro
u0 = cosine 0.5 0.2 1

[run]
experiment = lln
replicas = 8
seed = 7
grid_points = 5
out = {out}
"""

JSON_SMALL = """\
{{
  "model": {{"n": "8 16", "T": "0.25", "rates": "intro",
             "u0": "cosine 0.5 0.2 1"}},
  "run": {{"experiment": "lln", "replicas": "8", "seed": "7",
           "grid_points": "5", "out": "{out}"}}
}}
"""


def _write(tmp_path: Path, text: str, name: str) -> Path:
    p = tmp_path / name
    p.write_text(text.format(out=tmp_path / "out"))
    return p


def test_config_ini_json_equivalence(tmp_path):
    ini = load_config(_write(tmp_path, INI_SMALL, "c.ini"))
    js = load_config(_write(tmp_path, JSON_SMALL, "c.json"))
    assert ini.ns == js.ns == [8, 16]
    assert ini.T == js.T == 0.25
    assert ini.seed == js.seed == 7
    assert np.array_equal(ini.u0.values, js.u0.values)
    assert ini.config_hash() == js.config_hash()


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        build_config({"model": {"n": "8"}, "run": {"bogus_key": "1"}})
    with pytest.raises(ValueError):
        build_config({"model": {"n": "16 8"}})
    with pytest.raises(ValueError):
        build_config({"model": {"n": "8"}, "run": {"replicas": "0"}})


def test_config_tilt_parsing():
    cfg = build_config({
        "model": {"n": "8", "T": "0.5", "rates": "archetype 1 2"},
        "tilt": {"v0": "const 0.4", "h": "cos:1:0.2 sin:2:0.1",
                 "a": "poly 0.1 0.2"},
        "run": {},
    })
    assert not cfg.null_tilt
    assert cfg.tilt.H.K == 2
    assert cfg.tilt.a(0.0) == pytest.approx(0.1)
    assert cfg.v0()(0.0) == pytest.approx(0.4)
    vp, vm, v = sw.mean_field_velocity(cfg.rates, 0.25)
    assert vp == pytest.approx(1.25) and vm == pytest.approx(1.75)


def test_initial_entropy_limit_orientation(half):
    # per-site entropy of the tilted product measure against the reference
    v0 = sw.DensityProfile.constant(0.75)
    lim = initial_entropy_limit(v0, half)
    expected = 0.75 * np.log(1.5) + 0.25 * np.log(0.5)
    assert lim == pytest.approx(expected, abs=1e-12)
    assert initial_entropy_limit(half, half) == 0.0


def test_cli_lln_and_determinism(tmp_path):
    runner = CliRunner()
    cfg = _write(tmp_path, INI_SMALL, "lln.ini")
    out1 = tmp_path / "o1"
    out2 = tmp_path / "o2"
    r1 = runner.invoke(main, ["lln-check", "--config", str(cfg),
                              "--out", str(out1)])
    r2 = runner.invoke(main, ["lln-check", "--config", str(cfg),
                              "--out", str(out2)])
    assert r1.exit_code in (0, 2)
    assert r1.exit_code == r2.exit_code
    ja = (out1 / "report.json").read_bytes()
    jb = (out2 / "report.json").read_bytes()
    assert ja == jb
    ca = (out1 / "lln_rows.csv").read_bytes()
    cb = (out2 / "lln_rows.csv").read_bytes()
    assert ca == cb
    assert (out1 / "lln_errors.png").exists()
    payload = json.loads(ja)
    for row in payload["rows"]:
        assert "replicas" in row
        assert any(k.endswith("_stderr") for k in row)


def test_cli_seed_override_changes_report(tmp_path):
    runner = CliRunner()
    cfg = _write(tmp_path, INI_SMALL, "lln.ini")
    out1 = tmp_path / "s1"
    out2 = tmp_path / "s2"
    runner.invoke(main, ["lln-check", "--config", str(cfg), "--out",
                         str(out1)])
    runner.invoke(main, ["lln-check", "--config", str(cfg), "--out",
                         str(out2), "--seed", "8"])
    assert (out1 / "report.json").read_bytes() \
        != (out2 / "report.json").read_bytes()


def test_cli_simulate(tmp_path):
    cfg_text = """\
[model]
n = 12
T = 0.25
rates = intro
u0 = const 0.5

[tilt]
a = const 0.2

[run]
experiment = simulate
replicas = 4
seed = 21
grid_points = 5
out = {out}
"""
    runner = CliRunner()
    cfg = _write(tmp_path, cfg_text, "sim.ini")
    res = runner.invoke(main, ["simulate", "--config", str(cfg)])
    assert res.exit_code == 0, res.output
    out = tmp_path / "out"
    for name in ("report.json", "simulate_rows.csv", "pathfield.csv",
                 "walker.csv", "pathfield_frame.csv", "pathfield.png"):
        assert (out / name).exists(), name
    head = (out / "pathfield.csv").read_text().splitlines()[0]
    assert head.startswith("# n,12,T,0.25")


def test_cli_hydro_and_rate(tmp_path):
    cfg_text = """\
[model]
n = 16
T = 0.5
rates = intro
u0 = cosine 0.5 0.2 1

[tilt]
h = cos:1:0.2
a = const 0.3

[run]
experiment = hydro
replicas = 1
seed = 3
out = {out}
pde_m = 64
basis_k = 2
basis_p = 1
"""
    runner = CliRunner()
    cfg = _write(tmp_path, cfg_text, "hyd.ini")
    res = runner.invoke(main, ["hydro", "--config", str(cfg)])
    assert res.exit_code == 0, res.output
    out = tmp_path / "out"
    assert (out / "u.csv").exists() and (out / "uhat.csv").exists()

    res2 = runner.invoke(main, ["rate", "--config", str(cfg), "--out",
                                str(tmp_path / "rate_out")])
    assert res2.exit_code == 0, res2.output
    payload = json.loads((tmp_path / "rate_out"
                          / "rate_breakdown.json").read_text())
    for key in ("h", "J", "I_ex", "j", "I_rw", "I_total", "theta", "flags",
                "tolerances"):
        assert key in payload
    assert payload["I_rw"] >= 0.0
    assert payload["flags"]["absolutely_continuous"] is True


def test_cli_diagnostics(tmp_path):
    cfg_text = """\
[model]
n = 16
T = 0.25
rates = intro
u0 = const 0.5

[run]
experiment = diagnostics
replicas = 30
seed = 5
grid_points = 5
out = {out}
eps_list = 0.1 0.2
ell_list = 4 6 8
"""
    runner = CliRunner()
    cfg = _write(tmp_path, cfg_text, "diag.ini")
    res = runner.invoke(main, ["diagnostics", "--config", str(cfg)])
    assert res.exit_code == 0, res.output
    payload = json.loads((tmp_path / "out" / "report.json").read_text())
    tables = {r.get("table") for r in payload["rows"]}
    assert {"replacement", "ensembles", "energy", "martingale"} <= tables
    names = {a["name"] for a in payload["assertions"]}
    assert "ensembles_bound" in names


def test_cli_entropy_and_is_smoke(tmp_path):
    cfg_text = """\
[model]
n = 8 16
T = 0.25
rates = intro
u0 = const 0.5

[tilt]
a = const 0.3

[run]
experiment = entropy
replicas = 40
seed = 6
grid_points = 5
out = {out}
naive_max_n = 8
replicas_naive = 200
radius_density = 0.5
radius_walker = 0.4
"""
    runner = CliRunner()
    cfg = _write(tmp_path, cfg_text, "ent.ini")
    res = runner.invoke(main, ["entropy-check", "--config", str(cfg)])
    assert res.exit_code in (0, 2), res.output
    payload = json.loads((tmp_path / "out" / "report.json").read_text())
    assert all("entropy_rate_stderr" in r for r in payload["rows"])

    res2 = runner.invoke(main, ["is-estimate", "--config", str(cfg),
                                "--out", str(tmp_path / "is_out")])
    assert res2.exit_code in (0, 2), res2.output
    payload2 = json.loads((tmp_path / "is_out" / "report.json").read_text())
    assert any("p_is" in r for r in payload2["rows"])


def test_cli_error_exit_code(tmp_path):
    runner = CliRunner()
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nn = 8\nrates = nonsense\n")
    res = runner.invoke(main, ["lln-check", "--config", str(bad)])
    assert res.exit_code == 1


def test_worker_count_does_not_change_values(tmp_path):
    from sepwalk.harness.experiments import run_lln_experiment

    sections = {
        "model": {"n": "8 16", "t": "0.25", "rates": "intro",
                  "u0": "const 0.5"},
        "run": {"experiment": "lln", "replicas": "12", "seed": "9",
                "grid_points": "5"},
    }
    rep1 = run_lln_experiment(build_config(sections,
                                           overrides={"threads": 1}))
    rep2 = run_lln_experiment(build_config(sections,
                                           overrides={"threads": 3}))
    assert rep1.rows == rep2.rows


def test_profile_knot_text_round_trip():
    prof = sw.DensityProfile.from_knots([(0.0, 0.2), (0.3, 0.9), (0.7, 0.5)])
    back = sw.DensityProfile.from_knot_text(prof.to_knot_text())
    assert np.array_equal(back.xs, prof.xs)
    assert np.array_equal(back.values, prof.values)
