import csv
import json
import math
from pathlib import Path

import pytest
import yaml

from ruintail import cli
from ruintail.cli import ExperimentConfig, emit_plot_data, load_config, save_config
from ruintail.dists import IndepProduct, Lognormal, Pareto
from ruintail.process import RuinEstimate, wilson_interval


def _write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(obj))
    return str(p)


BASE_JOINT = {
    "kind": "indep_product",
    "a": {"kind": "lognormal", "mu": -0.25, "sigma": 0.5},
    "b": {"kind": "pareto", "gamma": 5.0},
}


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(
        seed=20260809,
        joint=IndepProduct(Lognormal(-0.25, 0.5), Pareto(5.0)),
        dist=Pareto(2.0),
        n_paths=12345,
        u0_grid=(10.0, 100.0, 1000.0, 10000.0),
        tolerance=0.3,
        h_values=(0.5, 1.5),
        out_json="o.json",
    )
    p = tmp_path / "cfg.yaml"
    save_config(cfg, str(p))
    assert load_config(str(p)) == cfg


def test_config_rejects_unknown_keys(tmp_path):
    path = _write(tmp_path, "bad.yaml", {"seed": 1, "bogus": 2})
    assert cli.run(["validate", path]) == 2


def test_validate_exit_codes(tmp_path):
    ok = _write(tmp_path, "ok.yaml", {"seed": 1, "joint": BASE_JOINT})
    assert cli.run(["validate", ok]) == 0
    bad = _write(tmp_path, "bad.yaml", {"seed": 1, "joint": {
        "kind": "indep_product",
        "a": {"kind": "point", "value": 1.0},
        "b": {"kind": "pareto", "gamma": 2.0}}})
    assert cli.run(["validate", bad]) == 1


def test_index_and_lundberg_commands(tmp_path, capsys):
    path = _write(tmp_path, "d.yaml", {
        "seed": 1, "dist": {"kind": "pareto", "gamma": 2.0},
        "out": {"json": str(tmp_path / "idx.json")}})
    assert cli.run(["index", path]) == 0
    payload = json.loads((tmp_path / "idx.json").read_text())
    assert payload["index"]["value"] == 2.0
    assert payload["schema_version"] == 1
    path2 = _write(tmp_path, "d2.yaml", {
        "seed": 1, "dist": {"kind": "lognormal", "mu": -0.5, "sigma": 1.0},
        "out": {"json": str(tmp_path / "lb.json")}})
    assert cli.run(["lundberg", path2]) == 0
    payload = json.loads((tmp_path / "lb.json").read_text())
    assert abs(payload["lundberg_index"]["value"] - 1.0) < 1e-6


def test_esssup_command_table(tmp_path, capsys):
    path = _write(tmp_path, "e.yaml", {
        "seed": 1,
        "joint": {"kind": "branch_mixture", "branches": [
            {"prob": 0.5, "driver": {"kind": "point", "value": 1.0},
             "a_const": 1.0, "b_const": 1.0},
            {"prob": 0.5, "driver": {"kind": "pareto", "gamma": 2.5},
             "a_coef": 1.0, "b_coef": -3.0},
        ]},
        "esssup": {"steps": 8},
    })
    assert cli.run(["esssup", path]) == 0
    out = capsys.readouterr().out
    assert "inf" in out and "unbounded" in out
    for val in ("1", "2", "3", "4"):
        assert val in out


def test_laws_empty_is_usage_error(tmp_path):
    path = _write(tmp_path, "l.yaml", {"seed": 1, "laws": {"checks": []}})
    assert cli.run(["laws", path]) == 2


def test_laws_corrupted_id_is_usage_error(tmp_path):
    path = _write(tmp_path, "l.yaml", {"seed": 1, "laws": {"checks": [
        {"law": "L99", "dist": {"kind": "pareto", "gamma": 2.0}}]}})
    assert cli.run(["laws", path]) == 2


def test_laws_explicit_checks_pass(tmp_path):
    path = _write(tmp_path, "l.yaml", {"seed": 1, "laws": {"checks": [
        {"law": "L2.3", "dists": [{"kind": "pareto", "gamma": 2.0},
                                  {"kind": "pareto", "gamma": 3.0}]},
        {"law": "L2.2.1", "dist": {"kind": "pareto", "gamma": 2.5}, "param": 7.0},
        {"law": "I1<=I", "dist": {"kind": "lognormal", "mu": -0.5, "sigma": 1.0}},
    ]}, "out": {"json": str(tmp_path / "laws.json")}})
    assert cli.run(["laws", path]) == 0
    payload = json.loads((tmp_path / "laws.json").read_text())
    assert all(entry["passed"] for entry in payload["laws"])


def test_h_command(tmp_path):
    path = _write(tmp_path, "h.yaml", {
        "seed": 1,
        "joint": {"kind": "branch_mixture", "branches": [
            {"prob": 0.5, "driver": {"kind": "pareto", "gamma": 3.0},
             "a_coef": 1.0, "b_const": 10.0, "b_coef": -1.0},
            {"prob": 0.5, "driver": {"kind": "pareto", "gamma": 1.5},
             "a_coef": 1.0, "b_const": 10.0, "b_coef": -2.0},
        ]},
        "h": {"c_values": [0.5, 1.0, 1.5, 2.0, 2.5]},
        "out": {"json": str(tmp_path / "h.json")}})
    assert cli.run(["h", path]) == 0
    payload = json.loads((tmp_path / "h.json").read_text())
    assert [e["value"] for e in payload["h"]] == ["inf", "inf", 3.0, 3.0, 1.5]


def test_simulate_and_plot_csv(tmp_path):
    path = _write(tmp_path, "s.yaml", {
        "seed": 3, "joint": BASE_JOINT,
        "paths": {"mode": "ultimate", "n_paths": 20000},
        "u0_grid": [2.0, 8.0, 32.0],
        "out": {"json": str(tmp_path / "sim.json"), "csv": str(tmp_path / "sim.csv")}})
    assert cli.run(["simulate", path]) == 0
    rows = list(csv.DictReader(open(tmp_path / "sim.csv")))
    assert len(rows) == 3
    est = json.loads((tmp_path / "sim.json").read_text())["estimate"]
    assert est["n_paths"] == 20000


def test_construct_minorant_command(tmp_path):
    path = _write(tmp_path, "m.yaml", {
        "seed": 1, "dist": {"kind": "pareto", "gamma": 2.0},
        "minorant": {"side": "loss", "target": 5.0},
        "out": {"json": str(tmp_path / "m.json")}})
    assert cli.run(["construct-minorant", path]) == 0
    payload = json.loads((tmp_path / "m.json").read_text())
    assert payload["minorant"]["achieved"] == 5.0
    assert payload["minorant"]["constructed"]["kind"] == "min_pareto"


def test_refusal_exit_code(tmp_path):
    # nonnegative drift: truncated-ultimate refuses
    path = _write(tmp_path, "r.yaml", {
        "seed": 1,
        "joint": {"kind": "indep_product",
                  "a": {"kind": "lognormal", "mu": 0.25, "sigma": 0.5},
                  "b": {"kind": "pareto", "gamma": 5.0}},
        "paths": {"mode": "ultimate", "n_paths": 100},
        "u0_grid": [10.0, 20.0, 40.0, 80.0]})
    assert cli.run(["simulate", path]) == 2


def test_emit_plot_data_zero_rows(tmp_path):
    ci = [wilson_interval(r, 1000) for r in (100, 10, 0)]
    est = RuinEstimate(
        u0_grid=(10.0, 100.0, 1000.0), n_paths=1000, ruins=(100, 10, 0),
        censored=(900, 990, 1000), p_hat=(0.1, 0.01, 0.0),
        ci_lo=tuple(lo for lo, _ in ci), ci_hi=tuple(hi for _, hi in ci),
        mode="ultimate", horizon=None, hard_censored=0, seed_master=0, seed_index=0)
    out = tmp_path / "p.csv"
    emit_plot_data(est, None, str(out))
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 3  # zero-probability row retained
    assert rows[2]["log10_p_hat"] == ""
    assert rows[0]["log10_p_hat"] == pytest.approx("-1.0") or \
        float(rows[0]["log10_p_hat"]) == pytest.approx(-1.0)


def test_emit_plot_data_fit_column_matches_exact_power_law(tmp_path):
    from ruintail.asymptotics import slope_fit
    grid = (10.0, 10**1.5, 100.0, 10**2.5, 1000.0)
    n = 10**7
    p = tuple(u**-2.0 for u in grid)
    ruins = tuple(int(round(q * n)) for q in p)
    ci = [wilson_interval(r, n) for r in ruins]
    est = RuinEstimate(
        u0_grid=grid, n_paths=n, ruins=ruins, censored=tuple(n - r for r in ruins),
        p_hat=p, ci_lo=tuple(lo for lo, _ in ci), ci_hi=tuple(hi for _, hi in ci),
        mode="ultimate", horizon=None, hard_censored=0, seed_master=0, seed_index=0)
    fit = slope_fit(est)
    out = tmp_path / "fit.csv"
    emit_plot_data(est, fit, str(out))
    for row in csv.DictReader(open(out)):
        assert float(row["fit_value"]) == pytest.approx(float(row["log10_p_hat"]), abs=1e-9)


def test_seed_override(tmp_path):
    path = _write(tmp_path, "s.yaml", {
        "seed": 3, "joint": BASE_JOINT,
        "paths": {"mode": "finite", "horizon": 5, "n_paths": 5000},
        "u0_grid": [2.0, 8.0],
        "out": {"json": str(tmp_path / "a.json")}})
    assert cli.run(["simulate", path]) == 0
    first = json.loads((tmp_path / "a.json").read_text())
    assert cli.run(["simulate", path, "--seed", "4", "--json", str(tmp_path / "b.json")]) == 0
    second = json.loads((tmp_path / "b.json").read_text())
    assert first["estimate"]["ruins"] != second["estimate"]["ruins"]
    assert second["seed"] == 4
