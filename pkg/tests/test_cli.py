import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from rankgame import cli

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, text, name="s.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


CANONICAL = """
[scenario]
id = "canon"
[game]
n_subjects = 4
n_admins = 2
p = 0.5
discounts = [1.0, 0.5]
budgets = [2, 2]
"""


def run(argv, capsys):
    code = cli.main(argv)
    return code, capsys.readouterr().err


def test_equilibrium_exit_zero(tmp_path, capsys):
    cfg = write(tmp_path, CANONICAL)
    code, _ = run(["equilibrium", "--config", cfg, "--out", str(tmp_path / "o"), "--format", "json"],
                  capsys)
    assert code == 0
    rep = json.loads((tmp_path / "o" / "canon.json").read_text())
    row = next(r for r in rep["rows"] if r["metric"] == "is_equilibrium")
    assert row["value"] == 1.0 and row["verdict"] == "pass"


def test_first_discount_violation(tmp_path, capsys):
    cfg = write(tmp_path, CANONICAL.replace("[1.0, 0.5]", "[0.8, 0.5]"))
    code, err = run(["equilibrium", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 1
    lines = err.strip().splitlines()
    assert len(lines) == 1
    msg = json.loads(lines[0])
    assert msg["error"] == "validation" and "alpha_1" in msg["message"]
    assert not (tmp_path / "o").exists()


def test_enumeration_guard(tmp_path, capsys):
    cfg = write(tmp_path, """
[scenario]
id = "big"
[game]
n_subjects = 5
n_admins = 4
p = 0.5
discount_ratio = 0.5
budgets = 5
max_bid = 3
""")
    code, err = run(["enumerate-nash", "--config", cfg, "--out", str(tmp_path / "o")], capsys)
    assert code == 2
    assert json.loads(err.strip())["guard"] == "joint_strategy_space"
    assert not (tmp_path / "o").exists()


@pytest.mark.parametrize("text", ["not toml [", "[scenario]\nid='x'\n"])
def test_bad_configs(tmp_path, capsys, text):
    code, err = run(["equilibrium", "--config", write(tmp_path, text)], capsys)
    assert code == 1 and json.loads(err.strip())["error"] == "validation"


def test_missing_file(tmp_path, capsys):
    code, _ = run(["equilibrium", "--config", str(tmp_path / "none.toml")], capsys)
    assert code == 1


def test_kind_mismatch(tmp_path, capsys):
    cfg = write(tmp_path, CANONICAL.replace('id = "canon"', 'id = "canon"\nkind = "utility"'))
    code, _ = run(["equilibrium", "--config", cfg], capsys)
    assert code == 1


def test_seed_precedence(tmp_path, capsys):
    cfg = write(tmp_path, CANONICAL.replace('id = "canon"', 'id = "canon"\nseed = 4'))
    out = tmp_path / "o"
    run(["concentration", "--config", cfg, "--out", str(out), "--format", "json", "--reps", "300"],
        capsys)
    assert json.loads((out / "canon.json").read_text())["seed"] == 4
    run(["concentration", "--config", cfg, "--out", str(out), "--format", "json", "--reps", "300",
         "--seed", "17"], capsys)
    assert json.loads((out / "canon.json").read_text())["seed"] == 17
    plain = write(tmp_path, CANONICAL, "plain.toml")
    run(["concentration", "--config", plain, "--out", str(out), "--format", "json", "--reps", "300"],
        capsys)
    assert json.loads((out / "canon.json").read_text())["seed"] == cli.DEFAULT_SEED


def test_csv_round_trips_through_json(tmp_path, capsys):
    cfg = write(tmp_path, CANONICAL)
    for fmt in ("csv", "json"):
        run(["concentration", "--config", cfg, "--out", str(tmp_path), "--format", fmt,
             "--reps", "2000", "--seed", "3"], capsys)
    rows = list(csv.DictReader((tmp_path / "canon.csv").open()))
    report = json.loads((tmp_path / "canon.json").read_text())
    assert len(rows) == len(report["rows"])
    for c, j in zip(rows, report["rows"]):
        assert c["metric"] == j["metric"] and c["verdict"] == j["verdict"]
        for col in ("value", "std_error", "bound"):
            assert (float(c[col]) if c[col] else None) == j[col]


def test_curve_output(tmp_path, capsys):
    code, _ = run(["minimax-curve", "--config", str(CONFIGS / "minimax-curve.toml"),
                   "--out", str(tmp_path)], capsys)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "minimax-curve_curve.csv").open()))
    assert list(rows[0]) == ["x", "y", "y_bound"]
    for r in rows:
        assert float(r["y"]) == min(0.5 / float(r["x"]), 1.0)


def test_no_temp_files_left(tmp_path, capsys):
    run(["equilibrium", "--config", write(tmp_path, CANONICAL), "--out", str(tmp_path / "o")],
        capsys)
    assert sorted(p.name for p in (tmp_path / "o").iterdir()) == ["canon.csv"]


def test_atomic_write_keeps_old_file_on_failure(tmp_path, monkeypatch):
    target = tmp_path / "r.csv"
    target.write_text("old")

    def boom(*a):
        raise OSError("disk full")

    monkeypatch.setattr(cli.os, "replace", boom)
    with pytest.raises(OSError):
        cli.atomic_write(target, "new")
    assert target.read_text() == "old"
    assert [p.name for p in tmp_path.iterdir()] == ["r.csv"]


def test_sweep(tmp_path, capsys):
    code, _ = run(["sweep", "--config", str(CONFIGS / "approx-nash.toml"), "--axis", "budget",
                   "--values", "1,2", "--reps", "500", "--out", str(tmp_path)], capsys)
    assert code == 0
    assert (tmp_path / "approx-k2-b4_sweep_budget.csv").exists()


def test_sweep_empty_values(tmp_path, capsys):
    code, _ = run(["sweep", "--config", str(CONFIGS / "approx-nash.toml"), "--axis", "budget",
                   "--values", "", "--out", str(tmp_path)], capsys)
    assert code == 1


@pytest.mark.parametrize("name", sorted(p.stem for p in CONFIGS.glob("*.toml")))
def test_shipped_configs_run(tmp_path, capsys, name):
    code, err = run([name, "--config", str(CONFIGS / f"{name}.toml"), "--out", str(tmp_path),
                     "--reps", "500"], capsys)
    assert code == 0, err


def test_module_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "rankgame", "equilibrium", "--config", write(tmp_path, CANONICAL),
         "--out", str(tmp_path)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert proc.stdout == ""
