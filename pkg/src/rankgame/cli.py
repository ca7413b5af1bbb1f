"""Command-line front end: ``rankgame <subcommand> --config scenario.toml``.

Exit codes: 0 success, 1 invalid input, 2 an enumeration guard tripped.
Diagnostics go to stderr as one JSON line; data goes only to files.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

from rankgame.errors import GuardError, ValidationError
from rankgame.experiments import DEFAULT_SEED, SWEEP_AXES, RunReport, Scenario, run_scenario, sweep

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SUBCOMMANDS = {
    "simulate": "simulate",
    "utility": "utility",
    "equilibrium": "nash_verify",
    "enumerate-nash": "nash_enumerate",
    "approx-nash": "approx_nash",
    "concentration": "concentration",
    "estimator": "estimator_bounds",
    "data-splitting": "data_splitting",
    "minimax-curve": "minimax_curve",
}
ROW_COLUMNS = ("metric", "value", "std_error", "bound", "verdict", "invariant")
CURVE_COLUMNS = ("x", "y", "y_bound")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(records, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for rec in records:
        w.writerow([_cell(getattr(rec, c)) for c in columns])
    return buf.getvalue()


def _safe_name(s: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_.=" else "_" for ch in s).strip("_")


def write_report(report: RunReport, out_dir: Path, fmt: str) -> list[Path]:
    stem = _safe_name(report.scenario_id)
    written = []
    if fmt == "json":
        path = out_dir / f"{stem}.json"
        atomic_write(path, json.dumps(report.to_dict(), indent=2) + "\n")
        written.append(path)
    else:
        path = out_dir / f"{stem}.csv"
        atomic_write(path, render_csv(report.rows, ROW_COLUMNS))
        written.append(path)
        if report.curve:
            cpath = out_dir / f"{stem}_curve.csv"
            atomic_write(cpath, render_csv(report.curve, CURVE_COLUMNS))
            written.append(cpath)
    return written


def load_scenario(path: str, kind: str | None) -> Scenario:
    try:
        with open(path, "rb") as fh:
            tree = tomllib.load(fh)
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ValidationError(f"config {path} is not valid TOML: {exc}") from None
    if kind is not None:
        tree.setdefault("scenario", {})
        declared = tree["scenario"].get("kind")
        if declared is not None and declared != kind:
            raise ValidationError(f"config kind {declared!r} does not match subcommand ({kind!r})")
        tree["scenario"]["kind"] = kind
    return Scenario.from_dict(tree)


def _parse_values(text: str) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        try:
            out.append(int(part))
        except ValueError:
            try:
                out.append(float(part))
            except ValueError:
                raise ValidationError(f"sweep value {part!r} is not numeric") from None
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="rankgame", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    for name in [*SUBCOMMANDS, "sweep"]:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--reps", type=int, help="replications (overrides the config)")
        p.add_argument("--out", default=None, help="output directory (default: config output_dir or .)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")
        if name == "sweep":
            p.add_argument("--axis", required=True, choices=SWEEP_AXES)
            p.add_argument("--values", required=True, help="comma-separated values")
    return parser


def _fail(kind: str, message: str, **extra) -> None:
    print(json.dumps({"error": kind, **extra, "message": message}), file=sys.stderr)


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        kind = SUBCOMMANDS.get(args.subcommand)
        scenario = load_scenario(args.config, kind)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ValidationError("--seed must be an unsigned 64-bit integer")
            scenario = replace(scenario, master_seed=args.seed)
        if args.reps is not None:
            scenario = replace(scenario, n_reps=args.reps)
        scenario.validate()
        out_dir = Path(args.out or scenario.output_dir or ".")
        if args.subcommand == "sweep":
            values = _parse_values(args.values)
            reports = sweep(scenario, args.axis, values)
        else:
            reports = [run_scenario(scenario)]
        for rep in reports:
            for path in write_report(rep, out_dir, args.format):
                print(f"wrote {path}", file=sys.stderr)
    except ValidationError as exc:
        _fail("validation", str(exc).replace("\n", " "))
        return 1
    except GuardError as exc:
        _fail("guard", str(exc).replace("\n", " "), guard=exc.guard)
        return 2
    return 0


__all__ = ["main", "build_parser", "DEFAULT_SEED"]
