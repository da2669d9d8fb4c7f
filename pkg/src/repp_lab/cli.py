"""``repp-lab <scenario> --config <path> [--out <dir>] [--threads N] [--seed S]``

Exit status: 0 when every report passes, 1 when any fails, 2 for an
invalid configuration, 3 for an I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import config_hash, load_toml, resolve
from .errors import ConfigInvalid, IoFailure, ScenarioFailed
from .orbits import default_threads
from .scenarios import DEFAULTS, SCENARIOS, Results, run

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats as null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def results_json(res: Results) -> str:
    return json.dumps(_clean(res.to_dict()), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise IoFailure(f"{path}: {exc}") from exc


def emit_plotdata(results: Results | dict, out_dir: str | os.PathLike) -> list[Path]:
    """One CSV per curve: a '# ' comment line documenting the columns, a header, then rows."""
    curves = results.to_dict()["curves"] if isinstance(results, Results) else results.get("curves", {})
    out = []
    for name, c in sorted(curves.items()):
        path = Path(out_dir) / f"{name}.csv"
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", newline="") as fh:
                fh.write(f"# {c['comment']}\n")
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(c["columns"])
                for row in c["rows"]:
                    w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
        except OSError as exc:
            raise IoFailure(f"{path}: {exc}") from exc
        out.append(path)
    return out


def write_outputs(res: Results, out_dir: Path, threads: int, config_path: str | None) -> None:
    _write_text(out_dir / "results.json", results_json(res))
    csvs = emit_plotdata(res, out_dir)
    manifest = {
        "scenario": res.scenario,
        "version": __version__,
        "seed": res.config["seed"],
        "config_hash": config_hash({k: v for k, v in res.config.items() if k not in ("threads", "output")}),
        "config_path": config_path,
        "threads": threads,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_clock_seconds": {k: round(v, 3) for k, v in sorted(res.timings.items())},
        "files": ["results.json"] + [p.name for p in csvs],
        "all_pass": res.all_pass,
    }
    _write_text(out_dir / "manifest.json", json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n")


def run_scenario(name: str, config: dict, out_dir: str | os.PathLike | None = None,
                 config_path: str | None = None) -> Results:
    """Run a resolved configuration, write its outputs, raise ScenarioFailed on any failing report."""
    threads = config["threads"] or default_threads()
    config = {**config, "threads": threads}
    res = run(name, config)
    out = Path(out_dir if out_dir is not None else config["output"]["dir"])
    write_outputs(res, out, threads, config_path)
    if not res.all_pass:
        exc = ScenarioFailed(res.failing)
        exc.results = res
        raise exc
    return res


def load_config(name: str, path: str, seed: int | None = None, threads: int | None = None) -> dict:
    if name not in DEFAULTS:
        raise ConfigInvalid(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")
    cfg = resolve(DEFAULTS[name], load_toml(path), seed)
    if not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool):
        raise ConfigInvalid("'seed' must be an integer")
    if threads is not None:
        if threads < 0:
            raise ConfigInvalid("--threads must be >= 0")
        cfg["threads"] = threads
    return cfg


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="repp-lab", description=__doc__.splitlines()[0])
    ap.add_argument("scenario", choices=SCENARIOS)
    ap.add_argument("--config", required=True, help="TOML experiment file")
    ap.add_argument("--out", help="output directory (default: output.dir from the config)")
    ap.add_argument("--threads", type=int, help="worker threads (0: all cores); results do not depend on it")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("--version", action="version", version=f"repp-lab {__version__}")
    return ap


def _summary(res: Results) -> str:
    lines = []
    for name, r in res.reports:
        lines.append(f"{'PASS' if r.passed else 'FAIL'}  {name}: {r.statistic:.6g} "
                     f"({r.kind}, threshold {r.threshold:.6g})")
    return "\n".join(lines)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.scenario, args.config, args.seed, args.threads)
        res = run_scenario(args.scenario, cfg, args.out, args.config)
    except ConfigInvalid as exc:
        print(f"repp-lab: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IoFailure as exc:
        print(f"repp-lab: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    except ScenarioFailed as exc:
        print(_summary(exc.results))
        print(f"repp-lab: {args.scenario} failed: {', '.join(exc.failing)}", file=sys.stderr)
        return EXIT_FAILED
    print(_summary(res))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
