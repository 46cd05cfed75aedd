"""Command line: ``run``, ``validate`` and ``presets list``.

Exit codes: 0 success, 2 configuration error, 3 capacity error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

from .. import __version__
from ..statevector import CapacityError as EngineCapacityError
from .config import (CapacityError, ConfigError, ExperimentConfig, check_config, list_presets, load_config,
                     read_config)

OUTPUT_ENV = "DFLAB_OUTPUT_ROOT"
EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY = 0, 2, 3
BEGIN, END = "----- BEGIN {} -----", "----- END {} -----"


def output_dir(cfg: ExperimentConfig, root: str | None) -> Path:
    root = root or os.environ.get(OUTPUT_ENV) or "dflab-output"
    return Path(root) / (cfg.output_dir or cfg.name or cfg.experiment)


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def run(cfg: ExperimentConfig, root: str | None = None, figures: bool = True, stream=None) -> Path:
    """Execute ``cfg`` and write data files, figures and a manifest.

    Every data file is also echoed to ``stream`` between BEGIN/END markers.

    Returns:
        The output directory.
    """
    from .experiments import execute

    stream = stream or sys.stdout
    t0 = time.perf_counter()
    out = execute(cfg)
    wall = time.perf_counter() - t0
    d = output_dir(cfg, root)
    d.mkdir(parents=True, exist_ok=True)
    written = []
    for name, text in sorted(out.files.items()):
        p = d / name
        p.write_text(text)
        written.append(p)
        print(BEGIN.format(name), file=stream)
        stream.write(text if text.endswith("\n") else text + "\n")
        print(END.format(name), file=stream)
    if figures:
        from .plotting import render

        for f in out.figures:
            written.append(render(f, d))
    manifest = {
        "experiment": cfg.experiment,
        "config": cfg.raw,
        "config_hash": cfg.config_hash(),
        "version": __version__,
        "seed": cfg.seed,
        "wall_time_s": round(wall, 3),
        "summary": out.summary,
        "files": {p.name: _sha(p) for p in written},
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    print(BEGIN.format("summary"), file=stream)
    print(json.dumps(out.summary, sort_keys=True), file=stream)
    print(END.format("summary"), file=stream)
    return d


def _validate(path: str) -> int:
    """Report every config and capacity problem without running anything."""
    try:
        d = read_config(path)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}")
        return EXIT_CONFIG
    cfg, problems, capacity = check_config(d)
    for msg in problems:
        print(f"config error: {msg}")
    for msg in capacity:
        print(f"capacity error: {msg}")
    if problems:
        return EXIT_CONFIG
    if capacity:
        return EXIT_CAPACITY
    print(f"ok {cfg.experiment} {cfg.config_hash()}")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dflab", description="Disorder-free localization experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config or preset")
    r.add_argument("config")
    r.add_argument("--output-root", default=None, help=f"overrides ${OUTPUT_ENV}")
    r.add_argument("--no-figures", action="store_true")
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    p = sub.add_parser("presets", help="shipped presets")
    p.add_argument("action", choices=["list"])
    return ap


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "presets":
        for name, desc in list_presets():
            print(f"{name}\t{desc}")
        return EXIT_OK
    if args.command == "validate":
        return _validate(args.config)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for msg in exc.problems:
            print(f"config error: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    try:
        d = run(cfg, args.output_root, figures=not args.no_figures)
    except (EngineCapacityError, CapacityError) as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    print(f"wrote {d}", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
