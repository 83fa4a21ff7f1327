"""Command-line runner.

    mixlab <subcommand> --config <file> [--seed N] [--out DIR] [--workers N]

Exit codes: 0 all acceptance flags pass, 1 an acceptance flag failed,
2 configuration error, 3 runtime error.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .config import KINDS, config_hash, load_config, resolve
from .errors import ConfigError

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


@dataclass
class RunManifest:
    config_hash: str
    tool_version: str
    kind: str
    seed: int
    duration_seconds: float
    passed: dict
    files: list = field(default_factory=list)


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _dump(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(config: dict, echo=print) -> RunManifest:
    """Executes one experiment (or the acceptance suite) and writes its artifacts."""
    cfg = resolve(config)
    out = cfg["out"]
    workers = cfg["workers"]
    os.makedirs(out, exist_ok=True)
    t0 = time.perf_counter()
    if cfg["kind"] == "accept-all":
        from .acceptance import run_all

        results = run_all(cfg["seed"], workers, out, cfg["scale"] == "quick", cfg["criteria"], echo)
        passed = {f"criterion_{r.cid:02d}": r.passed for r in results}
        files = sorted({f for r in results for f in r.files})
        summary = {"kind": "accept-all", "scale": cfg["scale"],
                   "criteria": [{"id": r.cid, "title": r.title, "passed": r.passed,
                                 "measured": r.measured, "tolerance": r.tolerance}
                                for r in results]}
    else:
        from .experiments import RUNNERS

        res = RUNNERS[cfg["kind"]](cfg, out, workers)
        passed = {cfg["kind"]: res.passed}
        files = [os.path.relpath(f, out) for f in res.files]
        summary = {"kind": cfg["kind"], "passed": res.passed, "results": res.summary}
        echo(f"[{'PASS' if res.passed else 'FAIL'}] {cfg['kind']}")
    summary["config"] = cfg
    _dump(os.path.join(out, "summary.json"), summary)
    files = files + ["summary.json"]
    inventory = [{"path": f, "sha256": _sha256(os.path.join(out, f)),
                  "bytes": os.path.getsize(os.path.join(out, f))} for f in files]
    manifest = RunManifest(config_hash(cfg), __version__, cfg["kind"], cfg["seed"],
                           time.perf_counter() - t0, passed, inventory)
    _dump(os.path.join(out, "manifest.json"), asdict(manifest))
    return manifest


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mixlab", description=__doc__.split("\n\n")[0])
    ap.add_argument("subcommand", choices=KINDS)
    ap.add_argument("--config", required=True, help="TOML experiment config")
    ap.add_argument("--seed", type=int, help="master seed (overrides the config)")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--workers", type=int, help="worker threads (results do not depend on it)")
    ap.add_argument("--version", action="version", version=f"mixlab {__version__}")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        if "kind" in config and config["kind"] != args.subcommand:
            raise ConfigError(f"config kind = {config['kind']!r} does not match subcommand "
                              f"{args.subcommand!r}", key="kind")
        config["kind"] = args.subcommand
        for key in ("seed", "out", "workers"):
            value = getattr(args, key)
            if value is not None:
                config[key] = value
        manifest = run(config)
    except ConfigError as exc:
        where = f" (key: {exc.key})" if exc.key else ""
        print(f"mixlab: config error{where}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # surfaced with experiment context, mapped to exit 3
        print(f"mixlab: {args.subcommand} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_PASS if all(manifest.passed.values()) else EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
