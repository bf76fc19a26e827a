"""Command-line entry point: ``schrodinger-lab <command> [flags]``.

Exit codes: 0 pass, 1 suite failure, 2 config error, 3 resource or range
error, 4 search-budget soft failure. Precedence is flag > config > default.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import field_core
from .errors import DomainError, LabError, RangeError
from .field_core import FrequencySupport, GridSpec, SampledField, from_bytes, l2_norm, random_bandlimited
from .partition import ProjectedPolySpace, build_partition, equal_split_polynomial
from .sweeps import maximal_sweep, counterexample_sweep, counterexample_exponent
from .suites import SUITES, run_suites
from .tube_geometry import equidistribution_check, tangent_plane_datum
from .wavepacket import build_tile_lattice, decompose, packet_grid, reconstruct

SCHEMA_VERSION = 1
log = logging.getLogger("schrodinger_lab")

DEFAULTS = {
    "decompose": {"R": 64.0, "input": None, "zero": False},
    "maximal-sweep": {"R_list": [8.0, 16.0, 32.0, 64.0], "p": 3.2, "samples_per_R": 8},
    "counterexample": {"lambda_list": [16.0, 32.0, 64.0, 128.0, 256.0], "p": 3.2, "s": 0.0},
    "partition-demo": {"D": 4, "m": 3, "mass": "uniform", "points": 100000},
    "equidistribution": {"R": 1024.0, "packets": 12},
    "property-suite": {"suite": None, "force_failure": False},
}


class ConfigError(Exception):
    pass


def canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_plain)


def digest(obj) -> str:
    return hashlib.sha256(canonical(obj).encode()).hexdigest()


def _plain(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o).__name__}")


def write_json(path: Path, obj) -> None:
    text = json.dumps({"schema_version": SCHEMA_VERSION, **obj}, sort_keys=True, indent=2, default=_plain)
    path.write_text(text + "\n")


def _parse_list(s: Optional[str]):
    if s is None:
        return None
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"bad number list {s!r}") from e


def resolve(args) -> dict:
    """Merge defaults, the JSON config and explicit flags."""
    cfg = dict(DEFAULTS[args.command])
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(loaded) - set(cfg) - {"seed", "threads"}
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        cfg.update(loaded)
    cfg.setdefault("seed", 0)
    for k, v in vars(args).items():
        if k in ("command", "config", "out", "func"):
            continue
        if v is None or v is False:
            continue
        if k in ("R_list", "lambda_list"):
            v = _parse_list(v)
        cfg[k] = v
    return cfg


# commands ---------------------------------------------------------------------

def cmd_decompose(cfg: dict, out: Path) -> tuple:
    R = float(cfg["R"])
    if cfg.get("input"):
        try:
            f = from_bytes(Path(cfg["input"]).read_bytes())
        except OSError as e:
            raise ConfigError(f"cannot read input field: {e}") from e
        grid = f.grid
    else:
        grid = packet_grid(R)
        if cfg.get("zero"):
            f = SampledField(grid, np.zeros((grid.n, grid.n), complex), "frequency", FrequencySupport.unit_ball())
        else:
            f = random_bandlimited(grid, FrequencySupport.unit_ball(), np.random.default_rng(int(cfg["seed"])))
    lat = build_tile_lattice(R, f.support or FrequencySupport.unit_ball(), grid)
    c = decompose(f, lat)
    n2 = l2_norm(f) ** 2
    if n2 > 0:
        pars = abs(c.energy() - n2) / n2
        rt = l2_norm(reconstruct(c) + f.scale(-1.0)) / np.sqrt(n2)
    else:
        pars = rt = 0.0
    ok = pars <= 1e-3 and rt <= 1e-3
    (out / "coefficients.csv").write_text(c.to_csv())
    write_json(out / "frame_report.json", {"R": R, "tiles": len(lat), "n_theta": lat.n_theta,
                                           "parseval_rel_error": pars, "roundtrip_rel_error": rt, "pass": ok})
    return (0 if ok else 1), ["coefficients.csv", "frame_report.json"]


def cmd_maximal_sweep(cfg: dict, out: Path) -> tuple:
    rep = maximal_sweep([float(r) for r in cfg["R_list"]], float(cfg["p"]), int(cfg["seed"]), int(cfg["samples_per_R"]))
    write_json(out / "maximal_sweep.json", rep.to_dict())
    rows = "scale,ratio\n" + "".join(f"{s!r},{r!r}\n" for s, r in zip(rep.scales, rep.ratios))
    (out / "maximal_sweep.csv").write_text(rows)
    return 0, ["maximal_sweep.json", "maximal_sweep.csv"]


def cmd_counterexample(cfg: dict, out: Path) -> tuple:
    lams = [float(x) for x in cfg["lambda_list"]]
    if len(lams) < 2:
        raise ConfigError("need at least two lambda values to fit a slope")
    p, s = float(cfg["p"]), float(cfg["s"])
    fit = counterexample_sweep(lams, p, s)
    target = counterexample_exponent(p) - s
    ok = abs(fit.slope - target) <= 0.05
    write_json(out / "counterexample.json", {"p": p, "s": s, "target_slope": target, "fit": fit.to_dict(), "pass": ok})
    rows = "lambda,ratio\n" + "".join(f"{np.exp(a)!r},{np.exp(b)!r}\n" for a, b in fit.samples)
    (out / "counterexample.csv").write_text(rows)
    return (0 if ok else 1), ["counterexample.json", "counterexample.csv"]


def _mass(kind: str, n: int, seed: int):
    rng = np.random.default_rng(seed)
    if kind == "uniform":
        pts = rng.uniform(-1, 1, (n, 3))
    elif kind == "symmetric":
        half = rng.uniform(-1, 1, (n // 2, 3))
        pts = np.concatenate([half, half * np.array([-1.0, 1.0, 1.0])])
    elif kind == "point":
        pts = np.tile([[0.25, -0.5, 0.1]], (n, 1))
    else:
        raise ConfigError(f"unknown mass kind {kind!r}")
    return pts, np.ones(len(pts))


def cmd_partition_demo(cfg: dict, out: Path) -> tuple:
    D, m = int(cfg["D"]), int(cfg["m"])
    if m not in (1, 2, 3):
        raise ConfigError("m must be 1, 2 or 3")
    pts, w = _mass(cfg["mass"], int(cfg["points"]), int(cfg["seed"]))
    space = ProjectedPolySpace(np.eye(3)[:m], max(D, 1))
    if D < 2:
        res = equal_split_polynomial(pts, w, np.zeros(len(pts), int), space.fitted(pts, 1), np.random.default_rng(int(cfg["seed"])))
        write_json(out / "polynomials.json", {"factors": [res.poly.to_json()], "residuals": [list(map(float, res.residuals))]})
        (out / "cells.csv").write_text("label,mass\n")
        return (0 if res.converged else 4), ["polynomials.json", "cells.csv"]
    dec = build_partition(pts, w, space, D, rng=np.random.default_rng(int(cfg["seed"])))
    write_json(out / "polynomials.json", dec.to_json())
    (out / "cells.csv").write_text("label,mass\n" + "".join(f"{k},{v!r}\n" for k, v in sorted(dec.cell_mass.items())))
    worst = max((max(r) for r in dec.residuals if r), default=0.0)
    return (0 if worst <= 1e-3 else 4), ["polynomials.json", "cells.csv"]


def cmd_equidistribution(cfg: dict, out: Path) -> tuple:
    R = float(cfg["R"])
    grid = GridSpec(2 * np.pi * 8 * np.sqrt(R), 1024)
    f, _ = tangent_plane_datum(R, grid, R / 2, int(cfg["packets"]), int(cfg["seed"]))
    rep = equidistribution_check(f, 0, R, R**0.65, R / 2, [R / 2**i for i in range(1, 5)])
    write_json(out / "equidistribution.json", rep.to_dict())
    (out / "equidistribution.csv").write_text("rho,ratio\n" + "".join(f"{a!r},{b!r}\n" for a, b in rep.csv_rows()))
    return (0 if rep.passed else 1), ["equidistribution.json", "equidistribution.csv"]


def cmd_property_suite(cfg: dict, out: Path) -> tuple:
    names = list(SUITES) if not cfg.get("suite") else [cfg["suite"]]
    for n in names:
        if n not in SUITES:
            raise ConfigError(f"unknown suite {n!r}; choose from {sorted(SUITES)}")
    verdicts = run_suites(names, int(cfg["seed"]), bool(cfg.get("force_failure")))
    failed = [v["invariant"] for v in verdicts if not v["pass"]]
    write_json(out / "property_suite.json", {"verdicts": verdicts, "failed": failed, "pass": not failed})
    for name in failed:
        print(f"FAILED {name}", file=sys.stderr)
    return (1 if failed else 0), ["property_suite.json"]


COMMANDS = {
    "decompose": cmd_decompose,
    "maximal-sweep": cmd_maximal_sweep,
    "counterexample": cmd_counterexample,
    "partition-demo": cmd_partition_demo,
    "equidistribution": cmd_equidistribution,
    "property-suite": cmd_property_suite,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="schrodinger-lab")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config; flags override its keys")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--threads", type=int, help="FFT worker count")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", parents=[common])
    p.add_argument("--R", type=float)
    p.add_argument("--input", help="binary field record")
    p.add_argument("--zero", action="store_true", help="decompose the zero field")

    p = sub.add_parser("maximal-sweep", parents=[common])
    p.add_argument("--R-list", dest="R_list")
    p.add_argument("--p", type=float)
    p.add_argument("--samples-per-R", dest="samples_per_R", type=int)

    p = sub.add_parser("counterexample", parents=[common])
    p.add_argument("--lambda-list", dest="lambda_list")
    p.add_argument("--p", type=float)
    p.add_argument("--s", type=float)

    p = sub.add_parser("partition-demo", parents=[common])
    p.add_argument("--D", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--mass", choices=["uniform", "symmetric", "point"])
    p.add_argument("--points", type=int)

    p = sub.add_parser("equidistribution", parents=[common])
    p.add_argument("--R", type=float)
    p.add_argument("--packets", type=int)

    p = sub.add_parser("property-suite", parents=[common])
    p.add_argument("--suite", help="run only this suite")
    p.add_argument("--force-failure", dest="force_failure", action="store_true",
                   help="append a fixture whose tolerance is corrupted")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    out = Path(args.out)
    started = time.time()
    try:
        cfg = resolve(args)
        if cfg.get("threads"):
            field_core.set_fft_workers(int(cfg["threads"]))
        out.mkdir(parents=True, exist_ok=True)
        code, files = COMMANDS[args.command](cfg, out)
    except (ConfigError, DomainError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except RangeError as e:
        print(f"range error: {e}", file=sys.stderr)
        return 3
    except LabError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    manifest = {"command": args.command, "config": cfg, "config_digest": digest(cfg), "seed": cfg.get("seed"),
                "started": started, "finished": time.time(), "artifacts": sorted(files), "exit_code": code}
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2, default=_plain) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
