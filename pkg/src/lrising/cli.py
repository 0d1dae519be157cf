"""Command-line front end: lrising {enumerate,contours,sample,verify,sweep}.

Configs are JSON and are merged over a built-in desk-scale default.  Every
run writes its data files plus manifest.json, which echoes the resolved
config and can itself be passed back through --config to reproduce the run.

Exit codes: 0 ok, 2 invalid config, 3 scale guard tripped, 4 bound violated
under --strict.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .contours import MARParams, cube_cover_count, origin_census
from .exact import EXACT_CAP, ScaleGuardError, gibbs_expectations, site_minus, site_spin
from .lattice import Volume
from .model import MINUS, PLUS, CouplingSpec, Model
from .sampler import ChainConfig, bc_key, beta_sweep, run_chains
from .verify import (
    dudley_entropy_estimate, peierls_grid_exact, verify_concentration, verify_counting,
    verify_flip_energy_bound, verify_gap, verify_peierls,
)

EXIT_CONFIG, EXIT_SCALE, EXIT_VIOLATED = 2, 3, 4
OUT_ENV = "LRISING_OUT"
MC_SITE_CAP = 4096
BOUNDS = ("flip_energy", "concentration", "counting", "dudley", "peierls", "gap")

DEFAULT_CONFIG = {
    "model": {"d": 2, "alpha": 3.0, "J": 1.0, "R_cut": 8.0, "norm": "euclidean"},
    "volume": {"shape": [4, 4], "anchor": None},
    "run": {
        "betas": [0.5, 1.0, 2.0, 4.0], "epss": [0.0], "seed": 0, "replicas": 20,
        "chains": 1, "sweeps": 11000, "burn_in": 1000, "thinning": 10, "n_batches": 50,
        "scan": "sequential", "bcs": ["plus", "minus"],
    },
    "contours": {"ns": [4, 5, 6, 8], "l_grid": [0, 1, 2, 3], "j": None,
                 "M": 1.0, "a": 1.0, "r": 2, "k": 1.0},
    "verify": {
        "flip_energy": {"shape": [3, 3]},
        "concentration": {"shape": [3, 3], "A": [[0, 0]], "A2": None, "beta": 1.0, "eps": 0.5,
                          "replicas": 10000, "lambdas": None},
        "counting": {},
        "dudley": {"beta": 1.0, "eps": 0.5, "n": 8, "replicas": 200},
        "peierls": {"betas": [0.5, 1.0, 2.0, 4.0], "epss": [0.0], "replicas": 200},
        "gap": {"shape": [8, 8], "beta": 2.0, "chains": 4, "sweeps": 3000, "burn_in": 500,
                "thinning": 1, "n_batches": 50},
    },
}


class ConfigError(Exception):
    pass


# ---------------------------------------------------------------------------
# config


def _merge(base: dict, over: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = f"{path}.{k}" if path else k
        if k not in base:
            raise ConfigError(f"unknown key {where!r}")
        if isinstance(base[k], dict) and base[k]:
            if not isinstance(v, dict):
                raise ConfigError(f"{where!r} must be an object")
            out[k] = _merge(base[k], v, where)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _num(x, where, lo=None, integer=False):
    ok = isinstance(x, int) if integer else isinstance(x, (int, float))
    if isinstance(x, bool) or not ok:
        raise ConfigError(f"{where} must be {'an integer' if integer else 'a number'}")
    if lo is not None and x < lo:
        raise ConfigError(f"{where} must be >= {lo}")
    return x


def _list(x, where, item, nonempty=True):
    if not isinstance(x, list) or (nonempty and not x):
        raise ConfigError(f"{where} must be a non-empty array")
    return [item(v, f"{where}[{i}]") for i, v in enumerate(x)]


def _bc_name(x, where):
    if x not in ("plus", "minus"):
        raise ConfigError(f"{where} must be 'plus' or 'minus'")
    return x


def _shape(x, where, d=None):
    s = _list(x, where, lambda v, w: _num(v, w, 1, True))
    if d is not None and len(s) != d:
        raise ConfigError(f"{where} has {len(s)} sides but the model has d = {d}")
    return s


def validate(cfg: dict) -> dict:
    """Type and range checks on a merged config; raises ConfigError."""
    m = cfg["model"]
    d = _num(m["d"], "model.d", 1, True)
    try:
        CouplingSpec(J=m["J"], alpha=m["alpha"], d=d, R_cut=m["R_cut"], norm=m["norm"])
    except (ValueError, TypeError) as e:
        raise ConfigError(f"model: {e}") from None
    _shape(cfg["volume"]["shape"], "volume.shape", d)
    if cfg["volume"]["anchor"] is not None:
        _list(cfg["volume"]["anchor"], "volume.anchor", lambda v, w: _num(v, w, integer=True))
    r = cfg["run"]
    _list(r["betas"], "run.betas", lambda v, w: _num(v, w, 0))
    _list(r["epss"], "run.epss", lambda v, w: _num(v, w, 0))
    _num(r["seed"], "run.seed", 0, True)
    for k in ("replicas", "chains", "sweeps", "thinning"):
        _num(r[k], f"run.{k}", 1, True)
    _num(r["burn_in"], "run.burn_in", 0, True)
    _num(r["n_batches"], "run.n_batches", 2, True)
    if r["scan"] not in ("sequential", "random"):
        raise ConfigError("run.scan must be 'sequential' or 'random'")
    _list(r["bcs"], "run.bcs", _bc_name)
    if r["sweeps"] <= r["burn_in"]:
        raise ConfigError("run.sweeps must exceed run.burn_in")
    c = cfg["contours"]
    _list(c["ns"], "contours.ns", lambda v, w: _num(v, w, 1, True))
    _list(c["l_grid"], "contours.l_grid", lambda v, w: _num(v, w, 0, True))
    if c["j"] is not None:
        _num(c["j"], "contours.j", 1, True)
    try:
        MARParams(M=c["M"], a=c["a"], r=c["r"])
    except (ValueError, TypeError) as e:
        raise ConfigError(f"contours: {e}") from None
    v = cfg["verify"]
    _shape(v["flip_energy"]["shape"], "verify.flip_energy.shape", d)
    cc = v["concentration"]
    _shape(cc["shape"], "verify.concentration.shape", d)
    _num(cc["beta"], "verify.concentration.beta", 1e-300)
    _num(cc["eps"], "verify.concentration.eps", 1e-300)
    _num(cc["replicas"], "verify.concentration.replicas", 1, True)
    g = v["gap"]
    _shape(g["shape"], "verify.gap.shape", d)
    if g["sweeps"] <= g["burn_in"]:
        raise ConfigError("verify.gap.sweeps must exceed verify.gap.burn_in")
    return cfg


def load_config(path: str | None) -> dict:
    """Read a config (or a previous manifest) and merge it over the default."""
    if path is None:
        return validate(copy.deepcopy(DEFAULT_CONFIG))
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: cannot read config: {e.strerror}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be an object")
    if "config" in data and "command" in data:  # a manifest
        data = data["config"]
    return validate(_merge(DEFAULT_CONFIG, data))


def _spec(cfg) -> CouplingSpec:
    m = cfg["model"]
    return CouplingSpec(J=m["J"], alpha=m["alpha"], d=m["d"], R_cut=m["R_cut"], norm=m["norm"])


def _volume(cfg) -> Volume:
    v = cfg["volume"]
    return Volume.box(v["shape"], v["anchor"])


def _mar(cfg) -> MARParams:
    c = cfg["contours"]
    return MARParams(M=c["M"], a=c["a"], r=c["r"])


# ---------------------------------------------------------------------------
# output


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return json.dumps(v)
    return "" if v is None else str(v)


def write_csv(path: Path, rows: list, columns: list | None = None) -> None:
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def emit(out: Path, command: str, cfg: dict, files: list, seeds, started: float,
         extra: dict | None = None) -> Path:
    """Write manifest.json next to the data files (which are already on disk)."""
    out.mkdir(parents=True, exist_ok=True)
    man = {
        "command": command,
        "config": cfg,
        "seeds": seeds,
        "version": __version__,
        "wall_time_s": round(time.time() - started, 3),
        "files": {p.name: _sha(p) for p in sorted(files)},
    }
    if extra:
        man.update(extra)
    p = out / "manifest.json"
    write_json(p, man)
    return p


# ---------------------------------------------------------------------------
# commands


def cmd_enumerate(cfg, out: Path, args) -> tuple[list, dict]:
    vol, spec = _volume(cfg), _spec(cfg)
    cap = max(EXACT_CAP, len(vol)) if args.override_scale_guard else EXACT_CAP
    if len(vol) > cap:
        raise ScaleGuardError(f"exact mode is capped at {cap} spins, volume has {len(vol)}")
    origin = (0,) * vol.dim
    rows = []
    for bc_name in cfg["run"]["bcs"]:
        model = Model(vol, spec, PLUS if bc_name == "plus" else MINUS)
        obs = {"p_minus": site_minus(model, origin), "m_origin": site_spin(model, origin)}
        for beta in cfg["run"]["betas"]:
            r = gibbs_expectations(model, beta, obs, cap=cap)
            rows.append({"beta": float(beta), "bc": bc_name, "log_Z": r["log_Z"],
                         "p_minus": r["p_minus"], "m_origin": r["m_origin"]})
    p = out / "enumerate.csv"
    write_csv(p, rows, ["beta", "bc", "log_Z", "p_minus", "m_origin"])
    return [p], {}


def _census_guard(vol, args):
    if len(vol) > EXACT_CAP and not (args is not None and args.override_scale_guard):
        raise ScaleGuardError(f"contour census is capped at {EXACT_CAP} sites, box has {len(vol)}")


def cmd_contours(cfg, out: Path, args) -> tuple[list, dict]:
    vol = _volume(cfg)
    c = cfg["contours"]
    _census_guard(vol, args)
    census = origin_census(c["ns"], vol, _mar(cfg), PLUS, max_sites=max(len(vol), EXACT_CAP))
    rows = []
    for n in sorted(census):
        fam = census[n]
        if c["j"] is not None:
            fam = [g for g in fam if len(g.components) <= c["j"]]
        row = {"n": n, "j": c["j"], "count": len(fam)}
        for l in c["l_grid"]:
            row[f"cover_l{l}"] = cube_cover_count(fam, l).count
        rows.append(row)
    cols = ["n", "j", "count"] + [f"cover_l{l}" for l in c["l_grid"]]
    p = out / "census.csv"
    write_csv(p, rows, cols)
    pj = out / "contours.json"
    write_json(pj, {str(n): [g.to_dict() for g in census[n]] for n in sorted(census)})
    return [p, pj], {}


def _chain_template(cfg, vol, beta, bc) -> ChainConfig:
    r = cfg["run"]
    return ChainConfig(vol, float(beta), bc=bc, sweeps=r["sweeps"], burn_in=r["burn_in"],
                       thinning=r["thinning"], seed=r["seed"], scan=r["scan"],
                       n_batches=r["n_batches"])


def _mc_guard(vol, args):
    if len(vol) > MC_SITE_CAP and not args.override_scale_guard:
        raise ScaleGuardError(f"sampling is capped at {MC_SITE_CAP} sites, volume has {len(vol)}")


def cmd_sample(cfg, out: Path, args) -> tuple[list, dict]:
    vol, spec = _volume(cfg), _spec(cfg)
    _mc_guard(vol, args)
    r = cfg["run"]
    seeds = []
    rows = []
    for bc_name in r["bcs"]:
        bc = PLUS if bc_name == "plus" else MINUS
        model = Model(vol, spec, bc)
        for k, beta in enumerate(r["betas"]):
            keys = [(r["seed"], bc_key(bc), k, c) for c in range(r["chains"])]
            seeds.extend(list(x) for x in keys)
            res = run_chains(_chain_template(cfg, vol, beta, bc), spec, keys, model=model)
            for c, cr in enumerate(res):
                for name in ("origin_minus", "magnetization"):
                    rec = cr.records[name]
                    rows.append({"beta": float(beta), "bc": bc_name, "chain": c,
                                 "observable": name, "estimate": rec.estimate,
                                 "stderr": rec.stderr, "ess": rec.effective_samples})
    p = out / "sample.csv"
    write_csv(p, rows, ["beta", "bc", "chain", "observable", "estimate", "stderr", "ess"])
    return [p], {"chain_seeds": seeds}


def cmd_sweep(cfg, out: Path, args) -> tuple[list, dict]:
    vol, spec = _volume(cfg), _spec(cfg)
    _mc_guard(vol, args)
    r = cfg["run"]
    template = _chain_template(cfg, vol, r["betas"][0], PLUS)
    rows = beta_sweep(template, spec, r["betas"], r["epss"], r["replicas"], args.workers)
    rows = [x for x in rows if x["bc"] in r["bcs"]]
    p = out / "sweep.csv"
    write_csv(p, rows, ["beta", "eps", "bc", "p_minus", "stderr"])
    return [p], {}


def run_bound(name: str, cfg: dict, args=None):
    """Compute one bound report from a resolved config."""
    spec = _spec(cfg)
    v = cfg["verify"][name]
    seed = cfg["run"]["seed"]
    if name == "flip_energy":
        return verify_flip_energy_bound(Volume.box(v["shape"]), spec, PLUS, _mar(cfg))
    if name == "concentration":
        model = Model(Volume.box(v["shape"]), spec, PLUS)
        return verify_concentration(model, v["beta"], v["eps"], [tuple(x) for x in v["A"]],
                                    None if v["A2"] is None else [tuple(x) for x in v["A2"]],
                                    v["lambdas"], v["replicas"], seed)
    if name in ("counting", "dudley"):
        c = cfg["contours"]
        vol = _volume(cfg)
        ns = c["ns"] if name == "counting" else [v["n"]]
        _census_guard(vol, args)
        census = origin_census(ns, vol, _mar(cfg), PLUS, max_sites=max(len(vol), EXACT_CAP))
        if name == "counting":
            return verify_counting(census, c["l_grid"], cfg["model"]["d"], c["r"], c["a"],
                                   c["k"], c["j"])
        return dudley_entropy_estimate(Model(vol, spec, PLUS), v["beta"], v["eps"],
                                       census[v["n"]], v["replicas"], seed)
    if name == "peierls":
        vol = _volume(cfg)
        if len(vol) > EXACT_CAP:
            raise ScaleGuardError(f"exact Peierls grid is capped at {EXACT_CAP} spins")
        pts = peierls_grid_exact(vol, spec, v["betas"], v["epss"], v["replicas"], seed)
        return verify_peierls(pts)
    if name == "gap":
        vol = Volume.box(v["shape"])
        if args is not None:
            _mc_guard(vol, args)
        est = {}
        for bc_name, bc in (("plus", PLUS), ("minus", MINUS)):
            ccfg = ChainConfig(vol, v["beta"], bc=bc, sweeps=v["sweeps"], burn_in=v["burn_in"],
                               thinning=v["thinning"], seed=seed, n_batches=v["n_batches"])
            res = run_chains(ccfg, spec, [(seed, bc_key(bc), c) for c in range(v["chains"])])
            recs = [x.records["origin_minus"] for x in res]
            p = float(np.mean([x.estimate for x in recs]))
            se = math.sqrt(sum(x.stderr ** 2 for x in recs)) / len(recs)
            est[bc_name] = (p, se)
        return verify_gap(est["plus"][0], est["plus"][1], est["minus"][0], est["minus"][1])
    raise ConfigError(f"unknown bound {name!r}")


def cmd_verify(cfg, out: Path, args) -> tuple[list, dict]:
    rep = run_bound(args.bound, cfg, args)
    d = rep.to_dict()
    pj = out / f"verify_{args.bound}.json"
    write_json(pj, d)
    wrows = [{"bound": rep.name, "key": k, "value": v} for k, v in sorted(d["witness"].items())]
    wrows.append({"bound": rep.name, "key": "worst_margin", "value": d["worst_margin"]})
    wrows.append({"bound": rep.name, "key": "instances", "value": d["instances"]})
    pc = out / f"verify_{args.bound}.csv"
    write_csv(pc, wrows, ["bound", "key", "value"])
    return [pc, pj], {"verdict": rep.verdict}


COMMANDS = {"enumerate": cmd_enumerate, "contours": cmd_contours, "sample": cmd_sample,
            "verify": cmd_verify, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lrising", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config or a previous manifest.json")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./lrising_out/<command>)")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    common.add_argument("--strict", action="store_true", help="exit 4 when a bound is violated")
    common.add_argument("--override-scale-guard", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "verify":
            sp.add_argument("bound", choices=BOUNDS)
    return p


def _out_dir(args) -> Path:
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get(OUT_ENV, "lrising_out"))
    sub = args.command if args.command != "verify" else f"verify_{args.bound}"
    return root / sub


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg["run"]["seed"] = args.seed
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    out = _out_dir(args)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        print(f"error: cannot create output directory {out}: {e.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        files, extra = COMMANDS[args.command](cfg, out, args)
    except ScaleGuardError as e:
        print(f"scale guard: {e} (use --override-scale-guard)", file=sys.stderr)
        return EXIT_SCALE
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    emit(out, args.command if args.command != "verify" else f"verify {args.bound}", cfg, files,
         {"run.seed": cfg["run"]["seed"]}, started, extra)
    verdict = extra.get("verdict")
    if verdict:
        print(f"{args.bound}: {verdict}")
    print(f"wrote {out}")
    if args.strict and verdict == "violated":
        return EXIT_VIOLATED
    return 0


if __name__ == "__main__":
    sys.exit(main())
