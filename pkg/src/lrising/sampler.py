"""Single-site Metropolis sampling, disorder ensembles and beta/eps sweeps.

Chains are stepped together as rows of one array so many seeded trials cost
little more than one.  Every chain owns its own generator; the numbers it
draws do not depend on how many other chains run beside it.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .lattice import Volume
from .model import BoundaryCondition, CouplingSpec, FieldSpec, Model, PLUS, MINUS

BLOCK = 256


@dataclass(frozen=True)
class ChainConfig:
    volume: Volume
    beta: float
    bc: BoundaryCondition = PLUS
    field: FieldSpec = FieldSpec()
    sweeps: int = 11000
    burn_in: int = 1000
    thinning: int = 10
    seed: int = 0
    scan: str = "sequential"
    init: str = "bc"
    n_batches: int = 50

    def __post_init__(self):
        if self.sweeps <= self.burn_in:
            raise ValueError("sweeps must exceed burn-in")
        if self.burn_in < 0 or self.thinning < 1:
            raise ValueError("burn-in must be >= 0 and thinning >= 1")
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.scan not in ("sequential", "random"):
            raise ValueError("scan must be sequential or random")
        if self.init not in ("bc", "plus", "minus", "random"):
            raise ValueError("init must be bc, plus, minus or random")
        if self.n_batches < 2:
            raise ValueError("need at least two batches")

    @property
    def n_samples(self) -> int:
        return (self.sweeps - self.burn_in) // self.thinning


@dataclass(frozen=True)
class ObservableRecord:
    name: str
    estimate: float
    stderr: float
    effective_samples: int
    seed: object

    def as_row(self) -> dict:
        return {"name": self.name, "estimate": self.estimate, "stderr": self.stderr,
                "effective_samples": self.effective_samples, "seed": self.seed}


def chain_rng(seed, *key) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(key)))


def bc_key(bc: BoundaryCondition) -> int:
    """Seed-key component for a boundary condition.

    Plus and minus chains started from the same stream would be exact mirror
    images, so each boundary condition draws from its own stream.
    """
    return {"plus": 0, "minus": 1}.get(bc.mode, 2)


def log_acceptance(delta_e: float, beta: float) -> float:
    return min(0.0, -beta * delta_e)


def metropolis(model: Model, beta: float, spins: np.ndarray, rngs: list, sweeps: int,
               burn_in: int, thinning: int, ext: np.ndarray | None = None,
               scan: str = "sequential", track: list | None = None) -> np.ndarray:
    """Advance chains (rows of spins) in place; return tracked spins after each kept sweep.

    Returns an int8 array of shape (samples, chains, len(track)).
    """
    C, N = spins.shape
    if len(rngs) != C:
        raise ValueError("one generator per chain")
    J = model.Jmat
    if ext is None:
        ext = np.broadcast_to(model.b, (C, N))
    ext = np.broadcast_to(ext, (C, N))
    track = list(range(N)) if track is None else list(track)
    s = spins.astype(float)
    out = []
    done = 0
    cols = np.arange(C)
    while done < sweeps:
        nb = min(BLOCK, sweeps - done)
        logU = np.log(np.stack([r.random((nb, N)) for r in rngs], axis=1))
        if scan == "random":
            K = np.stack([r.integers(0, N, (nb, N)) for r in rngs], axis=1)
        for b in range(nb):
            lu = logU[b]
            if scan == "sequential":
                for k in range(N):
                    dE = 2.0 * s[:, k] * (s @ J[k] + ext[:, k])
                    acc = lu[:, k] < -beta * dE
                    s[acc, k] = -s[acc, k]
            else:
                kk = K[b]
                for t in range(N):
                    k = kk[:, t]
                    sk = s[cols, k]
                    dE = 2.0 * sk * ((s * J[k]).sum(axis=1) + ext[cols, k])
                    acc = lu[:, t] < -beta * dE
                    s[cols[acc], k[acc]] = -sk[acc]
            done += 1
            if done > burn_in and (done - burn_in) % thinning == 0:
                out.append(s[:, track].astype(np.int8))
    spins[:] = s.astype(spins.dtype)
    if not out:
        return np.zeros((0, C, len(track)), dtype=np.int8)
    return np.stack(out)


def batch_means(x: np.ndarray, n_batches: int) -> tuple[float, float, int]:
    """Mean, batch-means standard error and effective sample size of a 1-d series."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n == 0:
        raise ValueError("no samples")
    mean = float(x.mean())
    nb = min(n_batches, n)
    size = n // nb
    if size < 1 or nb < 2:
        return mean, 0.0, n
    bm = x[: nb * size].reshape(nb, size).mean(axis=1)
    se = float(bm.std(ddof=1) / math.sqrt(nb))
    var = float(x.var(ddof=1)) if n > 1 else 0.0
    ess = n if se == 0 else int(max(1, min(n, round(var / (se * se)))))
    return mean, se, ess


def _initial(cfg: ChainConfig, C: int, N: int, rngs) -> np.ndarray:
    if cfg.init == "plus" or (cfg.init == "bc" and cfg.bc.mode != "minus"):
        return np.ones((C, N), dtype=np.int8)
    if cfg.init == "minus" or cfg.init == "bc":
        return -np.ones((C, N), dtype=np.int8)
    return np.stack([np.where(r.random(N) < 0.5, -1, 1) for r in rngs]).astype(np.int8)


@dataclass
class ChainResult:
    records: dict
    samples: np.ndarray
    final: np.ndarray
    config: ChainConfig = field(repr=False, default=None)


def _origin(vol: Volume) -> int:
    o = (0,) * vol.dim
    if o not in vol:
        raise ValueError("the origin is outside the volume")
    return vol.index(o)


def run_chains(cfg: ChainConfig, spec: CouplingSpec, seeds: list, h=None,
               model: Model | None = None) -> list:
    """Run one chain per seed side by side; returns a ChainResult per seed."""
    model = model or Model(cfg.volume, spec, cfg.bc)
    N = model.N
    rngs = [chain_rng(sd) for sd in seeds]
    C = len(rngs)
    if h is None:
        ext = model.b + model.external_field(cfg.field, cfg.field.realize(cfg.volume))
    else:
        H = np.atleast_2d(np.asarray(h, dtype=float))
        ext = model.b[None, :] + cfg.field.strength * H
    spins = _initial(cfg, C, N, rngs)
    o = _origin(cfg.volume)
    samp = metropolis(model, cfg.beta, spins, rngs, cfg.sweeps, cfg.burn_in, cfg.thinning,
                      ext=ext, scan=cfg.scan)
    out = []
    for c, sd in enumerate(seeds):
        minus = (samp[:, c, o] < 0).astype(float)
        m, se, ess = batch_means(minus, cfg.n_batches)
        mag = samp[:, c, :].mean(axis=1)
        mm, mse, mess = batch_means(mag, cfg.n_batches)
        rec = {
            "origin_minus": ObservableRecord("origin_minus", m, se, ess, sd),
            "magnetization": ObservableRecord("magnetization", mm, mse, mess, sd),
        }
        out.append(ChainResult(rec, samp[:, c, :], spins[c].copy(), cfg))
    return out


def run_chain(cfg: ChainConfig, spec: CouplingSpec, h=None) -> ChainResult:
    return run_chains(cfg, spec, [cfg.seed], h=h)[0]


def estimate_origin_minus(cfg: ChainConfig, spec: CouplingSpec, h=None) -> ObservableRecord:
    """P[sigma_0 = -1] with its batch-means standard error."""
    return run_chain(cfg, spec, h).records["origin_minus"]


def disorder_ensemble(cfg: ChainConfig, spec: CouplingSpec, eps: float, replicas: int) -> dict:
    """Independent field draw and chain per replica, then the disorder average."""
    if replicas < 1:
        raise ValueError("need at least one replica")
    N = len(cfg.volume)
    seeds = [(cfg.seed, r) for r in range(replicas)]
    if eps > 0:
        field = FieldSpec("gaussian", eps)
        H = np.stack([chain_rng(cfg.seed, r, 1).standard_normal(N) for r in range(replicas)])
    else:
        field = FieldSpec()
        H = np.zeros((replicas, N))
    ccfg = replace(cfg, field=field)
    chain_seeds = [np.random.SeedSequence(cfg.seed, spawn_key=(r, 2, bc_key(cfg.bc))).generate_state(2).tolist()
                   for r in range(replicas)]
    res = run_chains(ccfg, spec, chain_seeds, h=H)
    per = [r.records["origin_minus"] for r in res]
    vals = np.array([p.estimate for p in per])
    if replicas > 1:
        se = float(vals.std(ddof=1) / math.sqrt(replicas))
    else:
        se = per[0].stderr
    agg = ObservableRecord("origin_minus_disorder_avg", float(vals.mean()), se, replicas, cfg.seed)
    return {"replicas": per, "aggregate": agg, "fields": H, "seeds": seeds}


def _sweep_point(args):
    template, spec, beta, eps, bc_mode, replicas = args
    bc = PLUS if bc_mode == "plus" else MINUS
    cfg = replace(template, beta=beta, bc=bc)
    if eps > 0:
        rec = disorder_ensemble(cfg, spec, eps, replicas)["aggregate"]
    else:
        rec = run_chains(replace(cfg, field=FieldSpec()), spec,
                         [(cfg.seed, bc_key(bc))])[0].records["origin_minus"]
    return {"beta": beta, "eps": eps, "bc": bc_mode, "p_minus": rec.estimate, "stderr": rec.stderr}


def beta_sweep(template: ChainConfig, spec: CouplingSpec, betas, epss, replicas: int = 1,
               workers: int = 1) -> list:
    """Rows (beta, eps, bc, P[sigma_0 = -1], stderr) for plus and minus boundaries."""
    betas, epss = list(betas), list(epss)
    if not betas or not epss:
        raise ValueError("grids must be non-empty")
    jobs = [(template, spec, float(b), float(e), bc, replicas)
            for b in betas for e in epss for bc in ("plus", "minus")]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]
