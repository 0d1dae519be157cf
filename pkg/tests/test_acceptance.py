"""Acceptance criteria at desk scale; each test prints one pass/fail line."""

import json
import math
import time

import numpy as np
import pytest

from lrising.cli import DEFAULT_CONFIG, main, run_bound
from lrising.contours import cube_cover_count, extract_contours, origin_census
from lrising.exact import gibbs_expectation, identity_check, site_minus
from lrising.lattice import Volume
from lrising.model import PLUS, CouplingSpec, FieldSpec, Model, SpinConfig, apply_tau_gamma
from lrising.sampler import ChainConfig, run_chains
from lrising.verify import (
    exact_origin_minus, peierls_grid_exact, verify_concentration, verify_counting,
    verify_flip_energy_bound, verify_peierls,
)

SPEC2 = CouplingSpec(J=1.0, alpha=3.0, d=2)
SPEC3 = CouplingSpec(J=1.0, alpha=4.0, d=3)  # alpha must exceed d


# 1 -------------------------------------------------------------------------

INSTANCES = [((a, b), SPEC2) for b in range(1, 5) for a in range(1, b + 1)] + [((2, 2, 2), SPEC3)]
BETA_MC = 0.1
TRIALS = 100


def test_exact_engine_vs_metropolis(criterion):
    t0 = time.time()
    worst, rows = 1.0, []
    for shape, spec in INSTANCES:
        vol = Volume.box(shape)
        model = Model(vol, spec, PLUS)
        exact = gibbs_expectation(model, BETA_MC, site_minus(model, (0,) * vol.dim))
        cfg = ChainConfig(vol, BETA_MC, sweeps=21000, burn_in=1000, thinning=1, n_batches=100)
        res = run_chains(cfg, spec, [(2024, t) for t in range(TRIALS)], model=model)
        inside = sum(abs(r.records["origin_minus"].estimate - exact) <= 3 * r.records["origin_minus"].stderr
                     for r in res)
        rows.append((shape, exact, inside))
        worst = min(worst, inside / TRIALS)
    elapsed = time.time() - t0
    ok = worst >= 0.99 and elapsed < 600
    detail = ", ".join(f"{'x'.join(map(str, s))}:{k}/{TRIALS}" for s, _, k in rows)
    criterion(1, ok, f"worst coverage {worst:.2f} (>= 0.99), {elapsed:.0f}s; {detail}")
    assert ok


# 2 -------------------------------------------------------------------------

def test_density_ratio_identity(criterion):
    vol = Volume.box((3, 3))
    model = Model(vol, SPEC2, PLUS)
    rng = np.random.default_rng(17)
    worst, n = 0.0, 0
    while n < 100:
        s = SpinConfig(vol, rng.choice([-1, 1], 9))
        cs = extract_contours(s)
        if not cs.contours:
            continue
        g = cs.contours[rng.integers(len(cs.contours))]
        t = apply_tau_gamma(s, g.I_plus, g.I_minus, g.sp_sites, sign=1)
        h = rng.standard_normal(9)
        beta, eps = rng.uniform(0.2, 2.0), rng.uniform(0.1, 1.0)
        r = identity_check(model, beta, FieldSpec("gaussian", eps), s, h, t, sorted(g.I_minus))
        worst = max(worst, r["rel_error"])
        n += 1
    ok = worst <= 1e-9
    criterion(2, ok, f"max relative error {worst:.2e} over {n} triples (<= 1e-9)")
    assert ok


# 3 -------------------------------------------------------------------------

def test_flip_energy_bound(criterion):
    rep = verify_flip_energy_bound(Volume.box((3, 3)), SPEC2, PLUS)
    ok = rep.instances == 512 and rep.worst_margin > 0 and rep.verdict == "holds"
    criterion(3, ok, f"min c* = {rep.worst_margin:.4f} over {rep.instances} configurations "
                     f"({rep.details['non_vacuous']} with contours)")
    assert ok


# 4 -------------------------------------------------------------------------

def test_concentration(criterion):
    model = Model(Volume.box((3, 3)), SPEC2, PLUS)
    lams = [round(0.1 * k, 10) for k in range(1, 21)]
    rep = verify_concentration(model, 1.0, 0.5, [(0, 0)], lambdas=lams, replicas=10_000, seed=0,
                               fd_step=1e-4, fd_tol=1e-3)
    tails_ok = all(r["empirical"] <= r["bound"] + 3 * r["stderr"] for r in rep.details["tails"])
    deriv_ok = rep.details["derivative_ok"]
    ok = tails_ok and deriv_ok and rep.holds
    criterion(4, ok, f"worst tail margin {rep.worst_margin:.4f}, max |dDelta/dh| = "
                     f"{rep.details['derivative_max']:.6f} vs 2 eps = 1.0")
    assert ok


# 5 -------------------------------------------------------------------------

def test_contour_census(criterion):
    census = origin_census([4, 5, 6, 8], Volume.box((4, 4), anchor=(-1, -1)))
    counts_ok = len(census[4]) == 1 and len(census[5]) == 0
    mono = all(
        all(b <= a for a, b in zip(cs, cs[1:]))
        for cs in ([cube_cover_count(census[n], l).count for l in range(5)] for n in census)
    )
    rep = verify_counting({n: census[n] for n in (4, 6, 8)}, [0, 1, 2, 3], d=2)
    b4 = rep.witness["b4"]
    ok = counts_ok and mono and 0 < b4 < math.inf
    criterion(5, ok, f"|G0(4)|={len(census[4])}, |G0(5)|={len(census[5])}, covers non-increasing={mono}, "
                     f"b4={b4:.4f}")
    assert ok


# 6 -------------------------------------------------------------------------

def test_peierls_observable(criterion):
    vol = Volume.box((4, 4))
    pts = peierls_grid_exact(vol, SPEC2, [0.5, 1.0, 2.0, 4.0])
    rep = verify_peierls(pts)
    ps = [p["p"] for p in pts]
    decreasing = all(b < a for a, b in zip(ps, ps[1:]))
    p0 = exact_origin_minus(Model(vol, SPEC2, PLUS), 0.0)
    ok = decreasing and rep.witness["C_prime"] > 0 and p0 == 0.5
    criterion(6, ok, f"P = {', '.join(f'{p:.3e}' for p in ps)}; C' = {rep.witness['C_prime']:.4f}; "
                     f"P(beta=0) = {p0}")
    assert ok


# 7 -------------------------------------------------------------------------

def test_phase_gap_8x8(criterion):
    t0 = time.time()
    rep = run_bound("gap", json.loads(json.dumps(DEFAULT_CONFIG)))
    elapsed = time.time() - t0
    ok = rep.holds and rep.witness["gap"] > 3 * rep.witness["joint_stderr"] and elapsed < 900
    criterion(7, ok, f"gap {rep.witness['gap']:.4f}, joint SE {rep.witness['joint_stderr']:.2e}, "
                     f"{elapsed:.0f}s")
    assert ok


# 8 -------------------------------------------------------------------------

def test_determinism(criterion, tmp_path):
    small = {"volume": {"shape": [3, 3]},
             "run": {"betas": [0.3], "epss": [0.0, 0.4], "replicas": 2, "chains": 2,
                     "sweeps": 300, "burn_in": 50, "thinning": 1, "n_batches": 10},
             "verify": {"concentration": {"replicas": 500},
                        "gap": {"shape": [4, 4], "sweeps": 300, "burn_in": 50, "chains": 2}}}
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(small))
    runs = [["enumerate"], ["contours"], ["sample"], ["sweep"]] + [["verify", b] for b in (
        "flip_energy", "concentration", "counting", "dudley", "peierls", "gap")]
    same, total = 0, 0
    for cmd in runs:
        a, b = tmp_path / ("a_" + "_".join(cmd)), tmp_path / ("b_" + "_".join(cmd))
        assert main(cmd + ["--config", str(cfg), "--out", str(a), "--workers", "1"]) == 0
        assert main(cmd + ["--config", str(a / "manifest.json"), "--out", str(b), "--workers", "2"]) == 0
        for f in sorted(a.glob("*.csv")):
            total += 1
            same += f.read_bytes() == (b / f.name).read_bytes()
    ok = total >= len(runs) and same == total
    criterion(8, ok, f"{same}/{total} CSV files byte-identical across manifest re-runs")
    assert ok
