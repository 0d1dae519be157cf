import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrising.lattice import Volume
from lrising.model import (
    MINUS, PLUS, BoundaryCondition, CouplingSpec, FieldSpec, Model, SpinConfig, apply_tau_A,
    apply_tau_gamma, boundary_field, coupling, energy, flip_energy_difference, summability_diagnostic,
)


def brute_energy(sites, spins, spec, eta=1, eps_h=None):
    """Nested loops over pairs once and over shell sites, no matrices."""
    e = 0.0
    for (i, x), (j, y) in itertools.combinations(enumerate(sites), 2):
        e -= coupling(x, y, spec) * spins[i] * spins[j]
    inside = set(sites)
    R = int(spec.R_cut)
    for i, x in enumerate(sites):
        for off in itertools.product(range(-R, R + 1), repeat=len(x)):
            y = tuple(a + b for a, b in zip(x, off))
            if y in inside:
                continue
            r = math.dist(x, y)
            if r <= spec.R_cut:
                e -= coupling(x, y, spec) * spins[i] * eta
        if eps_h is not None:
            e -= eps_h[i] * spins[i]
    return e


def test_coupling_examples():
    assert coupling((0, 0), (0, 2), CouplingSpec(1, 3, 2)) == pytest.approx(0.125)
    assert coupling((0, 0, 0), (1, 1, 0), CouplingSpec(2, 4, 3)) == pytest.approx(0.5)
    assert coupling((1, 1), (1, 1), CouplingSpec()) == 0.0


def test_spec_validation():
    with pytest.raises(ValueError):
        CouplingSpec(alpha=2, d=2)
    with pytest.raises(ValueError):
        CouplingSpec(J=0)


def test_summability_verdicts():
    radii = [4, 8, 16, 32]
    assert summability_diagnostic(CouplingSpec(1, 4, 2), radii)["verdict"].startswith("converges")
    rep = summability_diagnostic(CouplingSpec(1, 3, 2), radii)
    assert rep["verdict"] == "diverging"
    # logarithmic growth: the per-log-radius increment stays roughly constant
    s = rep["log_slopes"]
    assert max(s) / min(s) < 1.3
    assert summability_diagnostic(CouplingSpec(1, 3, 1), radii)["verdict"].startswith("converges")


def test_boundary_field_examples():
    vol = Volume([(0,), (1,)])
    assert boundary_field((0,), vol, PLUS, CouplingSpec(1, 2, 1, R_cut=1))[0] == pytest.approx(1.0)
    # y = -1, -2 and +2 all lie within distance 2 of x = 0: 1 + 1/4 + 1/4
    assert boundary_field((0,), vol, PLUS, CouplingSpec(1, 2, 1, R_cut=2))[0] == pytest.approx(1.5)


def test_minus_bc_negates_field():
    spec = CouplingSpec()
    vol = Volume.box((3, 3))
    assert np.allclose(Model(vol, spec, MINUS).b, -Model(vol, spec, PLUS).b)


def test_energy_two_site_example():
    vol = Volume([(0,), (1,)])
    spec = CouplingSpec(1, 2, 1, R_cut=1)
    e = energy(SpinConfig(vol, [1, 1]), PLUS, None, None, spec)
    assert e.total == pytest.approx(-3.0) and e.field_term == 0.0
    m = Model(vol, spec)
    assert m.delta_energy_single_flip(SpinConfig(vol, [1, 1]), (0,)) == pytest.approx(4.0)


@given(st.integers(0, 2 ** 9 - 1), st.sampled_from(["plus", "minus"]), st.floats(2.1, 5))
def test_energy_matches_brute(code, bc, alpha):
    vol = Volume.box((3, 3))
    spec = CouplingSpec(1, alpha, 2, R_cut=3)
    s = np.array([1 - 2 * (code >> i & 1) for i in range(9)])
    eta = 1 if bc == "plus" else -1
    m = Model(vol, spec, PLUS if bc == "plus" else MINUS)
    assert m.energy(s).total == pytest.approx(brute_energy(vol.sites, s, spec, eta), abs=1e-10)


@given(st.integers(0, 2 ** 9 - 1), st.integers(0, 8), st.integers(0, 10 ** 6))
def test_single_flip_matches_recompute(code, k, seed):
    vol = Volume.box((3, 3))
    m = Model(vol, CouplingSpec())
    f = FieldSpec("gaussian", 0.7)
    h = np.random.default_rng(seed).standard_normal(9)
    s = np.array([1 - 2 * (code >> i & 1) for i in range(9)], dtype=np.int8)
    t = s.copy()
    t[k] *= -1
    d1 = m.delta_energy_single_flip(s, k, f, h)
    assert d1 == pytest.approx(m.energy(t, f, h).total - m.energy(s, f, h).total, abs=1e-10)
    assert d1 + m.delta_energy_single_flip(t, k, f, h) == pytest.approx(0, abs=1e-12)


@given(st.integers(0, 2 ** 9 - 1))
def test_global_flip_symmetry(code):
    vol = Volume.box((3, 3))
    spec = CouplingSpec()
    s = np.array([1 - 2 * (code >> i & 1) for i in range(9)], dtype=np.int8)
    assert Model(vol, spec, PLUS).energy(s).total == pytest.approx(Model(vol, spec, MINUS).energy(-s).total)


def test_tau_A_examples():
    vol = Volume.box((2, 2))
    s = SpinConfig(vol, [1, -1, 1, 1])
    assert np.array_equal(apply_tau_A(s, [], vol).spins, s.spins)
    assert np.array_equal(apply_tau_A(s, vol.sites).spins, -s.spins)
    h = np.arange(4.0)
    A = [vol.sites[1]]
    assert np.array_equal(apply_tau_A(apply_tau_A(h, A, vol), A, vol), h)


def test_tau_gamma_case_table():
    vol = Volume.box((3, 3))
    s = SpinConfig.constant(vol, 1)
    p, q = (0, 0), (1, 0)
    t = apply_tau_gamma(s, [p], [], [q])
    assert t[p] == -1 and t[q] == -1 and sum(t.spins) == 9 - 4
    assert np.array_equal(apply_tau_gamma(s, [], [], []).spins, s.spins)
    with pytest.raises(ValueError):
        apply_tau_gamma(s, [p], [p], [])


def test_flip_difference_whole_volume():
    vol = Volume.box((3, 3))
    m = Model(vol, CouplingSpec())
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = SpinConfig(vol, rng.choice([-1, 1], 9))
        d = flip_energy_difference(m, s, apply_tau_A(s, vol.sites))
        assert d == pytest.approx(2 * float(s.spins @ m.b))


def test_field_none_rejects_realization():
    m = Model(Volume.box((2, 2)), CouplingSpec())
    with pytest.raises(ValueError):
        m.energy(np.ones(4, dtype=np.int8), FieldSpec(), np.ones(4))


def test_explicit_bc_missing_site():
    bc = BoundaryCondition("explicit", {})
    with pytest.raises(KeyError):
        Model(Volume.box((2, 2)), CouplingSpec(R_cut=1), bc)


def test_decaying_field():
    vol = Volume.box((3, 3))
    h = FieldSpec("decaying", h_star=2.0, delta=1.0).realize(vol)
    assert h[vol.index((0, 0))] == 2.0 and h[vol.index((1, 0))] == pytest.approx(2.0)
    assert h[vol.index((1, 1))] == pytest.approx(2.0 / math.sqrt(2))
