import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lrising.contours import (
    MARParams, admissible_cubes, component_diameter, contour_diameter, contour_metric,
    cube_cover_count, extract_contours, boundary_cube_instances, origin_census, separation_holds,
    spin_boundary, surface_sum,
)
from lrising.lattice import Volume, neighbours
from lrising.model import MINUS, PLUS, CouplingSpec, SpinConfig


def config(vol, minus_sites):
    s = SpinConfig.constant(vol, 1)
    for x in minus_sites:
        s.spins[vol.index(x)] = -1
    return s


def brute_boundary(vol, spins, eta=1):
    """Disagreeing nearest-neighbour bonds, the shell included."""
    val = {x: int(s) for x, s in zip(vol.sites, spins)}
    out = set()
    for x in vol.sites:
        for y in neighbours(x):
            a, b = min(x, y), max(x, y)
            if val[x] != val.get(y, eta):
                out.add((a, b))
    return out


def test_spin_boundary_examples():
    vol = Volume.box((5, 5))
    assert spin_boundary(config(vol, []), PLUS) == []
    assert len(spin_boundary(config(vol, [(0, 0)]), PLUS)) == 4
    assert len(spin_boundary(config(vol, [(0, 0), (1, 0)]), PLUS)) == 6


def test_single_minus_spin():
    vol = Volume.box((3, 3))
    cs = extract_contours(config(vol, [(0, 0)]))
    assert len(cs) == 1
    c = cs.contours[0]
    assert c.length == 4 and c.label == -1
    assert c.I_minus == {(0, 0)} and c.I_plus == frozenset()
    assert c.sp_sites == set(neighbours((0, 0)))


def test_far_islands_are_separate_contours():
    vol = Volume.box((9, 3))
    cs = extract_contours(config(vol, [(-3, 0), (3, 0)]))
    assert len(cs) == 2
    a, b = cs.contours
    assert separation_holds(a, b, MARParams())


def test_close_islands_merge():
    vol = Volume.box((5, 3))
    cs = extract_contours(config(vol, [(-1, 0), (1, 0)]))
    assert len(cs) == 1
    assert len(cs.contours[0].components) == 2


def test_metric_examples():
    vol = Volume.box((9, 3), anchor=(-2, -1))
    a = extract_contours(config(vol, [(0, 0)])).contours[0]
    b = extract_contours(config(vol, [(5, 0)])).contours[0]
    assert contour_metric(a, b) == 4 == contour_metric(b, a)
    assert contour_metric(a, a) == 0
    assert component_diameter(a.faces) == 1


def test_ring_core_is_plus_interior():
    vol = Volume.box((5, 5))
    ring = [x for x in itertools.product(range(-1, 2), repeat=2) if x != (0, 0)]
    cs = extract_contours(config(vol, ring))
    c = cs.contours[0]
    assert (0, 0) in c.I_plus
    assert set(ring) <= c.I_minus


def test_nested_contours_external():
    vol = Volume.box((7, 7))
    ring = [x for x in itertools.product(range(-2, 3), repeat=2)
            if max(abs(x[0]), abs(x[1])) == 2]
    cs = extract_contours(config(vol, ring))
    assert len(cs.external()) >= 1
    assert all(isinstance(c.label, int) for c in cs.contours)


def _check_partition(vol, s, params=MARParams()):
    cs = extract_contours(s, PLUS, params)
    faces = [f for c in cs.contours for f in c.faces]
    # exact cover: every boundary face in exactly one contour
    assert len(faces) == len(set(faces))
    assert set(faces) == brute_boundary(vol, s.spins)
    for c in cs.contours:
        assert not (c.I_plus & c.I_minus)
        assert len(c.components) <= params.max_components
    for a, b in itertools.combinations(cs.contours, 2):
        assert separation_holds(a, b, params)


def test_partition_exhaustive_3x3():
    vol = Volume.box((3, 3))
    for bits in itertools.product((1, -1), repeat=9):
        _check_partition(vol, SpinConfig(vol, bits))


@given(st.integers(0, 2 ** 16 - 1))
def test_partition_property_4x4(code):
    vol = Volume.box((4, 4))
    _check_partition(vol, SpinConfig(vol, [1 - 2 * (code >> i & 1) for i in range(16)]))


@given(st.integers(0, 2 ** 9 - 1), st.integers(-5, 5), st.integers(-5, 5))
def test_diameter_translation_invariant(code, dx, dy):
    s = [1 - 2 * (code >> i & 1) for i in range(9)]
    v1 = Volume.box((3, 3))
    v2 = Volume.box((3, 3), anchor=(-1 + dx, -1 + dy))
    c1 = extract_contours(SpinConfig(v1, s)).contours
    c2 = extract_contours(SpinConfig(v2, s)).contours
    assert [contour_diameter(c)["diameter"] for c in c1] == [contour_diameter(c)["diameter"] for c in c2]


def test_unit_square_diameter():
    vol = Volume.box((3, 3))
    c = extract_contours(config(vol, [(0, 0)])).contours[0]
    assert contour_diameter(c)["diameter"] == pytest.approx(2.0)
    assert contour_diameter(c, "taxicab")["diameter"] == pytest.approx(2.0)


# --- census ---------------------------------------------------------------

@pytest.fixture(scope="module")
def census():
    return origin_census([4, 5, 6, 8], Volume.box((4, 4), anchor=(-1, -1)))


def test_census_counts(census):
    assert len(census[4]) == 1
    assert len(census[5]) == 0
    # the n = 6 contours are the four dominoes containing the origin
    dominoes = {frozenset({(0, 0), y}) for y in neighbours((0, 0))}
    assert {c.I_minus for c in census[6]} == dominoes
    # frozen from the exhaustive enumeration
    assert len(census[8]) == 26


def test_census_contains_origin(census):
    for fam in census.values():
        for c in fam:
            assert (0, 0) in c.interior


def test_census_guards():
    with pytest.raises(ValueError):
        origin_census([4], Volume.box((5, 5)))
    with pytest.raises(ValueError):
        origin_census([4], Volume.box((2, 2), anchor=(0, 0)))


# --- cubes ----------------------------------------------------------------

def test_admissible_examples(census):
    c = census[4][0]
    adm, _ = admissible_cubes(c, 0)
    assert adm == set(c.interior)
    assert admissible_cubes(c, 1)[0] == set()
    for fam in census.values():
        for g in fam:
            for l in range(4):
                if 2 ** (l * 2) > 2 * len(g.interior):
                    assert admissible_cubes(g, l)[0] == set()


def test_cover_counts(census):
    assert cube_cover_count([], 1).count == 0
    assert cube_cover_count(census[4], 0).count == len(census[4][0].touched_sites()) == 5
    for fam in census.values():
        counts = [cube_cover_count(fam, l).count for l in range(5)]
        assert all(b <= a for a, b in zip(counts, counts[1:]))


def test_boundary_cubes_vacuous_at_large_scale(census):
    assert boundary_cube_instances(census[8][0], 4) == []


def test_surface_sums():
    spec = CouplingSpec(1, 2, 1, R_cut=1)
    assert surface_sum([(0,)], spec) == pytest.approx(2.0)
    assert surface_sum([], spec) == 0.0
    A = [(0, 0), (1, 0)]
    vals = [surface_sum(A, CouplingSpec(R_cut=r)) for r in (1, 2, 3, 5)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_minus_bc_mirror():
    vol = Volume.box((3, 3))
    s = SpinConfig(vol, -np.ones(9, dtype=np.int8))
    s.spins[vol.index((0, 0))] = 1
    c = extract_contours(s, MINUS).contours[0]
    assert c.label == 1 and c.I_plus == {(0, 0)}
