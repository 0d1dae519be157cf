"""Finite sublattices of Z^d: boxes, boundaries, m-cubes and axis projections."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

Site = tuple


def as_site(x, d: int | None = None) -> tuple:
    s = tuple(int(v) for v in x)
    if d is not None and len(s) != d:
        raise ValueError(f"site {s} has length {len(s)}, expected {d}")
    if len(s) < 1:
        raise ValueError("sites need at least one coordinate")
    return s


def unit_vectors(d: int) -> list[tuple]:
    return [tuple(1 if j == i else 0 for j in range(d)) for i in range(d)]


def neighbours(x: Sequence[int]) -> list[tuple]:
    """Nearest neighbours of x (l1 distance 1), in a fixed order."""
    out = []
    for i in range(len(x)):
        for s in (-1, 1):
            y = list(x)
            y[i] += s
            out.append(tuple(y))
    return out


@dataclass(frozen=True)
class Volume:
    """Finite, non-empty set of sites of Z^d, stored in lexicographic order."""

    sites: tuple
    dim: int
    _index: dict = field(default=None, repr=False, compare=False, hash=False)

    def __init__(self, sites: Iterable, dim: int | None = None):
        raw = [tuple(int(v) for v in s) for s in sites]
        if not raw:
            raise ValueError("a volume must be non-empty")
        if dim is None:
            dim = len(raw[0])
        for s in raw:
            as_site(s, dim)
        uniq = sorted(set(raw))
        if len(uniq) != len(raw):
            raise ValueError("duplicate sites in volume")
        object.__setattr__(self, "sites", tuple(uniq))
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "_index", {s: k for k, s in enumerate(uniq)})

    def __len__(self):
        return len(self.sites)

    def __iter__(self):
        return iter(self.sites)

    def __contains__(self, x):
        return tuple(x) in self._index

    def index(self, x) -> int:
        return self._index[tuple(x)]

    def as_set(self) -> frozenset:
        return frozenset(self.sites)

    def array(self) -> np.ndarray:
        return np.array(self.sites, dtype=np.int64).reshape(len(self.sites), self.dim)

    def digest(self) -> str:
        import hashlib

        return hashlib.sha256(repr(self.sites).encode()).hexdigest()[:16]

    # construction helpers

    @classmethod
    def box(cls, shape: Sequence[int], anchor: Sequence[int] | None = None) -> "Volume":
        """Rectangular box with the given side lengths; anchor is the lowest corner."""
        if anchor is None:
            anchor = [-((L - 1) // 2) for L in shape]
        ranges = [range(a, a + L) for a, L in zip(anchor, shape)]
        return cls(itertools.product(*ranges), dim=len(shape))

    def to_json(self) -> str:
        return json.dumps([list(s) for s in self.sites])

    @classmethod
    def from_json(cls, text: str) -> "Volume":
        data = json.loads(text)
        if not isinstance(data, list) or not data:
            raise ValueError("volume JSON must be a non-empty array of coordinate arrays")
        for s in data:
            if not isinstance(s, list) or not all(isinstance(v, int) for v in s):
                raise ValueError("each site must be an array of integers")
        return cls(data)


def _site_set(sites) -> set:
    if isinstance(sites, Volume):
        return set(sites.sites)
    return {tuple(int(v) for v in s) for s in sites}


def m_cube(x: Sequence[int], m: int) -> Volume:
    """C_m(x): the box of half-width 2^(m-1) around 2^m x, or {x} when m = 0."""
    if m < 0:
        raise ValueError("scale m must be non-negative")
    x = as_site(x)
    if m == 0:
        return Volume([x])
    c = [(2 ** m) * v for v in x]
    h = 2 ** (m - 1)
    return Volume(itertools.product(*[range(ci - h, ci + h + 1) for ci in c]), dim=len(x))


def cubes_containing(y: Sequence[int], m: int) -> list[tuple]:
    """Centre indices x with y in C_m(x)."""
    if m == 0:
        return [tuple(y)]
    side = 2 ** m
    h = 2 ** (m - 1)
    per_axis = []
    for v in y:
        lo = -((-(v - h)) // side)  # ceil((v - h) / side)
        hi = (v + h) // side
        per_axis.append(range(lo, hi + 1))
    return [tuple(c) for c in itertools.product(*per_axis)]


def exterior_boundary(vol) -> Volume:
    """Sites outside vol at l1 distance one from it."""
    S = _site_set(vol)
    if not S:
        raise ValueError("exterior boundary of an empty set")
    out = {y for x in S for y in neighbours(x) if y not in S}
    return Volume(out)


def interior_boundary(vol) -> Volume:
    """Sites of vol with at least one neighbour outside it."""
    S = _site_set(vol)
    if not S:
        raise ValueError("interior boundary of an empty set")
    return Volume(x for x in S if any(y not in S for y in neighbours(x)))


def isoperimetric_check(vol) -> tuple[float, int, bool]:
    S = _site_set(vol)
    if not S:
        raise ValueError("isoperimetric check needs a non-empty set")
    d = len(next(iter(S)))
    lhs = len(S) ** (1.0 - 1.0 / d)
    rhs = len(interior_boundary(S))
    # tolerance absorbs the floating power (e.g. 4 ** 0.5)
    return lhs, rhs, lhs <= rhs + 1e-12


@dataclass(frozen=True)
class Rectangle:
    """R = prod_i [1, r_i], placed so that local coordinate 1 sits at `anchor`."""

    sides: tuple
    anchor: tuple

    def __init__(self, sides: Sequence[int], anchor: Sequence[int] | None = None):
        sides = tuple(int(r) for r in sides)
        if any(r < 1 for r in sides):
            raise ValueError("rectangle sides must be >= 1")
        if anchor is None:
            anchor = (1,) * len(sides)
        anchor = as_site(anchor, len(sides))
        object.__setattr__(self, "sides", sides)
        object.__setattr__(self, "anchor", anchor)

    @property
    def dim(self) -> int:
        return len(self.sides)

    def sites(self) -> set:
        return set(itertools.product(*[range(a, a + r) for a, r in zip(self.anchor, self.sides)]))

    def face(self, i: int) -> list[tuple]:
        """R_i: points of R whose i-th local coordinate equals 1 (0-based axis i)."""
        return sorted(x for x in self.sites() if x[i] == self.anchor[i])

    def line(self, x: Sequence[int], i: int) -> list[tuple]:
        e = unit_vectors(self.dim)[i]
        return [tuple(xj + k * ej for xj, ej in zip(x, e)) for k in range(1, self.sides[i] + 1)]


@dataclass
class ProjectionReport:
    axis: int
    P: list
    good: list
    bad: list
    ext_in_R: int
    good_ok: bool
    bad_witness_C: float
    sum_witness_c: float


def projections(A, R: Rectangle, axis: int) -> ProjectionReport:
    """Projection of A onto the face R_axis with good/bad classification (axis is 1..d).

    The witness constants are the smallest values making the bounds
    |P^B_i| <= C |R_d| and sum_i |P_i| <= c |ext(A) cap R| true.
    """
    d = R.dim
    if not 1 <= axis <= d:
        raise ValueError(f"axis {axis} out of range 1..{d}")
    S = _site_set(A)
    rect = R.sites()
    outside = S - rect
    ext = exterior_boundary(S).as_set() if S else frozenset()
    ext_in_R = len(ext & rect)

    def classify(i):
        P, good = [], []
        for x in R.face(i):
            line = R.line(x, i)
            if any(y in S for y in line):
                P.append(x)
                if any(y in outside for y in line):
                    good.append(x)
        bad = [x for x in P if x not in set(good)]
        return P, good, bad

    P, good, bad = classify(axis - 1)
    total = sum(len(classify(i)[0]) for i in range(d))
    face_d = len(R.face(d - 1))
    bad_C = len(bad) / face_d
    if total == 0:
        sum_c = 0.0
    elif ext_in_R == 0:
        sum_c = float("inf")
    else:
        sum_c = total / ext_in_R
    return ProjectionReport(axis, P, good, bad, ext_in_R, len(good) <= ext_in_R, bad_C, sum_c)
