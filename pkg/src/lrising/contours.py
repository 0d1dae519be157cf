"""Spin-boundary contours: extraction, (M,a,r)-partitions, interiors, censuses and covers.

A face is an unordered nearest-neighbour pair (x, y), stored with the
lexicographically smaller site first.  Two faces touch when their closed
(d-1)-cells share a corner.  Distances between faces are l1 distances
between face midpoints.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .lattice import Volume, cubes_containing, exterior_boundary, m_cube, neighbours
from .model import BoundaryCondition, CouplingSpec, PLUS, SpinConfig, distance, shell_offsets


@dataclass(frozen=True)
class MARParams:
    M: float = 1.0
    a: float = 1.0
    r: int = 2
    max_scale: int = 16

    def __post_init__(self):
        if not (self.M > 0 and self.a > 0):
            raise ValueError("M and a must be positive")
        if self.r < 1:
            raise ValueError("r must be >= 1")

    @property
    def max_components(self) -> int:
        return 2 ** self.r - 1


@dataclass(frozen=True)
class Contour:
    faces: tuple
    components: tuple
    label: int
    I_plus: frozenset
    I_minus: frozenset
    sp_sites: frozenset

    @property
    def length(self) -> int:
        return len(self.faces)

    @property
    def interior(self) -> frozenset:
        return self.I_plus | self.I_minus

    @property
    def V(self) -> frozenset:
        return self.sp_sites | self.interior

    def touched_sites(self) -> frozenset:
        return frozenset(s for f in self.faces for s in f)

    def to_dict(self) -> dict:
        return {
            "faces": [[list(a), list(b)] for a, b in self.faces],
            "components": [[[list(a), list(b)] for a, b in comp] for comp in self.components],
            "label": self.label,
            "I_plus": sorted(list(x) for x in self.I_plus),
            "I_minus": sorted(list(x) for x in self.I_minus),
            "sp_sites": sorted(list(x) for x in self.sp_sites),
        }


@dataclass
class ContourSet:
    contours: list
    volume: Volume
    config_digest: str = ""

    def faces(self) -> set:
        return {f for c in self.contours for f in c.faces}

    def V(self) -> frozenset:
        out = frozenset()
        for c in self.contours:
            out |= c.V
        return out

    def total_length(self) -> int:
        return sum(c.length for c in self.contours)

    def external(self) -> list:
        """Contours whose faces do not enter the interior of another contour."""
        out = []
        for c in self.contours:
            touched = c.touched_sites()
            if not any(o is not c and touched & o.interior for o in self.contours):
                out.append(c)
        return out

    def __len__(self):
        return len(self.contours)


def regions(contours) -> tuple[set, set, set]:
    """Union of I_+, I_- and support sites over a family of contours."""
    Ip, Im, S = set(), set(), set()
    for c in contours:
        Ip |= c.I_plus
        Im |= c.I_minus
        S |= c.sp_sites
    return Ip, Im, S


class FaceGeometry:
    """All nearest-neighbour bonds with at least one end in the volume."""

    def __init__(self, vol: Volume, bc: BoundaryCondition = PLUS):
        self.volume = vol
        self.bc = bc
        d = vol.dim
        bonds = set()
        for x in vol.sites:
            for i in range(d):
                y = list(x)
                y[i] += 1
                bonds.add((x, tuple(y)))
                z = list(x)
                z[i] -= 1
                z = tuple(z)
                if z not in vol:
                    bonds.add((z, x))
        self.bonds = sorted(bonds)
        self.bond_id = {b: k for k, b in enumerate(self.bonds)}
        B = len(self.bonds)
        self.a_idx = np.array([vol.index(a) if a in vol else -1 for a, _ in self.bonds], dtype=np.int64)
        self.b_idx = np.array([vol.index(b) if b in vol else -1 for _, b in self.bonds], dtype=np.int64)
        self.a_eta = np.array([0 if a in vol else bc.eta(a) for a, _ in self.bonds], dtype=np.int8)
        self.b_eta = np.array([0 if b in vol else bc.eta(b) for _, b in self.bonds], dtype=np.int8)
        self.mid2 = np.array([[p + q for p, q in zip(a, b)] for a, b in self.bonds], dtype=np.int64).reshape(B, d)
        # corner incidence, doubled coordinates
        corner_map: dict = {}
        for k, (a, b) in enumerate(self.bonds):
            axis = next(i for i in range(d) if a[i] != b[i])
            m = self.mid2[k]
            others = [j for j in range(d) if j != axis]
            for signs in itertools.product((-1, 1), repeat=len(others)):
                c = list(m)
                for j, s in zip(others, signs):
                    c[j] += s
                corner_map.setdefault(tuple(c), []).append(k)
        adj = [set() for _ in range(B)]
        for ks in corner_map.values():
            for k in ks:
                adj[k].update(ks)
        for k in range(B):
            adj[k].discard(k)
        self.adj = [sorted(s) for s in adj]
        # site incidence for flood fills: (bond id, other end index or -1)
        self.incident = [[] for _ in range(len(vol))]
        for k in range(B):
            ai, bi = int(self.a_idx[k]), int(self.b_idx[k])
            if ai >= 0:
                self.incident[ai].append((k, bi))
            if bi >= 0:
                self.incident[bi].append((k, ai))
        self.shell_bonds = [k for k in range(B) if self.a_idx[k] < 0 or self.b_idx[k] < 0]

    def end_values(self, spins: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(spins, dtype=np.int8)
        va = np.where(self.a_idx >= 0, s[np.maximum(self.a_idx, 0)], self.a_eta)
        vb = np.where(self.b_idx >= 0, s[np.maximum(self.b_idx, 0)], self.b_eta)
        return va, vb

    def boundary_ids(self, spins: np.ndarray) -> np.ndarray:
        va, vb = self.end_values(spins)
        return np.flatnonzero(va != vb)

    def face_distance(self, F: np.ndarray) -> np.ndarray:
        m = self.mid2[F]
        return np.abs(m[:, None, :] - m[None, :, :]).sum(axis=-1) // 2

    def reached(self, blocked: set) -> np.ndarray:
        """Sites reachable from outside the volume without crossing blocked faces."""
        N = len(self.volume)
        seen = np.zeros(N, dtype=bool)
        q = deque()
        for k in self.shell_bonds:
            if k in blocked:
                continue
            i = int(self.a_idx[k]) if self.a_idx[k] >= 0 else int(self.b_idx[k])
            if not seen[i]:
                seen[i] = True
                q.append(i)
        while q:
            i = q.popleft()
            for k, j in self.incident[i]:
                if j < 0 or seen[j] or k in blocked:
                    continue
                seen[j] = True
                q.append(j)
        return seen


_GEOMETRY_CACHE: dict = {}


def geometry(vol: Volume, bc: BoundaryCondition = PLUS) -> FaceGeometry:
    key = (vol, bc.mode, None if bc.values is None else tuple(sorted(bc.values.items())))
    g = _GEOMETRY_CACHE.get(key)
    if g is None:
        if len(_GEOMETRY_CACHE) > 64:
            _GEOMETRY_CACHE.clear()
        g = _GEOMETRY_CACHE[key] = FaceGeometry(vol, bc)
    return g


def spin_boundary(sigma: SpinConfig, bc: BoundaryCondition = PLUS) -> list:
    """Faces (x, y) with disagreeing spins, boundary-shell bonds included."""
    g = geometry(sigma.volume, bc)
    return [g.bonds[k] for k in g.boundary_ids(sigma.spins)]


def _components(g: FaceGeometry, faces: list) -> list:
    inset = set(faces)
    seen = set()
    out = []
    for f in faces:
        if f in seen:
            continue
        comp = []
        seen.add(f)
        q = deque([f])
        while q:
            k = q.popleft()
            comp.append(k)
            for j in g.adj[k]:
                if j in inset and j not in seen:
                    seen.add(j)
                    q.append(j)
        out.append(sorted(comp))
    return out


class _UF:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, i):
        while self.p[i] != i:
            self.p[i] = self.p[self.p[i]]
            i = self.p[i]
        return i

    def union(self, i, j):
        ri, rj = self.find(i), self.find(j)
        if ri != rj:
            # the smaller root index is the lexicographically smaller cluster
            if rj < ri:
                ri, rj = rj, ri
            self.p[rj] = ri


def _group_pieces(g: FaceGeometry, pieces: list, params: MARParams) -> list:
    """Face-connected pieces are the components when there are at most 2^r - 1 of them;
    otherwise pieces sharing an m-cube are merged, raising m from 1 until few enough remain."""
    if len(pieces) <= params.max_components:
        return [[i] for i in range(len(pieces))]
    site_sets = []
    for p in pieces:
        ss = set()
        for k in p:
            ss.update(g.bonds[k])
        site_sets.append(ss)
    for m in range(1, params.max_scale + 1):
        uf = _UF(len(pieces))
        owner = {}
        for i, ss in enumerate(site_sets):
            for s in ss:
                for c in cubes_containing(s, m):
                    if c in owner:
                        uf.union(owner[c], i)
                    else:
                        owner[c] = i
        roots = {}
        for i in range(len(pieces)):
            roots.setdefault(uf.find(i), []).append(i)
        if len(roots) <= params.max_components:
            return sorted(roots.values())
    raise ValueError("no admissible grouping of contour components up to the maximal scale")


def _max_diam(D: np.ndarray, pos: dict, pieces: list, groups: list) -> int:
    best = 0
    for grp in groups:
        rows = [pos[k] for i in grp for k in pieces[i]]
        if len(rows) > 1:
            best = max(best, int(D[np.ix_(rows, rows)].max()))
    return best


def _partition(g: FaceGeometry, F: np.ndarray, params: MARParams) -> list:
    """Face-id components of each contour, clusters in lexicographic order."""
    faces = [int(k) for k in F]
    pos = {k: i for i, k in enumerate(faces)}
    D = g.face_distance(F)
    pieces = _components(g, faces)
    npc = len(pieces)
    if npc == 1:
        return [[pieces[0]]]
    rows = [[pos[k] for k in p] for p in pieces]
    PD = np.zeros((npc, npc), dtype=np.int64)
    for i in range(npc):
        for j in range(i + 1, npc):
            PD[i, j] = PD[j, i] = D[np.ix_(rows[i], rows[j])].min()

    clusters = [[i] for i in range(npc)]
    while True:
        info = []
        for cl in clusters:
            sub = [pieces[i] for i in cl]
            groups = _group_pieces(g, sub, params)
            info.append((groups, _max_diam(D, pos, sub, groups)))
        uf = _UF(len(clusters))
        merged = False
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                dist = PD[np.ix_(clusters[i], clusters[j])].min()
                thr = params.M * min(info[i][1], info[j][1]) ** params.a
                if dist <= thr:
                    uf.union(i, j)
                    merged = True
        if not merged:
            break
        new = {}
        for i, cl in enumerate(clusters):
            new.setdefault(uf.find(i), []).extend(cl)
        clusters = [sorted(v) for _, v in sorted(new.items())]

    out = []
    for cl, (groups, _) in zip(clusters, info):
        sub = [pieces[i] for i in cl]
        out.append([sorted(k for i in grp for k in sub[i]) for grp in groups])
    return out


def extract_contours(sigma: SpinConfig, bc: BoundaryCondition = PLUS,
                     params: MARParams = MARParams()) -> ContourSet:
    """Partition the spin boundary into contours by hierarchical agglomeration.

    Connected face pieces start as separate contours.  Any two contours whose
    distance is at most M * min(max component diameter)^a are merged, and the
    pass repeats until the separation holds for every pair.  The components of
    a contour are its face-connected pieces; beyond 2^r - 1 of them, pieces are
    grouped by shared m-cubes with m raised until few enough groups remain.
    """
    g = geometry(sigma.volume, bc)
    F = g.boundary_ids(sigma.spins)
    if F.size == 0:
        return ContourSet([], sigma.volume, sigma.digest())
    out = [_build_contour(g, sigma.spins, comps) for comps in _partition(g, F, params)]
    out.sort(key=lambda c: c.faces[0])
    return ContourSet(out, sigma.volume, sigma.digest())


def _spin_at(g: FaceGeometry, spins, idx: int, eta: int) -> int:
    return int(spins[idx]) if idx >= 0 else int(eta)


def _build_contour(g: FaceGeometry, spins, comps: list) -> Contour:
    ids = sorted(k for c in comps for k in c)
    blocked = set(ids)
    reached = g.reached(blocked)

    def is_reached(idx):
        return idx < 0 or bool(reached[idx])

    label = None
    sp = set()
    for k in ids:
        ai, bi = int(g.a_idx[k]), int(g.b_idx[k])
        ra, rb = is_reached(ai), is_reached(bi)
        if ra and ai >= 0:
            sp.add(g.volume.sites[ai])
        if rb and bi >= 0:
            sp.add(g.volume.sites[bi])
        if label is None and ra != rb:
            label = _spin_at(g, spins, bi, g.b_eta[k]) if ra else _spin_at(g, spins, ai, g.a_eta[k])
    # interior components, connected through bonds not in the contour
    N = len(g.volume)
    comp_of = np.full(N, -1, dtype=np.int64)
    members = []
    for i in range(N):
        if reached[i] or comp_of[i] >= 0:
            continue
        cid = len(members)
        comp_of[i] = cid
        q = deque([i])
        mem = []
        while q:
            u = q.popleft()
            mem.append(u)
            for k, j in g.incident[u]:
                if j < 0 or k in blocked or reached[j] or comp_of[j] >= 0:
                    continue
                comp_of[j] = cid
                q.append(j)
        members.append(mem)
    sign = [0] * len(members)
    for k in ids:
        for idx in (int(g.a_idx[k]), int(g.b_idx[k])):
            if idx >= 0 and not reached[idx] and sign[comp_of[idx]] == 0:
                sign[comp_of[idx]] = int(spins[idx])
    Ip, Im = set(), set()
    for mem, s in zip(members, sign):
        target = Ip if s > 0 else Im
        target.update(g.volume.sites[u] for u in mem)
    if label is None:
        label = -1
    return Contour(
        faces=tuple(g.bonds[k] for k in ids),
        components=tuple(tuple(g.bonds[k] for k in c) for c in comps),
        label=int(label),
        I_plus=frozenset(Ip),
        I_minus=frozenset(Im),
        sp_sites=frozenset(sp),
    )


def contour_metric(c1: Contour, c2: Contour) -> int:
    """Minimum l1 distance between face midpoints."""
    m1 = np.array([[p + q for p, q in zip(a, b)] for a, b in c1.faces])
    m2 = np.array([[p + q for p, q in zip(a, b)] for a, b in c2.faces])
    if len(m1) == 0 or len(m2) == 0:
        raise ValueError("contour metric needs non-empty supports")
    return int(np.abs(m1[:, None, :] - m2[None, :, :]).sum(axis=-1).min() // 2)


def interiors(c: Contour) -> tuple[frozenset, frozenset, frozenset]:
    return c.I_plus, c.I_minus, c.V


def component_diameter(comp) -> int:
    m = np.array([[p + q for p, q in zip(a, b)] for a, b in comp])
    if len(m) < 2:
        return 0
    return int(np.abs(m[:, None, :] - m[None, :, :]).sum(axis=-1).max() // 2)


def separation_holds(c1: Contour, c2: Contour, params: MARParams) -> bool:
    D1 = max(component_diameter(k) for k in c1.components)
    D2 = max(component_diameter(k) for k in c2.components)
    return contour_metric(c1, c2) > params.M * min(D1, D2) ** params.a


def contour_diameter(c: Contour, norm: str = "euclidean") -> dict:
    """Max pairwise distance over V(gamma), with the witness k_d = diam / |V|^(1/d)."""
    V = sorted(c.V)
    if not V:
        raise ValueError("contour has an empty vertex set")
    d = len(V[0])
    diam = 0.0
    for x, y in itertools.combinations(V, 2):
        diam = max(diam, distance(x, y, norm))
    k = diam / len(V) ** (1.0 / d)
    return {"diameter": diam, "size": len(V), "k_d": k}


def admissible_cubes(c: Contour, l: int) -> tuple[set, set]:
    """Half-filled l-cubes of I(gamma) and the non-admissible cubes adjacent to them."""
    if l < 0:
        raise ValueError("scale must be non-negative")
    I = c.interior
    if not I:
        return set(), set()
    cands = {x for s in I for x in cubes_containing(s, l)}
    size = (2 ** l + 1) ** len(next(iter(I))) if l > 0 else 1
    adm = set()
    for x in cands:
        cube = m_cube(x, l).as_set()
        if 2 * len(cube & I) >= size:
            adm.add(x)
    bnd = set()
    for x in adm:
        for y in neighbours(x):
            if y not in adm:
                bnd.add(y)
    return adm, bnd


@dataclass
class CubeCover:
    scale: int
    cubes: set
    per_contour: list = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.cubes)


def cube_cover_count(family, l: int) -> CubeCover:
    """Distinct l-cubes meeting at least one site touched by a contour of the family."""
    if l < 0:
        raise ValueError("scale must be non-negative")
    cubes, per = set(), []
    for c in family:
        mine = {x for s in c.touched_sites() for x in cubes_containing(s, l)}
        per.append(len(mine))
        cubes |= mine
    return CubeCover(l, cubes, per)


def surface_sum(A, spec: CouplingSpec) -> float:
    """F_A = sum over x in A, y outside A within R_cut of J_xy."""
    A = {tuple(x) for x in A}
    if not A:
        return 0.0
    offs, js = shell_offsets(spec)
    total = 0.0
    for x in A:
        for off, j in zip(offs, js):
            y = tuple(int(a + o) for a, o in zip(x, off))
            if y not in A:
                total += j
    return float(total)


def surface_sums(c: Contour, spec: CouplingSpec) -> dict:
    return {
        "F_I_plus": surface_sum(c.I_plus, spec),
        "F_I_minus": surface_sum(c.I_minus, spec),
        "F_sp": surface_sum(c.sp_sites, spec),
        "tail_bound_per_site": spec.tail_bound(spec.R_cut),
    }


def origin_census(ns, box: Volume, params: MARParams = MARParams(),
                  bc: BoundaryCondition = PLUS, max_sites: int = 20) -> dict:
    """Distinct contours gamma with 0 in I(gamma) and |gamma| = n, for each n in ns.

    Every configuration of the box is enumerated and partitioned; contours are
    deduplicated by face set (first occurrence kept) and sorted.
    """
    d = box.dim
    origin = (0,) * d
    if origin not in box:
        raise ValueError("the box does not contain the origin")
    if len(box) > max_sites:
        raise ValueError(f"box has {len(box)} sites; enumeration is capped at {max_sites}")
    if any(y not in box for y in neighbours(origin)):
        raise ValueError("box too small: the origin needs a margin of one site")
    ns = sorted(set(int(n) for n in ns))
    g = geometry(box, bc)
    N = len(box)
    o = box.index(origin)
    found = {n: {} for n in ns}
    codes = np.arange(2 ** N, dtype=np.int64)
    allspins = (1 - 2 * ((codes[:, None] >> np.arange(N)) & 1)).astype(np.int8)
    va = np.where(g.a_idx >= 0, allspins[:, np.maximum(g.a_idx, 0)], g.a_eta)
    vb = np.where(g.b_idx >= 0, allspins[:, np.maximum(g.b_idx, 0)], g.b_eta)
    disagree = va != vb
    nfaces = disagree.sum(axis=1)
    for code in np.flatnonzero(nfaces >= ns[0]):
        F = np.flatnonzero(disagree[code])
        if g.reached(set(F.tolist()))[o]:
            continue
        for comps in _partition(g, F, params):
            n = sum(len(c) for c in comps)
            if n not in found:
                continue
            ids = sorted(k for c in comps for k in c)
            key = tuple(g.bonds[k] for k in ids)
            if key in found[n] or g.reached(set(ids))[o]:
                continue
            found[n][key] = _build_contour(g, allspins[code], comps)
    return {n: [found[n][k] for k in sorted(found[n])] for n in ns}


def enumerate_contours_origin(n: int, box: Volume, j: int | None = None,
                              params: MARParams = MARParams(),
                              bc: BoundaryCondition = PLUS, max_sites: int = 20) -> list:
    """Contours of length n around the origin on the box; j caps the component count."""
    out = origin_census([n], box, params, bc, max_sites)[n]
    if j is not None:
        out = [c for c in out if len(c.components) <= j]
    return out


def boundary_cube_instances(c: Contour, l: int) -> list:
    """(C, C') pairs: C half-filled by I(gamma), C' adjacent and not; with |ext(I) cap (C u C')|."""
    adm, _ = admissible_cubes(c, l)
    I = c.interior
    if not adm:
        return []
    ext = exterior_boundary(I).as_set()
    out = []
    for x in sorted(adm):
        cx = m_cube(x, l).as_set()
        for y in neighbours(x):
            if y in adm:
                continue
            U = cx | m_cube(y, l).as_set()
            out.append((x, y, len(ext & U)))
    return out
