"""Couplings, fields, Hamiltonians and spin-flip maps for the long-range Ising model.

Sign convention: the Gibbs weight is exp(-beta * H) with

    H(sigma) = - sum_{x<y in L} J_xy s_x s_y - sum_{x in L} s_x b_x - eps * sum_x h_x s_x,

where b_x = sum_{y outside L, |x-y| <= R_cut} J_xy eta_y is the boundary field.
Pairs inside the volume are counted once.
"""

from __future__ import annotations

import hashlib
import itertools
import math
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .lattice import Volume

NORMS = ("euclidean", "sup", "taxicab")


def distance(x, y, norm: str = "euclidean") -> float:
    diff = [abs(a - b) for a, b in zip(x, y)]
    if norm == "euclidean":
        return math.sqrt(sum(v * v for v in diff))
    if norm == "sup":
        return float(max(diff)) if diff else 0.0
    if norm == "taxicab":
        return float(sum(diff))
    raise ValueError(f"unknown norm {norm!r}")


def _norm_of_offsets(off: np.ndarray, norm: str) -> np.ndarray:
    a = np.abs(off).astype(float)
    if norm == "euclidean":
        return np.sqrt((a * a).sum(axis=-1))
    if norm == "sup":
        return a.max(axis=-1)
    if norm == "taxicab":
        return a.sum(axis=-1)
    raise ValueError(f"unknown norm {norm!r}")


@dataclass(frozen=True)
class CouplingSpec:
    J: float = 1.0
    alpha: float = 3.0
    d: int = 2
    R_cut: float = 8.0
    norm: str = "euclidean"

    def __post_init__(self):
        if not self.J > 0:
            raise ValueError("J must be positive")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if not self.alpha > self.d:
            raise ValueError("alpha must exceed d")
        if not self.R_cut >= 1:
            raise ValueError("R_cut must be >= 1")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")

    def sphere_area(self) -> float:
        # lattice points per unit shell thickness at radius 1, for tail estimates
        d = self.d
        if self.norm == "euclidean":
            return 2 * math.pi ** (d / 2) / math.gamma(d / 2)
        if self.norm == "sup":
            return d * 2 ** d
        return 2 ** d / math.factorial(d - 1)

    def tail_bound(self, R: float, extra_power: float = 0.0) -> float:
        """Integral estimate of sum_{|x|>R} |x|^extra * J |x|^-alpha (inf when divergent)."""
        p = self.d + extra_power - self.alpha
        if p >= 0:
            return math.inf
        return self.J * self.sphere_area() * R ** p / (-p)


def coupling(x, y, spec: CouplingSpec) -> float:
    """J_xy = J |x-y|^-alpha, and 0 on the diagonal."""
    if tuple(x) == tuple(y):
        return 0.0
    return spec.J * distance(x, y, spec.norm) ** (-spec.alpha)


def summability_diagnostic(spec: CouplingSpec, radii: Sequence[float], axis: int = 0) -> dict:
    """Partial sums of sum_{|x|>1} |x_i| J_{0,x} against the target J_{0,e_i}."""
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radius grid must be increasing")
    d = spec.d
    Rmax = int(math.ceil(radii[-1]))
    offs = np.array(list(itertools.product(range(-Rmax, Rmax + 1), repeat=d)), dtype=np.int64)
    r = _norm_of_offsets(offs, spec.norm)
    keep = (r > 1) & (r <= radii[-1])
    offs, r = offs[keep], r[keep]
    terms = np.abs(offs[:, axis]) * spec.J * r ** (-spec.alpha)
    order = np.argsort(r, kind="stable")
    r, terms = r[order], terms[order]
    csum = np.cumsum(terms)
    partial = []
    for R in radii:
        k = int(np.searchsorted(r, R, side="right"))
        partial.append(float(csum[k - 1]) if k else 0.0)
    target = spec.J
    tail = spec.tail_bound(radii[-1], extra_power=1.0)
    if math.isinf(tail):
        verdict = "diverging"
        limit = math.inf
    else:
        limit = partial[-1] + tail
        verdict = "converges-below" if limit < target else "converges-above"
    # growth per unit log-radius; roughly constant under logarithmic divergence
    slopes = [
        (b - a) / math.log(Rb / Ra)
        for (a, Ra), (b, Rb) in zip(zip(partial, radii), zip(partial[1:], radii[1:]))
    ]
    return {
        "radii": radii,
        "partial_sums": partial,
        "target": target,
        "tail_estimate": tail,
        "limit_estimate": limit,
        "log_slopes": slopes,
        "verdict": verdict,
    }


@dataclass(frozen=True)
class FieldSpec:
    """External field: none, iid Gaussian of strength eps, or decaying h*|x|^-delta."""

    mode: str = "none"
    eps: float = 0.0
    seed: int | None = None
    h_star: float = 0.0
    delta: float = 0.0

    def __post_init__(self):
        if self.mode not in ("none", "gaussian", "decaying"):
            raise ValueError(f"unknown field mode {self.mode!r}")
        if self.mode == "gaussian" and not self.eps > 0:
            raise ValueError("gaussian field needs eps > 0")
        if self.mode == "decaying" and not (self.h_star > 0 and self.delta > 0):
            raise ValueError("decaying field needs h_star > 0 and delta > 0")

    @property
    def strength(self) -> float:
        if self.mode == "gaussian":
            return self.eps
        if self.mode == "decaying":
            return 1.0
        return 0.0

    def realize(self, vol: Volume, seed: int | None = None) -> np.ndarray | None:
        if self.mode == "none":
            return None
        if self.mode == "gaussian":
            s = self.seed if seed is None else seed
            return np.random.default_rng(s).standard_normal(len(vol))
        out = np.empty(len(vol))
        for k, x in enumerate(vol.sites):
            rad = math.sqrt(sum(v * v for v in x))
            out[k] = self.h_star if rad == 0 else self.h_star * rad ** (-self.delta)
        return out


@dataclass(frozen=True)
class BoundaryCondition:
    mode: str = "plus"
    values: dict = field(default=None, compare=False, hash=False)

    def __post_init__(self):
        if self.mode not in ("plus", "minus", "explicit"):
            raise ValueError(f"unknown boundary mode {self.mode!r}")
        if self.mode == "explicit" and self.values is None:
            raise ValueError("explicit boundary needs a site -> spin map")

    def eta(self, y) -> int:
        if self.mode == "plus":
            return 1
        if self.mode == "minus":
            return -1
        y = tuple(y)
        if y not in self.values:
            raise KeyError(f"explicit boundary has no spin for shell site {y}")
        return int(self.values[y])

    def negated(self) -> "BoundaryCondition":
        if self.mode == "plus":
            return BoundaryCondition("minus")
        if self.mode == "minus":
            return BoundaryCondition("plus")
        return BoundaryCondition("explicit", {k: -v for k, v in self.values.items()})


PLUS = BoundaryCondition("plus")
MINUS = BoundaryCondition("minus")


def shell_offsets(spec: CouplingSpec) -> tuple[np.ndarray, np.ndarray]:
    """Non-zero integer offsets within R_cut and their couplings."""
    R = int(math.floor(spec.R_cut))
    offs = np.array(list(itertools.product(range(-R, R + 1), repeat=spec.d)), dtype=np.int64)
    r = _norm_of_offsets(offs, spec.norm)
    keep = (r > 0) & (r <= spec.R_cut + 1e-12)
    offs, r = offs[keep], r[keep]
    return offs, spec.J * r ** (-spec.alpha)


def boundary_field(x, vol: Volume, bc: BoundaryCondition, spec: CouplingSpec) -> tuple[float, float]:
    """b_x = sum over outside sites y within R_cut of J_xy eta_y, plus a tail bound."""
    x = tuple(x)
    if x not in vol:
        raise ValueError(f"site {x} is not in the volume")
    offs, js = shell_offsets(spec)
    total = 0.0
    for off, j in zip(offs, js):
        y = tuple(int(a + b) for a, b in zip(x, off))
        if y in vol:
            continue
        total += j * bc.eta(y)
    return total, spec.tail_bound(spec.R_cut)


@dataclass(frozen=True)
class EnergyBreakdown:
    bulk_pair_term: float
    boundary_term: float
    field_term: float
    total: float


@dataclass
class SpinConfig:
    volume: Volume
    spins: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.spins, dtype=np.int8).reshape(-1)
        if s.size != len(self.volume):
            raise ValueError("spin array does not match the volume")
        if not np.all(np.abs(s) == 1):
            raise ValueError("spins must be +1 or -1")
        self.spins = s

    @classmethod
    def constant(cls, vol: Volume, value: int = 1) -> "SpinConfig":
        return cls(vol, np.full(len(vol), value, dtype=np.int8))

    def __getitem__(self, x) -> int:
        return int(self.spins[self.volume.index(x)])

    def copy(self) -> "SpinConfig":
        return SpinConfig(self.volume, self.spins.copy())

    def digest(self) -> str:
        return hashlib.sha256(self.spins.tobytes() + self.volume.digest().encode()).hexdigest()[:16]


class Model:
    """Precomputed coupling matrix and boundary fields for one (volume, bc, spec)."""

    def __init__(self, vol: Volume, spec: CouplingSpec, bc: BoundaryCondition = PLUS,
                 cache_dir: str | None = None):
        if vol.dim != spec.d:
            raise ValueError("volume dimension does not match the coupling spec")
        self.volume = vol
        self.spec = spec
        self.bc = bc
        self.Jmat = self._coupling_matrix(cache_dir)
        self.b = self._boundary_fields()

    def _coupling_matrix(self, cache_dir):
        key = None
        if cache_dir:
            tag = f"{self.spec.d}|{self.spec.alpha!r}|{self.spec.J!r}|{self.spec.norm}|{self.spec.R_cut!r}|{self.volume.digest()}"
            key = os.path.join(cache_dir, "J_" + hashlib.sha256(tag.encode()).hexdigest()[:20] + ".npy")
            if os.path.exists(key):
                return np.load(key)
        X = self.volume.array()
        off = X[:, None, :] - X[None, :, :]
        r = _norm_of_offsets(off, self.spec.norm)
        with np.errstate(divide="ignore"):
            Jm = np.where(r > 0, self.spec.J * np.power(np.where(r > 0, r, 1.0), -self.spec.alpha), 0.0)
        if key:
            os.makedirs(cache_dir, exist_ok=True)
            np.save(key, Jm)
        return Jm

    def _boundary_fields(self):
        offs, js = shell_offsets(self.spec)
        vol = self.volume
        b = np.zeros(len(vol))
        for k, x in enumerate(vol.sites):
            acc = 0.0
            for off, j in zip(offs, js):
                y = tuple(int(a + o) for a, o in zip(x, off))
                if y in vol:
                    continue
                acc += j * self.bc.eta(y)
            b[k] = acc
        return b

    @property
    def N(self) -> int:
        return len(self.volume)

    def with_bc(self, bc: BoundaryCondition) -> "Model":
        other = object.__new__(Model)
        other.volume, other.spec, other.bc, other.Jmat = self.volume, self.spec, bc, self.Jmat
        other.b = other._boundary_fields()
        return other

    def external_field(self, field: FieldSpec | None, h) -> np.ndarray:
        """eps * h as a per-site vector (zeros when there is no field)."""
        if field is None or field.mode == "none":
            if h is not None and np.any(np.asarray(h) != 0):
                raise ValueError("field mode none takes no realization")
            return np.zeros(self.N)
        if h is None:
            raise ValueError(f"field mode {field.mode} requires a realization")
        h = np.asarray(h, dtype=float)
        if h.shape != (self.N,):
            raise ValueError("field realization does not match the volume")
        return field.strength * h

    def energy(self, sigma, field: FieldSpec | None = None, h=None) -> EnergyBreakdown:
        s = _spins(sigma, self.N).astype(float)
        bulk = -0.5 * float(s @ self.Jmat @ s)
        bnd = -float(s @ self.b)
        fld = -float(s @ self.external_field(field, h))
        return EnergyBreakdown(bulk, bnd, fld, bulk + bnd + fld)

    def local_fields(self, sigma, field: FieldSpec | None = None, h=None) -> np.ndarray:
        s = _spins(sigma, self.N).astype(float)
        return self.Jmat @ s + self.b + self.external_field(field, h)

    def delta_energy_single_flip(self, sigma, x, field: FieldSpec | None = None, h=None) -> float:
        """H(sigma with x flipped) - H(sigma), using one coupling row."""
        s = _spins(sigma, self.N)
        if isinstance(x, (int, np.integer)):
            k = int(x)
            if not 0 <= k < self.N:
                raise ValueError("site index out of range")
        else:
            if tuple(x) not in self.volume:
                raise ValueError(f"site {tuple(x)} is not in the volume")
            k = self.volume.index(x)
        ext = self.external_field(field, h)
        phi = float(self.Jmat[k] @ s.astype(float)) + self.b[k] + ext[k]
        return 2.0 * float(s[k]) * phi


def _spins(sigma, N) -> np.ndarray:
    s = sigma.spins if isinstance(sigma, SpinConfig) else np.asarray(sigma)
    if s.shape != (N,):
        raise ValueError("configuration does not match the volume")
    return s


def energy(sigma: SpinConfig, bc: BoundaryCondition, field: FieldSpec | None, h,
           spec: CouplingSpec) -> EnergyBreakdown:
    return Model(sigma.volume, spec, bc).energy(sigma, field, h)


def _region_indices(vol: Volume, A) -> np.ndarray:
    idx = []
    for x in A:
        x = tuple(x)
        if x not in vol:
            raise ValueError(f"region site {x} is outside the domain")
        idx.append(vol.index(x))
    return np.array(sorted(idx), dtype=np.int64)


def apply_tau_A(target, A, vol: Volume | None = None):
    """Negate a spin configuration or field realization on A."""
    if isinstance(target, SpinConfig):
        out = target.copy()
        out.spins[_region_indices(target.volume, A)] *= -1
        return out
    if vol is None:
        raise ValueError("a bare array needs its volume")
    arr = np.array(target, dtype=float, copy=True)
    if arr.shape != (len(vol),):
        raise ValueError("field realization does not match the volume")
    arr[_region_indices(vol, A)] *= -1
    return arr


def apply_tau_gamma(sigma: SpinConfig, I_plus, I_minus, sp, sign: int = -1) -> SpinConfig:
    """Three-case contour flip.

    sign=-1 is the case table as written: keep I_- and V^c, negate I_+, set sp
    to -1.  sign=+1 is its mirror image for removing contours under a plus
    exterior: keep I_+ and V^c, negate I_-, set sp to +1.
    """
    vol = sigma.volume
    Ip, Im, S = (set(map(tuple, r)) for r in (I_plus, I_minus, sp))
    if Ip & Im or Ip & S or Im & S:
        raise ValueError("contour regions I_+, I_- and sp overlap")
    for x in Ip | Im | S:
        if x not in vol:
            raise ValueError(f"contour region site {x} outside the volume")
    out = sigma.copy()
    flip = Ip if sign == -1 else Im
    if flip:
        out.spins[_region_indices(vol, flip)] *= -1
    if S:
        out.spins[_region_indices(vol, S)] = sign
    return out


def flip_energy_difference(model: Model, sigma, tau_sigma, field: FieldSpec | None = None,
                           h=None, h_tau=None, rtol: float = 1e-10) -> float:
    """H(tau sigma) - H(sigma) by full recomputation, cross-checked by single flips."""
    h_tau = h if h_tau is None else h_tau
    s0 = _spins(sigma, model.N).copy()
    s1 = _spins(tau_sigma, model.N)
    full = model.energy(s1, field, h_tau).total - model.energy(s0, field, h).total
    # incremental path: change the field first, then walk the differing sites
    inc = 0.0
    if h is not None and h_tau is not None:
        dh = model.external_field(field, h_tau) - model.external_field(field, h)
        inc -= float(s0.astype(float) @ dh)
    cur = s0
    for k in np.flatnonzero(s0 != s1):
        inc += model.delta_energy_single_flip(cur, int(k), field, h_tau)
        cur[k] = -cur[k]
    scale = max(1.0, abs(full), abs(inc))
    if abs(full - inc) > rtol * scale:
        raise AssertionError(f"incremental energy {inc} disagrees with recomputation {full}")
    return full
