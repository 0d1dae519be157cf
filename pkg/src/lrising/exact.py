"""Exact enumeration on small volumes: log partition functions, Gibbs averages and Delta_A.

Configurations are visited in Gray-code order so consecutive states differ by
one spin and energies update in O(N).  The volume is split into a low block
(tabulated once) and a high block (walked one flip at a time); each high
state contributes a whole vector of energies through one matrix-vector
product.  Partition sums are accumulated with a streaming log-sum-exp.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .model import FieldSpec, Model, SpinConfig, apply_tau_A

EXACT_CAP = 20
LOW_BITS = 10


class ScaleGuardError(RuntimeError):
    """Raised when a request exceeds the exact-enumeration cap."""


def gray(t: int) -> int:
    return t ^ (t >> 1)


def flipped_bit(t: int) -> int:
    """Bit that changes between gray(t-1) and gray(t), for t >= 1."""
    return (t & -t).bit_length() - 1


def _field_hash(h) -> str:
    if h is None:
        return "none"
    return hashlib.sha256(np.asarray(h, dtype=float).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class LogPartition:
    log_Z: float
    volume_hash: str
    beta: float
    bc: str
    field_hash: str
    max_log_weight: float


def _gray_table(J: np.ndarray, ext: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Spins and energies of all states of a block in Gray order.

    Energy of the block alone: -sum_{pairs} J s s - sum ext s.
    """
    n = len(ext)
    S = np.empty((2 ** n, n), dtype=np.int8)
    E = np.empty(2 ** n)
    s = np.ones(n, dtype=np.int8)
    e = -0.5 * float(J.sum()) - float(ext.sum())
    phi = J.sum(axis=1) + ext
    S[0], E[0] = s, e
    for t in range(1, 2 ** n):
        k = flipped_bit(t)
        e += 2.0 * s[k] * phi[k]
        phi -= 2.0 * s[k] * J[:, k]
        s[k] = -s[k]
        S[t], E[t] = s, e
    return S, E


def iter_energies(model: Model, field: FieldSpec | None = None, h=None,
                  cap: int = EXACT_CAP):
    """Yield (spins, energies) blocks covering every configuration exactly once."""
    N = model.N
    if N > cap:
        raise ScaleGuardError(f"exact mode is capped at {cap} spins, volume has {N}")
    ext = model.b + model.external_field(field, h)
    nlo = min(N, LOW_BITS)
    lo, hi = np.arange(nlo), np.arange(nlo, N)
    J = model.Jmat
    S_lo, E_lo = _gray_table(J[np.ix_(lo, lo)], ext[lo])
    S_lo_f = S_lo.astype(float)
    nhi = len(hi)
    J_hh = J[np.ix_(hi, hi)]
    J_lh = J[np.ix_(lo, hi)]
    s = np.ones(nhi, dtype=np.int8)
    e_hi = -0.5 * float(J_hh.sum()) - float(ext[hi].sum())
    phi = J_hh.sum(axis=1) + ext[hi]
    c = J_lh.sum(axis=1)
    block = np.empty((len(E_lo), N), dtype=np.int8)
    block[:, :nlo] = S_lo
    for t in range(2 ** nhi):
        if t:
            k = flipped_bit(t)
            e_hi += 2.0 * s[k] * phi[k]
            phi -= 2.0 * s[k] * J_hh[:, k]
            c -= 2.0 * s[k] * J_lh[:, k]
            s[k] = -s[k]
        block[:, nlo:] = s
        yield block, E_lo - S_lo_f @ c + e_hi


class _Accumulator:
    """Streaming log-sum-exp with weighted observable sums."""

    def __init__(self, n_obs: int = 0):
        self.m = -math.inf
        self.z = 0.0
        self.obs = np.zeros(n_obs)

    def add(self, logw: np.ndarray, values: np.ndarray | None = None):
        bm = float(logw.max())
        if bm > self.m:
            scale = math.exp(self.m - bm) if self.m > -math.inf else 0.0
            self.z *= scale
            self.obs *= scale
            self.m = bm
        w = np.exp(logw - self.m)
        self.z += float(w.sum())
        if values is not None:
            self.obs += values @ w

    @property
    def log_z(self) -> float:
        return self.m + math.log(self.z)


def log_partition(model: Model, beta: float, field: FieldSpec | None = None, h=None,
                  cap: int = EXACT_CAP) -> LogPartition:
    """log sum_sigma exp(-beta H(sigma))."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    acc = _Accumulator()
    for _, E in iter_energies(model, field, h, cap):
        acc.add(-beta * E)
    return LogPartition(acc.log_z, model.volume.digest(), float(beta), model.bc.mode,
                        _field_hash(h), acc.m)


def site_minus(model: Model, x) -> Callable:
    k = model.volume.index(x)
    return lambda S: (S[:, k] < 0).astype(float)


def site_spin(model: Model, x) -> Callable:
    k = model.volume.index(x)
    return lambda S: S[:, k].astype(float)


def gibbs_expectations(model: Model, beta: float, observables: dict,
                       field: FieldSpec | None = None, h=None, cap: int = EXACT_CAP) -> dict:
    """Exact averages of vectorised observables, plus log_Z."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    names = list(observables)
    acc = _Accumulator(len(names))
    for S, E in iter_energies(model, field, h, cap):
        vals = np.stack([observables[k](S) for k in names]) if names else None
        acc.add(-beta * E, vals)
    out = {k: float(v / acc.z) for k, v in zip(names, acc.obs)}
    out["log_Z"] = acc.log_z
    return out


def gibbs_expectation(model: Model, beta: float, observable: Callable,
                      field: FieldSpec | None = None, h=None, cap: int = EXACT_CAP) -> float:
    return gibbs_expectations(model, beta, {"f": observable}, field, h, cap)["f"]


def normalization(model: Model, beta: float, field: FieldSpec | None = None, h=None) -> float:
    """sum_sigma exp(-beta H - log_Z), which should be 1."""
    lz = log_partition(model, beta, field, h).log_Z
    tot = 0.0
    for _, E in iter_energies(model, field, h):
        tot += float(np.exp(-beta * E - lz).sum())
    return tot


# ---------------------------------------------------------------------------
# Delta_A, bad events and the density-ratio identity


@dataclass(frozen=True)
class DeltaRecord:
    region: tuple
    value: float
    beta: float
    field_hash: str


def delta_A(model: Model, beta: float, field: FieldSpec, h, A) -> DeltaRecord:
    """Delta_A(h) = -(1/beta) [log Z(h) - log Z(tau_A h)]."""
    if beta == 0:
        raise ValueError("Delta_A is undefined at beta = 0")
    A = sorted(tuple(x) for x in A)
    h = np.asarray(h, dtype=float)
    ht = apply_tau_A(h, A, model.volume)
    lz = log_partition(model, beta, field, h).log_Z
    lzt = log_partition(model, beta, field, ht).log_Z
    return DeltaRecord(tuple(A), -(lz - lzt) / beta, float(beta), _field_hash(h))


class BatchEnumerator:
    """All configurations of a small volume held in memory, for many field draws at once."""

    def __init__(self, model: Model, cap: int = 16):
        if model.N > cap:
            raise ScaleGuardError(f"batch enumeration is capped at {cap} spins")
        self.model = model
        blocks = list(iter_energies(model, None, None))
        self.S = np.concatenate([b.copy() for b, _ in blocks]).astype(float)
        self.E0 = np.concatenate([e for _, e in blocks])

    def log_partition(self, beta: float, ext: np.ndarray) -> np.ndarray:
        """log Z for each row of ext (shape R x N, already scaled by eps)."""
        ext = np.atleast_2d(ext)
        out = np.empty(ext.shape[0])
        chunk = max(1, 2 ** 22 // len(self.E0))
        for i in range(0, ext.shape[0], chunk):
            logw = -beta * (self.E0[:, None] - self.S @ ext[i:i + chunk].T)
            m = logw.max(axis=0)
            out[i:i + chunk] = m + np.log(np.exp(logw - m).sum(axis=0))
        return out

    def delta(self, beta: float, eps: float, H: np.ndarray, A_idx) -> np.ndarray:
        """Delta_A for each row of the raw field draws H."""
        if beta == 0:
            raise ValueError("Delta_A is undefined at beta = 0")
        H = np.atleast_2d(H)
        Ht = H.copy()
        Ht[:, list(A_idx)] *= -1
        return -(self.log_partition(beta, eps * H) - self.log_partition(beta, eps * Ht)) / beta

    def site_means(self, beta: float, ext: np.ndarray) -> np.ndarray:
        """<sigma_v> for each row of ext; shape R x N."""
        ext = np.atleast_2d(ext)
        logw = -beta * (self.E0[:, None] - self.S @ ext.T)
        logw -= logw.max(axis=0)
        w = np.exp(logw)
        w /= w.sum(axis=0)
        return (self.S.T @ w).T


@dataclass(frozen=True)
class BadEventReport:
    sup_statistic: float
    argmax: int
    threshold: float
    indicator: bool
    empty_interiors: tuple

    @property
    def in_B(self) -> bool:
        return not self.indicator


def bad_event_sup(model: Model, beta: float, field: FieldSpec, h, family, c1: float,
                  threshold: float = 0.25, batch: BatchEnumerator | None = None) -> BadEventReport:
    """sup over the family of |Delta_{I_-(gamma)}| / (c1 |gamma|) against a threshold.

    The indicator is True when the statistic reaches the threshold (equality
    counts as reaching it).  Contours with empty I_- contribute 0 and are listed.
    """
    if not family:
        raise ValueError("bad event needs a non-empty contour family")
    if c1 <= 0:
        raise ValueError("c1 must be positive")
    vol = model.volume
    best, arg, empty = 0.0, 0, []
    for i, c in enumerate(family):
        region = [x for x in c.I_minus if x in vol]
        if not region:
            empty.append(i)
            continue
        if batch is not None:
            idx = [vol.index(x) for x in region]
            val = float(batch.delta(beta, field.strength, np.asarray(h)[None, :], idx)[0])
        else:
            val = delta_A(model, beta, field, h, region).value
        stat = abs(val) / (c1 * c.length)
        if stat > best:
            best, arg = stat, i
    return BadEventReport(best, arg, threshold, best >= threshold, tuple(empty))


def log_gaussian_density(h) -> float:
    h = np.asarray(h, dtype=float)
    return float(-0.5 * (h * h).sum() - 0.5 * len(h) * math.log(2 * math.pi))


def log_joint_density(model: Model, beta: float, field: FieldSpec, sigma, h,
                      lz: float | None = None) -> float:
    """log of the Gaussian density of h times the Gibbs probability of sigma given h."""
    if lz is None:
        lz = log_partition(model, beta, field, h).log_Z
    e = model.energy(sigma, field, h).total
    return log_gaussian_density(h) - beta * e - lz


def identity_check(model: Model, beta: float, field: FieldSpec, sigma: SpinConfig, h,
                   tau_sigma: SpinConfig, A_field) -> dict:
    """Both sides of D(s,h) Z(h) / [D(ts,th) Z(th)] = exp(beta [H(ts,th) - H(s,h)]).

    The left side is assembled from joint densities and exact partition
    functions, the right side from two Hamiltonian evaluations.  Both are
    compared in the log domain and the relative error of the ratio reported.
    """
    h = np.asarray(h, dtype=float)
    ht = apply_tau_A(h, A_field, model.volume)
    lz = log_partition(model, beta, field, h).log_Z
    lzt = log_partition(model, beta, field, ht).log_Z
    lhs = (log_joint_density(model, beta, field, sigma, h, lz) + lz
           - log_joint_density(model, beta, field, tau_sigma, ht, lzt) - lzt)
    rhs = beta * (model.energy(tau_sigma, field, ht).total - model.energy(sigma, field, h).total)
    rel = abs(math.expm1(lhs - rhs))
    return {"log_lhs": lhs, "log_rhs": rhs, "rel_error": rel}
