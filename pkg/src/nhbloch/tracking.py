"""Adiabatic continuation of eigenvalues along discretized loops.

Bands are matched between consecutive samples by the exact minimum-cost
bijection over all n! permutations with cost sum |dE| (n <= 6 keeps this
trivial).  A step whose best assignment is not cheaper than the second
best by the ambiguity ratio is recursively halved; if ambiguity survives
max_refine halvings the loop passes too near an exceptional point and
NearDegeneracyUnresolved is raised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import permutations
from typing import Optional

import numpy as np

from .eigen import batch_eigvals
from .errors import (BasepointMismatch, NearDegeneracyUnresolved,
                     ReferenceOnSpectrum)
from .geometry import LoopPath, ParamPoint, canonicalize, point_distance
from .models import BlochModel

AMBIGUITY_RATIO = 1.5

_PERM_CACHE: dict[int, np.ndarray] = {}


def _perms(n: int) -> np.ndarray:
    if n not in _PERM_CACHE:
        _PERM_CACHE[n] = np.array(list(permutations(range(n))), dtype=int)
    return _PERM_CACHE[n]


def match_bands(e_from: np.ndarray, e_to: np.ndarray
                ) -> tuple[np.ndarray, float, float]:
    """Minimum-cost bijection from one eigenvalue list onto another.

    Returns (sigma, best_cost, second_cost) with e_to[sigma[i]] the
    continuation of e_from[i].
    """
    perms = _perms(len(e_from))
    costs = np.abs(e_from[None, :] - e_to[perms]).sum(axis=1)
    if len(costs) == 1:
        return perms[0], float(costs[0]), math.inf
    order = np.argsort(costs, kind="stable")
    best = order[0]
    return perms[best], float(costs[best]), float(costs[order[1]])


def sort_canonical_order(values: np.ndarray) -> np.ndarray:
    """Indices sorting values by Re descending then Im descending."""
    return np.lexsort((-values.imag, -values.real))


@dataclass
class TrackedBands:
    """Continuous eigenvalue trajectories along a closed loop.

    energies[t, j] follows the band that started in slot j; slots are
    ordered Re desc, Im desc at the basepoint.  permutation[j] = i means
    trajectory j terminates on the eigenvalue that started in slot i.
    """
    loop: LoopPath
    points: np.ndarray        # (T, 2) including refinement insertions
    energies: np.ndarray      # (T, n) complex, tracked order
    match_quality: np.ndarray  # (T-1,) second/best cost ratio per step
    permutation: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.energies.shape[1]

    @property
    def basepoint(self) -> ParamPoint:
        return self.loop.basepoint

    def base_energies(self) -> np.ndarray:
        return self.energies[0]


def _ambiguous(best: float, second: float, ratio: float) -> bool:
    return second < ratio * best


def track_loop(model: BlochModel, loop: LoopPath, n_steps: int | None = None,
               tol: float = 1e-9, max_refine: int = 16,
               ambiguity_ratio: float = AMBIGUITY_RATIO) -> TrackedBands:
    """Track all bands once around a closed loop.

    n_steps resamples the loop polyline uniformly when given.  The
    returned trajectories include any refinement midpoints that the
    ambiguity test forced.
    """
    if not loop.closed:
        raise ValueError("track_loop needs a closed loop")
    pts = loop.as_array()
    if n_steps is not None and n_steps + 1 > len(pts):
        pts = _resample(pts, n_steps)
    vals, _ = batch_eigvals(model.sample_batch(pts[:, 0], pts[:, 1]))
    n = vals.shape[1]

    order0 = sort_canonical_order(vals[0])
    tracked_pts = [pts[0]]
    tracked = [vals[0][order0]]
    quality = []

    def eig_at(p):
        v, _ = batch_eigvals(model.sample_batch(p[0:1], p[1:2]))
        return v[0]

    def advance(p_from, e_from, p_to, e_to, depth):
        sigma, best, second = match_bands(e_from, e_to)
        if not _ambiguous(best, second, ambiguity_ratio):
            tracked_pts.append(p_to)
            tracked.append(e_to[sigma])
            quality.append(second / best if best > 0 else math.inf)
            return
        if depth >= max_refine:
            raise NearDegeneracyUnresolved(
                f"assignment ambiguous near k=({p_to[0]:.4f}, {p_to[1]:.4f}) "
                f"after {max_refine} refinements; the loop passes too close "
                "to an exceptional point")
        p_mid = 0.5 * (p_from + p_to)
        e_mid = eig_at(p_mid)
        advance(p_from, e_from, p_mid, e_mid, depth + 1)
        advance(p_mid, tracked[-1], p_to, e_to, depth + 1)

    for t in range(1, len(pts)):
        advance(tracked_pts[-1], tracked[-1], pts[t], vals[t], 0)

    energies = np.array(tracked)
    start = energies[0]
    end = energies[-1]
    scale = max(1.0, float(np.abs(start).max()))
    sigma, best, second = match_bands(end, start)
    if best > 1e-6 * scale * len(start):
        raise NearDegeneracyUnresolved(
            f"loop endpoint spectrum drifted by {best:.3e}")
    if _ambiguous(best, second, ambiguity_ratio) and second > 0:
        raise NearDegeneracyUnresolved("endpoint band identification ambiguous")
    return TrackedBands(loop=loop, points=np.array(tracked_pts),
                        energies=energies,
                        match_quality=np.array(quality),
                        permutation=tuple(int(i) for i in sigma))


def _resample(pts: np.ndarray, n_steps: int) -> np.ndarray:
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    t = np.linspace(0.0, s[-1], n_steps + 1)
    out = np.empty((n_steps + 1, 2))
    for ax in range(2):
        out[:, ax] = np.interp(t, s, pts[:, ax])
    return out


# ---------------------------------------------------------------------------
# permutation classes

def cycle_decomposition(perm: tuple[int, ...]) -> list[list[int]]:
    """Cycles of the permutation, ordered by (length, smallest member)."""
    seen = set()
    cycles = []
    for start in range(len(perm)):
        if start in seen:
            continue
        cyc = [start]
        seen.add(start)
        nxt = perm[start]
        while nxt != start:
            cyc.append(nxt)
            seen.add(nxt)
            nxt = perm[nxt]
        cycles.append(cyc)
    cycles.sort(key=lambda c: (len(c), min(c)))
    return cycles


def cycle_type_string(perm: tuple[int, ...]) -> str:
    """Canonical class string, e.g. "1^1 2^1" for a transposition plus a
    fixed band."""
    counts: dict[int, int] = {}
    for cyc in cycle_decomposition(perm):
        counts[len(cyc)] = counts.get(len(cyc), 0) + 1
    return " ".join(f"{length}^{counts[length]}" for length in sorted(counts))


@dataclass
class LoopClass:
    """Conjugacy-class data of one loop traversal."""
    permutation: tuple[int, ...]
    cycle_type: str
    windings: Optional[list[dict]] = None  # per cycle: bands, W, C, residual

    @property
    def n(self) -> int:
        return len(self.permutation)


def classify(tb: TrackedBands) -> LoopClass:
    return LoopClass(permutation=tb.permutation,
                     cycle_type=cycle_type_string(tb.permutation))


def compose_loops(a: TrackedBands, b: TrackedBands,
                  tol: float = 1e-6) -> LoopClass:
    """Class of traversing loop a, then loop b, through a shared basepoint."""
    if a.n != b.n:
        raise BasepointMismatch("band counts differ")
    if point_distance(a.basepoint, b.basepoint, a.loop.topology) > 1e-8:
        raise BasepointMismatch(
            f"basepoints differ: {a.basepoint} vs {b.basepoint}")
    scale = max(1.0, float(np.abs(a.base_energies()).max()))
    if np.abs(a.base_energies() - b.base_energies()).max() > tol * scale:
        raise BasepointMismatch("band ordering differs at the basepoint")
    pa, pb = a.permutation, b.permutation
    prod = tuple(pb[pa[j]] for j in range(len(pa)))
    return LoopClass(permutation=prod, cycle_type=cycle_type_string(prod))


# ---------------------------------------------------------------------------
# winding numbers

def _cycle_path(tb: TrackedBands, cycle: list[int]) -> np.ndarray:
    """Energies of one band followed through len(cycle) traversals."""
    pieces = []
    j = cycle[0]
    for _ in range(len(cycle)):
        pieces.append(tb.energies[:, j])
        j = tb.permutation[j]
    return np.concatenate(pieces)


def _phase_winding(path: np.ndarray, e_ref: complex,
                   min_dist_tol: float) -> tuple[int, float]:
    rel = path - e_ref
    dmin = float(np.abs(rel).min())
    if dmin < min_dist_tol:
        raise ReferenceOnSpectrum(
            f"reference energy within {dmin:.3e} of the trajectory")
    closed = np.concatenate([rel, rel[:1]])
    dphi = np.angle(closed[1:] / closed[:-1])
    if np.abs(dphi).max() > 0.99 * math.pi:
        raise ValueError("winding step too coarse; increase n_steps")
    theta = float(dphi.sum())
    w = round(theta / (2.0 * math.pi))
    return int(w), abs(theta - 2.0 * math.pi * w)


def winding_numbers(model: BlochModel, loop: LoopPath,
                    e_ref: complex | None = None, n_steps: int | None = None,
                    tol: float = 1e-9, max_refine: int = 16) -> LoopClass:
    """Loop class with per-cycle spectral winding numbers filled in.

    For each cycle of length C one member band is followed through C
    consecutive traversals; W counts the accumulated phase of
    E(t) - e_ref in units of 2 pi.  e_ref defaults to the centroid of
    each cycle's trajectory.
    """
    tb = track_loop(model, loop, n_steps=n_steps, tol=tol,
                    max_refine=max_refine)
    lc = classify(tb)
    scale = max(1.0, float(np.abs(tb.energies).max()))
    windings = []
    for cyc in cycle_decomposition(tb.permutation):
        path = _cycle_path(tb, cyc)
        ref = complex(np.mean(path)) if e_ref is None else complex(e_ref)
        w, resid = _phase_winding(path, ref, 1e-8 * scale)
        windings.append({
            "bands": sorted(c + 1 for c in cyc),
            "W": w,
            "C": len(cyc),
            "e_ref": ref,
            "residual": resid,
        })
    lc.windings = windings
    return lc
