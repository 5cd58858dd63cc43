"""Detection and topological classification of spectral features on a 2D
grid: real/imaginary pseudo-Hermitian lines as oriented polylines with
homology data, exceptional points as Newton-refined zeros of the
discriminant, EP pair relations, branch-cut tracing, and the spectral
pseudo-Hermiticity test.

Band differences are always taken between *matched* bands: every grid
edge carries the minimum-cost bijection between the eigenvalue lists of
its two nodes, so sign changes of Re/Im differences survive the branch
relabelings that the canonical per-node sort introduces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .eigen import (batch_char_poly, batch_discriminant, batch_poly_roots,
                    eigensystem, _sylvester_resultant)
from .errors import RefinementDiverged, TorusCutViolation, TraceStalled
from .geometry import (SpaceTopology, TWO_PI, homology_class, wrap_angle)
from .models import BlochModel
from .tracking import AMBIGUITY_RATIO, _perms, match_bands

TWO_PI_ = TWO_PI


# ---------------------------------------------------------------------------
# grid scan

@dataclass
class GridScan:
    """Eigenvalues over a rectangular window with locally matched bands."""

    model: BlochModel
    kxs: np.ndarray            # (nx,) node coordinates
    kys: np.ndarray            # (ny,)
    energies: np.ndarray       # (nx, ny, n) canonical per-node order
    coeffs: np.ndarray         # (nx, ny, n+1) char-poly coefficients
    match_x: np.ndarray        # (n_ex, ny, n) sigma to the +x neighbour
    match_y: np.ndarray        # (nx, n_ey, n)
    ratio_x: np.ndarray        # ambiguity ratios per edge
    ratio_y: np.ndarray
    periodic_x: bool
    periodic_y: bool
    window: tuple
    flagged: np.ndarray        # (n_cx, n_cy) bool
    _ep_cache: Optional[list] = field(default=None, repr=False)

    @property
    def nx(self) -> int:
        return len(self.kxs)

    @property
    def ny(self) -> int:
        return len(self.kys)

    @property
    def n(self) -> int:
        return self.energies.shape[2]

    @property
    def cell(self) -> tuple[float, float]:
        return (float(self.kxs[1] - self.kxs[0]),
                float(self.kys[1] - self.kys[0]))

    @property
    def full_torus(self) -> bool:
        return self.periodic_x and self.periodic_y

    def x_next(self, i: int) -> int:
        return (i + 1) % self.nx if self.periodic_x else i + 1

    def y_next(self, j: int) -> int:
        return (j + 1) % self.ny if self.periodic_y else j + 1

    def node_point(self, i: int, j: int) -> tuple[float, float]:
        return float(self.kxs[i]), float(self.kys[j])

    def distance(self, p, q) -> float:
        dx = p[0] - q[0]
        dy = p[1] - q[1]
        if self.periodic_x:
            dx = wrap_angle(dx)
        if self.periodic_y:
            dy = wrap_angle(dy)
        return math.hypot(dx, dy)


def _batch_match(ea: np.ndarray, eb: np.ndarray
                 ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized minimum-cost bijections.

    ea, eb: (M, n).  Returns (sigma (M, n), ratio (M,)) where ratio is
    second-best / best assignment cost (inf when the best cost vanishes).
    """
    n = ea.shape[1]
    perms = _perms(n)
    costs = np.abs(ea[:, None, :] - eb[:, perms]).sum(axis=2)  # (M, n!)
    if len(perms) == 1:
        return perms[np.zeros(len(ea), dtype=int)], np.full(len(ea), np.inf)
    part = np.partition(costs, 1, axis=1)
    best_idx = np.argmin(costs, axis=1)
    best = part[:, 0]
    second = part[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(best > 0, second / np.where(best > 0, best, 1.0),
                         np.inf)
    return perms[best_idx], ratio


def _grid_discriminant(coeffs: np.ndarray) -> np.ndarray:
    d = coeffs.shape[-1] - 1
    if d in (2, 3):
        return batch_discriminant(coeffs)
    flat = coeffs.reshape(-1, d + 1)
    sign = (-1) ** (d * (d - 1) // 2)
    out = np.empty(flat.shape[0], dtype=complex)
    for i, c in enumerate(flat):
        dq = np.arange(d, 0, -1) * c[:-1]
        out[i] = sign * _sylvester_resultant(c, dq)
    return out.reshape(coeffs.shape[:-1])


def scan(model: BlochModel, resolution=(201, 201), window=None,
         threads: int = 1, ambiguity_ratio: float = AMBIGUITY_RATIO,
         gap_step_factor: float = 3.0) -> GridScan:
    """Eigenvalue scan of the fundamental domain (or a sub-window).

    Nodes along periodic axes cover [-pi, pi) exactly once and wrap
    edges are included; an explicit window disables wrapping.  Cells are
    flagged when an adjacent edge assignment is ambiguous or the local
    band gap falls below gap_step_factor times the per-cell energy step.
    """
    nx, ny = int(resolution[0]), int(resolution[1])
    if nx < 32 or ny < 32:
        raise ValueError("scan resolution must be >= 32 per axis")
    topo = model.topology
    restricted = window is not None
    if window is None:
        window = ((-math.pi, math.pi), (-math.pi, math.pi))
    periodic_x = topo.periodic_x and not restricted
    periodic_y = topo.periodic_y and not restricted
    (x0, x1), (y0, y1) = window
    # periodic axes use half-cell-offset nodes, which keeps the symmetry
    # lines of lattice models (kx = 0, +-pi/2, pi, ...) off the nodes
    kxs = x0 + (x1 - x0) * (np.arange(nx) + 0.5) / nx if periodic_x \
        else np.linspace(x0, x1, nx)
    kys = y0 + (y1 - y0) * (np.arange(ny) + 0.5) / ny if periodic_y \
        else np.linspace(y0, y1, ny)

    KX, KY = np.meshgrid(kxs, kys, indexing="ij")
    flat_kx, flat_ky = KX.ravel(), KY.ravel()
    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        chunks = np.array_split(np.arange(flat_kx.size), threads * 4)
        coeffs_parts = [None] * len(chunks)

        def work(ci):
            idx = chunks[ci]
            coeffs_parts[ci] = batch_char_poly(
                model.sample_batch(flat_kx[idx], flat_ky[idx]))
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(len(chunks))))
        coeffs = np.concatenate(coeffs_parts, axis=0)
    else:
        coeffs = batch_char_poly(model.sample_batch(flat_kx, flat_ky))
    values, _ = batch_poly_roots(coeffs)
    n = values.shape[1]
    energies = values.reshape(nx, ny, n)
    coeffs = coeffs.reshape(nx, ny, n + 1)

    n_ex = nx if periodic_x else nx - 1
    n_ey = ny if periodic_y else ny - 1

    ea = energies[np.arange(n_ex)].reshape(-1, n)
    eb = energies[(np.arange(n_ex) + 1) % nx].reshape(-1, n)
    sig_x, ratio_x = _batch_match(ea, eb)
    match_x = sig_x.reshape(n_ex, ny, n)
    ratio_x = ratio_x.reshape(n_ex, ny)

    ea = energies[:, np.arange(n_ey)].reshape(-1, n)
    eb = energies[:, (np.arange(n_ey) + 1) % ny].reshape(-1, n)
    sig_y, ratio_y = _batch_match(ea, eb)
    match_y = sig_y.reshape(nx, n_ey, n)
    ratio_y = ratio_y.reshape(nx, n_ey)

    # cell flags: small band gap relative to the matched per-edge energy
    # step, or an ambiguous edge assignment
    n_cx = nx if periodic_x else nx - 1
    n_cy = ny if periodic_y else ny - 1
    flagged = np.zeros((n_cx, n_cy), dtype=bool)
    if n > 1:
        gaps = np.full((nx, ny), np.inf)
        for a, b in combinations(range(n), 2):
            gaps = np.minimum(gaps,
                              np.abs(energies[..., a] - energies[..., b]))
        ea = energies[np.arange(n_ex)].reshape(-1, n)
        eb = energies[(np.arange(n_ex) + 1) % nx].reshape(-1, n)
        step_x = np.abs(ea - np.take_along_axis(
            eb, sig_x, 1)).max(axis=1).reshape(n_ex, ny)
        ea = energies[:, np.arange(n_ey)].reshape(-1, n)
        eb = energies[:, (np.arange(n_ey) + 1) % ny].reshape(-1, n)
        step_y = np.abs(ea - np.take_along_axis(
            eb, sig_y, 1)).max(axis=1).reshape(nx, n_ey)
        ix = np.arange(n_cx)
        iy = np.arange(n_cy)
        i1 = (ix + 1) % nx
        j1 = (iy + 1) % ny
        g = np.minimum.reduce([gaps[np.ix_(ix, iy)], gaps[np.ix_(i1, iy)],
                               gaps[np.ix_(ix, j1)], gaps[np.ix_(i1, j1)]])
        s = np.maximum.reduce([step_x[np.ix_(ix, iy)],
                               step_x[np.ix_(ix, j1)],
                               step_y[np.ix_(ix, iy)],
                               step_y[np.ix_(i1, iy)]])
        amb = np.minimum.reduce([ratio_x[np.ix_(ix, iy)],
                                 ratio_x[np.ix_(ix, j1)],
                                 ratio_y[np.ix_(ix, iy)],
                                 ratio_y[np.ix_(i1, iy)]])
        flagged = (g < gap_step_factor * s) | (amb < ambiguity_ratio)
    return GridScan(model=model, kxs=kxs, kys=kys, energies=energies,
                    coeffs=coeffs, match_x=match_x, match_y=match_y,
                    ratio_x=ratio_x, ratio_y=ratio_y,
                    periodic_x=periodic_x, periodic_y=periodic_y,
                    window=window, flagged=flagged)


# ---------------------------------------------------------------------------
# exceptional points

@dataclass
class EP:
    """A refined exceptional point."""
    kx: float
    ky: float
    bands: tuple[int, int]     # 1-based ranks, Re descending
    residual: float            # |discriminant| at the refined location
    order: int = 2

    @property
    def location(self) -> tuple[float, float]:
        return (self.kx, self.ky)


@dataclass
class EPRelation:
    a: int
    b: int
    relation: str              # "paired" | "intersected" | "disjointed"


def _disc_at(model: BlochModel, kx, ky) -> complex:
    h = model.sample_batch(np.atleast_1d(kx), np.atleast_1d(ky))
    return complex(_grid_discriminant(batch_char_poly(h))[0])


def _sign_changes(vals) -> bool:
    s = [v >= 0 for v in vals]
    return any(a != b for a, b in zip(s, s[1:] + s[:1]))


def detect_eps(gs: GridScan, ep_tol: float = 1e-10, merge_cells: float = 2.0,
               max_newton: int = 60) -> list[EP]:
    """Exceptional points as Newton-refined zeros of the discriminant.

    Candidate cells have a sign change of both Re and Im of the
    discriminant around the perimeter, or carry a deep local minimum of
    |disc|.  Each candidate is refined by damped 2D Newton with a
    finite-difference Jacobian; converged points are merged within
    merge_cells grid cells and verified to be defective.
    """
    model = gs.model
    disc = _grid_discriminant(gs.coeffs)
    adisc = np.abs(disc)
    disc_scale = max(1.0, float(adisc.max()))
    tol_abs = ep_tol * disc_scale
    dx, dy = gs.cell
    nx, ny = gs.nx, gs.ny
    n_cx = nx if gs.periodic_x else nx - 1
    n_cy = ny if gs.periodic_y else ny - 1

    seeds = []
    floor = 1e-6 * disc_scale
    for ci in range(n_cx):
        i1 = (ci + 1) % nx
        for cj in range(n_cy):
            j1 = (cj + 1) % ny
            corner = [disc[ci, cj], disc[i1, cj], disc[i1, j1], disc[ci, j1]]
            if (_sign_changes([c.real for c in corner])
                    and _sign_changes([c.imag for c in corner])):
                seeds.append((gs.kxs[ci] + dx / 2, gs.kys[cj] + dy / 2))
            elif min(abs(c) for c in corner) < floor:
                seeds.append((gs.kxs[ci] + dx / 2, gs.kys[cj] + dy / 2))
    # deep isolated minima (tangential zeros without full sign rotation)
    for i in range(nx):
        for j in range(ny):
            v = adisc[i, j]
            if v < floor:
                nb = [adisc[(i + a) % nx, (j + b) % ny]
                      for a in (-1, 0, 1) for b in (-1, 0, 1)
                      if (a, b) != (0, 0)]
                if v <= min(nb):
                    seeds.append((float(gs.kxs[i]), float(gs.kys[j])))

    max_step = max(dx, dy)
    (x0, x1), (y0, y1) = gs.window
    found = []
    warnings = []
    for kx, ky in seeds:
        ok = False
        h = 1e-6
        for _ in range(max_newton):
            f = _disc_at(model, kx, ky)
            if abs(f) < tol_abs:
                ok = True
                break
            fx = (_disc_at(model, kx + h, ky) - _disc_at(model, kx - h, ky)) / (2 * h)
            fy = (_disc_at(model, kx, ky + h) - _disc_at(model, kx, ky - h)) / (2 * h)
            jac = np.array([[fx.real, fy.real], [fx.imag, fy.imag]])
            try:
                step = np.linalg.solve(jac, [f.real, f.imag])
            except np.linalg.LinAlgError:
                break
            norm = math.hypot(*step)
            if norm > max_step:
                step = step / norm * max_step
            kx, ky = kx - step[0], ky - step[1]
            if not gs.full_torus and not (x0 - 3 * dx <= kx <= x1 + 3 * dx
                                          and y0 - 3 * dy <= ky <= y1 + 3 * dy):
                break
        if not ok:
            warnings.append(RefinementDiverged(
                f"candidate near ({kx:.4f}, {ky:.4f}) did not converge"))
            continue
        if gs.periodic_x:
            kx = wrap_angle(kx)
        if gs.periodic_y:
            ky = wrap_angle(ky)
        found.append((kx, ky, abs(_disc_at(model, kx, ky))))

    # merge duplicates
    merged = []
    radius = merge_cells * max(dx, dy)
    for kx, ky, r in sorted(found):
        for m in merged:
            if gs.distance((kx, ky), (m[0], m[1])) < radius:
                if r < m[2]:
                    m[0], m[1], m[2] = kx, ky, r
                break
        else:
            merged.append([kx, ky, r])

    eps = []
    for kx, ky, resid in merged:
        info = _verify_ep(gs, kx, ky, tol_abs)
        if info is None:
            continue
        bands, order = info
        eps.append(EP(kx=float(kx), ky=float(ky), bands=bands,
                      residual=float(resid), order=order))
    eps.sort(key=lambda e: (e.kx, e.ky))
    gs._ep_cache = eps
    return eps


def _ranked_eigs(model: BlochModel, kx: float, ky: float) -> np.ndarray:
    vals, _ = batch_poly_roots(batch_char_poly(
        model.sample_batch(np.atleast_1d(kx), np.atleast_1d(ky))))
    return vals[0]


def _verify_ep(gs: GridScan, kx: float, ky: float, tol_abs: float):
    """Confirm defectiveness at a refined point and attribute the band
    pair from the Re-descending order at a nearby reference point."""
    model = gs.model
    vals = _ranked_eigs(model, kx, ky)
    n = len(vals)
    scale = max(1.0, float(np.abs(vals).max()))
    pairs = list(combinations(range(n), 2))
    p, q = min(pairs, key=lambda ab: abs(vals[ab[0]] - vals[ab[1]]))
    gap = abs(vals[p] - vals[q])
    if gap > 1e-3 * scale:
        return None
    cluster = [i for i in range(n)
               if min(abs(vals[i] - vals[p]), abs(vals[i] - vals[q]))
               <= 10 * gap + 1e-12]
    order = max(2, len(cluster))
    # defectiveness: the rank threshold sits above the residual pair
    # splitting so a diabolic degeneracy keeps its full null space
    res = eigensystem(model.sample(kx, ky), allow_defective=True,
                      degeneracy_tol=max(10 * gap, 1e-8 * scale),
                      rank_threshold=max(10 * gap, 1e-8))
    if not res.is_defective:
        return None
    dx, dy = gs.cell
    for cells in (3.0, 6.0):
        ref_kx = kx + cells * dx
        ref = _ranked_eigs(model, wrap_angle(ref_kx) if gs.periodic_x
                           else ref_kx, ky)
        sigma, best, second = match_bands(vals, ref)
        if second >= AMBIGUITY_RATIO * best:
            ranks = sorted((int(sigma[p]) + 1, int(sigma[q]) + 1))
            return (ranks[0], ranks[1]), order
    ranks = sorted((int(sigma[p]) + 1, int(sigma[q]) + 1))
    return (ranks[0], ranks[1]), order


def relate_eps(eps: list[EP]) -> list[EPRelation]:
    """Pairwise band-index relations: paired / intersected / disjointed."""
    out = []
    for a, b in combinations(range(len(eps)), 2):
        sa, sb = set(eps[a].bands), set(eps[b].bands)
        shared = len(sa & sb)
        rel = {2: "paired", 1: "intersected", 0: "disjointed"}[shared]
        out.append(EPRelation(a=a, b=b, relation=rel))
    return out


def pseudo_hermitian_test(m, tol: float = 1e-9) -> bool:
    """True iff the eigenvalue multiset is closed under complex
    conjugation within tol (the spectral pseudo-Hermiticity signature)."""
    vals = eigensystem(m, allow_defective=True).values
    sigma, best, _ = match_bands(vals, np.conj(vals))
    worst = max(abs(vals[i] - np.conj(vals)[sigma[i]])
                for i in range(len(vals)))
    return worst < tol


# ---------------------------------------------------------------------------
# pseudo-Hermitian lines

@dataclass
class PHL:
    """Oriented polyline where one part (Re or Im) of a matched band pair
    coincides while the other part stays split."""
    kind: str                      # "real" | "imag"
    bands: tuple[int, int]         # 1-based ranks at a representative point
    points: np.ndarray             # (M, 2) canonical coordinates
    closed: bool
    homology: tuple[int, int]
    endpoints: tuple               # ("closed",) or (end, end)
    exceptional_line: bool = False

    def diameter(self) -> float:
        if len(self.points) < 2:
            return 0.0
        span = self.points.max(axis=0) - self.points.min(axis=0)
        return float(np.hypot(*span))


@dataclass
class _Crossing:
    key: tuple                     # (axis, i, j, ordinal)
    pair_a: tuple[int, int]        # band pair in the edge's A-node frame
    point: tuple[float, float]     # unwrapped coordinates on the edge
    split: float                   # |opposite part difference| at the point
    ambiguous_cell: bool = False


def _part(values: np.ndarray, kind: str) -> np.ndarray:
    return values.real if kind == "real" else values.imag


def _other_part(values: np.ndarray, kind: str) -> np.ndarray:
    return values.imag if kind == "real" else values.real


def _edge_crossings(gs: GridScan, kind: str, refine_iters: int = 3
                    ) -> dict[tuple, _Crossing]:
    """Sign-change crossings of matched-pair differences on every grid
    edge, batch-refined by secant iterations with re-evaluation."""
    n = gs.n
    model = gs.model
    pairs = list(combinations(range(n), 2))
    records = []   # (axis, i, j, a, b, fA, fB, pA, pB)

    for axis in (0, 1):
        match = gs.match_x if axis == 0 else gs.match_y
        n_e = match.shape[axis]
        for e in range(n_e):
            if axis == 0:
                ia, ib = e, (e + 1) % gs.nx
                ea = gs.energies[ia]          # (ny, n)
                eb = gs.energies[ib]
                sig = match[e]                # (ny, n)
                pa = np.stack([np.full(gs.ny, gs.kxs[ia]), gs.kys], axis=1)
                pb = pa.copy()
                pb[:, 0] += gs.cell[0]
            else:
                ja, jb = e, (e + 1) % gs.ny
                ea = gs.energies[:, ja]
                eb = gs.energies[:, jb]
                sig = match[:, e]
                pa = np.stack([gs.kxs, np.full(gs.nx, gs.kys[ja])], axis=1)
                pb = pa.copy()
                pb[:, 1] += gs.cell[1]
            for (a, b) in pairs:
                da = _part(ea[:, a], kind) - _part(ea[:, b], kind)
                idx_a = np.take_along_axis(eb, sig[:, a][:, None], 1)[:, 0]
                idx_b = np.take_along_axis(eb, sig[:, b][:, None], 1)[:, 0]
                db = _part(idx_a, kind) - _part(idx_b, kind)
                hit = (da >= 0) != (db >= 0)
                for w in np.nonzero(hit)[0]:
                    i, j = (e, w) if axis == 0 else (w, e)
                    records.append((axis, i, j, a, b, da[w], db[w],
                                    pa[w], pb[w]))

    if not records:
        return {}

    # batched secant refinement: each record keeps its own bracket
    m = len(records)
    t_lo = np.zeros(m)
    t_hi = np.ones(m)
    f_lo = np.array([r[5] for r in records])
    f_hi = np.array([r[6] for r in records])
    pa = np.array([r[7] for r in records])
    pb = np.array([r[8] for r in records])
    ea_vals = np.array([
        gs.energies[r[1], r[2]] for r in records])

    def eval_at(ts):
        pts = pa + ts[:, None] * (pb - pa)
        vals, _ = batch_poly_roots(batch_char_poly(
            model.sample_batch(pts[:, 0], pts[:, 1])))
        sig, _ = _batch_match(ea_vals, vals)
        va = np.take_along_axis(vals, sig, 1)
        return pts, va

    denom = f_lo - f_hi
    t = np.where(np.abs(denom) > 0, f_lo / np.where(denom != 0, denom, 1.0),
                 0.5)
    t = np.clip(t, 0.0, 1.0)
    va = None
    for _ in range(refine_iters):
        pts, va = eval_at(t)
        ab = np.array([(r[3], r[4]) for r in records])
        fa = _part(np.take_along_axis(va, ab[:, 0][:, None], 1)[:, 0], kind)
        fb = _part(np.take_along_axis(va, ab[:, 1][:, None], 1)[:, 0], kind)
        f_t = fa - fb
        # update the bracket and take a secant/bisection step
        lo_side = (f_t >= 0) == (f_lo >= 0)
        t_lo = np.where(lo_side, t, t_lo)
        f_lo = np.where(lo_side, f_t, f_lo)
        t_hi = np.where(lo_side, t_hi, t)
        f_hi = np.where(lo_side, f_hi, f_t)
        denom = f_lo - f_hi
        t_new = np.where(np.abs(denom) > 1e-300, t_lo + f_lo * (t_hi - t_lo)
                         / np.where(denom != 0, denom, 1.0),
                         0.5 * (t_lo + t_hi))
        t = np.clip(t_new, 0.0, 1.0)
    pts, va = eval_at(t)
    ab = np.array([(r[3], r[4]) for r in records])
    oa = _other_part(np.take_along_axis(va, ab[:, 0][:, None], 1)[:, 0], kind)
    ob = _other_part(np.take_along_axis(va, ab[:, 1][:, None], 1)[:, 0], kind)
    splits = np.abs(oa - ob)

    out = {}
    ordinals: dict[tuple, int] = {}
    for r_idx, rec in enumerate(records):
        axis, i, j, a, b = rec[:5]
        base = (axis, i, j)
        k = ordinals.get(base, 0)
        ordinals[base] = k + 1
        key = (axis, i, j, k)
        out[key] = _Crossing(key=key, pair_a=(a, b),
                             point=(float(pts[r_idx, 0]),
                                    float(pts[r_idx, 1])),
                             split=float(splits[r_idx]))
    return out


def _perm_of(sig: np.ndarray) -> list[int]:
    return [int(s) for s in sig]


def _invert(perm: list[int]) -> list[int]:
    inv = [0] * len(perm)
    for i, p in enumerate(perm):
        inv[p] = i
    return inv


def _map_pair(pair, perm_inv) -> tuple[int, int]:
    a, b = perm_inv[pair[0]], perm_inv[pair[1]]
    return (a, b) if a < b else (b, a)


def detect_phls(gs: GridScan, kind: str, band_pair=None, eps=None,
                separation_threshold: float = 1e-6,
                compactify: bool = False) -> list[PHL]:
    """Pseudo-Hermitian lines of the requested kind ("real": Re parts of a
    matched pair coincide while Im parts split; "imag": the mirror).

    Edge crossings are linked cell by cell (marching squares with midpoint
    disambiguation of saddles); open ends near exceptional points are
    tagged AtEP, window-boundary ends AtBoundary (AtInfinity when
    compactify is set on a plane scan).  A chain of nodes where both
    parts coincide is reported as a PHL tagged exceptional_line.
    """
    if kind not in ("real", "imag"):
        raise ValueError("kind must be 'real' or 'imag'")
    scale = max(1.0, float(np.abs(gs.energies).max()))
    crossings = _edge_crossings(gs, kind)

    n_cx = gs.nx if gs.periodic_x else gs.nx - 1
    n_cy = gs.ny if gs.periodic_y else gs.ny - 1
    adjacency: dict[tuple, list] = {k: [] for k in crossings}

    def cell_edges(ci, cj):
        i1 = (ci + 1) % gs.nx
        # (axis, i, j), anchor->A-node permutation (identity except
        # top/right edges, which are reached through a corner matching)
        return [
            (0, ci, cj, None),                      # bottom
            (0, ci, (cj + 1) % gs.ny, ("y", ci, cj)),   # top
            (1, ci, cj, None),                      # left
            (1, i1, cj, ("x", ci, cj)),             # right
        ]

    mid_eval_cache: dict[tuple, np.ndarray] = {}

    def anchor_frame(ci, cj, edge_spec):
        axis, i, j, via = edge_spec
        if via is None:
            return None  # identity
        if via[0] == "y":
            return _perm_of(gs.match_y[via[1], via[2] % gs.match_y.shape[1]])
        return _perm_of(gs.match_x[via[1] % gs.match_x.shape[0], via[2]])

    for ci in range(n_cx):
        for cj in range(n_cy):
            # gather this cell's crossings in the anchor frame
            occupants: dict[tuple, list] = {}
            holonomy_ok = True
            # holonomy: bottom-right vs left-top corner matchings
            sx0 = _perm_of(gs.match_x[ci % gs.match_x.shape[0], cj])
            sy1 = _perm_of(gs.match_y[(ci + 1) % gs.nx,
                                      cj % gs.match_y.shape[1]])
            sy0 = _perm_of(gs.match_y[ci, cj % gs.match_y.shape[1]])
            sx1 = _perm_of(gs.match_x[ci % gs.match_x.shape[0],
                                      (cj + 1) % gs.ny])
            right_then_up = [sy1[sx0[i]] for i in range(gs.n)]
            up_then_right = [sx1[sy0[i]] for i in range(gs.n)]
            if right_then_up != up_then_right:
                holonomy_ok = False
            for spec in cell_edges(ci, cj):
                axis, i, j, via = spec
                per = anchor_frame(ci, cj, spec)
                per_inv = _invert(per) if per is not None else None
                k = 0
                while (axis, i, j, k) in crossings:
                    c = crossings[(axis, i, j, k)]
                    pair = c.pair_a if per_inv is None \
                        else _map_pair(c.pair_a, per_inv)
                    occupants.setdefault(pair, []).append(c)
                    k += 1
            if not holonomy_ok:
                for cs in occupants.values():
                    for c in cs:
                        c.ambiguous_cell = True
                continue
            for pair, cs in occupants.items():
                if len(cs) == 2:
                    adjacency[cs[0].key].append(cs[1].key)
                    adjacency[cs[1].key].append(cs[0].key)
                elif len(cs) == 4:
                    # saddle: sample the cell centre in the anchor frame
                    ck = (ci, cj)
                    if ck not in mid_eval_cache:
                        cx = gs.kxs[ci] + gs.cell[0] / 2
                        cy = gs.kys[cj] + gs.cell[1] / 2
                        vals, _ = batch_poly_roots(batch_char_poly(
                            gs.model.sample_batch(np.array([cx]),
                                                  np.array([cy]))))
                        sig, _ = _batch_match(
                            gs.energies[ci, cj][None, :], vals)
                        mid_eval_cache[ck] = vals[0][sig[0]]
                    vmid = mid_eval_cache[ck]
                    fmid = (_part(vmid[pair[0]], kind)
                            - _part(vmid[pair[1]], kind))
                    ea = gs.energies[ci, cj]
                    fanchor = (_part(ea[pair[0]], kind)
                               - _part(ea[pair[1]], kind))
                    by_edge = {c.key[0:1] + (c.key[1:3],): c for c in cs}
                    def find(axis, i, j):
                        for c in cs:
                            if c.key[0] == axis and c.key[1:3] == (i, j):
                                return c
                        return None
                    bottom = find(0, ci, cj)
                    top = find(0, ci, (cj + 1) % gs.ny)
                    left = find(1, ci, cj)
                    right = find(1, (ci + 1) % gs.nx, cj)
                    if None in (bottom, top, left, right):
                        for c in cs:
                            c.ambiguous_cell = True
                        continue
                    if (fmid >= 0) == (fanchor >= 0):
                        links = [(bottom, right), (top, left)]
                    else:
                        links = [(bottom, left), (top, right)]
                    for u, v in links:
                        adjacency[u.key].append(v.key)
                        adjacency[v.key].append(u.key)
                else:
                    for c in cs:
                        c.ambiguous_cell = True

    phls = _link_chains(gs, crossings, adjacency, kind, eps,
                        separation_threshold * scale, compactify)
    if band_pair is not None:
        want = tuple(sorted(band_pair))
        phls = [p for p in phls if p.bands == want]
    phls.sort(key=lambda p: (p.kind, p.bands, p.points[0, 0], p.points[0, 1]))
    return phls


def detect_exceptional_lines(gs: GridScan,
                             separation_threshold: float = 1e-6
                             ) -> list[PHL]:
    """Curves on which both Re and Im of a band pair coincide.

    At such a continuum of degeneracies the pointwise EP refinement is
    ill-posed, so the merged feature is reported as a PHL carrying the
    exceptional_line tag.  Detection collects crossing points of either
    part whose refinement collapsed the opposite part as well and links
    them by proximity.
    """
    scale = max(1.0, float(np.abs(gs.energies).max()))
    sep = separation_threshold * scale
    pts = []
    for kind in ("real", "imag"):
        for c in _edge_crossings(gs, kind).values():
            if c.split < sep:
                pts.append(c.point)
    min_points = max(gs.nx, gs.ny) // 6
    if len(pts) < min_points:
        return []
    pts = np.array(sorted(map(tuple, pts)))
    # dedupe coincident points from the two sweeps
    keep = [0]
    r_dup = 0.3 * max(gs.cell)
    for i in range(1, len(pts)):
        d = min(gs.distance(tuple(pts[i]), tuple(pts[j])) for j in keep[-8:])
        if d > r_dup:
            keep.append(i)
    pts = pts[keep]
    if len(pts) < min_points:
        return []

    link_r = 2.5 * max(gs.cell)
    unused = set(range(len(pts)))
    chains = []
    while unused:
        start = min(unused)
        unused.discard(start)
        chain = [start]
        for end in (True, False):
            while True:
                tip = pts[chain[-1 if end else 0]]
                best, bd = None, link_r
                for j in unused:
                    d = gs.distance(tuple(tip), tuple(pts[j]))
                    if d < bd:
                        best, bd = j, d
                if best is None:
                    break
                unused.discard(best)
                if end:
                    chain.append(best)
                else:
                    chain.insert(0, best)
        if len(chain) >= min_points:
            chains.append(chain)

    out = []
    for chain in chains:
        cpts = pts[chain].copy()
        closed = gs.distance(tuple(cpts[0]), tuple(cpts[-1])) < link_r
        hom = (0, 0)
        if closed and gs.full_torus:
            try:
                hom = homology_class(np.vstack([cpts, cpts[:1]]),
                                     gs.model.topology,
                                     closure_tol=link_r)
            except Exception:
                closed = False
        vals = _ranked_eigs(gs.model, float(cpts[len(cpts) // 2, 0]),
                            float(cpts[len(cpts) // 2, 1]))
        pr = min(combinations(range(len(vals)), 2),
                 key=lambda ab: abs(vals[ab[0]] - vals[ab[1]]))
        if gs.periodic_x:
            cpts[:, 0] = (cpts[:, 0] + math.pi) % TWO_PI_ - math.pi
        if gs.periodic_y:
            cpts[:, 1] = (cpts[:, 1] + math.pi) % TWO_PI_ - math.pi
        out.append(PHL(kind="exceptional", bands=(pr[0] + 1, pr[1] + 1),
                       points=cpts, closed=closed, homology=hom,
                       endpoints=("closed",) if closed else
                       (("boundary",), ("boundary",)),
                       exceptional_line=True))
    out.sort(key=lambda p: (p.bands, p.points[0, 0], p.points[0, 1]))
    return out


def _representative_pair(gs: GridScan, point, kind: str) -> tuple[int, int]:
    """Band ranks (Re desc, 1-based) of the crossing pair at a point."""
    vals = _ranked_eigs(gs.model, float(point[0]), float(point[1]))
    n = len(vals)
    pairs = list(combinations(range(n), 2))
    key = (lambda ab: abs(_part(vals[ab[0]], kind) - _part(vals[ab[1]], kind)))
    a, b = min(pairs, key=key)
    return (a + 1, b + 1)


def _link_chains(gs, crossings, adjacency, kind, eps, sep_tol, compactify
                 ) -> list[PHL]:
    visited = set()
    phls = []
    order = sorted(crossings)
    deg = {k: len(set(adjacency[k])) for k in crossings}

    def walk(start):
        chain = [start]
        visited.add(start)
        prev = None
        cur = start
        while True:
            nxts = [k for k in adjacency[cur] if k != prev]
            nxts = [k for k in nxts if k not in visited or
                    (k == start and len(chain) > 2)]
            if not nxts:
                return chain, False
            nxt = nxts[0]
            if nxt == start:
                return chain, True
            chain.append(nxt)
            visited.add(nxt)
            prev, cur = cur, nxt

    endpoints_first = sorted([k for k in order if deg[k] <= 1]) + order
    raw = []
    for start in endpoints_first:
        if start in visited:
            continue
        chain, closed = walk(start)
        raw.append((chain, closed))

    raw = _stitch_chains(gs, crossings, raw, eps)

    for chain, closed in raw:
        if len(chain) < 3:
            continue
        pts = np.array([crossings[k].point for k in chain])
        hom = (0, 0)
        if closed:
            topo = gs.model.topology if gs.full_torus else SpaceTopology.PLANE
            try:
                hom = homology_class(np.vstack([pts, pts[:1]]), topo,
                                     closure_tol=2.0 * max(gs.cell))
            except Exception:
                closed = False
        # canonical coordinates for output (points refined on wrap edges
        # may sit one period out)
        cpts = pts.copy()
        if gs.periodic_x:
            cpts[:, 0] = (cpts[:, 0] + math.pi) % TWO_PI_ - math.pi
        if gs.periodic_y:
            cpts[:, 1] = (cpts[:, 1] + math.pi) % TWO_PI_ - math.pi
        splits = [crossings[k].split for k in chain]
        interior = splits[len(splits) // 4:
                          -max(1, len(splits) // 4)] or splits
        if max(interior) < sep_tol:
            continue  # both parts collapse: exceptional-line business
        bands = _representative_pair(gs, pts[len(pts) // 2], kind)
        if closed:
            ends = ("closed",)
        else:
            ends = (_classify_end(gs, crossings[chain[0]], eps, compactify),
                    _classify_end(gs, crossings[chain[-1]], eps, compactify))
        phls.append(PHL(kind=kind, bands=bands, points=cpts, closed=closed,
                        homology=hom, endpoints=ends))
    return phls


def _stitch_chains(gs, crossings, raw, eps):
    """Join open chains whose free ends meet away from any exceptional
    point (heals isolated cells where the marching assembly bailed out)."""
    join_r = 1.8 * max(gs.cell)
    guard = 2.5 * max(gs.cell)

    def end_pt(chain, which):
        p = crossings[chain[which]].point
        return (wrap_angle(p[0]) if gs.periodic_x else p[0],
                wrap_angle(p[1]) if gs.periodic_y else p[1])

    def near_ep(p):
        return eps and any(gs.distance(p, e.location) < guard for e in eps)

    chains = [list(c) for c, closed in raw if not closed]
    closed_out = [(list(c), True) for c, closed in raw if closed]
    changed = True
    while changed:
        changed = False
        for i in range(len(chains)):
            if chains[i] is None:
                continue
            for j in range(len(chains)):
                if i == j or chains[j] is None:
                    continue
                joined = None
                for ei, ej, flip_i, flip_j in ((-1, 0, False, False),
                                               (-1, -1, False, True),
                                               (0, 0, True, False),
                                               (0, -1, True, True)):
                    pi, pj = end_pt(chains[i], ei), end_pt(chains[j], ej)
                    if gs.distance(pi, pj) < join_r and not near_ep(pi):
                        a = chains[i][::-1] if flip_i else chains[i]
                        b = chains[j][::-1] if flip_j else chains[j]
                        joined = a + b
                        break
                if joined is not None:
                    chains[i] = joined
                    chains[j] = None
                    changed = True
        chains = [c for c in chains if c is not None]
    out = list(closed_out)
    for c in chains:
        if len(c) >= 3:
            p0, p1 = end_pt(c, 0), end_pt(c, -1)
            if gs.distance(p0, p1) < join_r and not near_ep(p0):
                out.append((c, True))
            else:
                out.append((c, False))
        else:
            out.append((c, False))
    return out


def _classify_end(gs: GridScan, crossing: _Crossing, eps, compactify):
    pt = crossing.point
    pt = (wrap_angle(pt[0]) if gs.periodic_x else pt[0],
          wrap_angle(pt[1]) if gs.periodic_y else pt[1])
    if eps:
        radius = 3.0 * max(gs.cell)
        for idx, ep in enumerate(eps):
            if gs.distance(pt, ep.location) < radius:
                return ("ep", idx)
    (x0, x1), (y0, y1) = gs.window
    margin = 1.6 * max(gs.cell)
    at_edge = False
    if not gs.periodic_x and (pt[0] - x0 < margin or x1 - pt[0] < margin):
        at_edge = True
    if not gs.periodic_y and (pt[1] - y0 < margin or y1 - pt[1] < margin):
        at_edge = True
    if at_edge:
        if compactify and gs.model.topology is SpaceTopology.PLANE:
            return ("infinity",)
        return ("boundary",)
    return ("ep", None)


# ---------------------------------------------------------------------------
# branch-cut tracing

def trace_branch_cut(ep: EP, gs: GridScan, eps: Optional[list[EP]] = None,
                     step: Optional[float] = None, max_steps: int = 4000,
                     compactify: bool = False) -> PHL:
    """Predictor-corrector trace of the real branch cut emanating from an
    exceptional point.

    The trace terminates at another EP (AtEP), closes into a loop, or
    reaches the window boundary (AtBoundary / AtInfinity with the sphere
    compactification flag).  On a full-torus scan a cut that fails to
    terminate violates EP pairing and raises TorusCutViolation.
    """
    if eps is None:
        eps = gs._ep_cache if gs._ep_cache is not None else detect_eps(gs)
    model = gs.model
    h = step if step is not None else max(gs.cell)
    r0 = 2.0 * max(gs.cell)
    seed = _seed_directions(model, ep, r0)
    if not seed:
        raise TraceStalled("no real-cut direction found around the EP")

    (x0, x1), (y0, y1) = gs.window

    def in_window(p):
        if gs.periodic_x and gs.periodic_y:
            return True
        okx = gs.periodic_x or (x0 - 1e-9 <= p[0] <= x1 + 1e-9)
        oky = gs.periodic_y or (y0 - 1e-9 <= p[1] <= y1 + 1e-9)
        return okx and oky

    capture = 2.0 * max(gs.cell)
    pieces = []
    stall = None
    for theta in seed:
        pts = [np.array(ep.location)]
        cur = np.array([ep.kx + r0 * math.cos(theta),
                        ep.ky + r0 * math.sin(theta)])
        ref_vals = _ranked_eigs(model, *_wrap_pt(gs, cur))
        pts.append(cur)
        tag = None
        for _ in range(max_steps):
            tangent = pts[-1] - pts[-2]
            tangent = tangent / np.linalg.norm(tangent)
            normal = np.array([-tangent[1], tangent[0]])
            pred = pts[-1] + h * tangent
            nxt, ref_vals = _correct_on_cut(model, gs, pred, normal, h,
                                            ref_vals)
            if nxt is None:
                hh = h / 2
                nxt, ref_vals = _correct_on_cut(model, gs,
                                                pts[-1] + hh * tangent,
                                                normal, hh, ref_vals)
                if nxt is None:
                    stall = TraceStalled(
                        f"corrector lost the cut near ({pred[0]:.3f}, "
                        f"{pred[1]:.3f})")
                    break
            pts.append(nxt)
            wrapped = _wrap_pt(gs, nxt)
            hit = None
            for idx, other in enumerate(eps):
                d = gs.distance(wrapped, other.location)
                if d < capture and (idx != _ep_index(eps, ep)
                                    or len(pts) * h > 6 * capture):
                    hit = idx
                    break
            if hit is not None:
                pts.append(np.array(eps[hit].location))
                tag = ("ep", hit)
                break
            if not in_window(nxt):
                if gs.model.topology is SpaceTopology.TORUS and gs.full_torus:
                    pass
                elif gs.model.topology is SpaceTopology.TORUS:
                    raise TorusCutViolation(
                        "branch cut left the scanned window on a torus; a "
                        "single EP cannot terminate its cut")
                else:
                    tag = ("infinity",) if compactify else ("boundary",)
                    break
        else:
            if gs.full_torus:
                raise TorusCutViolation(
                    "branch cut failed to terminate on the torus")
            raise TraceStalled("trace exceeded max_steps")
        if tag is None and stall is not None:
            if len(pts) < 6:
                stall = None    # a false seed direction; skip it
                continue
            raise stall
        pieces.append((pts, tag))
    if not pieces:
        raise TraceStalled("no traceable cut direction")

    if len(pieces) == 1:
        pts, tag = pieces[0]
        arr = np.array(pts)
        ends = (("ep", _ep_index(eps, ep)), tag)
    else:
        back, tag_b = pieces[0]
        fwd, tag_f = pieces[1]
        arr = np.array(list(reversed(fwd)) + back[1:])
        ends = (tag_f, tag_b)
    cpts = arr.copy()
    if gs.periodic_x:
        cpts[:, 0] = (cpts[:, 0] + math.pi) % TWO_PI_ - math.pi
    if gs.periodic_y:
        cpts[:, 1] = (cpts[:, 1] + math.pi) % TWO_PI_ - math.pi
    closed = ends[0] == ends[1] and ends[0][0] == "ep" and len(ends[0]) > 1 \
        and ends[0][1] == ends[1][1] and gs.distance(
            tuple(cpts[0]), tuple(cpts[-1])) < 3 * max(gs.cell) \
        and _ep_index(eps, ep) not in (ends[0][1],)
    hom = (0, 0)
    return PHL(kind="real", bands=ep.bands, points=cpts, closed=False,
               homology=hom, endpoints=ends)


def _ep_index(eps: list[EP], ep: EP) -> int:
    for i, e in enumerate(eps):
        if abs(e.kx - ep.kx) < 1e-9 and abs(e.ky - ep.ky) < 1e-9:
            return i
    return -1


def _wrap_pt(gs: GridScan, p) -> tuple[float, float]:
    return (wrap_angle(float(p[0])) if gs.periodic_x else float(p[0]),
            wrap_angle(float(p[1])) if gs.periodic_y else float(p[1]))


def _seed_directions(model: BlochModel, ep: EP, r0: float,
                     n_probe: int = 72) -> list[float]:
    """Angles around the EP where the tracked pair's Re parts cross with
    the Im parts split (start directions of the real cut)."""
    thetas = np.linspace(0.0, TWO_PI_, n_probe, endpoint=False)
    pts_x = ep.kx + r0 * np.cos(thetas)
    pts_y = ep.ky + r0 * np.sin(thetas)
    vals, _ = batch_poly_roots(batch_char_poly(
        model.sample_batch(pts_x, pts_y)))
    # follow bands continuously around the circle
    tracked = [vals[0]]
    for t in range(1, n_probe):
        sig, _, _ = match_bands(tracked[-1], vals[t])
        tracked.append(vals[t][sig])
    tracked.append(tracked[0])
    tracked = np.array(tracked)
    n = tracked.shape[1]
    # the EP pair: closest two bands averaged around the circle
    pairs = list(combinations(range(n), 2))
    a, b = min(pairs, key=lambda ab: np.abs(tracked[:, ab[0]]
                                            - tracked[:, ab[1]]).mean())
    f = tracked[:, a].real - tracked[:, b].real
    g = np.abs(tracked[:, a].imag - tracked[:, b].imag)
    # a band swap around a second-order EP makes f anti-periodic; the
    # label seam flips the sign without passing through zero, so require
    # a genuine near-zero approach
    steps = np.abs(np.diff(f))
    near_zero = 5.0 * float(np.median(steps)) + 1e-12
    out = []
    for t in range(n_probe):
        if (f[t] >= 0) != (f[t + 1] >= 0) \
                and min(abs(f[t]), abs(f[t + 1])) < near_zero:
            frac = f[t] / (f[t] - f[t + 1]) if f[t] != f[t + 1] else 0.5
            if g[t] + frac * (g[t + 1] - g[t]) > 1e-9:
                out.append(float(thetas[t] + frac * (TWO_PI_ / n_probe)))
    return out[:2]


def _correct_on_cut(model: BlochModel, gs: GridScan, pred, normal, h,
                    ref_vals):
    """1D root solve of the matched Re-difference transverse to the cut."""
    ss = np.array([0.0, 0.5 * h, -0.5 * h, h, -h, 1.5 * h, -1.5 * h])
    pts = pred[None, :] + ss[:, None] * normal[None, :]
    vals, _ = batch_poly_roots(batch_char_poly(
        model.sample_batch(pts[:, 0], pts[:, 1])))
    sig, _ = _batch_match(np.repeat(ref_vals[None, :], len(ss), axis=0), vals)
    tr = np.take_along_axis(vals, sig, 1)
    n = tr.shape[1]
    pairs = list(combinations(range(n), 2))
    a, b = min(pairs, key=lambda ab: np.abs(tr[0, ab[0]] - tr[0, ab[1]]))
    f = tr[:, a].real - tr[:, b].real
    bracket = None
    order = np.argsort(np.abs(ss))
    for u in range(len(ss)):
        for v in range(u + 1, len(ss)):
            iu, iv = order[u], order[v]
            if (f[iu] >= 0) != (f[iv] >= 0):
                bracket = (iu, iv)
                break
        if bracket:
            break
    if bracket is None:
        return None, ref_vals
    s_lo, s_hi = ss[bracket[0]], ss[bracket[1]]
    f_lo, f_hi = f[bracket[0]], f[bracket[1]]
    for _ in range(30):
        s_mid = s_lo + f_lo * (s_hi - s_lo) / (f_lo - f_hi) \
            if f_lo != f_hi else 0.5 * (s_lo + s_hi)
        p_mid = pred + s_mid * normal
        vv, _ = batch_poly_roots(batch_char_poly(
            model.sample_batch(p_mid[0:1], p_mid[1:2])))
        sg, _, _ = match_bands(ref_vals, vv[0])
        tm = vv[0][sg]
        fm = tm[a].real - tm[b].real
        if abs(fm) < 1e-11 * max(1.0, np.abs(tm).max()):
            return p_mid, tm
        if (fm >= 0) == (f_lo >= 0):
            s_lo, f_lo = s_mid, fm
        else:
            s_hi, f_hi = s_mid, fm
        if abs(s_hi - s_lo) < 1e-12:
            return p_mid, tm
    return pred + 0.5 * (s_lo + s_hi) * normal, ref_vals
