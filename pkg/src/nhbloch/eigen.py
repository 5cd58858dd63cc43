"""Spectral kernel for small complex matrices (n <= 6).

Characteristic polynomials are assembled from principal-minor sums,
roots come from Durand-Kerner simultaneous iteration followed by Newton
polishing, discriminants from closed forms (degrees 2 and 3) or the
Sylvester resultant, and eigenvectors / rank tests from complete-pivot
Gaussian elimination.  Everything has a batched variant used by the grid
scanners; the batched and scalar paths share the same algorithms.

Matrices are plain complex numpy arrays.  Eigenvalues are reported in
the canonical storage order Re descending, then Im descending; any band
semantics beyond that are the tracking module's job.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .errors import DefectiveCluster, DimensionTooLarge, NoConvergence

MAX_DIM = 6

#: two eigenvalues closer than this (times max(1, spectral radius)) count
#: as degenerate
DEGENERACY_RTOL = 1e-8

#: pivot threshold (times max(1, matrix norm)) for numerical rank
RANK_RTOL = 1e-8


# ---------------------------------------------------------------------------
# characteristic polynomial

def _as_square(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("expected a square matrix")
    if a.shape[0] > MAX_DIM:
        raise DimensionTooLarge(f"n={a.shape[0]} exceeds the n<={MAX_DIM} kernel")
    if not np.all(np.isfinite(a.view(float))):
        raise ValueError("matrix entries must be finite")
    return a


def _det3(a):
    # explicit 3x3 determinant on stacked arrays, avoids LAPACK overhead
    return (a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
            - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
            + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]))


def batch_char_poly(mats: np.ndarray) -> np.ndarray:
    """Monic characteristic polynomial coefficients of stacked matrices.

    mats: (..., n, n) -> coefficients (..., n+1), highest power first.
    """
    a = np.asarray(mats, dtype=complex)
    n = a.shape[-1]
    if n > MAX_DIM:
        raise DimensionTooLarge(f"n={n} exceeds the n<={MAX_DIM} kernel")
    lead = a.shape[:-2]
    out = np.zeros(lead + (n + 1,), dtype=complex)
    out[..., 0] = 1.0
    if n == 1:
        out[..., 1] = -a[..., 0, 0]
        return out
    if n == 2:
        out[..., 1] = -(a[..., 0, 0] + a[..., 1, 1])
        out[..., 2] = a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
        return out
    if n == 3:
        tr = a[..., 0, 0] + a[..., 1, 1] + a[..., 2, 2]
        e2 = (a[..., 0, 0] * a[..., 1, 1] - a[..., 0, 1] * a[..., 1, 0]
              + a[..., 0, 0] * a[..., 2, 2] - a[..., 0, 2] * a[..., 2, 0]
              + a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
        out[..., 1] = -tr
        out[..., 2] = e2
        out[..., 3] = -_det3(a)
        return out
    # n = 4..6: elementary symmetric functions from principal minors
    for k in range(1, n + 1):
        ek = np.zeros(lead, dtype=complex)
        for rows in combinations(range(n), k):
            sub = a[..., rows, :][..., :, rows]
            ek = ek + np.linalg.det(sub)
        out[..., k] = (-1) ** k * ek
    return out


def char_poly(m) -> np.ndarray:
    """Monic characteristic polynomial det(lambda*I - m), coefficients
    highest power first."""
    return batch_char_poly(_as_square(m))


# ---------------------------------------------------------------------------
# polynomial roots (Durand-Kerner + Newton polish)

def _horner(coeffs, z):
    # coeffs (..., m), z (..., d) -> p(z)
    p = np.broadcast_to(coeffs[..., 0:1], z.shape).astype(complex).copy()
    for k in range(1, coeffs.shape[-1]):
        p = p * z + coeffs[..., k:k + 1]
    return p


def _horner_deriv(coeffs, z):
    p = np.broadcast_to(coeffs[..., 0:1], z.shape).astype(complex).copy()
    dp = np.zeros_like(z)
    for k in range(1, coeffs.shape[-1]):
        dp = dp * z + p
        p = p * z + coeffs[..., k:k + 1]
    return p, dp


def _canonical_sort(values, *companions):
    """Row-wise sort by Re descending then Im descending."""
    o1 = np.argsort(-values.imag, axis=-1, kind="stable")
    v = np.take_along_axis(values, o1, axis=-1)
    o2 = np.argsort(-v.real, axis=-1, kind="stable")
    v = np.take_along_axis(v, o2, axis=-1)
    sorted_comp = []
    for c in companions:
        c1 = np.take_along_axis(c, o1, axis=-1)
        sorted_comp.append(np.take_along_axis(c1, o2, axis=-1))
    return (v, *sorted_comp) if companions else v


def batch_poly_roots(coeffs: np.ndarray, tol: float | None = None,
                     max_iter: int = 400) -> tuple[np.ndarray, np.ndarray]:
    """All roots of stacked monic polynomials.

    coeffs: (..., d+1) monic, degree d >= 1.  Returns (roots, residuals),
    both (..., d), roots in canonical order.  Raises NoConvergence when
    any residual |p(root)| stays above tol after polishing.
    """
    c = np.asarray(coeffs, dtype=complex)
    d = c.shape[-1] - 1
    if d < 1:
        raise ValueError("degree must be >= 1")
    if not np.allclose(c[..., 0], 1.0, atol=1e-12):
        raise ValueError("polynomial must be monic")
    flat = c.reshape(-1, d + 1)
    scale = np.max(np.abs(flat), axis=-1)
    if tol is None:
        tol = 1e-10 * max(1.0, float(scale.max(initial=1.0)))

    out_shape = c.shape[:-1] + (d,)
    if d == 1:
        roots = (-flat[:, 1])[:, None]
        resid = np.abs(_horner(flat, roots))
        return roots.reshape(out_shape), resid.reshape(out_shape)

    radius = 1.0 + np.max(np.abs(flat[:, 1:]), axis=-1)
    # perturbed circle: fixed angular offset and slight radius spread break
    # symmetric stalls deterministically
    angles = 2.0 * np.pi * (np.arange(d) + 0.35) / d + 0.7
    spread = 1.0 + 0.05 * np.arange(d) / d
    z = radius[:, None] * (spread * np.exp(1j * angles))[None, :]

    step_scale = max(1.0, float(radius.max()))
    last_step = np.inf
    err = np.errstate(over="ignore", invalid="ignore")
    err.__enter__()
    for _ in range(max_iter):
        pv = _horner(flat, z)
        diff = z[:, :, None] - z[:, None, :]
        idx = np.arange(d)
        diff[:, idx, idx] = 1.0
        denom = np.prod(diff, axis=-1)
        # coincident iterates would zero the denominator; nudge them apart
        bad = np.abs(denom) < 1e-290
        if bad.any():
            z = z + np.where(bad, 1e-8 * step_scale * (1 + 1j), 0.0)
            continue
        w = pv / denom
        z = z - w
        last_step = float(np.max(np.abs(w)))
        if not np.isfinite(last_step):
            err.__exit__(None, None, None)
            raise NoConvergence("iteration overflowed; rescale the "
                                "polynomial")
        if last_step < 1e-13 * step_scale:
            break
    err.__exit__(None, None, None)
    if not (last_step <= 1e-6 * step_scale):
        raise NoConvergence(
            f"Durand-Kerner stalled with max step {last_step:.3e}")

    # Newton polish, accepted only when it reduces the residual
    for _ in range(2):
        pv, dpv = _horner_deriv(flat, z)
        safe = np.abs(dpv) > 1e-30
        trial = np.where(safe, z - pv / np.where(safe, dpv, 1.0), z)
        pt = _horner(flat, trial)
        improve = np.abs(pt) < np.abs(pv)
        z = np.where(improve, trial, z)

    resid = np.abs(_horner(flat, z))
    if not (float(resid.max(initial=0.0)) <= tol):
        raise NoConvergence(
            f"max residual {resid.max():.3e} exceeds tol {tol:.3e}")
    z, resid = _canonical_sort(z, resid)
    return z.reshape(out_shape), resid.reshape(out_shape)


@dataclass
class Spectrum:
    """Eigenvalues in canonical order with root-polishing residuals."""
    values: np.ndarray
    residuals: np.ndarray

    @property
    def n(self) -> int:
        return len(self.values)


def _horner_two_derivs(coeffs, z):
    p = coeffs[0]
    dp = 0.0 + 0.0j
    ddp = 0.0 + 0.0j
    for k in range(1, len(coeffs)):
        ddp = ddp * z + 2.0 * dp
        dp = dp * z + p
        p = p * z + coeffs[k]
    return p, dp, ddp


def _refine_close_pairs(coeffs: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Resolve nearly-double roots through the critical point of p.

    Simultaneous iteration leaves a sqrt(machine-eps) cluster around a
    double root; locating the nearby zero of p' and splitting the local
    quadratic recovers the pair to ~1e-9, which the degeneracy tolerance
    can then classify correctly.
    """
    scale = max(1.0, float(np.max(np.abs(values), initial=0.0)))
    window = 1e-5 * scale
    out = values.copy()
    n = len(values)
    for i in range(n):
        for j in range(i + 1, n):
            if abs(out[i] - out[j]) >= window:
                continue
            zm = 0.5 * (out[i] + out[j])
            others = [out[k] for k in range(n) if k not in (i, j)]
            if others and min(abs(zm - o) for o in others) < 1e-3 * scale:
                continue  # clusters larger than a pair are left alone
            for _ in range(3):
                _, dp, ddp = _horner_two_derivs(coeffs, zm)
                if abs(ddp) < 1e-30:
                    break
                zm = zm - dp / ddp
            p, _, ddp = _horner_two_derivs(coeffs, zm)
            if abs(ddp) < 1e-30:
                continue
            # below the Horner evaluation noise the pair splitting carries
            # no information: report an exact double root
            noise = 8.0 * 2.3e-16 * max(1.0, float(np.max(np.abs(coeffs)))) \
                * (1.0 + abs(zm)) ** (n)
            if abs(p) <= noise:
                cand = np.array([zm, zm])
            else:
                delta = np.sqrt(-2.0 * p / ddp)
                cand = np.array([zm + delta, zm - delta])
            old = np.array([out[i], out[j]])
            old_res = np.abs([_horner(coeffs[None, :], old[None, :])]).max()
            new_res = np.abs([_horner(coeffs[None, :], cand[None, :])]).max()
            if new_res <= max(old_res * 10.0, noise):
                # keep pairing consistent with the original ordering
                if abs(cand[0] - out[i]) + abs(cand[1] - out[j]) <= \
                   abs(cand[1] - out[i]) + abs(cand[0] - out[j]):
                    out[i], out[j] = cand[0], cand[1]
                else:
                    out[i], out[j] = cand[1], cand[0]
    return out


def poly_roots(coeffs, tol: float | None = None) -> Spectrum:
    """Roots of a single monic polynomial as a Spectrum."""
    c = np.asarray(coeffs, dtype=complex)
    values, _ = batch_poly_roots(c[None, :], tol=tol)
    refined = _refine_close_pairs(c, values[0])
    refined = _canonical_sort(refined[None, :])[0]
    resid = np.abs(_horner(c[None, :], refined[None, :]))[0]
    return Spectrum(values=refined, residuals=resid)


def batch_eigvals(mats: np.ndarray, tol: float | None = None
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of stacked matrices via the shared root path."""
    return batch_poly_roots(batch_char_poly(mats), tol=tol)


# ---------------------------------------------------------------------------
# rank, null spaces, eigensystem

def _rank_and_null(b: np.ndarray, threshold: float
                   ) -> tuple[int, list[np.ndarray]]:
    """Numerical rank and an orthonormal-ish null basis via Gaussian
    elimination with complete pivoting."""
    u = np.array(b, dtype=complex)
    n = u.shape[0]
    col_perm = list(range(n))
    rank = 0
    for r in range(n):
        sub = np.abs(u[r:, r:])
        i, j = np.unravel_index(int(np.argmax(sub)), sub.shape)
        if sub[i, j] <= threshold:
            break
        if i != 0:
            u[[r, r + i], :] = u[[r + i, r], :]
        if j != 0:
            u[:, [r, r + j]] = u[:, [r + j, r]]
            col_perm[r], col_perm[r + j] = col_perm[r + j], col_perm[r]
        rank += 1
        for rr in range(r + 1, n):
            u[rr, r:] -= (u[rr, r] / u[r, r]) * u[r, r:]
    basis = []
    for free in range(rank, n):
        w = np.zeros(n, dtype=complex)
        w[free] = 1.0
        for r in range(rank - 1, -1, -1):
            w[r] = -(u[r, r + 1:] @ w[r + 1:]) / u[r, r]
        x = np.zeros(n, dtype=complex)
        for pos, orig in enumerate(col_perm):
            x[orig] = w[pos]
        basis.append(x / np.linalg.norm(x))
    return rank, basis


def _polish_null_vector(b: np.ndarray, v: np.ndarray) -> np.ndarray:
    # inverse iteration through a least-squares solve handles the (near)
    # singular matrix gracefully
    for _ in range(2):
        y, *_ = np.linalg.lstsq(b, v, rcond=None)
        ny = np.linalg.norm(y)
        if not np.isfinite(ny) or ny == 0.0:
            break
        cand = y / ny
        if np.linalg.norm(b @ cand) <= np.linalg.norm(b @ v):
            v = cand
    return v


@dataclass
class EigenResult:
    """Spectrum plus right eigenvectors and defectiveness report."""
    values: np.ndarray
    residuals: np.ndarray
    vectors: list
    vector_residuals: list
    defective: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.values)

    @property
    def is_defective(self) -> bool:
        return bool(self.defective)


def _cluster_indices(values: np.ndarray, tol: float) -> list[list[int]]:
    n = len(values)
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(n):
        for j in range(i + 1, n):
            if abs(values[i] - values[j]) < tol:
                parent[find(i)] = find(j)
    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(find(i), []).append(i)
    return sorted(groups.values(), key=lambda g: g[0])


def eigensystem(m, tol: float | None = None, allow_defective: bool = False,
                degeneracy_tol: float | None = None,
                rank_threshold: float | None = None) -> EigenResult:
    """Eigenvalues (via the polynomial path) and unit right eigenvectors.

    A repeated eigenvalue whose null space is smaller than its multiplicity
    is the exceptional-point signature: with allow_defective it is reported
    in .defective, otherwise DefectiveCluster is raised.
    """
    a = _as_square(m)
    n = a.shape[0]
    spec = poly_roots(char_poly(a), tol=tol)
    values = spec.values
    radius = float(np.max(np.abs(values))) if n else 0.0
    if degeneracy_tol is None:
        degeneracy_tol = DEGENERACY_RTOL * max(1.0, radius)
    vectors: list = [None] * n
    vec_resid: list = [None] * n
    defective = []
    for cluster in _cluster_indices(values, degeneracy_tol):
        lam = complex(np.mean(values[cluster]))
        b = a - lam * np.eye(n)
        thr = rank_threshold
        if thr is None:
            thr = RANK_RTOL * max(1.0, float(np.max(np.abs(b))))
        rank, basis = _rank_and_null(b, thr)
        nullity = n - rank
        if len(cluster) == 1 and nullity == 0:
            # threshold too tight for this conditioning; fall back to the
            # smallest singular direction
            basis = [np.linalg.svd(b)[2][-1].conj()]
            nullity = 1
        for slot, vec in zip(cluster, basis):
            v = _polish_null_vector(b, vec)
            vectors[slot] = v
            vec_resid[slot] = float(np.linalg.norm(b @ v))
        if nullity < len(cluster):
            defective.append({
                "indices": list(cluster),
                "value": lam,
                "multiplicity": len(cluster),
                "nullity": nullity,
            })
    if defective and not allow_defective:
        info = defective[0]
        raise DefectiveCluster(
            f"eigenvalue {info['value']:.6g} has multiplicity "
            f"{info['multiplicity']} but nullity {info['nullity']}")
    return EigenResult(values=values, residuals=spec.residuals,
                       vectors=vectors, vector_residuals=vec_resid,
                       defective=defective)


# ---------------------------------------------------------------------------
# discriminants

def _cubic_discriminant(p, q, r):
    # monic x^3 + p x^2 + q x + r
    return (18.0 * p * q * r - 4.0 * p ** 3 * r + p ** 2 * q ** 2
            - 4.0 * q ** 3 - 27.0 * r ** 2)


def batch_discriminant(coeffs: np.ndarray) -> np.ndarray:
    """Discriminant of stacked monic polynomials of degree 2 or 3."""
    c = np.asarray(coeffs, dtype=complex)
    d = c.shape[-1] - 1
    if d == 2:
        return c[..., 1] ** 2 - 4.0 * c[..., 2]
    if d == 3:
        return _cubic_discriminant(c[..., 1], c[..., 2], c[..., 3])
    raise ValueError("batched discriminant supports degree 2 or 3 only")


def _sylvester_resultant(p: np.ndarray, q: np.ndarray) -> complex:
    dp = len(p) - 1
    dq = len(q) - 1
    size = dp + dq
    s = np.zeros((size, size), dtype=complex)
    for row in range(dq):
        s[row, row:row + dp + 1] = p
    for row in range(dp):
        s[dq + row, row:row + dq + 1] = q
    return complex(np.linalg.det(s))


def discriminant(coeffs) -> complex:
    """Discriminant of a monic polynomial of degree 2..6, normalized to
    vanish exactly when the polynomial has a repeated root.  Degree 2 with
    coefficients [1, b, c] gives b**2 - 4c."""
    c = np.asarray(coeffs, dtype=complex)
    d = len(c) - 1
    if d < 2 or d > MAX_DIM:
        raise ValueError("discriminant needs degree in 2..6")
    if d <= 3:
        return complex(batch_discriminant(c))
    dq = np.arange(d, 0, -1) * c[:-1]
    sign = (-1) ** (d * (d - 1) // 2)
    return sign * _sylvester_resultant(c, dq)


# ---------------------------------------------------------------------------
# two-band d-vector oracle

_PAULI = np.array([
    [[0, 1], [1, 0]],
    [[0, -1j], [1j, 0]],
    [[1, 0], [0, -1]],
], dtype=complex)


@dataclass(frozen=True)
class DVector:
    """Complex d-vector d = d_r + i d_i plus identity shift d_0."""
    d_r: tuple[float, float, float]
    d_i: tuple[float, float, float] = (0.0, 0.0, 0.0)
    d_0: complex = 0.0

    def matrix(self) -> np.ndarray:
        d = np.asarray(self.d_r, dtype=complex) + 1j * np.asarray(self.d_i,
                                                                  dtype=complex)
        return np.tensordot(d, _PAULI, axes=(0, 0)) + self.d_0 * np.eye(2)


def two_band_energies(d: DVector) -> tuple[complex, complex]:
    """Analytic two-band spectrum d_0 +/- sqrt(d_r^2 - d_i^2 + 2i d_r.d_i)."""
    dr = np.asarray(d.d_r, dtype=float)
    di = np.asarray(d.d_i, dtype=float)
    radicand = complex(dr @ dr - di @ di + 2j * (dr @ di))
    s = np.sqrt(complex(radicand))
    return (complex(d.d_0) + s, complex(d.d_0) - s)
