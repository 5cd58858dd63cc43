"""The model zoo: every Hamiltonian family used in the analyses, behind a
uniform "sample H at k" interface with vectorized grid samplers and
analytic spectra where a closed form exists.

All lattice families live on the torus.  Samplers are entrywise periodic
functions of (kx, ky); for the folded families only the spectrum multiset
is guaranteed periodic, which is what the periodicity tests check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .eigen import DVector, two_band_energies
from .errors import InvalidParams
from .geometry import SpaceTopology

SQRT8 = 2.0 * math.sqrt(2.0)


@dataclass(frozen=True)
class BlochModel:
    """A named Hamiltonian family fixed at concrete parameter values."""

    name: str
    n: int
    params: Mapping[str, float]
    topology: SpaceTopology
    sampler: Callable[[float, float], np.ndarray]
    batch_sampler: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    analytic_spectrum: Optional[Callable[[float, float], np.ndarray]] = None

    def sample(self, kx: float, ky: float) -> np.ndarray:
        return self.sampler(float(kx), float(ky))

    def sample_batch(self, kxs: np.ndarray, kys: np.ndarray) -> np.ndarray:
        """Stacked matrices (N, n, n) for flat coordinate arrays."""
        kxs = np.asarray(kxs, dtype=float)
        kys = np.asarray(kys, dtype=float)
        if self.batch_sampler is not None:
            return self.batch_sampler(kxs, kys)
        out = np.empty(kxs.shape + (self.n, self.n), dtype=complex)
        for idx in np.ndindex(kxs.shape):
            out[idx] = self.sampler(float(kxs[idx]), float(kys[idx]))
        return out

    def with_sampler(self, name: str,
                     sampler: Callable[[float, float], np.ndarray],
                     batch_sampler=None) -> "BlochModel":
        """Derived model with a wrapped sampler (e.g. perturbed onsite
        terms); analytic spectrum no longer applies."""
        return BlochModel(name=name, n=self.n, params=dict(self.params),
                          topology=self.topology, sampler=sampler,
                          batch_sampler=batch_sampler, analytic_spectrum=None)


# ---------------------------------------------------------------------------
# three-band interpolation family

def _three_band_h(ex, ey):
    """The printed 3x3 block as a function of e^{i kx}, e^{i ky}."""
    ex, ey = np.broadcast_arrays(np.asarray(ex, complex), np.asarray(ey, complex))
    z = np.zeros_like(ex)
    rows = [
        [1.0 + SQRT8 - ex, -1j * (1.0 + ex), z],
        [-1j * (1.0 + ex), ex - ey, -1j * (1.0 + ey)],
        [z, -1j * (1.0 + ey), -1.0 - SQRT8 + ey],
    ]
    h = np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)
    return h


def make_three_band_interp(s1: float = 0.0, s2: float = 0.0) -> BlochModel:
    """Interpolation (1-s1-s2) h(kx,ky) + s1 h(pi,ky) + s2 h(kx,pi)."""
    w0 = 1.0 - s1 - s2

    def batch(kxs, kys):
        ex = np.exp(1j * np.asarray(kxs, float))
        ey = np.exp(1j * np.asarray(kys, float))
        h = w0 * _three_band_h(ex, ey)
        if s1 != 0.0:
            h = h + s1 * _three_band_h(-1.0, ey)
        if s2 != 0.0:
            h = h + s2 * _three_band_h(ex, -1.0)
        return h

    def sampler(kx, ky):
        return batch(np.array(kx), np.array(ky))

    return BlochModel(name="three_band_interp", n=3,
                      params={"s1": s1, "s2": s2},
                      topology=SpaceTopology.TORUS,
                      sampler=sampler, batch_sampler=batch)


# ---------------------------------------------------------------------------
# bilayer square lattice with uniform loss

def make_bilayer_square(alpha: float = 1.0) -> BlochModel:
    """Two flat-plus-dispersive bands E1 = -alpha,
    E2 = alpha - 2 cos kx - 2 cos ky - 2i."""

    def batch(kxs, kys):
        c = np.cos(np.asarray(kxs, float)) + np.cos(np.asarray(kys, float))
        diag = -c - 1j
        off = alpha - c - 1j
        h = np.empty(np.shape(c) + (2, 2), dtype=complex)
        h[..., 0, 0] = diag
        h[..., 1, 1] = diag
        h[..., 0, 1] = off
        h[..., 1, 0] = off
        return h

    def sampler(kx, ky):
        return batch(np.array(kx), np.array(ky))

    def analytic(kx, ky):
        c = math.cos(kx) + math.cos(ky)
        return np.array([-alpha, alpha - 2.0 * c - 2j], dtype=complex)

    return BlochModel(name="bilayer_square", n=2, params={"alpha": alpha},
                      topology=SpaceTopology.TORUS, sampler=sampler,
                      batch_sampler=batch, analytic_spectrum=analytic)


# ---------------------------------------------------------------------------
# Hatano-Nelson family: unidirectional x-hoppings, normal y-chain, folded
# into m-site unit cells

def make_hn_folded(m: int = 1, t_x: float = 1.0, t_y: float = 1.0,
                   eps0: float = 0.0, gamma0: float = 0.0) -> BlochModel:
    """m-band zone folding of the 2D Hatano-Nelson chain.

    m=1: single band t_x e^{i kx} + 2 t_y cos ky.
    m=2: two-site cell; eps0 adds a +/-eps0 onsite staggering.
    m=3 with gamma0=0: plain three-site folding.
    m=3 with gamma0!=0: next-nearest unidirectional hoppings plus the
    +/- i gamma0 onsite imbalance (the fractional-winding model).
    """
    if m not in (1, 2, 3):
        raise InvalidParams(f"unit cell size m={m} not in {{1, 2, 3}}")
    if eps0 != 0.0 and m != 2:
        raise InvalidParams("eps0 applies to the two-site folding only")
    if gamma0 != 0.0 and m != 3:
        raise InvalidParams("gamma0 applies to the three-site NNN model only")

    params = {"m": m, "t_x": t_x, "t_y": t_y, "eps0": eps0, "gamma0": gamma0}

    if m == 1:
        def batch(kxs, kys):
            e = (t_x * np.exp(1j * np.asarray(kxs, float))
                 + 2.0 * t_y * np.cos(np.asarray(kys, float)))
            return e[..., None, None]

        def analytic(kx, ky):
            return np.array([t_x * np.exp(1j * kx) + 2.0 * t_y * math.cos(ky)])

    elif m == 2:
        def batch(kxs, kys):
            zx = np.exp(1j * np.asarray(kxs, float))
            c = 2.0 * t_y * np.cos(np.asarray(kys, float))
            h = np.zeros(np.shape(c) + (2, 2), dtype=complex)
            h[..., 0, 0] = c + eps0
            h[..., 1, 1] = c - eps0
            h[..., 0, 1] = t_x
            h[..., 1, 0] = t_x * zx
            return h

        def analytic(kx, ky):
            c = 2.0 * t_y * math.cos(ky)
            s = np.sqrt(complex(eps0 ** 2 + t_x ** 2 * np.exp(1j * kx)))
            return np.array([c + s, c - s], dtype=complex)

    else:
        if gamma0 == 0.0:
            def batch(kxs, kys):
                zx = np.exp(1j * np.asarray(kxs, float))
                c = 2.0 * t_y * np.cos(np.asarray(kys, float))
                h = np.zeros(np.shape(c) + (3, 3), dtype=complex)
                for i in range(3):
                    h[..., i, i] = c
                h[..., 0, 1] = t_x
                h[..., 1, 2] = t_x
                h[..., 2, 0] = t_x * zx
                return h

            def analytic(kx, ky):
                c = 2.0 * t_y * math.cos(ky)
                branch = t_x * np.exp(1j * (kx + 2.0 * np.pi * np.arange(3)) / 3.0)
                return c + branch
        else:
            def batch(kxs, kys):
                zx = np.exp(1j * np.asarray(kxs, float))
                c = 2.0 * t_y * np.cos(np.asarray(kys, float))
                h = np.zeros(np.shape(c) + (3, 3), dtype=complex)
                h[..., 0, 0] = c + 1j * gamma0
                h[..., 1, 1] = c
                h[..., 2, 2] = c - 1j * gamma0
                h[..., 0, 1] = t_x
                h[..., 0, 2] = t_x
                h[..., 1, 2] = t_x
                h[..., 1, 0] = t_x * zx
                h[..., 2, 0] = t_x * zx
                h[..., 2, 1] = t_x * zx
                return h

            analytic = None

    def sampler(kx, ky):
        return batch(np.array(kx), np.array(ky))

    return BlochModel(name="hn_folded", n=m, params=params,
                      topology=SpaceTopology.TORUS, sampler=sampler,
                      batch_sampler=batch, analytic_spectrum=analytic)


# ---------------------------------------------------------------------------
# two-band lattice with alternating unidirectional hoppings

def make_two_band_alt(t_x: float = 1.0, t_y: float = 0.5,
                      eps0: float = 0.0) -> BlochModel:
    """Off-diagonal (t_x + t_y) / (t_x e^{i kx} + t_y e^{i ky}) with
    +/-eps0 onsite; hosts the EP pair creation at eps0 = sqrt(3)/2 for the
    default hoppings."""

    def batch(kxs, kys):
        f = (t_x * np.exp(1j * np.asarray(kxs, float))
             + t_y * np.exp(1j * np.asarray(kys, float)))
        h = np.zeros(np.shape(f) + (2, 2), dtype=complex)
        h[..., 0, 0] = eps0
        h[..., 1, 1] = -eps0
        h[..., 0, 1] = t_x + t_y
        h[..., 1, 0] = f
        return h

    def sampler(kx, ky):
        return batch(np.array(kx), np.array(ky))

    def analytic(kx, ky):
        f = t_x * np.exp(1j * kx) + t_y * np.exp(1j * ky)
        s = np.sqrt(complex(eps0 ** 2 + (t_x + t_y) * f))
        return np.array([s, -s], dtype=complex)

    return BlochModel(name="two_band_alt", n=2,
                      params={"t_x": t_x, "t_y": t_y, "eps0": eps0},
                      topology=SpaceTopology.TORUS, sampler=sampler,
                      batch_sampler=batch, analytic_spectrum=analytic)


# ---------------------------------------------------------------------------
# generic two-band d-vector model

def make_two_band_dvector(d_r, d_i=None, d_0=None,
                          topology: SpaceTopology = SpaceTopology.TORUS,
                          name: str = "two_band_dvector") -> BlochModel:
    """Generic d . sigma + d_0 I model from component functions.

    d_r, d_i: callables (kx, ky) -> length-3 real sequences, or constant
    sequences.  d_0: callable (kx, ky) -> complex, or a constant.
    """

    def as_vec_fn(spec, default):
        if spec is None:
            return lambda kx, ky: default
        if callable(spec):
            return spec
        const = np.asarray(spec, dtype=float)
        return lambda kx, ky: const

    d_r_fn = as_vec_fn(d_r, np.zeros(3))
    d_i_fn = as_vec_fn(d_i, np.zeros(3))
    if d_0 is None:
        d_0_fn = lambda kx, ky: 0.0
    elif callable(d_0):
        d_0_fn = d_0
    else:
        d_0_fn = lambda kx, ky: complex(d_0)

    def dvec(kx, ky) -> DVector:
        return DVector(d_r=tuple(np.asarray(d_r_fn(kx, ky), float)),
                       d_i=tuple(np.asarray(d_i_fn(kx, ky), float)),
                       d_0=complex(d_0_fn(kx, ky)))

    def sampler(kx, ky):
        return dvec(kx, ky).matrix()

    def analytic(kx, ky):
        return np.array(two_band_energies(dvec(kx, ky)), dtype=complex)

    return BlochModel(name=name, n=2, params={}, topology=topology,
                      sampler=sampler, analytic_spectrum=analytic)


# ---------------------------------------------------------------------------
# registry

@dataclass(frozen=True)
class ModelFamily:
    name: str
    factory: Callable[..., BlochModel]
    defaults: Mapping[str, float]
    description: str
    integer_params: frozenset = field(default_factory=frozenset)


REGISTRY: dict[str, ModelFamily] = {
    fam.name: fam for fam in [
        ModelFamily("three_band_interp", make_three_band_interp,
                    {"s1": 0.0, "s2": 0.0},
                    "three-band interpolation between zone-boundary blocks"),
        ModelFamily("bilayer_square", make_bilayer_square,
                    {"alpha": 1.0},
                    "bilayer square lattice with uniform loss"),
        ModelFamily("hn_folded", make_hn_folded,
                    {"m": 1, "t_x": 1.0, "t_y": 1.0, "eps0": 0.0,
                     "gamma0": 0.0},
                    "zone-folded 2D Hatano-Nelson chain",
                    frozenset({"m"})),
        ModelFamily("two_band_alt", make_two_band_alt,
                    {"t_x": 1.0, "t_y": 0.5, "eps0": 0.0},
                    "two-band lattice with alternating unidirectional "
                    "hoppings"),
    ]
}


def available_models() -> dict:
    """Registry listing with parameter schemas, for the CLI."""
    return {
        name: {"params": dict(fam.defaults), "description": fam.description}
        for name, fam in sorted(REGISTRY.items())
    }


def build_model(name: str, params: Mapping | None = None) -> BlochModel:
    """Instantiate a registered family; unknown names or parameter keys
    raise InvalidParams."""
    if name not in REGISTRY:
        raise InvalidParams(f"unknown model {name!r}; known: "
                            f"{sorted(REGISTRY)}")
    fam = REGISTRY[name]
    merged = dict(fam.defaults)
    for key, value in (params or {}).items():
        if key not in fam.defaults:
            raise InvalidParams(f"model {name!r} has no parameter {key!r}")
        if key in fam.integer_params:
            if float(value) != int(value):
                raise InvalidParams(f"parameter {key!r} must be an integer")
            merged[key] = int(value)
        else:
            merged[key] = float(value)
    return fam.factory(**merged)
