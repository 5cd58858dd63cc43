"""nhbloch: spectral topology of small non-Hermitian Bloch Hamiltonians.

Locates exceptional points and pseudo-Hermitian lines over 2D parameter
spaces, classifies band-exchange permutations along non-contractible
loops, and computes integer and fractional spectral winding numbers.
"""

from .eigen import (DVector, EigenResult, Spectrum, char_poly, discriminant,
                    eigensystem, poly_roots, two_band_energies)
from .geometry import (LoopPath, ParamPoint, SpaceTopology, canonicalize,
                       coordinate_loop, homology_class)
from .models import (BlochModel, available_models, build_model,
                     make_bilayer_square, make_hn_folded,
                     make_three_band_interp, make_two_band_alt,
                     make_two_band_dvector)

__version__ = "0.1.0"

__all__ = [
    "BlochModel", "DVector", "EigenResult", "LoopPath", "ParamPoint",
    "SpaceTopology", "Spectrum", "available_models", "build_model",
    "canonicalize", "char_poly", "coordinate_loop", "discriminant",
    "eigensystem", "homology_class", "make_bilayer_square", "make_hn_folded",
    "make_three_band_interp", "make_two_band_alt", "make_two_band_dvector",
    "poly_roots", "two_band_energies",
]
