"""Exact birational geometry of real rational surfaces.

Construction, classification, composition and certified factorization of
birational maps of the plane, the sphere quadric and the torus into the
standard generator families, with exact arithmetic throughout.
"""

from .scalars import FieldCtx, QI, Scalar, CapacityError, sc, sc_i
from .forms import Form, FormError, gcd_forms, reduce_mod

__version__ = "0.1.0"
