"""Kernel selection: compiled Cython core with pure-Python fallback.

Set REALCREMONA_KERNEL=py (or =c) to force a backend; by default the
compiled extension is used when it imported successfully.
"""

from __future__ import annotations

import os

from . import _kernel_py

_choice = os.environ.get("REALCREMONA_KERNEL", "").strip().lower()

if _choice == "py":
    impl = _kernel_py
else:
    try:
        from . import _kernel_c as impl  # type: ignore[attr-defined]
    except ImportError:
        if _choice == "c":
            raise
        impl = _kernel_py

KERNEL_NAME = impl.KERNEL_NAME
coeff_mul = impl.coeff_mul
coeff_add = impl.coeff_add
mul_terms = impl.mul_terms
addmul_terms = impl.addmul_terms
add_terms = impl.add_terms
scale_terms = impl.scale_terms
evaluate_terms = impl.evaluate_terms
