"""Backend selection for the grid operator hot loop.

Prefers the compiled extension (``_gridcore``) and falls back to the
pure-numpy implementation (``_gridpy``) when the extension did not build.
Both expose the same ``apply_slice``/``slice_objective`` contract; the
active backend's name is in ``BACKEND``.
"""

from __future__ import annotations

from . import _gridpy as fallback

try:
    from . import _gridcore as _impl  # type: ignore[attr-defined]
except ImportError:
    _impl = fallback

BACKEND: str = _impl.BACKEND
apply_slice = _impl.apply_slice
slice_objective = _impl.slice_objective
golden_iterations = fallback.golden_iterations
