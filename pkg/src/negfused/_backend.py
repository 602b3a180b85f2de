"""Backend selection for the Gibbs sampling kernels.

Two implementations of every chain runner exist: compiled numba kernels and a
pure-numpy fallback.  The numba path is the default whenever numba imports
cleanly; setting the environment variable ``NEGFUSED_NO_NUMBA`` to a non-empty
value forces the numpy path.  Callers can still override per call through the
``backend=`` argument of :func:`negfused.gibbs.run_chain`.

The two backends draw from different random streams (numba uses the global
MT19937 state seeded inside the kernel, numpy uses a per-call ``Generator``),
so results agree statistically but not bitwise.  Within one backend, equal
seeds give bitwise-identical chains.
"""

from __future__ import annotations

import os

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only on stripped installs
    HAS_NUMBA = False

BACKENDS = ("numba", "numpy")


def default_backend() -> str:
    """Return the backend used when a caller does not pick one explicitly."""
    if os.environ.get("NEGFUSED_NO_NUMBA"):
        return "numpy"
    return "numba" if HAS_NUMBA else "numpy"


def resolve_backend(backend: str | None) -> str:
    """Validate an explicit backend choice, falling back to the default."""
    if backend is None:
        return default_backend()
    if backend not in BACKENDS:
        raise ValueError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    if backend == "numba" and not HAS_NUMBA:
        raise ValueError("numba backend requested but numba is not importable")
    return backend
