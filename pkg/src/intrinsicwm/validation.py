"""Input validation helpers shared by the numerical modules and estimators."""

import numpy as np


def as_float_array(x, name="array", ndim=None):
    """Coerce to a C-contiguous float64 array and require finite entries."""
    arr = np.ascontiguousarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def as_sites(X, d):
    """Coerce site coordinates to shape (k, d)."""
    arr = as_float_array(X, name="sites")
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2 or arr.shape[1] != d:
        raise ValueError(f"sites must have shape (k, {d}), got {arr.shape}")
    return arr


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be positive, got {value!r}")
    return float(value)


def check_nonnegative(value, name):
    if not np.isfinite(value) or value < 0:
        raise ValueError(f"{name} must be nonnegative, got {value!r}")
    return float(value)


def check_in_domain(sites, lo, hi, tol=1e-12):
    """Require every site inside the box [lo, hi]^d (closure, with tolerance)."""
    sites = np.atleast_2d(sites)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    bad = np.nonzero(
        np.any((sites < lo - tol) | (sites > hi + tol), axis=1)
    )[0]
    if bad.size:
        raise ValueError(f"site index {bad[0]} is outside the mesh domain")


def rng_from_seed(seed):
    """Deterministic generator from an integer seed (or pass a Generator through)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(int(seed))
