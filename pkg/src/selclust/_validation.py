"""Input validation helpers shared by the public functions and estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, InvalidPairError, NotPositiveDefiniteError


def check_data(x, min_rows: int = 2) -> np.ndarray:
    """Return ``x`` as a C-contiguous float64 matrix with finite entries."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise DataError(f"expected a 2-D data matrix, got {arr.ndim} dimensions")
    n, q = arr.shape
    if n < min_rows:
        raise DataError(f"need at least {min_rows} observations, got {n}")
    if q < 1:
        raise DataError("need at least one feature")
    if not np.all(np.isfinite(arr)):
        raise DataError("data contains NaN or infinite values")
    return np.ascontiguousarray(arr)


def _as_members(group, n: int | None, name: str) -> tuple[int, ...]:
    raw = np.asarray(list(group)).ravel()
    if raw.size and not np.issubdtype(raw.dtype, np.integer):
        if not np.all(raw == np.round(raw)):
            raise InvalidPairError(f"{name} has non-integer indices")
    raw = raw.astype(np.int64)
    members = np.unique(raw)
    if members.size == 0:
        raise InvalidPairError(f"{name} is empty")
    if members[0] < 0 or (n is not None and members[-1] >= n):
        raise InvalidPairError(f"{name} has indices outside 0..{'n-1' if n is None else n - 1}")
    if members.size != raw.size:
        raise InvalidPairError(f"{name} contains repeated indices")
    return tuple(int(i) for i in members)


@dataclass(frozen=True)
class ClusterPair:
    """Two disjoint groups of observation indices (0-based).

    Construct through :func:`check_pair` to get validation; the members are
    stored sorted.
    """

    c1: tuple[int, ...]
    c2: tuple[int, ...]

    @property
    def sizes(self) -> tuple[int, int]:
        return len(self.c1), len(self.c2)

    @property
    def squared_norm(self) -> float:
        """Squared norm of the contrast vector, ``1/|c1| + 1/|c2|``."""
        return 1.0 / len(self.c1) + 1.0 / len(self.c2)

    def one_based(self) -> tuple[list[int], list[int]]:
        return [i + 1 for i in self.c1], [i + 1 for i in self.c2]


def check_pair(pair, n: int | None = None) -> ClusterPair:
    """Validate a pair of index groups.

    ``pair`` may be a :class:`ClusterPair` or any two iterables of 0-based
    indices. Raises :class:`InvalidPairError` when the groups overlap, are
    empty, or fall outside ``0..n-1``.
    """
    if isinstance(pair, ClusterPair):
        g1, g2 = pair.c1, pair.c2
    else:
        try:
            g1, g2 = pair
        except (TypeError, ValueError):
            raise InvalidPairError("a cluster pair must consist of exactly two index groups") from None
    c1 = _as_members(g1, n, "first cluster")
    c2 = _as_members(g2, n, "second cluster")
    if set(c1) & set(c2):
        raise InvalidPairError("the two clusters overlap")
    return ClusterPair(c1, c2)


def check_covariance(sigma_matrix, q: int) -> np.ndarray:
    """Return the lower Cholesky factor of a symmetric positive definite matrix."""
    cov = np.asarray(sigma_matrix, dtype=np.float64)
    if cov.shape != (q, q):
        raise NotPositiveDefiniteError(f"covariance must be {q}x{q}, got {cov.shape}")
    if not np.all(np.isfinite(cov)):
        raise NotPositiveDefiniteError("covariance has non-finite entries")
    if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12 * np.abs(cov).max()):
        raise NotPositiveDefiniteError("covariance is not symmetric")
    try:
        return np.linalg.cholesky((cov + cov.T) / 2)
    except np.linalg.LinAlgError:
        raise NotPositiveDefiniteError("covariance is not positive definite") from None


def check_positive(value, name: str) -> float:
    v = float(value)
    if not np.isfinite(v) or v <= 0:
        raise DataError(f"{name} must be a positive finite number, got {value!r}")
    return v
