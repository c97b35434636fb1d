"""Observable quantities of the matrix-normal model.

Cluster means, the contrast vector of a cluster pair, projections, and the
perturbed data set in which the two tested clusters are pushed together or
pulled apart along their mean-difference direction.

All indices are 0-based here; the command line converts to and from the
1-based numbering users see.
"""

from __future__ import annotations

import numpy as np

from ._validation import ClusterPair, check_data, check_pair
from .exceptions import DegenerateDirectionError, InvalidContrastError


def empirical_mean(x, group) -> np.ndarray:
    """Column-wise mean of the rows of ``x`` listed in ``group``."""
    x = np.asarray(x, dtype=np.float64)
    idx = np.asarray(list(group), dtype=np.int64)
    return x[idx].mean(axis=0)


def contrast_vector(pair, n: int) -> np.ndarray:
    """Length-``n`` vector with ``1/|c1|`` on ``c1``, ``-1/|c2|`` on ``c2``, 0 elsewhere.

    ``x.T @ nu`` is then the difference of the two cluster means.
    """
    pair = check_pair(pair, n)
    nu = np.zeros(n)
    nu[list(pair.c1)] = 1.0 / len(pair.c1)
    nu[list(pair.c2)] = -1.0 / len(pair.c2)
    return nu


def direction(w) -> np.ndarray:
    """Unit vector along ``w``; the zero vector maps to itself."""
    w = np.asarray(w, dtype=np.float64)
    norm = np.linalg.norm(w)
    if norm == 0:
        return np.zeros_like(w)
    return w / norm


def project_out(x, nu) -> np.ndarray:
    """Apply ``I - nu nu^T / ||nu||^2`` to the rows of ``x``."""
    x = np.asarray(x, dtype=np.float64)
    nu = np.asarray(nu, dtype=np.float64)
    if nu.shape != (x.shape[0],):
        raise InvalidContrastError(f"contrast has length {nu.shape}, data has {x.shape[0]} rows")
    nn = nu @ nu
    if nn == 0:
        raise InvalidContrastError("contrast vector is zero")
    return x - np.outer(nu, nu @ x) / nn


def test_statistic(x, pair) -> float:
    """Euclidean norm of the difference between the two cluster means."""
    x = np.asarray(x, dtype=np.float64)
    pair = check_pair(pair, x.shape[0])
    return float(np.linalg.norm(empirical_mean(x, pair.c1) - empirical_mean(x, pair.c2)))


# keep pytest from collecting the function above when it is imported into test modules
test_statistic.__test__ = False


def _mean_difference(x: np.ndarray, pair: ClusterPair) -> tuple[np.ndarray, float]:
    diff = empirical_mean(x, pair.c1) - empirical_mean(x, pair.c2)
    stat = float(np.linalg.norm(diff))
    if stat == 0:
        raise DegenerateDirectionError("the two cluster means coincide; the test is undefined")
    return diff, stat


def perturbed_dataset(x, pair, phi: float) -> np.ndarray:
    """Data with the two clusters' mean difference rescaled to length ``phi``.

    Rows of ``c1`` move by ``|c2|/(|c1|+|c2|) * (phi - stat)`` along the
    mean-difference direction, rows of ``c2`` by ``-|c1|/(|c1|+|c2|)`` times
    the same amount, and every other row is left untouched.
    """
    x = check_data(x)
    pair = check_pair(pair, x.shape[0])
    diff, stat = _mean_difference(x, pair)
    unit = diff / stat
    n1, n2 = pair.sizes
    shift = (phi - stat) * unit
    out = x.copy()
    out[list(pair.c1)] += (n2 / (n1 + n2)) * shift
    out[list(pair.c2)] -= (n1 / (n1 + n2)) * shift
    return out


def perturbed_dataset_cov(x, pair, phi: float, sigma_chol) -> np.ndarray:
    """Perturbation used under a general covariance ``Sigma = L L^T``.

    Returns ``P x + phi * (nu/||nu||^2) (L dir(L^{-1} x^T nu))^T`` where ``P``
    projects out ``nu``; ``phi`` is on the whitened scale, so at
    ``phi = ||L^{-1} x^T nu||`` the data come back unchanged.
    """
    x = check_data(x)
    pair = check_pair(pair, x.shape[0])
    nu = contrast_vector(pair, x.shape[0])
    w = x.T @ nu
    white = np.linalg.solve(sigma_chol, w)
    if not np.any(white):
        raise DegenerateDirectionError("the two cluster means coincide; the test is undefined")
    back = sigma_chol @ direction(white)
    return project_out(x, nu) + phi * np.outer(nu / (nu @ nu), back)


def whitened_statistic(x, pair, sigma_chol) -> float:
    """``||L^{-1} (xbar_c1 - xbar_c2)||`` for ``Sigma = L L^T``."""
    x = np.asarray(x, dtype=np.float64)
    pair = check_pair(pair, x.shape[0])
    diff = empirical_mean(x, pair.c1) - empirical_mean(x, pair.c2)
    return float(np.linalg.norm(np.linalg.solve(sigma_chol, diff)))
