"""Gaussian Parzen-window density and held-out selection of its width."""

from __future__ import annotations

import math

import numpy as np

from .core import DomainError, logsumexp_rows
from .data import Dataset

_CHUNK_ELEMS = 4_000_000


def _sq_dists(queries: np.ndarray, points: np.ndarray) -> np.ndarray:
    if points.shape[1] == 1:
        return (queries - points.T) ** 2
    d2 = (
        np.sum(queries ** 2, axis=1)[:, None]
        + np.sum(points ** 2, axis=1)[None, :]
        - 2.0 * queries @ points.T
    )
    return np.maximum(d2, 0.0)


def parzen_logpdf(data: Dataset, sigma: float, query):
    """Log of ``(1/n) sum_k N(query; x_k, sigma^2 I)``, normalization included.

    ``query`` is one point ``(d,)`` (returns a float) or a batch ``(q, d)``.
    """
    if sigma <= 0:
        raise DomainError(f"sigma must be > 0, got {sigma}")
    pts = data.samples
    q = np.asarray(query, dtype=np.float64)
    single = q.ndim == 1
    qb = np.atleast_2d(q)
    n, d = pts.shape
    log_norm = -0.5 * d * math.log(2.0 * math.pi) - d * math.log(sigma) - math.log(n)
    out = np.empty(qb.shape[0])
    step = max(1, _CHUNK_ELEMS // n)
    for s in range(0, qb.shape[0], step):
        d2 = _sq_dists(qb[s:s + step], pts)
        out[s:s + step] = logsumexp_rows(-d2 / (2.0 * sigma ** 2)) + log_norm
    return float(out[0]) if single else out


def select_sigma(train: Dataset, valid: Dataset, candidates):
    """Grid search for the width maximizing mean held-out log-likelihood.

    Returns ``(sigma_star, [(sigma, mean_loglik), ...])`` with candidates in
    ascending order; ties go to the smaller width.
    """
    cands = sorted(float(c) for c in candidates)
    if not cands:
        raise ValueError("no candidate widths")
    if cands[0] <= 0:
        raise DomainError("candidate widths must be positive")
    table = [(s, float(np.mean(parzen_logpdf(train, s, valid.samples)))) for s in cands]
    best = max(table, key=lambda row: row[1])[1]
    sigma_star = next(s for s, ll in table if ll == best)
    return sigma_star, table
