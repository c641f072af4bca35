"""Dense matrix exponentials for small continuous-time chains.

Everything here targets state spaces of modest size (K up to ~10) where a
direct scaling-and-squaring exponential is exact to machine precision and
batching over many interval lengths matters more than asymptotics.  There
is deliberately no eigendecomposition path: generators with absorbing
states can be defective.
"""

import numpy as np

__all__ = ["expm", "expm_batch", "eta_matrix", "eta_matrices"]

# Entries of a probability matrix this far below zero are round-off noise;
# anything more negative is a genuine error upstream.
_CLAMP_TOL = 1e-12

# At scaled 1-norm <= 0.5 the Taylor terms decay below 1e-20 by n = 18.
_MAX_TAYLOR_TERMS = 24


def _as_square(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix entries must be finite")
    return a


def _taylor(scaled):
    """exp of a stack of matrices whose 1-norms are all <= 0.5."""
    m, k, _ = scaled.shape
    out = np.broadcast_to(np.eye(k), (m, k, k)).copy()
    term = out.copy()
    for n in range(1, _MAX_TAYLOR_TERMS + 1):
        term = (term @ scaled) / n
        out += term
        if np.max(np.abs(term)) < 1e-17:
            break
    return out


def expm_batch(a, ts):
    """exp(a * t) for one square matrix and many scalars t.

    Parameters
    ----------
    a : (K, K) array_like
        Square matrix with finite entries.
    ts : (M,) array_like
        Non-negative scale factors.

    Returns
    -------
    (M, K, K) ndarray
        Stack of matrix exponentials.  Entries within round-off below
        zero are clamped to 0 so downstream code can treat results from
        generator inputs as probabilities.
    """
    a = _as_square(a)
    ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
    if ts.ndim != 1:
        raise ValueError("ts must be one-dimensional")
    if not np.all(np.isfinite(ts)) or np.any(ts < 0):
        raise ValueError("ts must be finite and non-negative")
    if ts.size == 0:
        return np.empty((0, a.shape[0], a.shape[0]))

    b = a[None, :, :] * ts[:, None, None]
    norms = np.abs(b).sum(axis=1).max(axis=1)  # 1-norm per matrix
    # Scale each matrix so its norm is <= 0.5, then square back up.
    with np.errstate(divide="ignore"):
        s = np.ceil(np.log2(norms / 0.5))
    s = np.where(norms > 0.5, s, 0.0).astype(np.int64)
    out = _taylor(b / np.exp2(s)[:, None, None])
    for r in range(1, int(s.max()) + 1 if s.size else 1):
        idx = np.nonzero(s >= r)[0]
        if idx.size == 0:
            break
        out[idx] = out[idx] @ out[idx]
    out[(out > -_CLAMP_TOL) & (out < 0.0)] = 0.0
    return out


def expm(a, t=1.0):
    """exp(a * t) for a single square matrix.

    Parameters
    ----------
    a : (K, K) array_like
        Square matrix with finite entries.
    t : float
        Non-negative scale; ``t = 0`` returns the identity.

    Returns
    -------
    (K, K) ndarray
    """
    return expm_batch(a, np.array([t]))[0]


def eta_matrix(q, event_rates, delta):
    """exp{(Q - diag(lambda)) * delta}: no-event transition kernel.

    Entry (j, k) is the probability of moving from state j to state k
    over an interval of length ``delta`` while emitting no event, so the
    result is sub-stochastic (row sums <= 1) whenever ``q`` is a
    generator and ``event_rates`` is non-negative.
    """
    return eta_matrices(q, event_rates, np.array([delta]))[0]


def eta_matrices(q, event_rates, deltas):
    """Batched :func:`eta_matrix` over many interval lengths."""
    q = _as_square(q)
    lam = np.asarray(event_rates, dtype=np.float64)
    if lam.shape != (q.shape[0],):
        raise ValueError("event_rates must have one entry per state")
    if not np.all(np.isfinite(lam)) or np.any(lam < 0):
        raise ValueError("event_rates must be finite and non-negative")
    return expm_batch(q - np.diag(lam), deltas)
