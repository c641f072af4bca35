"""MCMC output analysis: autocorrelation times, summaries, exports.

All functions are pure transformations of in-memory traces; file output
is text-based and deterministic so reruns of the same chain diff clean.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

from .model import GaussianOutcome, ModelParams

__all__ = [
    "TraceSummary",
    "iact",
    "ess",
    "autocorrelations",
    "extract_traces",
    "summarize",
    "write_exports",
    "write_trace_exports",
    "relabel",
]

LOW_CONFIDENCE_ESS = 100.0


@dataclass(frozen=True)
class TraceSummary:
    """Posterior summary of one scalar parameter trace.

    ``ess`` is retained / IACT.  ``iact`` and ``ess`` are NaN when the
    trace is constant (the estimator is undefined there), and
    ``low_confidence`` is set whenever the ESS is missing or below 100.
    """

    name: str
    median: float
    lo95: float
    hi95: float
    iact: float
    ess: float
    retained: int
    low_confidence: bool

    def __post_init__(self):
        if not (self.lo95 <= self.median <= self.hi95):
            raise ValueError("credible interval must bracket the median")


def _autocovariances(x):
    """Biased (1/n) autocovariances at all lags via FFT."""
    n = x.size
    xc = x - x.mean()
    m = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(xc, m)
    acov = np.fft.irfft(f * np.conjugate(f), m)[:n]
    return acov / n


def iact(trace):
    """Integrated autocorrelation time of a scalar trace.

    Uses the initial-positive-sequence truncation: autocorrelations are
    summed in adjacent pairs until the first nonpositive pair sum.

    Parameters
    ----------
    trace : sequence of float
        At least 10 values, not all equal.

    Returns
    -------
    float
        Estimated IACT; 1.0 means the chain mixes like iid draws.
    """
    x = np.asarray(trace, dtype=np.float64).ravel()
    if x.size < 10:
        raise ValueError("IACT needs at least 10 samples")
    if not np.all(np.isfinite(x)):
        raise ValueError("IACT undefined for non-finite traces")
    acov = _autocovariances(x)
    if acov[0] <= 0.0:
        raise ValueError("IACT undefined for a constant trace")
    rho = acov / acov[0]
    total = 0.0
    for m in range(x.size // 2):
        pair = rho[2 * m] + rho[2 * m + 1]
        if pair <= 0.0:
            break
        total += pair
    return 2.0 * total - 1.0


def ess(trace):
    """Effective sample size: trace length divided by the IACT."""
    x = np.asarray(trace, dtype=np.float64).ravel()
    return x.size / iact(x)


def autocorrelations(trace, max_lag):
    """Normalized autocorrelations for lags 0..max_lag."""
    x = np.asarray(trace, dtype=np.float64).ravel()
    acov = _autocovariances(x)
    if acov[0] <= 0.0:
        raise ValueError("autocorrelation undefined for a constant trace")
    max_lag = min(max_lag, x.size - 1)
    return acov[: max_lag + 1] / acov[0]


def parameter_names(params):
    """Scalar parameter names in report order, 1-based state labels."""
    gen = params.gen
    live = np.nonzero(gen.live)[0]
    names = [f"lambda_{k + 1}" for k in live]
    rows, cols = np.nonzero(gen.allowed)
    names += [f"q_{l + 1}_{m + 1}" for l, m in zip(rows, cols)]
    names += params.outcome.param_names(gen.live)
    names += [f"nu_{k + 1}" for k in live]
    return names


def parameter_values(params):
    """Scalar parameter values matching ``parameter_names`` order."""
    gen = params.gen
    live = gen.live
    parts = [
        params.event_rates[live],
        params.gen.rates[gen.allowed],
        params.outcome.param_values(live),
        params.initial[live],
    ]
    return np.concatenate(parts)


def extract_traces(samples):
    """Per-parameter traces from a retained sample sequence.

    Returns
    -------
    dict of str to ndarray
        Keys in report order; each value has one entry per sample.
    """
    if not samples:
        raise ValueError("no samples to extract traces from")
    names = parameter_names(samples[0].params)
    values = np.stack([parameter_values(s.params) for s in samples])
    return {name: values[:, i] for i, name in enumerate(names)}


def _summary_row(name, trace):
    lo, med, hi = np.quantile(trace, [0.025, 0.5, 0.975])
    try:
        t = iact(trace)
        e = trace.size / t
        flagged = e < LOW_CONFIDENCE_ESS
    except ValueError:
        t = math.nan
        e = math.nan
        flagged = True
    return TraceSummary(name, float(med), float(lo), float(hi), float(t),
                        float(e), int(trace.size), bool(flagged))


def summarize(samples):
    """Posterior summaries for every scalar parameter.

    Parameters
    ----------
    samples : sequence of PosteriorSample

    Returns
    -------
    list of TraceSummary
        Medians and equal-tailed 95% intervals (linear-interpolation
        quantiles), IACT/ESS, and low-confidence flags.
    """
    if not samples:
        raise ValueError("no samples to summarize")
    return [_summary_row(name, tr) for name, tr in extract_traces(samples).items()]


def write_exports(samples, out_dir, max_acf_lag=100):
    """Write the summary table and per-parameter plot data under out_dir.

    Creates summary.csv plus trace_/hist_/acf_ files per parameter.
    Existing files are overwritten; output is deterministic in the
    samples.  Returns the summary list.
    """
    traces = extract_traces(samples)
    sweeps = np.asarray([s.sweep for s in samples], dtype=np.int64)
    return write_trace_exports(traces, sweeps, out_dir, max_acf_lag)


def write_trace_exports(traces, sweeps, out_dir, max_acf_lag=100):
    """``write_exports`` on already-extracted traces (used by the CLI)."""
    if not traces:
        raise ValueError("no traces to export")
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for name, tr in traces.items():
        rows.append(_summary_row(name, tr))
        with open(os.path.join(out_dir, f"trace_{name}.csv"), "w") as fh:
            fh.write("iteration,value\n")
            for it, v in zip(sweeps, tr):
                fh.write(f"{it},{float(v)!r}\n")
        counts, edges = np.histogram(tr, bins="auto")
        with open(os.path.join(out_dir, f"hist_{name}.csv"), "w") as fh:
            fh.write("bin_left,bin_right,count\n")
            for i, c in enumerate(counts):
                fh.write(f"{float(edges[i])!r},{float(edges[i + 1])!r},{c}\n")
        try:
            rho = autocorrelations(tr, max_acf_lag)
        except ValueError:
            rho = np.ones(1)
        with open(os.path.join(out_dir, f"acf_{name}.csv"), "w") as fh:
            fh.write("lag,autocorrelation\n")
            for lag, r in enumerate(rho):
                fh.write(f"{lag},{float(r)!r}\n")
    with open(os.path.join(out_dir, "summary.csv"), "w") as fh:
        fh.write("parameter,median,lo95,hi95,iact,ess,flag\n")
        for s in rows:
            flag = "low_confidence" if s.low_confidence else "ok"
            fh.write(f"{s.name},{s.median!r},{s.lo95!r},{s.hi95!r},"
                     f"{s.iact!r},{s.ess!r},{flag}\n")
    return rows


def _live_permutation(params):
    """Order live states by event rate, breaking ties on outcome location."""
    gen = params.gen
    live_idx = np.flatnonzero(gen.live)
    lam = params.event_rates[live_idx]
    if isinstance(params.outcome, GaussianOutcome):
        tie = params.outcome.means[live_idx]
    else:
        tie = params.outcome.cell_means[0, live_idx]
    order = np.lexsort((tie, lam))
    perm = np.arange(gen.n_states)
    perm[live_idx] = live_idx[order]
    return perm


def _live_states_exchangeable(gen):
    """True when the allowed mask cannot distinguish live states."""
    live = gen.live
    k = int(live.sum())
    sub = gen.allowed[np.ix_(live, live)]
    if not np.all(sub[~np.eye(k, dtype=bool)]):
        return False
    into_dead = gen.allowed[np.ix_(live, ~live)]
    return bool(np.all(into_dead == into_dead[:1, :]))


def relabel(samples):
    """Relabel each sample's live states by ascending event rate.

    The live-state labels of a model with exchangeable states are
    arbitrary, so chains can switch labels; sorting by event rate (ties
    broken by outcome location) makes traces comparable to a fixed
    truth.  Absorbing states keep their positions.  When the structural
    masks already distinguish the live states (forbidden transitions
    break the symmetry), labels cannot switch and the samples are
    returned unchanged.

    Returns
    -------
    list of PosteriorSample
        Same draws with consistently permuted state labels.
    """
    if samples and not _live_states_exchangeable(samples[0].params.gen):
        return list(samples)
    out = []
    for s in samples:
        p = s.params
        perm = _live_permutation(p)
        if np.array_equal(perm, np.arange(p.n_states)):
            out.append(s)
            continue
        gen = p.gen
        new_gen = type(gen)(
            gen.rates[np.ix_(perm, perm)],
            gen.allowed[np.ix_(perm, perm)],
            gen.absorbing[perm],
        )
        if isinstance(p.outcome, GaussianOutcome):
            outcome = GaussianOutcome(p.outcome.means[perm], p.outcome.variance)
        else:
            outcome = type(p.outcome)(p.outcome.cell_means[:, perm])
        params = ModelParams(new_gen, p.event_rates[perm], p.initial[perm], outcome)
        out.append(type(s)(s.sweep, params, s.loglik))
    return out
