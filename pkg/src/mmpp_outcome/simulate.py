"""Forward simulation of latent chains and subject event records."""

import numpy as np

from .records import LatentPath, SubjectRecord
from .streams import DOMAIN_SIMULATE, stream

__all__ = ["simulate_ctmc", "simulate_subject", "simulate_dataset"]


def simulate_ctmc(gen, initial, window_end, rng):
    """Draw one chain trajectory on [0, window_end].

    Gillespie simulation: exponential holding times at each state's exit
    rate, jump targets proportional to the off-diagonal rates.  Stops at
    the window end or on entering an absorbing state.

    Parameters
    ----------
    gen : GeneratorMatrix
    initial : (K,) array_like
        Initial distribution; mass only on live states.
    window_end : float
    rng : numpy.random.Generator

    Returns
    -------
    LatentPath
    """
    q = gen.rates
    k = gen.n_states
    x = int(rng.choice(k, p=np.asarray(initial, dtype=np.float64)))
    t = 0.0
    jumps, states = [], [x]
    while True:
        exit_rate = -q[x, x]
        if exit_rate <= 0.0:
            break
        t += rng.exponential(1.0 / exit_rate)
        if t >= window_end:
            break
        probs = np.maximum(q[x], 0.0)
        probs[x] = 0.0
        x = int(rng.choice(k, p=probs / probs.sum()))
        jumps.append(t)
        states.append(x)
    return LatentPath(np.asarray(jumps), np.asarray(states), window_end)


def simulate_subject(params, window_end, subject_id, rng, windowed=False, level_probs=None):
    """Draw one subject: latent path, event times, covariates and outcomes.

    Events arrive as a Poisson process whose rate follows the latent
    state; absorbing states produce none.  Under the windowed convention
    an extra event is forced at time 0 (the subject enters observation at
    an event), so the record always starts at 0 in that mode.

    Returns
    -------
    (SubjectRecord, LatentPath)
    """
    path = simulate_ctmc(params.gen, params.initial, window_end, rng)
    lam = params.event_rates
    times = [0.0] if windowed else []
    starts, ends, seg_states = path.segments()
    for a, b, s in zip(starts, ends, seg_states):
        rate = lam[s]
        if rate <= 0.0:
            continue
        t = a
        while True:
            t += rng.exponential(1.0 / rate)
            if t >= b:
                break
            times.append(t)
    times = np.asarray(times)
    ev_states = path.state_at(times) if times.size else np.empty(0, dtype=np.int64)
    if level_probs is None:
        levels = np.zeros(times.size, dtype=np.int64)
    else:
        p = np.asarray(level_probs, dtype=np.float64)
        levels = rng.choice(p.size, p=p, size=times.size).astype(np.int64)
    outcomes = (
        params.outcome.sample(ev_states, levels, rng) if times.size else np.empty(0)
    )
    record = SubjectRecord(
        subject_id=subject_id,
        times=times,
        outcomes=np.asarray(outcomes, dtype=np.float64),
        levels=levels,
        window_end=window_end,
        windowed=windowed,
    )
    return record, path


def simulate_dataset(params, n_subjects, window_end, seed, windowed=False, level_probs=None):
    """Draw a full cohort with one deterministic RNG stream per subject.

    The stream for subject i depends only on (seed, i), so cohorts are
    reproducible and any single subject can be regenerated alone.

    Returns
    -------
    (list of SubjectRecord, list of LatentPath)
    """
    records, paths = [], []
    width = max(4, len(str(max(n_subjects - 1, 0))))
    for i in range(n_subjects):
        rng = stream(seed, DOMAIN_SIMULATE, i)
        record, path = simulate_subject(
            params, window_end, f"s{i:0{width}d}", rng, windowed=windowed, level_probs=level_probs
        )
        records.append(record)
        paths.append(path)
    return records, paths
