"""Exact Gibbs sampler: latent-path augmentation plus conjugate updates.

Each sweep runs six steps in a fixed order: (1) joint backward draw of
the latent state at every event node and the window end, (2) exact
endpoint-conditioned path fills between nodes with sufficient-statistic
aggregation, then conjugate draws of (3) the initial distribution,
(4) the free transition rates, (5) the live event rates and (6) the
outcome parameters.

Randomness comes from counter-based streams keyed by
(seed, domain, sweep, subject), never from shared generator state, so
a sweep's output is identical no matter how many threads run the
per-subject work and any subject can be replayed in isolation.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import xlogy

from . import _kernels
from .errors import InfeasibleDataError, NumericalError, TruncationError
from .forward_backward import MODE_CTHMM, MODE_MMPP
from .forward_backward import node_times_for
from .linalg import expm_batch
from .model import (
    GaussianOutcome,
    ModelParams,
    PoissonOutcome,
    SufficientStats,
)
from .path_sampler import _power_stack
from .records import LatentPath
from .streams import DOMAIN_INIT, DOMAIN_PARAMS, DOMAIN_SWEEP, stream

__all__ = [
    "SamplerConfig",
    "ChainState",
    "PosteriorSample",
    "init_from_data",
    "init_from_prior",
    "gibbs_sweep",
    "run_chain",
    "posterior_initial_conc",
    "posterior_transition_params",
    "posterior_event_rate_params",
    "posterior_gaussian_params",
    "posterior_poisson_params",
]


@dataclass(frozen=True)
class SamplerConfig:
    """Run-length, seeding, priors and structure for one chain.

    `structure` is a GeneratorMatrix whose masks define the free and
    absorbing entries; its rate values are ignored by prior-draw
    initialization.  `mode` is "mmpp" (full model) or "cthmm-only"
    (ignore event timing: kernels become expm(Q dt) and event counts
    carry no filtering information, though event rates are still
    updated from path occupancies for reporting).
    """

    iterations: int
    burn_in: int = 0
    thinning: int = 1
    seed: int = 0
    mode: str = MODE_MMPP
    threads: int = 1
    prior: object = None
    structure: object = None
    outcome_kind: str = "gaussian"
    n_levels: int = 1
    outcome_variance: float = 1.0

    def __post_init__(self):
        if self.iterations < 0 or self.burn_in < 0:
            raise ValueError("iterations and burn_in must be nonnegative")
        if self.burn_in > self.iterations:
            raise ValueError("burn_in cannot exceed iterations")
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")
        if self.mode not in (MODE_MMPP, MODE_CTHMM):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")


@dataclass
class ChainState:
    """Current position of the chain: parameters, paths and statistics.

    `stats` always aggregates the stored paths; `verify_stats` recomputes
    them from scratch as a consistency trap for tests and debugging.
    The RNG state is the pair (seed, sweep): streams are derived, never
    carried.
    """

    params: ModelParams
    paths: list
    stats: SufficientStats
    sweep: int
    seed: int

    def verify_stats(self, records, atol=1e-8):
        """Recompute stats from paths and records; raise on mismatch."""
        from .model import extract_sufficient_stats

        k = self.params.n_states
        n_levels = self.params.outcome.n_levels
        total = SufficientStats.zeros(k, n_levels)
        for path, record in zip(self.paths, records):
            total += extract_sufficient_stats(
                path, record, k, n_levels, absorbing=self.params.gen.absorbing
            )
        for mine, theirs in [
            (self.stats.n_trans, total.n_trans),
            (self.stats.occupancy, total.occupancy),
            (self.stats.n_events, total.n_events),
            (self.stats.n_initial, total.n_initial),
            (self.stats.outcome_count, total.outcome_count),
            (self.stats.outcome_total, total.outcome_total),
        ]:
            if not np.allclose(mine, theirs, atol=atol):
                raise AssertionError("chain stats diverged from stored paths")


@dataclass(frozen=True)
class PosteriorSample:
    """One retained draw: sweep index, parameters, complete-data loglik."""

    sweep: int
    params: ModelParams
    loglik: float


def posterior_initial_conc(prior, stats, gen):
    """Dirichlet concentration of the initial-distribution conditional."""
    return prior.initial_conc[gen.live] + stats.n_initial[gen.live]


def posterior_transition_params(prior, stats, gen):
    """Gamma (shape, rate) arrays of the free transition-rate conditionals."""
    shape = prior.trans_shape + stats.n_trans
    rate = prior.trans_rate + stats.occupancy[:, None]
    return shape, rate


def posterior_event_rate_params(prior, stats):
    """Gamma (shape, rate) arrays of the event-rate conditionals."""
    return prior.rate_shape + stats.n_events, prior.rate_rate + stats.occupancy


def posterior_gaussian_params(prior, stats, variance):
    """Normal (mean, variance) arrays of the outcome-mean conditionals."""
    m0, v0 = (np.broadcast_to(p, stats.n_events.shape).astype(np.float64)
              for p in prior.outcome_prior)
    n = stats.outcome_count.sum(axis=0)
    total = stats.outcome_total.sum(axis=0)
    post_var = 1.0 / (1.0 / v0 + n / variance)
    post_mean = post_var * (m0 / v0 + total / variance)
    return post_mean, post_var


def posterior_poisson_params(prior, stats):
    """Gamma (shape, rate) arrays of the outcome cell-mean conditionals."""
    a, b = (np.broadcast_to(p, stats.outcome_count.shape).astype(np.float64)
            for p in prior.outcome_prior)
    return a + stats.outcome_total, b + stats.outcome_count


def _draw_params(params, prior, stats, rng, variance):
    """Steps 3-6: conjugate draws in the fixed order nu, Q, lambda, outcome."""
    gen = params.gen
    k = gen.n_states
    live = gen.live
    nu = np.zeros(k)
    nu[live] = rng.dirichlet(posterior_initial_conc(prior, stats, gen))
    shape, rate = posterior_transition_params(prior, stats, gen)
    free = gen.allowed
    q = np.zeros((k, k))
    q[free] = rng.gamma(shape[free], 1.0 / rate[free])
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    new_gen = gen.with_rates(q)
    lshape, lrate = posterior_event_rate_params(prior, stats)
    lam = np.zeros(k)
    lam[live] = rng.gamma(lshape[live], 1.0 / lrate[live])
    if isinstance(params.outcome, GaussianOutcome):
        mean, var = posterior_gaussian_params(prior, stats, variance)
        means = np.zeros(k)
        means[live] = rng.normal(mean[live], np.sqrt(var[live]))
        outcome = GaussianOutcome(means, variance)
    else:
        oshape, orate = posterior_poisson_params(prior, stats)
        cells = np.zeros_like(oshape)
        draws = rng.gamma(oshape[:, live], 1.0 / orate[:, live])
        cells[:, live] = draws
        outcome = PoissonOutcome(cells)
    return ModelParams(new_gen, lam, nu, outcome)


class _CompiledData:
    """Per-run arrays derived from the records once, reused every sweep."""

    def __init__(self, records, n_states, n_levels):
        self.records = list(records)
        self.n_states = n_states
        self.n_levels = n_levels
        node_times = []
        deltas = []
        ev_starts = [0]
        outcomes, levels, forced = [], [], []
        for rec in self.records:
            nt = node_times_for(rec)
            node_times.append(nt)
            deltas.append(np.diff(nt))
            outcomes.append(rec.outcomes)
            levels.append(rec.levels)
            mask = np.zeros(rec.n_events, dtype=bool)
            if rec.windowed:
                mask[0] = True
            forced.append(mask)
            ev_starts.append(ev_starts[-1] + rec.n_events)
        self.node_times = node_times
        self.ev_starts = np.asarray(ev_starts, dtype=np.int64)
        if self.records:
            self.outcomes_flat = np.concatenate(outcomes)
            self.levels_flat = np.concatenate(levels)
            self.forced_flat = np.concatenate(forced)
            flat = np.concatenate(deltas)
        else:
            self.outcomes_flat = np.empty(0)
            self.levels_flat = np.empty(0, dtype=np.int64)
            self.forced_flat = np.empty(0, dtype=bool)
            flat = np.empty(0)
        self.unique_deltas, inverse = np.unique(flat, return_inverse=True)
        self.max_delta = float(flat.max()) if flat.size else 0.0
        self.eta_idx = []
        pos = 0
        for d in deltas:
            self.eta_idx.append(np.ascontiguousarray(inverse[pos:pos + d.size]))
            pos += d.size
        self.n_events_total = int(self.ev_starts[-1])


class _SweepTables:
    """Parameter-dependent tables shared read-only by all subject tasks."""

    __slots__ = ("k", "lam", "nu", "etas", "omega", "p", "pn", "factor_log",
                 "absorbing", "logf_flat", "n_cap", "max_exit")

    def __init__(self, params, compiled, mode, n_cap=None):
        q = params.gen.rates
        lam = params.event_rates
        g = q - np.diag(lam) if mode == MODE_MMPP else q.copy()
        self.k = params.n_states
        self.lam = lam
        self.nu = params.initial
        self.absorbing = params.gen.absorbing
        self.etas = expm_batch(g, compiled.unique_deltas)
        self.omega = 1.5 * float(np.max(-np.diag(g), initial=0.0))
        self.max_exit = float(np.max(-np.diag(q), initial=0.0))
        self.p = np.eye(self.k) + g / self.omega if self.omega > 0 else np.eye(self.k)
        r_max = self.omega * compiled.max_delta
        if n_cap is None:
            n_cap = min(int(r_max + 12.0 * np.sqrt(r_max + 1.0) + 40.0),
                        _kernels.HARD_N_CAP)
        self.n_cap = n_cap
        self.pn, self.factor_log = _power_stack(self.p, n_cap)
        self.logf_flat = params.outcome.log_density(
            compiled.outcomes_flat, compiled.levels_flat, params.gen.live
        )

    def deepen(self):
        if self.n_cap >= _kernels.HARD_N_CAP:
            raise TruncationError(
                f"virtual-jump series exceeded {_kernels.HARD_N_CAP} terms"
            )
        self.n_cap = min(2 * self.n_cap, _kernels.HARD_N_CAP)
        self.pn, self.factor_log = _power_stack(self.p, self.n_cap)


_NEED_DEEPER = "deeper"


def _subject_draw(compiled, idx, tables, seed, sweep_idx, use_rates):
    """Steps 1-2 for one subject; deterministic given (seed, sweep, idx).

    Buffer overruns retry with doubled budgets; the per-subject stream
    is re-created from scratch each attempt so the accepted draw is the
    one an adequately sized first attempt would have produced.
    """
    rec = compiled.records[idx]
    nt = compiled.node_times[idx]
    k = tables.k
    n_nodes = nt.size
    lo, hi = compiled.ev_starts[idx], compiled.ev_starts[idx + 1]
    logf = tables.logf_flat[lo:hi]
    eta_idx = compiled.eta_idx[idx]
    alpha = np.empty((n_nodes, k))
    logc = np.empty(n_nodes)
    states = np.empty(n_nodes, dtype=np.int64)
    occ = np.empty(k)
    ntr = np.empty((k, k))
    scratch = tables.pn.shape[0]
    wbuf = np.empty(scratch)
    vbuf = np.empty(scratch, dtype=np.int64)
    tbuf = np.empty(scratch)
    budget = int(n_nodes + 2.2 * tables.omega * rec.window_end + 44 * n_nodes + 64)
    cap_out = 32 + int(2.0 * tables.max_exit * rec.window_end)
    jt = np.empty(cap_out)
    js = np.empty(cap_out, dtype=np.int64)
    while True:
        rng = stream(seed, DOMAIN_SWEEP, sweep_idx, idx)
        uniforms = rng.random(budget)
        status, info, upos, opos = _kernels.sweep_subject(
            logf, tables.lam, tables.nu, tables.etas, eta_idx,
            rec.windowed, use_rates, nt, tables.omega, tables.p,
            tables.pn, tables.factor_log, uniforms, alpha, logc, states,
            jt, js, occ, ntr, tables.absorbing, wbuf, vbuf, tbuf,
        )
        if status == _kernels.OK:
            break
        if status == _kernels.NEED_UNIFORMS:
            budget *= 2
        elif status == _kernels.NEED_OUT_SPACE:
            cap_out *= 2
            jt = np.empty(cap_out)
            js = np.empty(cap_out, dtype=np.int64)
        elif status == _kernels.NEED_DEEPER_POWERS:
            return _NEED_DEEPER
        elif status == _kernels.ZERO_NORMALIZER:
            raise InfeasibleDataError(int(info), subject_id=rec.subject_id)
        else:
            raise NumericalError(
                f"path fill failed for subject {rec.subject_id!r} at "
                f"interval {info} (status {status})"
            )
    return states.copy(), jt[:opos].copy(), js[:opos].copy(), occ.copy(), ntr.copy()


def _sweep_compiled(compiled, state, config, executor=None):
    """One full Gibbs sweep; returns (new_state, complete-data loglik)."""
    params = state.params
    sweep_idx = state.sweep + 1
    use_rates = config.mode == MODE_MMPP
    tables = _SweepTables(params, compiled, config.mode)
    n = len(compiled.records)
    results = [None] * n

    def run(indices):
        def task(i):
            return i, _subject_draw(compiled, i, tables, state.seed, sweep_idx, use_rates)

        if executor is not None:
            out = executor.map(task, indices)
        else:
            out = map(task, indices)
        retry = []
        for i, res in out:
            if res is _NEED_DEEPER:
                retry.append(i)
            else:
                results[i] = res
        return retry

    pending = list(range(n))
    while pending:
        pending = run(pending)
        if pending:
            tables.deepen()

    k = params.n_states
    n_levels = compiled.n_levels
    stats = SufficientStats.zeros(k, n_levels)
    ev_states_flat = np.empty(compiled.n_events_total, dtype=np.int64)
    paths = []
    for i in range(n):
        states, jt, js, occ, ntr = results[i]
        stats.occupancy += occ
        stats.n_trans += ntr
        stats.n_initial[states[0]] += 1.0
        lo, hi = compiled.ev_starts[i], compiled.ev_starts[i + 1]
        ev_states_flat[lo:hi] = states[:-1] if compiled.records[i].windowed else states[1:-1]
        path_states = np.empty(js.size + 1, dtype=np.int64)
        path_states[0] = states[0]
        path_states[1:] = js
        paths.append(LatentPath(jt, path_states, compiled.records[i].window_end))
    unforced = ev_states_flat[~compiled.forced_flat]
    stats.n_events += np.bincount(unforced, minlength=k).astype(np.float64)
    np.add.at(stats.outcome_count, (compiled.levels_flat, ev_states_flat), 1.0)
    np.add.at(stats.outcome_total, (compiled.levels_flat, ev_states_flat),
              compiled.outcomes_flat)

    rng = stream(state.seed, DOMAIN_PARAMS, sweep_idx)
    variance = params.outcome.variance if isinstance(params.outcome, GaussianOutcome) else 1.0
    new_params = _draw_params(params, config.prior, stats, rng, variance)
    loglik = _complete_loglik(new_params, stats, compiled, ev_states_flat)
    new_state = ChainState(new_params, paths, stats, sweep_idx, state.seed)
    return new_state, loglik


def _complete_loglik(params, stats, compiled, ev_states_flat):
    """Complete-data log-likelihood of the stored paths and data."""
    live = params.gen.live
    ll = float(xlogy(stats.n_initial[live], params.initial[live]).sum())
    free = params.gen.allowed
    q = params.gen.rates
    exposure = np.broadcast_to(stats.occupancy[:, None], q.shape)
    ll += float(xlogy(stats.n_trans[free], q[free]).sum()
                - (q[free] * exposure[free]).sum())
    lam = params.event_rates
    ll += float(xlogy(stats.n_events, lam).sum() - (lam * stats.occupancy).sum())
    if ev_states_flat.size:
        logf = params.outcome.log_density(
            compiled.outcomes_flat, compiled.levels_flat, live
        )
        ll += float(logf[np.arange(ev_states_flat.size), ev_states_flat].sum())
    return ll


def init_from_prior(config):
    """Draw initial parameters from the prior (deterministic in the seed)."""
    if config.prior is None or config.structure is None:
        raise ValueError("prior-draw initialization needs prior and structure")
    gen_mask = config.structure
    k = gen_mask.n_states
    rng = stream(config.seed, DOMAIN_INIT)
    prior = config.prior
    live = gen_mask.live
    free = gen_mask.allowed
    q = np.zeros((k, k))
    q[free] = rng.gamma(prior.trans_shape[free], 1.0 / prior.trans_rate[free])
    np.fill_diagonal(q, -q.sum(axis=1))
    gen = gen_mask.with_rates(q)
    lam = np.zeros(k)
    lam[live] = rng.gamma(prior.rate_shape[live], 1.0 / prior.rate_rate[live])
    nu = np.zeros(k)
    nu[live] = rng.dirichlet(prior.initial_conc[live])
    if config.outcome_kind == "gaussian":
        m0, v0 = (np.broadcast_to(p, (k,)).astype(np.float64)
                  for p in prior.outcome_prior)
        means = np.zeros(k)
        means[live] = rng.normal(m0[live], np.sqrt(v0[live]))
        outcome = GaussianOutcome(means, config.outcome_variance)
    elif config.outcome_kind == "poisson":
        a, b = (np.broadcast_to(p, (config.n_levels, k)).astype(np.float64)
                for p in prior.outcome_prior)
        cells = np.zeros((config.n_levels, k))
        cells[:, live] = rng.gamma(a[:, live], 1.0 / b[:, live])
        outcome = PoissonOutcome(cells)
    else:
        raise ValueError(f"unknown outcome kind {config.outcome_kind!r}")
    return ModelParams(gen, lam, nu, outcome)


def init_from_data(config, records):
    """Orientation-neutral start built from pooled data moments.

    Every live state begins identical: the pooled event rate, the pooled
    outcome moments per covariate level, a uniform initial distribution,
    and free transition rates sized so a subject traverses the live
    states about once per average window.  Starting symmetric matters
    when the structure is not: an absorbing or forbidden entry breaks
    label exchangeability, and a start that plants the wrong state
    ordering can hold the chain in a mirrored labeling that later sweeps
    cannot undo.  A symmetric start leaves the orientation to the data.
    Deterministic: no randomness is consumed.
    """
    if config.structure is None:
        raise ValueError("data-moment initialization needs structure")
    gen_mask = config.structure
    k = gen_mask.n_states
    live = gen_mask.live
    n_live = int(live.sum())
    total_t = float(sum(r.window_end for r in records))
    n_rate = sum(r.n_events - (1 if r.windowed else 0) for r in records)
    lam = np.zeros(k)
    lam[live] = max(n_rate / total_t, 1e-3) if total_t > 0 else 1.0
    mean_window = total_t / len(records) if records else 1.0
    q = np.zeros((k, k))
    q[gen_mask.allowed] = n_live / max(mean_window, 1e-12)
    np.fill_diagonal(q, -q.sum(axis=1))
    nu = np.zeros(k)
    nu[live] = 1.0 / n_live
    if config.outcome_kind == "gaussian":
        vals = [v for r in records for v in r.outcomes]
        means = np.zeros(k)
        means[live] = float(np.mean(vals)) if vals else 0.0
        outcome = GaussianOutcome(means, config.outcome_variance)
    else:
        cells = np.zeros((config.n_levels, k))
        for lev in range(config.n_levels):
            vals = [v for r in records for v in r.outcomes[r.levels == lev]]
            cells[lev, live] = max(float(np.mean(vals)), 1e-3) if vals else 1.0
        outcome = PoissonOutcome(cells)
    return ModelParams(gen_mask.with_rates(q), lam, nu, outcome)


def gibbs_sweep(state, records, config):
    """Advance the chain by one sweep over the given records.

    Randomness derives from (state.seed, state.sweep + 1), so repeated
    calls from the same state are reproducible and thread count never
    changes the result.
    """
    compiled = _CompiledData(records, state.params.n_states,
                             state.params.outcome.n_levels)
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            new_state, _ = _sweep_compiled(compiled, state, config, executor=pool)
    else:
        new_state, _ = _sweep_compiled(compiled, state, config)
    return new_state


def fresh_state(params, seed):
    """Chain state before any sweep: no paths, zeroed statistics."""
    return ChainState(
        params,
        [],
        SufficientStats.zeros(params.n_states, params.outcome.n_levels),
        0,
        seed,
    )


def run_chain(config, records, init="data-moments"):
    """Run the Gibbs sampler and return the retained posterior samples.

    Parameters
    ----------
    config : SamplerConfig
    records : sequence of SubjectRecord
    init : ModelParams, "data-moments" or "prior-draw"
        Starting parameters.  The default is the deterministic pooled
        start from ``init_from_data``; "prior-draw" starts from a seeded
        prior draw instead.

    Returns
    -------
    list of PosteriorSample
        Every thinning-th sweep after burn_in, in sweep order.
    """
    if isinstance(init, str):
        if init == "prior-draw":
            params = init_from_prior(config)
        elif init == "data-moments":
            params = init_from_data(config, records)
        else:
            raise ValueError(f"unknown init {init!r}")
        user_init = False
    else:
        params = init
        user_init = True
    compiled = _CompiledData(records, params.n_states, params.outcome.n_levels)
    state = fresh_state(params, config.seed)
    samples = []
    pool = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    try:
        for s in range(1, config.iterations + 1):
            try:
                state, loglik = _sweep_compiled(compiled, state, config, executor=pool)
            except InfeasibleDataError as err:
                if user_init and s == 1:
                    raise NumericalError(
                        f"{err}; the supplied initial parameters give the data "
                        f"zero likelihood - try init='data-moments'"
                    ) from err
                raise
            if s > config.burn_in and (s - config.burn_in - 1) % config.thinning == 0:
                samples.append(PosteriorSample(s, state.params, loglik))
    finally:
        if pool is not None:
            pool.shutdown()
    return samples
