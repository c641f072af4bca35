"""Model parameters, priors, outcome families and sufficient statistics.

The model: a latent continuous-time chain with generator Q and initial
distribution nu modulates a Poisson event process with per-state rates
lambda; each event carries an outcome drawn from a state-dependent
family, optionally shifted by a categorical covariate.  Absorbing states
have zero event rate and no outcome parameters, so absorption is never
observed directly.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, xlogy

__all__ = [
    "GeneratorMatrix",
    "GaussianOutcome",
    "PoissonOutcome",
    "ModelParams",
    "PriorConfig",
    "SufficientStats",
    "extract_sufficient_stats",
    "complete_data_loglik",
    "transition_loglik",
    "event_count_loglik",
    "outcome_loglik",
    "log_linear_coefficients",
]

_ROWSUM_TOL = 1e-9


@dataclass(frozen=True)
class GeneratorMatrix:
    """Conservative generator with structural-zero and absorbing-state masks.

    Parameters
    ----------
    rates : (K, K) ndarray
        Generator: non-negative off-diagonals, rows summing to zero.
    allowed : (K, K) ndarray of bool
        Off-diagonal entries free to be positive.  Forbidden entries must
        be exactly zero; absorbing rows are entirely forbidden.
    absorbing : (K,) ndarray of bool
        States with no exit, no events and no outcomes.
    """

    rates: np.ndarray
    allowed: np.ndarray
    absorbing: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.rates, dtype=np.float64)
        k = q.shape[0]
        if q.ndim != 2 or q.shape != (k, k) or k < 1:
            raise ValueError("rates must be a square matrix")
        allowed = np.asarray(self.allowed, dtype=bool)
        absorbing = np.asarray(self.absorbing, dtype=bool)
        object.__setattr__(self, "rates", q)
        object.__setattr__(self, "allowed", allowed)
        object.__setattr__(self, "absorbing", absorbing)
        if allowed.shape != (k, k) or absorbing.shape != (k,):
            raise ValueError("mask shapes must match the rate matrix")
        if not np.all(np.isfinite(q)):
            raise ValueError("rates must be finite")
        off = ~np.eye(k, dtype=bool)
        if np.any(q[off] < 0):
            raise ValueError("off-diagonal rates must be non-negative")
        if np.any(np.abs(q.sum(axis=1)) > _ROWSUM_TOL):
            raise ValueError("generator rows must sum to zero")
        if np.any(allowed[np.eye(k, dtype=bool)]):
            raise ValueError("diagonal entries cannot be in the allowed mask")
        if np.any(allowed[absorbing, :]):
            raise ValueError("absorbing rows cannot have allowed transitions")
        if np.any(q[off & ~allowed] != 0.0):
            raise ValueError("structurally forbidden rates must be exactly zero")
        if np.all(absorbing):
            raise ValueError("at least one state must be non-absorbing")

    @classmethod
    def from_rates(cls, rates, absorbing=(), forbidden=()):
        """Build masks from an absorbing-state list and forbidden (l, m) pairs."""
        q = np.asarray(rates, dtype=np.float64)
        k = q.shape[0]
        absorbing_mask = np.zeros(k, dtype=bool)
        absorbing_mask[list(absorbing)] = True
        allowed = ~np.eye(k, dtype=bool)
        allowed[absorbing_mask, :] = False
        for l, m in forbidden:
            allowed[l, m] = False
        return cls(q, allowed, absorbing_mask)

    @property
    def n_states(self):
        return self.rates.shape[0]

    @property
    def live(self):
        """Boolean mask of non-absorbing states."""
        return ~self.absorbing

    def with_rates(self, rates):
        """Same masks, new rate values (validated)."""
        return GeneratorMatrix(np.asarray(rates, dtype=np.float64), self.allowed, self.absorbing)


@dataclass(frozen=True)
class GaussianOutcome:
    """Per-state Gaussian outcome with known, shared variance.

    Covariate levels do not shift this family; records still carry a
    level column (constant 0) so both families share one data layout.
    """

    means: np.ndarray
    variance: float = 1.0

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.means, dtype=np.float64))
        object.__setattr__(self, "means", m)
        if not np.all(np.isfinite(m)):
            raise ValueError("means must be finite")
        if not self.variance > 0:
            raise ValueError("variance must be positive")

    @property
    def n_levels(self):
        return 1

    def log_density(self, outcomes, levels, live):
        """(n, K) log f(o_e | state k); -inf on absorbing states."""
        o = np.asarray(outcomes, dtype=np.float64)
        out = -0.5 * (o[:, None] - self.means[None, :]) ** 2 / self.variance
        out -= 0.5 * math.log(2.0 * math.pi * self.variance)
        out[:, ~live] = -np.inf
        return out

    def sample(self, states, levels, rng):
        return rng.normal(self.means[states], math.sqrt(self.variance))

    def param_names(self, live):
        return [f"beta_{k + 1}" for k in np.nonzero(live)[0]]

    def param_values(self, live):
        return self.means[live].copy()


@dataclass(frozen=True)
class PoissonOutcome:
    """Poisson counts with one mean per (covariate level, state) cell."""

    cell_means: np.ndarray

    def __post_init__(self):
        mu = np.atleast_2d(np.asarray(self.cell_means, dtype=np.float64))
        object.__setattr__(self, "cell_means", mu)
        if not np.all(np.isfinite(mu)):
            raise ValueError("cell means must be finite")

    @property
    def n_levels(self):
        return self.cell_means.shape[0]

    def log_density(self, outcomes, levels, live):
        o = np.asarray(outcomes, dtype=np.float64)
        c = np.asarray(levels, dtype=np.int64)
        mu = self.cell_means[c, :]  # (n, K)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = xlogy(o[:, None], mu) - mu - gammaln(o + 1.0)[:, None]
        out[:, ~live] = -np.inf
        return out

    def sample(self, states, levels, rng):
        return rng.poisson(self.cell_means[levels, states]).astype(np.float64)

    def param_names(self, live):
        names = []
        for c in range(self.n_levels):
            names += [f"mu_{c}_{k + 1}" for k in np.nonzero(live)[0]]
        return names

    def param_values(self, live):
        return self.cell_means[:, live].ravel().copy()


def log_linear_coefficients(cell_means):
    """Log-linear coefficients implied by per-level Poisson cell means.

    With level 0 as the reference, row 1 holds log mu_0k and row c > 1
    holds log mu_{c-1,k} - log mu_0k, the effect of level c - 1.
    """
    mu = np.atleast_2d(np.asarray(cell_means, dtype=np.float64))
    if np.any(mu <= 0):
        raise ValueError("cell means must be positive")
    out = np.log(mu)
    out[1:] -= out[0]
    return out


@dataclass(frozen=True)
class ModelParams:
    """Full parameter set Theta = (Q, lambda, nu, outcome family)."""

    gen: GeneratorMatrix
    event_rates: np.ndarray
    initial: np.ndarray
    outcome: GaussianOutcome | PoissonOutcome

    def __post_init__(self):
        lam = np.asarray(self.event_rates, dtype=np.float64)
        nu = np.asarray(self.initial, dtype=np.float64)
        object.__setattr__(self, "event_rates", lam)
        object.__setattr__(self, "initial", nu)
        k = self.gen.n_states
        if lam.shape != (k,) or nu.shape != (k,):
            raise ValueError("event_rates and initial must have one entry per state")
        if not np.all(np.isfinite(lam)) or np.any(lam < 0):
            raise ValueError("event rates must be finite and non-negative")
        if np.any(lam[self.gen.absorbing] != 0.0):
            raise ValueError("absorbing states must have zero event rate")
        if np.any(nu < 0) or abs(nu.sum() - 1.0) > 1e-9:
            raise ValueError("initial distribution must be a probability vector")
        if np.any(nu[self.gen.absorbing] != 0.0):
            raise ValueError("initial distribution cannot weight absorbing states")

    @property
    def n_states(self):
        return self.gen.n_states


def _broadcast_pair(value, shape, what):
    pair = np.asarray(value, dtype=np.float64)
    if pair.shape == (2,):
        return np.broadcast_to(pair[0], shape).copy(), np.broadcast_to(pair[1], shape).copy()
    if pair.shape == (2,) + shape:
        return pair[0].copy(), pair[1].copy()
    raise ValueError(f"{what} must be a (shape, rate) pair or a pair of arrays of shape {shape}")


@dataclass(frozen=True)
class PriorConfig:
    """Conjugate prior hyperparameters.

    Gamma priors use the shape/rate convention throughout.  Shapes below
    1 put a density spike at zero and are known to mix poorly, so they
    draw a warning (never an error).
    """

    trans_shape: np.ndarray
    trans_rate: np.ndarray
    rate_shape: np.ndarray
    rate_rate: np.ndarray
    initial_conc: np.ndarray
    outcome_prior: tuple
    outcome_kind: str = "gaussian"

    @classmethod
    def build(cls, gen, trans=(1.0, 1.0), rate=(1.0, 1.0), initial=1.0, outcome=None,
              outcome_kind="gaussian"):
        """Broadcast scalar hyperparameters over a generator's free entries.

        ``outcome`` is ``(m0, v0)`` for the Gaussian family (prior mean and
        variance of each state mean) or ``(a, b)`` Gamma shape/rate for
        Poisson cell means, broadcastable to the cell grid.
        """
        k = gen.n_states
        ts, tr = _broadcast_pair(trans, (k, k), "trans prior")
        rs, rr = _broadcast_pair(rate, (k,), "rate prior")
        conc = np.broadcast_to(np.asarray(initial, dtype=np.float64), (k,)).copy()
        if outcome is None:
            outcome = (0.0, 1.0) if outcome_kind == "gaussian" else (1.0, 1.0)
        prior = cls(ts, tr, rs, rr, conc,
                    tuple(np.asarray(p, dtype=np.float64) for p in outcome), outcome_kind)
        prior.validate(gen)
        return prior

    def validate(self, gen):
        k = gen.n_states
        for arr, shape, what in [
            (self.trans_shape, (k, k), "trans_shape"),
            (self.trans_rate, (k, k), "trans_rate"),
            (self.rate_shape, (k,), "rate_shape"),
            (self.rate_rate, (k,), "rate_rate"),
            (self.initial_conc, (k,), "initial_conc"),
        ]:
            if np.asarray(arr).shape != shape:
                raise ValueError(f"{what} must have shape {shape}")
        free = gen.allowed
        live = gen.live
        if np.any(self.trans_shape[free] <= 0) or np.any(self.trans_rate[free] <= 0):
            raise ValueError("transition-rate prior must be positive on free entries")
        if np.any(self.rate_shape[live] <= 0) or np.any(self.rate_rate[live] <= 0):
            raise ValueError("event-rate prior must be positive on live states")
        if np.any(self.initial_conc[live] <= 0):
            raise ValueError("initial-distribution concentration must be positive")
        if self.outcome_kind == "gaussian":
            if np.any(self.outcome_prior[1] <= 0):
                raise ValueError("Gaussian outcome prior variance must be positive")
        elif self.outcome_kind == "poisson":
            if np.any(self.outcome_prior[0] <= 0) or np.any(self.outcome_prior[1] <= 0):
                raise ValueError("Poisson outcome prior must be positive")
        else:
            raise ValueError(f"unknown outcome kind {self.outcome_kind!r}")
        shapes = list(self.trans_shape[free]) + list(self.rate_shape[live])
        if self.outcome_kind == "poisson":
            shapes += list(np.atleast_1d(self.outcome_prior[0]).ravel())
        if min(shapes, default=1.0) < 1.0:
            warnings.warn(
                "Gamma prior shape < 1 puts a density spike at zero rates; "
                "expect poor mixing",
                UserWarning,
                stacklevel=2,
            )


@dataclass
class SufficientStats:
    """Complete-data counts and exposures aggregated over subjects.

    ``occupancy`` accrues live-state time only: a path is counted up to
    absorption, never beyond, so absorbing entries stay 0.  ``n_events``
    excludes forced first events; ``outcome_count``/``outcome_total``
    include them (a forced event still shows its outcome).
    """

    n_trans: np.ndarray
    occupancy: np.ndarray
    n_events: np.ndarray
    n_initial: np.ndarray
    outcome_count: np.ndarray
    outcome_total: np.ndarray

    @classmethod
    def zeros(cls, n_states, n_levels):
        return cls(
            n_trans=np.zeros((n_states, n_states)),
            occupancy=np.zeros(n_states),
            n_events=np.zeros(n_states),
            n_initial=np.zeros(n_states),
            outcome_count=np.zeros((n_levels, n_states)),
            outcome_total=np.zeros((n_levels, n_states)),
        )

    def __iadd__(self, other):
        self.n_trans += other.n_trans
        self.occupancy += other.occupancy
        self.n_events += other.n_events
        self.n_initial += other.n_initial
        self.outcome_count += other.outcome_count
        self.outcome_total += other.outcome_total
        return self


def extract_sufficient_stats(path, record, n_states, n_levels, absorbing=None):
    """Exact sufficient statistics of one (path, record) pair.

    Parameters
    ----------
    path : LatentPath
        Latent trajectory covering the record's window.
    record : SubjectRecord
        Observed events; every event time must fall in the window.
    n_states, n_levels : int
        Sizes of the state space and the covariate level grid.
    absorbing : (K,) bool ndarray, optional
        States whose occupancy is not accrued.
    """
    if absorbing is None:
        absorbing = np.zeros(n_states, dtype=bool)
    stats = SufficientStats.zeros(n_states, n_levels)
    if path.window_end != record.window_end:
        raise ValueError("path and record windows differ")

    states = path.states
    stats.n_initial[states[0]] += 1
    if path.n_jumps:
        np.add.at(stats.n_trans, (states[:-1], states[1:]), 1)
    starts, ends, seg_states = path.segments()
    keep = ~absorbing[seg_states]
    np.add.at(stats.occupancy, seg_states[keep], (ends - starts)[keep])

    if record.n_events:
        ev_states = path.state_at(record.times)
        first_forced = 1 if record.windowed else 0
        np.add.at(stats.n_events, ev_states[first_forced:], 1)
        np.add.at(stats.outcome_count, (record.levels, ev_states), 1)
        np.add.at(stats.outcome_total, (record.levels, ev_states), record.outcomes)
    return stats


def transition_loglik(stats, gen):
    """Chain term: sum over allowed l != m of N_lm log q_lm - q_lm R_l."""
    q = gen.rates
    free = gen.allowed
    if np.any(stats.n_trans[~free] != 0):
        return -np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = xlogy(stats.n_trans[free], q[free])
    if np.any(np.isneginf(terms)):
        return -np.inf
    rows = np.nonzero(free)[0]
    return float(terms.sum() - (q[free] * stats.occupancy[rows]).sum())


def event_count_loglik(stats, event_rates, live=None):
    """Point-process term: sum over live states of N_k log lambda_k - lambda_k R_k."""
    lam = np.asarray(event_rates, dtype=np.float64)
    if live is None:
        live = np.ones(lam.shape, dtype=bool)
    if np.any(stats.n_events[~live] != 0):
        return -np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = xlogy(stats.n_events[live], lam[live])
    if np.any(np.isneginf(terms)):
        return -np.inf
    return float(terms.sum() - (lam[live] * stats.occupancy[live]).sum())


def outcome_loglik(params, path, record):
    """Outcome term: sum of log f(o_t | state at tau_t, level) over all events."""
    if record.n_events == 0:
        return 0.0
    ev_states = path.state_at(record.times)
    logf = params.outcome.log_density(record.outcomes, record.levels, params.gen.live)
    return float(logf[np.arange(record.n_events), ev_states].sum())


def complete_data_loglik(params, paths, records):
    """Joint log-density of paths, event times and outcomes given Theta.

    Accepts one (path, record) pair or parallel sequences; states outside
    the structural masks (events in absorbing states, forbidden jumps,
    initial mass on zero-probability states) give -inf.
    """
    from .records import LatentPath

    if isinstance(paths, LatentPath):
        paths, records = [paths], [records]
    gen = params.gen
    total = 0.0
    for path, record in zip(paths, records, strict=True):
        stats = extract_sufficient_stats(
            path, record, gen.n_states, params.outcome.n_levels, gen.absorbing
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            init = xlogy(stats.n_initial, params.initial).sum()
        if np.isnan(init) or np.isneginf(init):
            return -np.inf
        total += float(init)
        total += transition_loglik(stats, gen)
        total += event_count_loglik(stats, params.event_rates, gen.live)
        total += outcome_loglik(params, path, record)
    return total
