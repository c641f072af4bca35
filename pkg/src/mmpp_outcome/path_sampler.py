"""Endpoint-conditioned latent-path sampling via uniformization.

Between consecutive node states the latent chain is conditioned on
producing no observation events.  Augmenting the state space with an
absorbing event state turns that conditioning into plain endpoint
conditioning of a CTMC, sampled exactly by uniformization: a dominating
Poisson clock of rate Omega, the discrete kernel P = I + G/Omega, a
virtual-jump count drawn proportional to Poisson(Omega dt; n) [P^n]_jk,
a discrete backward fill of the interior states, sorted uniform jump
times, and removal of self-transitions.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InfeasibleEndpointsError, NumericalError, TruncationError
from .linalg import expm

__all__ = [
    "AugmentedGenerator",
    "IntervalPathDraw",
    "sample_conditioned_interval",
    "assemble_full_path",
]

_OMEGA_SLACK = 1.5


@dataclass(frozen=True)
class AugmentedGenerator:
    """Generator of the chain augmented with an absorbing event state.

    The block structure is [[Q - Lambda, lambda], [0, 0]]: the stored
    `live` block covers the K model states (death included) and
    `event_rates` is the column of absorption rates into the event
    state.  Conditioning an interval on "no events" restricts the
    dynamics to the live block.

    Attributes
    ----------
    live : (K, K) ndarray
        Q - diag(lambda); off-diagonals >= 0, row sums equal
        -event_rates.
    event_rates : (K,) ndarray
        Nonnegative absorption rates (zero in point-process-blind mode).
    """

    live: np.ndarray
    event_rates: np.ndarray

    def __post_init__(self):
        live = np.asarray(self.live, dtype=np.float64)
        rates = np.asarray(self.event_rates, dtype=np.float64)
        object.__setattr__(self, "live", live)
        object.__setattr__(self, "event_rates", rates)
        k = live.shape[0]
        if live.shape != (k, k) or rates.shape != (k,):
            raise ValueError("live block must be square with matching rate vector")
        off = live[~np.eye(k, dtype=bool)]
        if np.any(off < 0.0):
            raise ValueError("live-block off-diagonals must be nonnegative")
        if np.any(rates < 0.0) or not np.all(np.isfinite(rates)):
            raise ValueError("event rates must be finite and nonnegative")
        if np.any(np.abs(live.sum(axis=1) + rates) > 1e-9):
            raise ValueError("each live row plus its event rate must sum to 0")

    @classmethod
    def from_params(cls, params, mode="mmpp"):
        """Augmented generator for a parameter set.

        In "cthmm-only" mode the event state is unreachable: the live
        block is Q itself and all event rates are zero.
        """
        if mode == "mmpp":
            lam = params.event_rates
            return cls(params.gen.rates - np.diag(lam), lam)
        if mode == "cthmm-only":
            return cls(params.gen.rates.copy(), np.zeros(params.gen.n_states))
        raise ValueError(f"unknown mode {mode!r}")

    @property
    def n_states(self):
        return self.live.shape[0]

    @property
    def full(self):
        """The (K+1, K+1) generator including the event state."""
        k = self.n_states
        out = np.zeros((k + 1, k + 1))
        out[:k, :k] = self.live
        out[:k, k] = self.event_rates
        return out

    @property
    def omega(self):
        """Dominating uniformization rate: 1.5x the largest exit rate."""
        return _OMEGA_SLACK * float(np.max(-np.diag(self.live), initial=0.0))


@dataclass(frozen=True)
class IntervalPathDraw:
    """One interval's conditioned path: endpoint states plus true jumps.

    jump_times are strictly inside (0, delta); states has one more entry
    than jump_times, starting at the conditioning start state and ending
    at the conditioning end state.
    """

    jump_times: np.ndarray
    states: np.ndarray
    delta: float

    def __post_init__(self):
        t = np.asarray(self.jump_times, dtype=np.float64)
        s = np.asarray(self.states, dtype=np.int64)
        object.__setattr__(self, "jump_times", t)
        object.__setattr__(self, "states", s)
        if s.size != t.size + 1:
            raise ValueError("need one state per segment")
        if t.size:
            if np.any(t <= 0.0) or np.any(t >= self.delta):
                raise ValueError("jump times must lie strictly inside (0, delta)")
            if np.any(np.diff(t) <= 0.0):
                raise ValueError("jump times must be strictly increasing")
            if np.any(s[1:] == s[:-1]):
                raise ValueError("consecutive states must differ")


def _power_stack(p, n_cap):
    """Powers P^0..P^n_cap, each max-normalized, with cumulative log scales."""
    k = p.shape[0]
    pn = np.empty((n_cap + 1, k, k))
    factor_log = np.empty(n_cap + 1)
    pn[0] = np.eye(k)
    factor_log[0] = 0.0
    acc = 0.0
    for n in range(1, n_cap + 1):
        m = pn[n - 1] @ p
        top = m.max()
        if top <= 0.0:
            pn[n:] = 0.0
            factor_log[n:] = -np.inf
            break
        pn[n] = m / top
        acc += np.log(top)
        factor_log[n] = acc
    return pn, factor_log


def _tables(gen, r_max, omega=None):
    """Uniformized kernel and power stack deep enough for r_max.

    An omega above the minimal dominating rate may be supplied; the
    sampled path law is invariant to that choice.
    """
    if omega is None:
        omega = gen.omega
    elif omega * _OMEGA_SLACK < gen.omega:
        raise ValueError("omega must dominate every live exit rate")
    k = gen.n_states
    if omega > 0.0:
        p = np.eye(k) + gen.live / omega
    else:
        p = np.eye(k)
    n_cap = min(int(r_max + 12.0 * np.sqrt(r_max + 1.0) + 40.0), _kernels.HARD_N_CAP)
    pn, factor_log = _power_stack(p, n_cap)
    return omega, p, pn, factor_log


def uniform_budget(r):
    """Uniforms one interval fill may need, with generous headroom."""
    return int(1 + 2.0 * (r + 10.0 * np.sqrt(r + 1.0) + 30.0))


def sample_conditioned_interval(gen, j, k, delta, rng, omega=None):
    """Exact draw of the latent path on (0, delta) given both endpoints.

    Parameters
    ----------
    gen : AugmentedGenerator
    j, k : int
        Start and end states (model states; the event state is excluded
        by construction).
    delta : float
        Interval length, > 0.
    rng : numpy.random.Generator
    omega : float, optional
        Dominating rate override (must exceed every live exit rate);
        the path law does not depend on it.

    Returns
    -------
    IntervalPathDraw

    Raises
    ------
    InfeasibleEndpointsError
        If [expm(G delta)]_{jk} is numerically zero.
    TruncationError
        If the virtual-jump series needs more than 10^4 terms.
    """
    if delta <= 0.0:
        raise ValueError("delta must be positive")
    n = gen.n_states
    if not (0 <= j < n and 0 <= k < n):
        raise ValueError("endpoint states out of range")
    if expm(gen.live, delta)[j, k] <= 1e-300:
        raise InfeasibleEndpointsError(
            f"transition {j} -> {k} over {delta} has zero probability"
        )
    use_omega = gen.omega if omega is None else float(omega)
    omega_r = use_omega * delta
    use_omega, p, pn, factor_log = _tables(gen, omega_r, omega=omega)
    absorbing = np.zeros(n, dtype=bool)
    occ = np.zeros(n)
    ntr = np.zeros((n, n))
    n_cap = pn.shape[0] - 1
    wbuf = np.empty(n_cap + 1)
    vbuf = np.empty(n_cap + 1, dtype=np.int64)
    tbuf = np.empty(n_cap + 1)
    cap_out = max(64, int(4.0 * omega_r) + 16)
    jt = np.empty(cap_out)
    js = np.empty(cap_out, dtype=np.int64)
    uniforms = rng.random(uniform_budget(omega_r))
    while True:
        status, upos, opos, _ = _kernels.fill_interval(
            j, k, omega_r, delta, 0.0, p, pn, factor_log,
            wbuf, vbuf, tbuf, uniforms, 0, jt, js, 0, occ, ntr, absorbing,
        )
        if status == _kernels.OK:
            break
        if status == _kernels.NEED_UNIFORMS:
            uniforms = np.concatenate([uniforms, rng.random(uniforms.size)])
        elif status == _kernels.NEED_OUT_SPACE:
            jt = np.empty(2 * jt.size)
            js = np.empty(2 * js.size, dtype=np.int64)
        elif status == _kernels.NEED_DEEPER_POWERS:
            if n_cap >= _kernels.HARD_N_CAP:
                raise TruncationError(
                    f"virtual-jump series for r={omega_r:.3g} exceeded "
                    f"{_kernels.HARD_N_CAP} terms"
                )
            n_cap = min(2 * n_cap, _kernels.HARD_N_CAP)
            pn, factor_log = _power_stack(p, n_cap)
            wbuf = np.empty(n_cap + 1)
            vbuf = np.empty(n_cap + 1, dtype=np.int64)
            tbuf = np.empty(n_cap + 1)
        elif status == _kernels.INFEASIBLE:
            raise InfeasibleEndpointsError(
                f"transition {j} -> {k} over {delta} has zero probability"
            )
        else:
            raise NumericalError(f"interval fill failed with status {status}")
    states = np.empty(opos + 1, dtype=np.int64)
    states[0] = j
    states[1:] = js[:opos]
    return IntervalPathDraw(jt[:opos].copy(), states, delta)


def assemble_full_path(endpoints, record, interval_draws):
    """Concatenate per-interval draws into one LatentPath over [0, tau_e].

    Consecutive draws must agree with the endpoint states; no jump is
    emitted at node times, so segments spanning a node merge naturally.

    Raises
    ------
    ValueError
        If a draw's endpoints or length disagree with the node lattice
        (internal-consistency trap, not a data error).
    """
    from .records import LatentPath

    node_times = endpoints.node_times
    states = endpoints.states
    if len(interval_draws) != node_times.size - 1:
        raise ValueError(
            f"need {node_times.size - 1} interval draws, got {len(interval_draws)}"
        )
    all_times = []
    all_states = [int(states[0])]
    for i, draw in enumerate(interval_draws):
        delta = node_times[i + 1] - node_times[i]
        if abs(draw.delta - delta) > 1e-9 * max(1.0, delta):
            raise ValueError(f"draw {i} covers {draw.delta}, interval is {delta}")
        if draw.states[0] != states[i] or draw.states[-1] != states[i + 1]:
            raise ValueError(f"draw {i} endpoints disagree with the node draw")
        all_times.append(node_times[i] + draw.jump_times)
        all_states.extend(int(s) for s in draw.states[1:])
    jumps = np.concatenate(all_times) if all_times else np.empty(0)
    return LatentPath(jumps, np.asarray(all_states, dtype=np.int64), float(node_times[-1]))
