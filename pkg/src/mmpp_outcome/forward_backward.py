"""Forward filtering over event nodes and exact backward state draws.

The filter runs on a node lattice: one node per observed event plus a
final node at the window end, preceded by a bare initial node when the
record does not start with a forced time-0 event.  Each step propagates
through eta = expm((Q - Lambda) dt), whose (i, k) entry is the
probability of moving i -> k with no events in between; in
point-process-blind mode the plain transition kernel expm(Q dt) is used
instead and event counts carry no filtering information.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import InfeasibleDataError, NumericalError
from .linalg import expm_batch

__all__ = ["ForwardLattice", "EventStateDraw", "forward_filter", "backward_sample"]

MODE_MMPP = "mmpp"
MODE_CTHMM = "cthmm-only"


def node_times_for(record):
    """Node time grid for a record: events plus the window end.

    A non-windowed record gets a bare initial node at time 0 carrying the
    initial distribution alone.
    """
    if record.windowed:
        return np.concatenate([record.times, [record.window_end]])
    return np.concatenate([[0.0], record.times, [record.window_end]])


@dataclass(frozen=True)
class ForwardLattice:
    """Scaled forward variables over the node grid of one record.

    Attributes
    ----------
    node_times : (n_nodes,) ndarray
        Event nodes plus the window end; a leading 0.0 marks the bare
        initial node of non-windowed records.
    alphas : (n_nodes, K) ndarray
        Per-node scaled forward vectors, each summing to 1.
    log_norms : (n_nodes,) ndarray
        Per-node log normalizers; their sum is the log marginal.
    etas : (n_nodes - 1, K, K) ndarray
        Cached inter-node transition kernels.
    windowed : bool
    mode : str
        "mmpp" or "cthmm-only".
    """

    node_times: np.ndarray
    alphas: np.ndarray
    log_norms: np.ndarray
    etas: np.ndarray
    windowed: bool
    mode: str

    @property
    def log_marginal(self):
        """Log marginal likelihood of the record given the parameters."""
        return float(self.log_norms.sum())


@dataclass(frozen=True)
class EventStateDraw:
    """Jointly drawn latent states at the lattice nodes.

    states[i] is the latent state at node_times[i]; the last entry is
    the state at the window end, the only node where a death state can
    appear.
    """

    node_times: np.ndarray
    states: np.ndarray


def forward_filter(params, record, mode=MODE_MMPP):
    """Run the scaled forward recursion for one record.

    Parameters
    ----------
    params : ModelParams
    record : SubjectRecord
    mode : str
        "mmpp" uses expm((Q - Lambda) dt) kernels and multiplies the
        event rate at each event node; "cthmm-only" uses expm(Q dt) and
        ignores event timing information.

    Returns
    -------
    ForwardLattice

    Raises
    ------
    InfeasibleDataError
        If some node's forward vector is identically zero (e.g. an
        outcome impossible under every reachable state).
    """
    if mode not in (MODE_MMPP, MODE_CTHMM):
        raise ValueError(f"unknown mode {mode!r}")
    q = params.gen.rates
    lam = params.event_rates
    g = q - np.diag(lam) if mode == MODE_MMPP else q
    times = node_times_for(record)
    deltas = np.diff(times)
    etas = expm_batch(g, deltas)
    eta_idx = np.arange(deltas.size, dtype=np.int64)
    logf = params.outcome.log_density(record.outcomes, record.levels, params.gen.live)
    n_nodes = times.size
    alpha = np.empty((n_nodes, lam.size))
    logc = np.empty(n_nodes)
    status, info = _kernels.forward_pass(
        logf, lam, params.initial, etas, eta_idx,
        record.windowed, mode == MODE_MMPP, alpha, logc,
    )
    if status != _kernels.OK:
        raise InfeasibleDataError(int(info), subject_id=record.subject_id)
    return ForwardLattice(times, alpha, logc, etas, record.windowed, mode)


def backward_sample(lattice, rng):
    """Draw the latent states at all lattice nodes from their joint law.

    The draw is exact: the final node follows the normalized forward
    vector and earlier nodes follow backward weights alpha * eta.  The
    event-rate factor cancels from every backward weight (the next
    state is fixed while conditioning), so the draw needs only the
    lattice.

    Returns
    -------
    EventStateDraw
    """
    n_nodes = lattice.alphas.shape[0]
    uniforms = rng.random(n_nodes)
    states = np.empty(n_nodes, dtype=np.int64)
    eta_idx = np.arange(lattice.etas.shape[0], dtype=np.int64)
    status, info = _kernels.backward_draw(
        lattice.alphas, lattice.etas, eta_idx, uniforms, states
    )
    if status != _kernels.OK:
        raise NumericalError(f"backward draw found no support at node {info}")
    return EventStateDraw(lattice.node_times, states)
