"""Low-level sampling kernels shared by the filter and path samplers.

Every kernel consumes pre-drawn uniforms from an explicit buffer instead
of holding an RNG, so draws are reproducible no matter how subjects are
scheduled across threads.  Kernels never raise: they report trouble
through integer status codes and the caller translates those into typed
errors or enlarges buffers and retries (reruns are deterministic because
the uniform buffer is re-read from the start).

Compiled with numba when available; the pure-Python fallback runs the
same code paths, only slower.
"""

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


OK = 0
ZERO_NORMALIZER = 1
DEAD_END = 2
INFEASIBLE = 3
NEED_UNIFORMS = 4
NEED_OUT_SPACE = 5
NEED_DEEPER_POWERS = 6

# relative mass the truncated n-series may leave uncovered
_TAIL_RTOL = 1e-12
# virtual-jump count above which truncation becomes a hard error
HARD_N_CAP = 10_000


@njit(cache=True, nogil=True)
def forward_pass(logf, lam, nu, etas, eta_idx, windowed, use_rates, alpha, logc):
    """Scaled forward recursion over event nodes plus the window-end node.

    Node layout: node 0 is the forced time-0 event (windowed) or a bare
    initial node carrying nu alone; the last node is the window end.
    Outcome log-densities are max-shifted per node before exponentiation
    so arbitrarily bad parameter values cannot underflow the filter.
    Returns (status, node_index_of_failure).
    """
    n_nodes = alpha.shape[0]
    k_states = alpha.shape[1]
    # node 0
    if windowed:
        m = -np.inf
        for k in range(k_states):
            if nu[k] > 0.0 and logf[0, k] > m:
                m = logf[0, k]
        if m == -np.inf:
            return ZERO_NORMALIZER, 0
        c = 0.0
        for k in range(k_states):
            if nu[k] > 0.0 and logf[0, k] > -np.inf:
                v = nu[k] * math.exp(logf[0, k] - m)
            else:
                v = 0.0
            alpha[0, k] = v
            c += v
        if not (c > 0.0 and math.isfinite(c)):
            return ZERO_NORMALIZER, 0
        for k in range(k_states):
            alpha[0, k] /= c
        logc[0] = math.log(c) + m
    else:
        c = 0.0
        for k in range(k_states):
            alpha[0, k] = nu[k]
            c += nu[k]
        for k in range(k_states):
            alpha[0, k] /= c
        logc[0] = math.log(c)
    for node in range(1, n_nodes):
        eta = etas[eta_idx[node - 1]]
        for k in range(k_states):
            s = 0.0
            for i in range(k_states):
                s += alpha[node - 1, i] * eta[i, k]
            alpha[node, k] = s
        if node < n_nodes - 1:
            t_obs = node if windowed else node - 1
            m = -np.inf
            for k in range(k_states):
                if alpha[node, k] > 0.0 and logf[t_obs, k] > m:
                    m = logf[t_obs, k]
            if m == -np.inf:
                return ZERO_NORMALIZER, node
            c = 0.0
            for k in range(k_states):
                if alpha[node, k] > 0.0 and logf[t_obs, k] > -np.inf:
                    v = alpha[node, k] * math.exp(logf[t_obs, k] - m)
                    if use_rates:
                        v *= lam[k]
                else:
                    v = 0.0
                alpha[node, k] = v
                c += v
            if not (c > 0.0 and math.isfinite(c)):
                return ZERO_NORMALIZER, node
            for k in range(k_states):
                alpha[node, k] /= c
            logc[node] = math.log(c) + m
        else:
            c = 0.0
            for k in range(k_states):
                c += alpha[node, k]
            if not (c > 0.0 and math.isfinite(c)):
                return ZERO_NORMALIZER, node
            for k in range(k_states):
                alpha[node, k] /= c
            logc[node] = math.log(c)
    return OK, 0


@njit(cache=True, nogil=True)
def backward_draw(alpha, etas, eta_idx, uniforms, states):
    """Joint backward draw of node states given the scaled forward lattice.

    Consumes one uniform per node: the window-end node first, then each
    earlier node in reverse order.  The event-rate factor cancels from
    the backward weights, so only alpha and eta appear.
    Returns (status, node_index_of_failure).
    """
    n_nodes = alpha.shape[0]
    k_states = alpha.shape[1]
    u = uniforms[0]
    cum = 0.0
    pick = 0
    for k in range(k_states):
        if alpha[n_nodes - 1, k] > 0.0:
            pick = k
            cum += alpha[n_nodes - 1, k]
            if cum >= u:
                break
    states[n_nodes - 1] = pick
    pos = 1
    for node in range(n_nodes - 2, -1, -1):
        eta = etas[eta_idx[node]]
        nxt = states[node + 1]
        total = 0.0
        for i in range(k_states):
            total += alpha[node, i] * eta[i, nxt]
        if not (total > 0.0):
            return DEAD_END, node
        u = uniforms[pos] * total
        pos += 1
        cum = 0.0
        pick = 0
        for i in range(k_states):
            w = alpha[node, i] * eta[i, nxt]
            if w > 0.0:
                pick = i
                cum += w
                if cum >= u:
                    break
        states[node] = pick
    return OK, 0


@njit(cache=True, nogil=True)
def fill_interval(j, k, r, delta, t0, p, pn, factor_log, wbuf, vbuf, tbuf,
                  uniforms, upos, jt_out, js_out, opos, occ, ntr, absorbing):
    """Endpoint-conditioned path fill on one inter-node interval.

    Uniformization: draw the virtual-jump count n proportional to
    Poisson(r; n) [P^n]_{jk}, fill interior states by a discrete backward
    pass through the stored power stack, place jump times as sorted
    uniforms, then discard self-transitions.  All Poisson weights are
    scaled relative to the mode so the series survives large r; the
    stored powers carry per-matrix log scale factors.

    Occupancy and transition counts accumulate into occ/ntr; true jumps
    are appended to jt_out/js_out at offset opos with absolute times
    t0 + s.  Returns (status, upos, opos, n_virtual).
    """
    k_states = p.shape[0]
    n_cap = pn.shape[0] - 1
    mode = int(r)
    if r > 0.0:
        lmode = -r + mode * math.log(r) - math.lgamma(mode + 1.0)
        log_r = math.log(r)
    else:
        lmode = 0.0
        log_r = 0.0
    pm = math.exp(-r - lmode)
    s_sum = 0.0
    n_stop = -1
    n = 0
    while True:
        if n > n_cap:
            return NEED_DEEPER_POWERS, upos, opos, 0
        if factor_log[n] > -745.0:
            w = pm * pn[n, j, k] * math.exp(factor_log[n])
        else:
            w = 0.0
        wbuf[n] = w
        s_sum += w
        pm_next = pm * r / (n + 1.0)
        if n + 2.0 > r:
            tail = pm_next / (1.0 - r / (n + 2.0))
            if s_sum > 0.0 and tail < _TAIL_RTOL * s_sum:
                n_stop = n
                break
            if s_sum == 0.0 and tail < 1e-300:
                return INFEASIBLE, upos, opos, 0
        pm = pm_next
        n += 1
        # re-enter the representable range on the way up to the mode
        if pm == 0.0 and n < mode:
            lp = -r + n * log_r - math.lgamma(n + 1.0) - lmode
            if lp > -700.0:
                pm = math.exp(lp)
    if not (s_sum > 0.0 and math.isfinite(s_sum)):
        return INFEASIBLE, upos, opos, 0
    if upos >= uniforms.shape[0]:
        return NEED_UNIFORMS, upos, opos, 0
    target = uniforms[upos] * s_sum
    upos += 1
    # inverse-CDF walk; rounding past the end lands on the last positive n
    cum = 0.0
    n_draw = 0
    for n in range(n_stop + 1):
        if wbuf[n] > 0.0:
            n_draw = n
            cum += wbuf[n]
            if cum >= target:
                break
    need = n_draw + (n_draw - 1 if n_draw >= 2 else 0)
    if upos + need > uniforms.shape[0]:
        return NEED_UNIFORMS, upos, opos, n_draw
    vbuf[0] = j
    vbuf[n_draw] = k
    for s in range(n_draw - 1, 0, -1):
        nxt = vbuf[s + 1]
        total = 0.0
        for i in range(k_states):
            total += pn[s, j, i] * p[i, nxt]
        if not (total > 0.0):
            return DEAD_END, upos, opos, n_draw
        u = uniforms[upos] * total
        upos += 1
        cum = 0.0
        pick = 0
        for i in range(k_states):
            w = pn[s, j, i] * p[i, nxt]
            if w > 0.0:
                pick = i
                cum += w
                if cum >= u:
                    break
        vbuf[s] = pick
    for s in range(n_draw):
        tbuf[s] = uniforms[upos + s] * delta
    upos += n_draw
    if n_draw > 1:
        tbuf[:n_draw].sort()
    prev_t = 0.0
    cur = j
    for s in range(1, n_draw + 1):
        nxt = vbuf[s]
        if nxt != cur:
            t_jump = tbuf[s - 1]
            if not absorbing[cur]:
                occ[cur] += t_jump - prev_t
            ntr[cur, nxt] += 1.0
            if opos >= jt_out.shape[0]:
                return NEED_OUT_SPACE, upos, opos, n_draw
            jt_out[opos] = t0 + t_jump
            js_out[opos] = nxt
            opos += 1
            prev_t = t_jump
            cur = nxt
    if not absorbing[cur]:
        occ[cur] += delta - prev_t
    return OK, upos, opos, n_draw


@njit(cache=True, nogil=True)
def fill_subject(states, node_times, omega, p, pn, factor_log, uniforms, upos,
                 jt_out, js_out, occ, ntr, absorbing, wbuf, vbuf, tbuf):
    """Fill every inter-node interval of one subject and accumulate stats.

    node_times includes the window end as its last entry; states holds
    the drawn node states in the same layout.  occ/ntr are zeroed here.
    Returns (status, interval_index_of_failure, upos, opos).
    """
    k_states = p.shape[0]
    for a in range(k_states):
        occ[a] = 0.0
        for b in range(k_states):
            ntr[a, b] = 0.0
    opos = 0
    for i in range(states.shape[0] - 1):
        j = states[i]
        k = states[i + 1]
        delta = node_times[i + 1] - node_times[i]
        if delta < 0.0:
            return INFEASIBLE, i, upos, opos
        if delta == 0.0:
            if j != k:
                return INFEASIBLE, i, upos, opos
            continue
        status, upos, opos, _ = fill_interval(
            j, k, omega * delta, delta, node_times[i], p, pn, factor_log,
            wbuf, vbuf, tbuf, uniforms, upos, jt_out, js_out, opos, occ, ntr,
            absorbing,
        )
        if status != OK:
            return status, i, upos, opos
    return OK, -1, upos, opos


@njit(cache=True, nogil=True)
def sweep_subject(logf, lam, nu, etas, eta_idx, windowed, use_rates,
                  node_times, omega, p, pn, factor_log, uniforms,
                  alpha, logc, states, jt_out, js_out, occ, ntr, absorbing,
                  wbuf, vbuf, tbuf):
    """One subject's share of a Gibbs sweep: filter, node draw, path fill.

    Uniform budget: the backward draw takes the first n_nodes entries,
    interval fills consume the rest.  Returns
    (status, failure_index, upos, opos).
    """
    status, info = forward_pass(logf, lam, nu, etas, eta_idx, windowed,
                                use_rates, alpha, logc)
    if status != OK:
        return status, info, 0, 0
    n_nodes = alpha.shape[0]
    if n_nodes > uniforms.shape[0]:
        return NEED_UNIFORMS, -1, 0, 0
    status, info = backward_draw(alpha, etas, eta_idx, uniforms, states)
    if status != OK:
        return status, info, n_nodes, 0
    return fill_subject(states, node_times, omega, p, pn, factor_log,
                        uniforms, n_nodes, jt_out, js_out, occ, ntr,
                        absorbing, wbuf, vbuf, tbuf)
