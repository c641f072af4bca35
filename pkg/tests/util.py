"""Shared construction helpers for the test suite."""

import numpy as np

from mmpp_outcome.model import (
    GaussianOutcome,
    GeneratorMatrix,
    ModelParams,
    PoissonOutcome,
)
from mmpp_outcome.records import LatentPath


def random_generator(rng, k, rate_scale=1.0, absorbing=(), forbidden=()):
    """Random valid GeneratorMatrix with the given structure."""
    q = rng.uniform(0.2, 1.2, size=(k, k)) * rate_scale
    absorbing_mask = np.zeros(k, dtype=bool)
    absorbing_mask[list(absorbing)] = True
    allowed = ~np.eye(k, dtype=bool)
    allowed[absorbing_mask, :] = False
    for l, m in forbidden:
        allowed[l, m] = False
    q[~allowed] = 0.0
    np.fill_diagonal(q, 0.0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return GeneratorMatrix(q, allowed, absorbing_mask)


def random_params(rng, k, outcome="gaussian", rate_scale=1.0, event_scale=4.0,
                  absorbing=(), forbidden=(), n_levels=2):
    """Random valid ModelParams."""
    gen = random_generator(rng, k, rate_scale, absorbing, forbidden)
    lam = rng.uniform(0.5, 1.5, size=k) * event_scale
    lam[gen.absorbing] = 0.0
    nu = rng.uniform(0.2, 1.0, size=k)
    nu[gen.absorbing] = 0.0
    nu /= nu.sum()
    if outcome == "gaussian":
        fam = GaussianOutcome(rng.normal(0.0, 1.5, size=k), 1.0)
    else:
        fam = PoissonOutcome(rng.uniform(0.3, 4.0, size=(n_levels, k)))
    return ModelParams(gen, lam, nu, fam)


def random_path(rng, k, window_end, max_jumps=6, absorbing=()):
    """Random structurally valid LatentPath (not drawn from any model)."""
    absorbing = set(absorbing)
    n_jumps = int(rng.integers(0, max_jumps + 1))
    times = np.sort(rng.uniform(0.0, window_end, size=n_jumps))
    times = np.unique(times)
    times = times[(times > 0) & (times < window_end)]
    states = [int(rng.integers(0, k))]
    while states[0] in absorbing:
        states = [int(rng.integers(0, k))]
    kept = []
    for t in times:
        if states[-1] in absorbing:
            break
        nxt = int(rng.integers(0, k))
        if nxt != states[-1]:
            kept.append(t)
            states.append(nxt)
    return LatentPath(np.asarray(kept), np.asarray(states), window_end)


def retry_flaky(check, seeds=(0, 1)):
    """Run a seeded statistical check, rerunning once on failure.

    `check` takes a seed and asserts.  A single rerun keeps genuinely
    broken code failing while absorbing the occasional unlucky draw from
    a correct sampler.
    """
    try:
        check(seeds[0])
    except AssertionError:
        check(seeds[1])


def scenario_params(which):
    """Two-state Gaussian benchmark parameter sets (scenarios 1-4)."""
    gen = GeneratorMatrix.from_rates(np.array([[-1.0, 1.0], [3.0, -3.0]]))
    lam = {1: (4.0, 12.0), 2: (8.0, 8.0)}.get(which, (4.0, 12.0))
    beta = {1: (-1.0, 1.0), 2: (-1.0, 1.0)}.get(which, (0.8, 1.0))
    return ModelParams(
        gen,
        np.asarray(lam),
        np.array([0.8, 0.2]),
        GaussianOutcome(np.asarray(beta), 1.0),
    )


def example2_params():
    """Three-state death model with a two-level Poisson outcome."""
    rates = np.array([
        [-0.21, 0.20, 0.01],
        [0.0, -0.05, 0.05],
        [0.0, 0.0, 0.0],
    ])
    gen = GeneratorMatrix.from_rates(rates, absorbing=(2,), forbidden=((1, 0), (2, 0), (2, 1)))
    coef = np.array([[-0.69, 0.77], [-0.13, -0.39]])
    mu = np.zeros((2, 3))
    mu[0, :2] = np.exp(coef[0])
    mu[1, :2] = np.exp(coef[0] + coef[1])
    return ModelParams(gen, np.array([6.0, 10.0, 0.0]), np.array([0.7, 0.3, 0.0]), PoissonOutcome(mu))


EXAMPLE2_LEVEL_PROBS = (0.35, 0.65)


def mc_backward_joint(lattice, n_draws, seed):
    """Empirical joint node-state counts from repeated backward draws."""
    from mmpp_outcome import _kernels
    from mmpp_outcome.streams import stream

    n_nodes, k = lattice.alphas.shape
    rng = stream(seed, 91)
    pows = k ** np.arange(n_nodes - 1, -1, -1)
    counts = np.zeros(k ** n_nodes)
    states = np.empty(n_nodes, dtype=np.int64)
    eta_idx = np.arange(lattice.etas.shape[0], dtype=np.int64)
    done = 0
    while done < n_draws:
        m = min(50_000, n_draws - done)
        u = rng.random((m, n_nodes))
        for r in range(m):
            status, _ = _kernels.backward_draw(
                lattice.alphas, lattice.etas, eta_idx, u[r], states
            )
            assert status == _kernels.OK
            counts[int(states @ pows)] += 1.0
        done += m
    return counts.reshape((k,) * n_nodes)


def mc_interval_stats(gen, j, k, delta, n_draws, seed, omega=None):
    """Monte Carlo moments of occupancy and jump counts on one interval.

    Returns (mean_occ, var_occ, mean_jumps, var_jumps) over exact
    endpoint-conditioned draws, for comparison against quadrature.
    """
    from mmpp_outcome import _kernels
    from mmpp_outcome.path_sampler import _tables, uniform_budget
    from mmpp_outcome.streams import stream

    use_omega = gen.omega if omega is None else omega
    r = use_omega * delta
    _, p, pn, factor_log = _tables(gen, r, omega=omega)
    n = gen.n_states
    n_cap = pn.shape[0] - 1
    wbuf, vbuf, tbuf = np.empty(n_cap + 1), np.empty(n_cap + 1, dtype=np.int64), np.empty(n_cap + 1)
    jt, js = np.empty(4096), np.empty(4096, dtype=np.int64)
    absorbing = np.zeros(n, dtype=bool)
    occ, ntr = np.zeros(n), np.zeros((n, n))
    s_occ, s_occ2 = np.zeros(n), np.zeros(n)
    s_ntr, s_ntr2 = np.zeros((n, n)), np.zeros((n, n))
    rng = stream(seed, 93)
    budget = uniform_budget(r)
    for _ in range(n_draws):
        uniforms = rng.random(budget)
        while True:
            occ[:] = 0.0
            ntr[:] = 0.0
            status, _, _, _ = _kernels.fill_interval(
                j, k, r, delta, 0.0, p, pn, factor_log, wbuf, vbuf, tbuf,
                uniforms, 0, jt, js, 0, occ, ntr, absorbing,
            )
            if status == _kernels.OK:
                break
            assert status == _kernels.NEED_UNIFORMS
            uniforms = np.concatenate([uniforms, rng.random(uniforms.size)])
        s_occ += occ
        s_occ2 += occ * occ
        s_ntr += ntr
        s_ntr2 += ntr * ntr
    mean_occ = s_occ / n_draws
    mean_ntr = s_ntr / n_draws
    return (
        mean_occ,
        s_occ2 / n_draws - mean_occ**2,
        mean_ntr,
        s_ntr2 / n_draws - mean_ntr**2,
    )
