"""Fit a progressive three-state model with an unobserved death state.

Run from the repository root:

    python3 demos/death_model.py

Subjects move healthy -> ill -> dead.  Death is absorbing and silent:
it produces no event, no outcome, and no tombstone in the data; its
only trace is that a subject's event stream goes quiet early.  Events
carry Poisson-count outcomes whose mean depends on both the latent
state and an observed covariate level, and each subject enters the
study at an event (the windowed convention), so times start at 0.

The chain is shorter than the shipped preset to keep the demo quick.
"""

import warnings

import numpy as np

from mmpp_outcome import (
    GeneratorMatrix,
    ModelParams,
    PoissonOutcome,
    PriorConfig,
    SamplerConfig,
    run_chain,
    simulate_dataset,
    summarize,
)

# healthy (1) and ill (2) are live; dead (3) is absorbing.  No recovery:
# the ill -> healthy rate is structurally zero.
gen = GeneratorMatrix.from_rates(
    [[-0.21, 0.20, 0.01],
     [0.0, -0.05, 0.05],
     [0.0, 0.0, 0.0]],
    absorbing=[2],
    forbidden=[(1, 0)],
)

# One Poisson mean per (covariate level, state) cell; the dead column
# is zero and never updated.
cells = np.array([
    [0.50, 2.16, 0.0],
    [0.44, 1.46, 0.0],
])
truth = ModelParams(
    gen,
    event_rates=[6.0, 10.0, 0.0],
    initial=[0.7, 0.3, 0.0],
    outcome=PoissonOutcome(cells),
)

records, paths = simulate_dataset(
    truth, n_subjects=120, window_end=10.0, seed=21,
    windowed=True, level_probs=(0.35, 0.65),
)
deaths = sum(p.states[-1] == 2 for p in paths)
print(f"simulated {len(records)} subjects, {deaths} unobserved deaths")

with warnings.catch_warnings():
    # Gamma(0.1, 0.1) on the outcome cells is deliberately diffuse and
    # triggers the shape < 1 mixing warning; expected here.
    warnings.simplefilter("ignore", UserWarning)
    prior = PriorConfig.build(gen, trans=(1.0, 0.125), rate=(1.0, 0.125),
                              initial=1.0, outcome=(0.1, 0.1),
                              outcome_kind="poisson")
    config = SamplerConfig(iterations=800, burn_in=200, seed=5,
                           prior=prior, structure=gen,
                           outcome_kind="poisson", n_levels=2)
    samples = run_chain(config, records)

# No relabeling here: the absorbing state breaks the symmetry, so the
# labels are already identified.
summaries = summarize(samples)

true_values = {
    "lambda_1": 6.0, "lambda_2": 10.0,
    "q_1_2": 0.20, "q_1_3": 0.01, "q_2_3": 0.05,
    "mu_0_1": 0.50, "mu_0_2": 2.16,
    "mu_1_1": 0.44, "mu_1_2": 1.46,
    "nu_1": 0.7, "nu_2": 0.3,
}
print(f"\n{'parameter':<9} {'truth':>6} {'median':>8} {'95% interval':>18}")
for s in summaries:
    covered = "" if s.lo95 <= true_values[s.name] <= s.hi95 else "  <- missed"
    print(f"{s.name:<9} {true_values[s.name]:>6.2f} {s.median:>8.3f} "
          f"[{s.lo95:>7.3f}, {s.hi95:>6.3f}]{covered}")

# A 95% interval on a single cohort of this size can narrowly miss a
# parameter or two; the shipped preset uses 500 subjects, where every
# interval comfortably brackets the truth across replications.
