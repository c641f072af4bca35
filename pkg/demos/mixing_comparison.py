"""How much does event timing help the sampler mix?

Run from the repository root:

    python3 demos/mixing_comparison.py

Three fits of the same two-state design, each stripping away one source
of information about the latent state:

* separated: event rates 4 vs 12 and outcome means -1 vs +1, so both
  the event clock and the outcomes point at the state;
* overlap: outcome means 0.8 vs 1.0, leaving the event clock to do
  almost all the work;
* timing ignored: same overlapping truth, but the fit conditions only
  on event counts and outcomes (the timing-blind mode), so the latent
  path is pinned down by far less data.

Less information means stronger posterior coupling between the path
and the rates, which shows up as a larger integrated autocorrelation
time (IACT) for the switching rate q_1_2.  Chains here are short, so
expect the gap, not the exact values, to be stable across seeds.
"""

from mmpp_outcome import preset_config, run_experiment

RUNS = [
    ("separated", "scenario1"),
    ("overlap", "scenario3"),
    ("timing ignored", "scenario4"),
]

print(f"{'design':<15} {'IACT q_1_2':>10} {'ESS':>7}")
for label, preset in RUNS:
    config = preset_config(preset)
    result = run_experiment(config, sim_seed=3, fit_seed=3,
                            iterations=1500, burn_in=300)
    summary = next(s for s in result.summaries if s.name == "q_1_2")
    flag = "  (low confidence)" if summary.low_confidence else ""
    print(f"{label:<15} {summary.iact:>10.1f} {summary.ess:>7.0f}{flag}")

# With full-length chains (the shipped presets run 10000 sweeps) the
# ordering is sharp: the separated design mixes an order of magnitude
# faster than the timing-blind fit of the overlapping one.
