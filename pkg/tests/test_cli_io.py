"""File formats, config validation, CLI round trips, and preset runners."""

import json
import os
import warnings

import numpy as np
import pytest

from mmpp_outcome import cli, dataio, experiments
from mmpp_outcome.errors import ConfigError, DataError
from mmpp_outcome.gibbs import PosteriorSample
from mmpp_outcome.model import (
    GaussianOutcome,
    GeneratorMatrix,
    ModelParams,
    PoissonOutcome,
)
from mmpp_outcome.records import SubjectRecord


def make_records():
    r0 = SubjectRecord("s0", np.array([0.0, 0.7, 1.3]), np.array([1.5, -0.25, 0.125]),
                       np.array([0, 1, 0]), 2.0, True)
    r1 = SubjectRecord("s1", np.array([0.4]), np.array([2.0]), np.array([1]), 1.5, False)
    r2 = SubjectRecord("s2", np.array([]), np.array([]), np.array([], dtype=np.int64),
                       3.0, False)
    return [r0, r1, r2]


def write_lines(path, lines):
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def test_dataset_round_trip(tmp_path):
    records = make_records()
    path = dataio.write_dataset(records, str(tmp_path / "data"))
    assert path.endswith(".csv")
    assert os.path.exists(str(tmp_path / "data.windows.csv"))
    back = dataio.read_dataset(path)
    assert [r.subject_id for r in back] == ["s0", "s1", "s2"]
    for orig, rec in zip(records, back):
        assert rec.windowed == orig.windowed
        assert rec.window_end == orig.window_end
        np.testing.assert_array_equal(rec.times, orig.times)
        np.testing.assert_array_equal(rec.outcomes, orig.outcomes)
        np.testing.assert_array_equal(rec.levels, orig.levels)


def test_dataset_round_trip_with_labels(tmp_path):
    records = make_records()
    labels = ["low", "high"]
    path = dataio.write_dataset(records, str(tmp_path / "data.csv"), levels=labels)
    text = open(path).read()
    assert "low" in text and "high" in text
    back = dataio.read_dataset(path, levels=labels)
    np.testing.assert_array_equal(back[0].levels, records[0].levels)
    with pytest.raises(DataError, match="needs declared levels"):
        dataio.read_dataset(path)


def test_dataset_empty_cohort(tmp_path):
    path = dataio.write_dataset([], str(tmp_path / "empty.csv"))
    assert dataio.read_dataset(path) == []


def test_read_dataset_missing_files(tmp_path):
    with pytest.raises(DataError, match="no such file"):
        dataio.read_dataset(str(tmp_path / "nope.csv"))
    data = tmp_path / "d.csv"
    write_lines(str(data), ["subject_id,time,outcome,covariate"])
    with pytest.raises(DataError, match="window sidecar missing"):
        dataio.read_dataset(str(data))


def test_read_dataset_row_errors(tmp_path):
    data = str(tmp_path / "d.csv")
    windows = str(tmp_path / "d.windows.csv")
    write_lines(windows, ["subject_id,window_end", "s0,2.0"])

    write_lines(data, ["subject_id,time,outcome,covariate", "s9,0.5,1.0,0"])
    with pytest.raises(DataError, match="not in window table"):
        dataio.read_dataset(data)

    write_lines(data, ["subject_id,time,outcome,covariate", "s0,0.5,1.0"])
    with pytest.raises(DataError, match="expected 4 fields"):
        dataio.read_dataset(data)

    write_lines(data, ["subject_id,time,outcome,covariate", "s0,0.5,1.0,high"])
    with pytest.raises(DataError, match="undeclared covariate level"):
        dataio.read_dataset(data, levels=["low"])

    # out-of-order event times are a record-level constraint
    write_lines(data, ["subject_id,time,outcome,covariate",
                       "s0,0.9,1.0,0", "s0,0.5,2.0,0"])
    with pytest.raises(DataError, match="s0"):
        dataio.read_dataset(data)

    open(data, "w").close()
    with pytest.raises(DataError, match="empty file"):
        dataio.read_dataset(data)

    write_lines(data, ["subject_id,time,outcome,covariate"])
    write_lines(windows, ["subject_id,window_end", "s0,2.0", "s0,3.0"])
    with pytest.raises(DataError, match="duplicate subject"):
        dataio.read_dataset(data)


def test_truth_round_trip(tmp_path):
    gen = GeneratorMatrix.from_rates(
        [[-0.5, 0.3, 0.2], [0.0, -0.4, 0.4], [0.0, 0.0, 0.0]],
        absorbing=(2,), forbidden=[(1, 0)])
    params = ModelParams(gen, (6.0, 10.0, 0.0), (0.3, 0.7, 0.0),
                         PoissonOutcome([[0.5, 2.2, 0.0], [0.4, 1.5, 0.0]]))
    path = str(tmp_path / "truth.json")
    dataio.write_truth(params, {"n_subjects": 4, "window_end": 2.0}, path)
    back, sim = dataio.read_truth(path)
    assert sim == {"n_subjects": 4, "window_end": 2.0}
    np.testing.assert_array_equal(back.gen.rates, params.gen.rates)
    np.testing.assert_array_equal(back.gen.allowed, params.gen.allowed)
    np.testing.assert_array_equal(back.gen.absorbing, params.gen.absorbing)
    np.testing.assert_array_equal(back.event_rates, params.event_rates)
    np.testing.assert_array_equal(back.initial, params.initial)
    np.testing.assert_array_equal(back.outcome.cell_means, params.outcome.cell_means)


def test_truth_round_trip_gaussian(tmp_path):
    gen = GeneratorMatrix.from_rates([[-1.0, 1.0], [2.0, -2.0]])
    params = ModelParams(gen, (np.pi, 12.25), (0.8, 0.2),
                         GaussianOutcome((-1.0, 1.0), 2.5))
    path = str(tmp_path / "truth.json")
    dataio.write_truth(params, {}, path)
    back, _ = dataio.read_truth(path)
    assert isinstance(back.outcome, GaussianOutcome)
    assert back.outcome.variance == 2.5
    np.testing.assert_array_equal(back.event_rates, params.event_rates)


def sample_pair():
    gen = GeneratorMatrix.from_rates([[-1.0, 1.0], [2.0, -2.0]])
    p1 = ModelParams(gen, (np.pi, 12.25), (0.8, 0.2), GaussianOutcome((-1.5, 0.75), 1.0))
    p2 = ModelParams(gen.with_rates([[-0.5, 0.5], [3.0, -3.0]]),
                     (1 / 3, 9.0), (0.25, 0.75), GaussianOutcome((np.e, -np.e), 1.0))
    return [PosteriorSample(11, p1, -123.456789012345678),
            PosteriorSample(13, p2, -98.0)]


def test_samples_round_trip(tmp_path):
    samples = sample_pair()
    path = dataio.write_samples(samples, str(tmp_path / "samples.csv"))
    sweeps, traces = dataio.read_samples(path)
    np.testing.assert_array_equal(sweeps, [11, 13])
    np.testing.assert_array_equal(traces["lambda_1"], [np.pi, 1 / 3])
    np.testing.assert_array_equal(traces["q_2_1"], [2.0, 3.0])
    np.testing.assert_array_equal(traces["beta_1"], [-1.5, np.e])
    np.testing.assert_array_equal(traces["nu_2"], [0.2, 0.75])
    np.testing.assert_array_equal(traces["loglik"], [-123.456789012345678, -98.0])
    # a directory containing samples.csv is accepted in place of the file
    sweeps2, traces2 = dataio.read_samples(str(tmp_path))
    np.testing.assert_array_equal(sweeps2, sweeps)
    np.testing.assert_array_equal(traces2["lambda_2"], traces["lambda_2"])


def test_samples_errors(tmp_path):
    with pytest.raises(DataError, match="no samples to write"):
        dataio.write_samples([], str(tmp_path / "s.csv"))
    with pytest.raises(DataError, match="no sample file"):
        dataio.read_samples(str(tmp_path / "missing.csv"))
    bad = str(tmp_path / "bad.csv")
    write_lines(bad, ["wrong,header", "1,2"])
    with pytest.raises(DataError, match="not a sample table"):
        dataio.read_samples(bad)
    write_lines(bad, ["iteration,lambda_1,loglik"])
    with pytest.raises(DataError, match="no retained samples"):
        dataio.read_samples(bad)
    write_lines(bad, ["iteration,lambda_1,loglik", "1,2.0,-3.0", "2,2.0"])
    with pytest.raises(DataError, match="ragged rows"):
        dataio.read_samples(bad)
    write_lines(bad, ["iteration,lambda_1,loglik", "1,oops,-3.0"])
    with pytest.raises(DataError):
        dataio.read_samples(bad)


def base_config():
    return {
        "model": {"n_states": 2, "outcome": "gaussian", "outcome_variance": 1.0},
        "prior": {"transition": [1.0, 0.125], "event_rate": [1.0, 0.125],
                  "initial": 1.0, "outcome": [0.0, 10000.0]},
        "sampler": {"iterations": 40, "burn_in": 10, "thinning": 2, "seed": 3},
        "simulation": {
            "n_subjects": 6, "window_end": 1.2, "seed": 0, "windowed": False,
            "truth": {
                "transition_rates": [[-1.0, 1.0], [2.0, -2.0]],
                "event_rates": [3.0, 9.0],
                "initial": [0.7, 0.3],
                "outcome_means": [-1.0, 1.0],
            },
        },
    }


def write_config(tmp_path, doc, name="config.json"):
    path = str(tmp_path / name)
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return path


def test_config_unknown_keys(tmp_path):
    doc = base_config()
    doc["extra"] = 1
    with pytest.raises(ConfigError, match="unknown key 'extra'"):
        dataio.validate_config(doc)
    doc = base_config()
    doc["sampler"]["iteration"] = 5
    with pytest.raises(ConfigError, match="'sampler'.'iteration'"):
        dataio.validate_config(doc)
    doc = base_config()
    doc["simulation"]["truth"]["event_rate"] = [1.0]
    with pytest.raises(ConfigError, match="'truth'.'event_rate'"):
        dataio.validate_config(doc)
    with pytest.raises(ConfigError, match="must be an object"):
        dataio.validate_config([1, 2])
    doc = base_config()
    doc["model"] = "nope"
    with pytest.raises(ConfigError, match="'model' must be an object"):
        dataio.validate_config(doc)


def test_load_config_parse_errors(tmp_path):
    with pytest.raises(ConfigError, match="no such file"):
        dataio.load_config(str(tmp_path / "none.json"))
    path = str(tmp_path / "syntax.json")
    write_lines(path, ['{"model": {', '"n_states": 2,,', "}}"])
    with pytest.raises(ConfigError, match=r"syntax\.json:2:"):
        dataio.load_config(path)
    good = write_config(tmp_path, base_config())
    doc = dataio.load_config(good)
    assert doc["model"]["n_states"] == 2


def test_structure_from_config_errors():
    with pytest.raises(ConfigError, match="n_states is required"):
        dataio.structure_from_config({"model": {"outcome": "gaussian"}})
    with pytest.raises(ConfigError, match="requires a 'model'"):
        dataio.structure_from_config({})
    doc = {"model": {"n_states": 2, "absorbing": [3]}}
    with pytest.raises(ConfigError, match="absorbing index 3 out of range"):
        dataio.structure_from_config(doc)
    doc = {"model": {"n_states": 2, "forbidden": [[1, 3]]}}
    with pytest.raises(ConfigError, match="out of range"):
        dataio.structure_from_config(doc)
    doc = {"model": {"n_states": 3, "absorbing": [3], "forbidden": [[1, 2], [2, 1]]}}
    gen = dataio.structure_from_config(doc)
    assert gen.absorbing[2] and not gen.allowed[0, 1] and not gen.allowed[1, 0]
    assert gen.allowed[0, 2] and gen.allowed[1, 2]


def test_covariate_level_rules():
    doc = {"model": {"n_states": 2, "outcome": "poisson",
                     "covariate_levels": ["a", "a"]}}
    with pytest.raises(ConfigError, match="distinct"):
        dataio.covariate_levels(doc)
    doc = {"model": {"n_states": 2, "outcome": "gaussian",
                     "covariate_levels": ["a", "b"]}}
    with pytest.raises(ConfigError, match="exactly one covariate level"):
        dataio.covariate_levels(doc)
    assert dataio.covariate_levels({"model": {"n_states": 2}}) == ["0"]
    doc = {"model": {"n_states": 2, "outcome": "sometimes"}}
    with pytest.raises(ConfigError, match="'gaussian' or 'poisson'"):
        dataio.covariate_levels(doc)


def test_truth_params_errors():
    doc = base_config()
    del doc["simulation"]["truth"]
    with pytest.raises(ConfigError, match="truth is required"):
        dataio.truth_params_from_config(doc)
    doc = base_config()
    del doc["simulation"]["truth"]["event_rates"]
    with pytest.raises(ConfigError, match="event_rates is required"):
        dataio.truth_params_from_config(doc)
    doc = base_config()
    doc["simulation"]["truth"]["initial"] = [0.7, 0.7]
    with pytest.raises(ConfigError, match="truth invalid"):
        dataio.truth_params_from_config(doc)
    doc = base_config()
    doc["model"]["outcome"] = "poisson"
    doc["model"]["covariate_levels"] = ["a", "b"]
    del doc["model"]["outcome_variance"]
    doc["simulation"]["truth"].pop("outcome_means")
    doc["simulation"]["truth"]["outcome_cell_means"] = [[1.0, 2.0]]
    with pytest.raises(ConfigError, match="one row per covariate level"):
        dataio.truth_params_from_config(doc)


def test_truth_params_round_trip_values():
    doc = base_config()
    params = dataio.truth_params_from_config(doc)
    np.testing.assert_array_equal(params.event_rates, [3.0, 9.0])
    np.testing.assert_array_equal(params.initial, [0.7, 0.3])
    assert params.outcome.variance == 1.0


def test_sampler_from_config(monkeypatch):
    monkeypatch.delenv(dataio.THREADS_ENV_VAR, raising=False)
    doc = base_config()
    sampler = dataio.sampler_from_config(doc)
    assert sampler.iterations == 40 and sampler.burn_in == 10
    assert sampler.thinning == 2 and sampler.seed == 3
    assert sampler.mode == "mmpp" and sampler.threads == 1
    assert sampler.outcome_kind == "gaussian" and sampler.n_levels == 1
    np.testing.assert_array_equal(sampler.prior.rate_rate, [0.125, 0.125])

    doc["sampler"]["threads"] = 3
    assert dataio.sampler_from_config(doc).threads == 3
    monkeypatch.setenv(dataio.THREADS_ENV_VAR, "2")
    assert dataio.sampler_from_config(doc).threads == 2
    assert dataio.sampler_from_config(doc, threads=5).threads == 5
    monkeypatch.setenv(dataio.THREADS_ENV_VAR, "lots")
    with pytest.raises(ConfigError, match="must be an integer"):
        dataio.sampler_from_config(doc)
    monkeypatch.delenv(dataio.THREADS_ENV_VAR)

    assert dataio.sampler_from_config(doc, mode="cthmm-only").mode == "cthmm-only"
    doc["sampler"]["mode"] = "exact"
    with pytest.raises(ConfigError, match="'mmpp' or 'cthmm-only'"):
        dataio.sampler_from_config(doc)
    doc = base_config()
    del doc["sampler"]["iterations"]
    with pytest.raises(ConfigError, match="iterations is required"):
        dataio.sampler_from_config(doc)
    doc = base_config()
    doc["sampler"]["burn_in"] = 50
    with pytest.raises(ConfigError, match="sampler block invalid"):
        dataio.sampler_from_config(doc)
    with pytest.raises(ConfigError, match="requires a 'sampler'"):
        dataio.sampler_from_config({"model": {"n_states": 2}})


def test_simulation_block_validation():
    doc = base_config()
    n, window_end, seed, windowed, probs = dataio.simulation_block(doc)
    assert (n, window_end, seed, windowed) == (6, 1.2, 0, False)
    np.testing.assert_array_equal(probs, [1.0])

    doc["simulation"]["n_subjects"] = -1
    with pytest.raises(ConfigError, match="cannot be negative"):
        dataio.simulation_block(doc)
    doc = base_config()
    del doc["simulation"]["window_end"]
    with pytest.raises(ConfigError, match="window_end is required"):
        dataio.simulation_block(doc)
    doc = base_config()
    doc["model"] = {"n_states": 2, "outcome": "poisson",
                    "covariate_levels": ["a", "b"]}
    doc["simulation"]["covariate_probs"] = [0.7, 0.7]
    with pytest.raises(ConfigError, match="probability vector"):
        dataio.simulation_block(doc)
    doc["simulation"]["covariate_probs"] = [0.65, 0.35]
    np.testing.assert_array_equal(dataio.simulation_block(doc)[4], [0.65, 0.35])


def test_prior_from_config_errors():
    doc = base_config()
    doc["prior"]["outcome"] = [0.0, -1.0]
    with pytest.raises(ConfigError, match="prior block invalid"):
        dataio.prior_from_config(doc)
    prior = dataio.prior_from_config(base_config())
    np.testing.assert_array_equal(prior.outcome_prior[0], 0.0)
    np.testing.assert_array_equal(prior.outcome_prior[1], 10000.0)


def run_cli(*argv):
    return cli.main(list(argv))


def test_cli_round_trip(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(dataio.THREADS_ENV_VAR, raising=False)
    cfg = write_config(tmp_path, base_config())
    sim = str(tmp_path / "sim")
    assert run_cli("simulate", "--config", cfg, "--out", sim) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "wrote 6 subjects" in out
    for name in ("dataset.csv", "dataset.windows.csv", "paths.csv", "truth.json"):
        assert os.path.exists(os.path.join(sim, name))
    truth, sim_block = dataio.read_truth(os.path.join(sim, "truth.json"))
    assert sim_block["n_subjects"] == 6
    np.testing.assert_array_equal(truth.event_rates, [3.0, 9.0])
    paths_text = open(os.path.join(sim, "paths.csv")).read().splitlines()
    assert paths_text[0] == "subject_id,time,state"
    assert paths_text[1].startswith("s0000,0.0,")

    data = os.path.join(sim, "dataset.csv")
    fit1 = str(tmp_path / "fit1")
    assert run_cli("fit", "--config", cfg, "--data", data, "--out", fit1) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "retained 15 samples from 40 sweeps over 6 subjects" in out
    samples1 = open(os.path.join(fit1, "samples.csv"), "rb").read()
    summary = json.load(open(os.path.join(fit1, "summary.json")))
    assert summary["run"]["retained"] == 15 and summary["run"]["threads"] == 1
    names = [row["name"] for row in summary["parameters"]]
    assert names[0] == "lambda_1" and "q_1_2" in names and "nu_2" in names

    # reruns are byte-identical, with any worker count
    fit2 = str(tmp_path / "fit2")
    assert run_cli("fit", "--config", cfg, "--data", data, "--out", fit2) == cli.EXIT_OK
    assert open(os.path.join(fit2, "samples.csv"), "rb").read() == samples1
    fit3 = str(tmp_path / "fit3")
    assert run_cli("fit", "--config", cfg, "--data", data, "--out", fit3,
                   "--threads", "2") == cli.EXIT_OK
    assert open(os.path.join(fit3, "samples.csv"), "rb").read() == samples1
    capsys.readouterr()

    diag = str(tmp_path / "diag")
    assert run_cli("diagnose", "--samples", fit1, "--out", diag) == cli.EXIT_OK
    out = capsys.readouterr().out
    assert "summarized 9 traces" in out
    lines = open(os.path.join(diag, "summary.csv")).read().splitlines()
    assert lines[0] == "parameter,median,lo95,hi95,iact,ess,flag"
    assert len(lines) == 10
    for name in ("trace_lambda_1.csv", "hist_lambda_1.csv", "acf_lambda_1.csv",
                 "trace_loglik.csv"):
        assert os.path.exists(os.path.join(diag, name))


def test_cli_exit_codes(tmp_path, capsys):
    doc = base_config()
    doc["typo"] = 1
    bad_cfg = write_config(tmp_path, doc, "bad.json")
    assert run_cli("simulate", "--config", bad_cfg,
                   "--out", str(tmp_path / "o")) == cli.EXIT_CONFIG
    assert "config error:" in capsys.readouterr().err

    doc = base_config()
    del doc["simulation"]["truth"]
    cfg = write_config(tmp_path, doc, "no_truth.json")
    assert run_cli("simulate", "--config", cfg,
                   "--out", str(tmp_path / "o")) == cli.EXIT_CONFIG

    cfg = write_config(tmp_path, base_config())
    assert run_cli("fit", "--config", cfg, "--data", str(tmp_path / "none.csv"),
                   "--out", str(tmp_path / "o")) == cli.EXIT_DATA
    assert "data error:" in capsys.readouterr().err
    assert run_cli("diagnose", "--samples", str(tmp_path / "none"),
                   "--out", str(tmp_path / "o")) == cli.EXIT_DATA


def test_cli_empty_cohort_is_a_data_error(tmp_path, capsys):
    doc = base_config()
    doc["simulation"]["n_subjects"] = 0
    cfg = write_config(tmp_path, doc)
    sim = str(tmp_path / "sim")
    assert run_cli("simulate", "--config", cfg, "--out", sim) == cli.EXIT_OK
    assert run_cli("fit", "--config", cfg, "--data", os.path.join(sim, "dataset.csv"),
                   "--out", str(tmp_path / "fit")) == cli.EXIT_DATA
    assert "no subjects" in capsys.readouterr().err


def test_cli_numerical_failure_exit_code(tmp_path, capsys):
    # a negative count has zero likelihood in every live state
    doc = {
        "model": {"n_states": 1, "outcome": "poisson", "covariate_levels": ["a"]},
        "sampler": {"iterations": 5, "seed": 0},
    }
    cfg = write_config(tmp_path, doc)
    data = str(tmp_path / "d.csv")
    write_lines(data, ["subject_id,time,outcome,covariate", "s0,0.5,-1.0,a"])
    write_lines(str(tmp_path / "d.windows.csv"), ["subject_id,window_end", "s0,2.0"])
    assert run_cli("fit", "--config", cfg, "--data", data,
                   "--out", str(tmp_path / "o")) == cli.EXIT_NUMERICAL
    assert "numerical failure:" in capsys.readouterr().err


def test_presets_all_build():
    for name in experiments.PRESETS:
        config = experiments.preset_config(name)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            gen = dataio.structure_from_config(config)
            prior = dataio.prior_from_config(config, gen)
            sampler = dataio.sampler_from_config(config)
            truth = dataio.truth_params_from_config(config)
            dataio.simulation_block(config)
            prior.validate(gen)
        assert sampler.iterations > sampler.burn_in
        assert truth.gen.n_states == gen.n_states
    with pytest.raises(ValueError, match="unknown preset"):
        experiments.preset_config("scenario9")


def test_preset_structures():
    ex2 = experiments.preset_config("example2")
    gen = dataio.structure_from_config(ex2)
    assert gen.n_states == 3 and gen.absorbing[2]
    assert not gen.allowed[1, 0]
    assert dataio.covariate_levels(ex2) == ["0", "1"]
    with pytest.warns(UserWarning, match="shape < 1"):
        dataio.prior_from_config(ex2, gen)

    claims = experiments.preset_config("claims_shape")
    gen = dataio.structure_from_config(claims)
    assert gen.n_states == 3 and gen.absorbing.any()
    assert len(dataio.covariate_levels(claims)) == 4

    for name in ("scenario1", "scenario2", "scenario3", "scenario4"):
        config = experiments.preset_config(name)
        gen = dataio.structure_from_config(config)
        assert gen.n_states == 2 and not gen.absorbing.any()
        assert config["sampler"]["iterations"] == 10000
        assert config["sampler"]["burn_in"] == 2000


def test_run_experiment_smoke():
    config = experiments.preset_config("scenario1")
    result = experiments.run_experiment(config, sim_seed=2, fit_seed=1,
                                        n_subjects=8, iterations=30, burn_in=10)
    assert len(result.records) == 8
    assert len(result.samples) == 20
    names = [s.name for s in result.summaries]
    assert set(result.coverage) == set(names) == set(result.iact)
    assert all(isinstance(v, bool) for v in result.coverage.values())
    np.testing.assert_array_equal(result.truth.event_rates, [4.0, 12.0])
    # draws come back relabeled: event rates ascend within every sample
    for s in result.samples:
        assert s.params.event_rates[0] <= s.params.event_rates[1]
