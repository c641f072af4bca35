"""Dataset, config, and sample-file serialization.

Everything is text: delimited data files and JSON configs, floats
written with shortest round-trip precision so a write/read cycle
reproduces every value bit for bit.  State and covariate indices are
1-based in files and 0-based in memory.
"""

import json
import os

import numpy as np

from .diagnostics import parameter_names, parameter_values
from .errors import ConfigError, DataError
from .forward_backward import MODE_CTHMM, MODE_MMPP
from .gibbs import SamplerConfig
from .model import (
    GaussianOutcome,
    GeneratorMatrix,
    ModelParams,
    PoissonOutcome,
    PriorConfig,
)
from .records import SubjectRecord

__all__ = [
    "write_dataset",
    "read_dataset",
    "write_paths",
    "write_truth",
    "read_truth",
    "write_samples",
    "read_samples",
    "write_run_summary",
    "load_config",
    "structure_from_config",
    "truth_params_from_config",
    "prior_from_config",
    "sampler_from_config",
    "simulation_block",
    "covariate_levels",
]

THREADS_ENV_VAR = "MMPP_OUTCOME_THREADS"


def _windows_path(path):
    base = path[:-4] if path.endswith(".csv") else path
    return base + ".windows.csv"


def _data_path(path):
    return path if path.endswith(".csv") else path + ".csv"


def write_dataset(records, path, levels=None):
    """Write records as a delimited event table plus a window sidecar.

    Parameters
    ----------
    records : sequence of SubjectRecord
    path : str
        Event-table path (``.csv`` appended if missing); the per-subject
        window table lands next to it with a ``.windows.csv`` suffix.
    levels : sequence of str, optional
        Covariate level labels, indexed by the in-memory level codes.
        Defaults to the codes themselves.
    """
    data_path = _data_path(path)
    with open(data_path, "w") as fh:
        fh.write("subject_id,time,outcome,covariate\n")
        for rec in records:
            for t, o, c in zip(rec.times, rec.outcomes, rec.levels):
                label = levels[c] if levels is not None else str(int(c))
                fh.write(f"{rec.subject_id},{float(t)!r},{float(o)!r},{label}\n")
    with open(_windows_path(data_path), "w") as fh:
        fh.write("subject_id,window_end\n")
        for rec in records:
            fh.write(f"{rec.subject_id},{float(rec.window_end)!r}\n")
    return data_path


def _parse_rows(path, n_fields):
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty file")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != n_fields:
            raise DataError(f"{path}:{lineno}: expected {n_fields} fields")
        yield lineno, parts


def read_dataset(path, levels=None):
    """Read a dataset written by ``write_dataset``.

    The windowed convention is inferred per subject from an event at
    exactly time 0.  Subject order follows the window sidecar, which
    also defines the subject set; subjects without events are allowed.

    Returns
    -------
    list of SubjectRecord
    """
    data_path = _data_path(path)
    windows_path = _windows_path(data_path)
    if not os.path.exists(data_path):
        raise DataError(f"{data_path}: no such file")
    if not os.path.exists(windows_path):
        raise DataError(f"{windows_path}: window sidecar missing")
    label_to_code = None
    if levels is not None:
        label_to_code = {str(label): i for i, label in enumerate(levels)}
    windows = {}
    for lineno, (sid, w) in _parse_rows(windows_path, 2):
        if sid in windows:
            raise DataError(f"{windows_path}:{lineno}: duplicate subject {sid!r}")
        windows[sid] = float(w)
    events = {sid: ([], [], []) for sid in windows}
    for lineno, (sid, t, o, label) in _parse_rows(data_path, 4):
        if sid not in events:
            raise DataError(f"{data_path}:{lineno}: subject {sid!r} not in window table")
        if label_to_code is None:
            try:
                code = int(label)
            except ValueError:
                raise DataError(
                    f"{data_path}:{lineno}: covariate {label!r} needs declared levels"
                ) from None
        elif label not in label_to_code:
            raise DataError(f"{data_path}:{lineno}: undeclared covariate level {label!r}")
        else:
            code = label_to_code[label]
        ts, os_, cs = events[sid]
        ts.append(float(t))
        os_.append(float(o))
        cs.append(code)
    records = []
    for sid, window_end in windows.items():
        ts, os_, cs = events[sid]
        times = np.asarray(ts, dtype=np.float64)
        windowed = bool(times.size and times[0] == 0.0)
        try:
            records.append(SubjectRecord(sid, times, np.asarray(os_),
                                         np.asarray(cs, dtype=np.int64),
                                         window_end, windowed))
        except ValueError as err:
            raise DataError(f"{data_path}: subject {sid!r}: {err}") from None
    return records


def write_paths(paths, subject_ids, path):
    """Ground-truth trajectory sidecar: (subject_id, time, state) rows.

    The first row of each subject is its time-0 state; states are
    1-based in the file.
    """
    with open(path, "w") as fh:
        fh.write("subject_id,time,state\n")
        for sid, p in zip(subject_ids, paths):
            fh.write(f"{sid},0.0,{int(p.states[0]) + 1}\n")
            for t, s in zip(p.jump_times, p.states[1:]):
                fh.write(f"{sid},{float(t)!r},{int(s) + 1}\n")


def params_to_dict(params):
    """JSON-ready dict of a full parameter set, 1-based indices."""
    gen = params.gen
    k = gen.n_states
    off = ~np.eye(k, dtype=bool)
    forbidden = [[int(l) + 1, int(m) + 1]
                 for l, m in zip(*np.nonzero(off & ~gen.allowed))
                 if not gen.absorbing[l]]
    out = {
        "n_states": k,
        "transition_rates": gen.rates.tolist(),
        "absorbing": [int(i) + 1 for i in np.nonzero(gen.absorbing)[0]],
        "forbidden": forbidden,
        "event_rates": params.event_rates.tolist(),
        "initial": params.initial.tolist(),
    }
    if isinstance(params.outcome, GaussianOutcome):
        out["outcome_kind"] = "gaussian"
        out["outcome_means"] = params.outcome.means.tolist()
        out["outcome_variance"] = params.outcome.variance
    else:
        out["outcome_kind"] = "poisson"
        out["outcome_cell_means"] = params.outcome.cell_means.tolist()
    return out


def params_from_dict(d):
    """Inverse of ``params_to_dict``."""
    absorbing = [i - 1 for i in d.get("absorbing", [])]
    forbidden = [(l - 1, m - 1) for l, m in d.get("forbidden", [])]
    gen = GeneratorMatrix.from_rates(d["transition_rates"], absorbing=absorbing,
                                     forbidden=forbidden)
    if d["outcome_kind"] == "gaussian":
        outcome = GaussianOutcome(d["outcome_means"], d.get("outcome_variance", 1.0))
    else:
        outcome = PoissonOutcome(d["outcome_cell_means"])
    return ModelParams(gen, d["event_rates"], d["initial"], outcome)


def write_truth(params, simulation, path):
    """Ground-truth sidecar: true parameters plus the simulation block."""
    doc = {"params": params_to_dict(params), "simulation": dict(simulation)}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def read_truth(path):
    with open(path) as fh:
        doc = json.load(fh)
    return params_from_dict(doc["params"]), doc["simulation"]


def write_samples(samples, path):
    """Retained draws as a delimited table, one scalar parameter per column."""
    if not samples:
        raise DataError("no samples to write")
    names = parameter_names(samples[0].params)
    with open(path, "w") as fh:
        fh.write("iteration," + ",".join(names) + ",loglik\n")
        for s in samples:
            values = parameter_values(s.params)
            row = ",".join(repr(float(v)) for v in values)
            fh.write(f"{s.sweep},{row},{float(s.loglik)!r}\n")
    return path


def read_samples(path):
    """Read a sample table back as (iterations, {column: trace}).

    Raises DataError on missing, empty, or malformed files.
    """
    if os.path.isdir(path):
        path = os.path.join(path, "samples.csv")
    if not os.path.exists(path):
        raise DataError(f"{path}: no sample file")
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("iteration,"):
        raise DataError(f"{path}: not a sample table")
    names = lines[0].split(",")[1:]
    rows = [line.split(",") for line in lines[1:] if line]
    if not rows:
        raise DataError(f"{path}: no retained samples")
    if any(len(r) != len(names) + 1 for r in rows):
        raise DataError(f"{path}: ragged rows")
    try:
        sweeps = np.asarray([int(r[0]) for r in rows], dtype=np.int64)
        values = np.asarray([[float(v) for v in r[1:]] for r in rows])
    except ValueError as err:
        raise DataError(f"{path}: {err}") from None
    return sweeps, {name: values[:, i] for i, name in enumerate(names)}


def _json_safe(x):
    if isinstance(x, float) and not np.isfinite(x):
        return None
    return x


def write_run_summary(summaries, run_info, path):
    """Machine-readable fit summary: run metadata plus per-parameter rows."""
    doc = {
        "run": dict(run_info),
        "parameters": [
            {
                "name": s.name,
                "median": s.median,
                "lo95": s.lo95,
                "hi95": s.hi95,
                "iact": _json_safe(s.iact),
                "ess": _json_safe(s.ess),
                "low_confidence": s.low_confidence,
            }
            for s in summaries
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


_SCHEMA = {
    "model": {"n_states", "outcome", "outcome_variance", "covariate_levels",
              "absorbing", "forbidden"},
    "prior": {"transition", "event_rate", "initial", "outcome"},
    "sampler": {"iterations", "burn_in", "thinning", "seed", "mode", "threads"},
    "simulation": {"n_subjects", "window_end", "seed", "windowed",
                   "covariate_probs", "truth"},
}
_TRUTH_KEYS = {"transition_rates", "event_rates", "initial", "outcome_means",
               "outcome_cell_means"}


def validate_config(doc, origin="<config>"):
    """Check a parsed config document's key structure.

    Unknown keys anywhere in the document are rejected so typos cannot
    silently fall back to defaults.
    """
    if not isinstance(doc, dict):
        raise ConfigError(f"{origin}: top level must be an object")
    unknown = set(doc) - set(_SCHEMA)
    if unknown:
        raise ConfigError(f"{origin}: unknown key {sorted(unknown)[0]!r}")
    for block, allowed in _SCHEMA.items():
        if block not in doc:
            continue
        if not isinstance(doc[block], dict):
            raise ConfigError(f"{origin}: {block!r} must be an object")
        bad = set(doc[block]) - allowed
        if bad:
            raise ConfigError(f"{origin}: unknown key {block!r}.{sorted(bad)[0]!r}")
    sim = doc.get("simulation")
    if sim and "truth" in sim:
        if not isinstance(sim["truth"], dict):
            raise ConfigError(f"{origin}: 'simulation'.'truth' must be an object")
        bad = set(sim["truth"]) - _TRUTH_KEYS
        if bad:
            raise ConfigError(
                f"{origin}: unknown key 'simulation'.'truth'.{sorted(bad)[0]!r}"
            )
    return doc


def load_config(path):
    """Parse and validate an experiment config file (JSON)."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"{path}: no such file") from None
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from None
    return validate_config(doc, origin=str(path))


def _require(config, block, context):
    if block not in config:
        raise ConfigError(f"{context} requires a {block!r} config block")
    return config[block]


def structure_from_config(config):
    """GeneratorMatrix mask template (zero rates) from the model block."""
    model = _require(config, "model", "model setup")
    try:
        k = int(model["n_states"])
    except KeyError:
        raise ConfigError("model.n_states is required") from None
    absorbing = [int(i) - 1 for i in model.get("absorbing", [])]
    forbidden = [(int(l) - 1, int(m) - 1) for l, m in model.get("forbidden", [])]
    for i in absorbing:
        if not 0 <= i < k:
            raise ConfigError(f"model.absorbing index {i + 1} out of range")
    for l, m in forbidden:
        if not (0 <= l < k and 0 <= m < k):
            raise ConfigError(f"model.forbidden pair ({l + 1}, {m + 1}) out of range")
    try:
        return GeneratorMatrix.from_rates(np.zeros((k, k)), absorbing=absorbing,
                                          forbidden=forbidden)
    except ValueError as err:
        raise ConfigError(f"model block invalid: {err}") from None


def _outcome_kind(config):
    model = _require(config, "model", "model setup")
    kind = model.get("outcome", "gaussian")
    if kind not in ("gaussian", "poisson"):
        raise ConfigError(f"model.outcome must be 'gaussian' or 'poisson', got {kind!r}")
    return kind


def covariate_levels(config):
    model = _require(config, "model", "model setup")
    levels = [str(x) for x in model.get("covariate_levels", ["0"])]
    if len(set(levels)) != len(levels):
        raise ConfigError("model.covariate_levels must be distinct")
    if _outcome_kind(config) == "gaussian" and len(levels) != 1:
        raise ConfigError("gaussian outcomes take exactly one covariate level")
    return levels


def truth_params_from_config(config):
    """True parameter set from model + simulation.truth blocks."""
    gen = structure_from_config(config)
    model = config["model"]
    sim = _require(config, "simulation", "simulate")
    truth = sim.get("truth")
    if truth is None:
        raise ConfigError("simulation.truth is required to simulate")
    kind = _outcome_kind(config)
    try:
        rates = np.asarray(truth["transition_rates"], dtype=np.float64)
        lam = np.asarray(truth["event_rates"], dtype=np.float64)
        nu = np.asarray(truth["initial"], dtype=np.float64)
        if kind == "gaussian":
            outcome = GaussianOutcome(truth["outcome_means"],
                                      float(model.get("outcome_variance", 1.0)))
        else:
            cells = np.asarray(truth["outcome_cell_means"], dtype=np.float64)
            if cells.ndim != 2 or cells.shape[0] != len(covariate_levels(config)):
                raise ConfigError(
                    "simulation.truth.outcome_cell_means must have one row per covariate level"
                )
            outcome = PoissonOutcome(cells)
    except KeyError as err:
        raise ConfigError(f"simulation.truth.{err.args[0]} is required") from None
    try:
        return ModelParams(gen.with_rates(rates), lam, nu, outcome)
    except ValueError as err:
        raise ConfigError(f"simulation.truth invalid: {err}") from None


def prior_from_config(config, gen=None):
    """PriorConfig from the prior block (defaults apply when absent)."""
    if gen is None:
        gen = structure_from_config(config)
    prior = config.get("prior", {})
    kind = _outcome_kind(config)
    kwargs = {}
    if "transition" in prior:
        kwargs["trans"] = prior["transition"]
    if "event_rate" in prior:
        kwargs["rate"] = prior["event_rate"]
    if "initial" in prior:
        kwargs["initial"] = prior["initial"]
    if "outcome" in prior:
        kwargs["outcome"] = tuple(np.asarray(p, dtype=np.float64)
                                  for p in prior["outcome"])
    try:
        return PriorConfig.build(gen, outcome_kind=kind, **kwargs)
    except ValueError as err:
        raise ConfigError(f"prior block invalid: {err}") from None


def sampler_from_config(config, mode=None, threads=None):
    """SamplerConfig from the sampler block plus CLI/env overrides.

    ``threads`` resolution order: explicit argument (the CLI flag), the
    MMPP_OUTCOME_THREADS environment variable, then the config value.
    """
    sampler = _require(config, "sampler", "fit")
    if "iterations" not in sampler:
        raise ConfigError("sampler.iterations is required")
    gen = structure_from_config(config)
    prior = prior_from_config(config, gen)
    if threads is None:
        env = os.environ.get(THREADS_ENV_VAR)
        if env is not None:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigError(
                    f"{THREADS_ENV_VAR} must be an integer, got {env!r}"
                ) from None
    if threads is None:
        threads = int(sampler.get("threads", 1))
    mode = mode if mode is not None else sampler.get("mode", MODE_MMPP)
    if mode not in (MODE_MMPP, MODE_CTHMM):
        raise ConfigError(f"sampler.mode must be 'mmpp' or 'cthmm-only', got {mode!r}")
    try:
        return SamplerConfig(
            iterations=int(sampler["iterations"]),
            burn_in=int(sampler.get("burn_in", 0)),
            thinning=int(sampler.get("thinning", 1)),
            seed=int(sampler.get("seed", 0)),
            mode=mode,
            threads=threads,
            prior=prior,
            structure=gen,
            outcome_kind=_outcome_kind(config),
            n_levels=len(covariate_levels(config)),
            outcome_variance=float(config["model"].get("outcome_variance", 1.0)),
        )
    except ValueError as err:
        raise ConfigError(f"sampler block invalid: {err}") from None


def simulation_block(config):
    """Validated simulation settings: (n, window_end, seed, windowed, probs)."""
    sim = _require(config, "simulation", "simulate")
    try:
        n = int(sim["n_subjects"])
        window_end = float(sim["window_end"])
    except KeyError as err:
        raise ConfigError(f"simulation.{err.args[0]} is required") from None
    if n < 0:
        raise ConfigError("simulation.n_subjects cannot be negative")
    levels = covariate_levels(config)
    probs = sim.get("covariate_probs")
    if probs is None:
        probs = [1.0] + [0.0] * (len(levels) - 1)
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (len(levels),) or np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
        raise ConfigError(
            "simulation.covariate_probs must be a probability vector over the declared levels"
        )
    return n, window_end, int(sim.get("seed", 0)), bool(sim.get("windowed", False)), probs
