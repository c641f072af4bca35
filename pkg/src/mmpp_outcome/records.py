"""Containers for latent chain paths and per-subject event records."""

from dataclasses import dataclass

import numpy as np

__all__ = ["LatentPath", "SubjectRecord"]


@dataclass(frozen=True)
class LatentPath:
    """Right-continuous piecewise-constant chain trajectory on [0, window_end].

    ``states`` has one more entry than ``jump_times``: states[i] holds on
    [jump_times[i-1], jump_times[i]) with jump_times[-1] read as 0 and
    jump_times[len] as window_end.
    """

    jump_times: np.ndarray
    states: np.ndarray
    window_end: float

    def __post_init__(self):
        jt = np.asarray(self.jump_times, dtype=np.float64)
        st = np.asarray(self.states, dtype=np.int64)
        object.__setattr__(self, "jump_times", jt)
        object.__setattr__(self, "states", st)
        if not self.window_end > 0:
            raise ValueError("window_end must be positive")
        if st.shape != (jt.shape[0] + 1,):
            raise ValueError("need exactly len(jump_times) + 1 states")
        if jt.size:
            if not (np.all(np.diff(jt) > 0) and jt[0] > 0 and jt[-1] < self.window_end):
                raise ValueError("jump times must increase strictly inside (0, window_end)")
            if np.any(st[1:] == st[:-1]):
                raise ValueError("consecutive states must differ (no zero-length segments)")

    @property
    def n_jumps(self):
        return self.jump_times.shape[0]

    def state_at(self, t):
        """State occupied at time(s) t; right-continuous at jumps."""
        idx = np.searchsorted(self.jump_times, t, side="right")
        return self.states[idx]

    def segments(self):
        """(starts, ends, states) arrays covering [0, window_end]."""
        starts = np.concatenate(([0.0], self.jump_times))
        ends = np.concatenate((self.jump_times, [self.window_end]))
        return starts, ends, self.states


@dataclass(frozen=True)
class SubjectRecord:
    """Observed event history for one subject over [0, window_end].

    When ``windowed`` is set the record follows the forced-first-event
    convention: the clock starts at the subject's first event, so
    times[0] == 0.0, that event's outcome is observed, but it carries no
    information about the event rates.
    """

    subject_id: str
    times: np.ndarray
    outcomes: np.ndarray
    levels: np.ndarray
    window_end: float
    windowed: bool = False

    def __post_init__(self):
        t = np.asarray(self.times, dtype=np.float64)
        o = np.asarray(self.outcomes, dtype=np.float64)
        c = np.asarray(self.levels, dtype=np.int64)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "outcomes", o)
        object.__setattr__(self, "levels", c)
        if not self.window_end > 0:
            raise ValueError("window_end must be positive")
        if o.shape != t.shape or c.shape != t.shape:
            raise ValueError("times, outcomes and levels must have equal length")
        if t.size:
            if not (np.all(np.diff(t) > 0) and t[0] >= 0 and t[-1] <= self.window_end):
                raise ValueError("event times must increase strictly within [0, window_end]")
        if np.any(c < 0):
            raise ValueError("covariate level indices must be non-negative")
        if self.windowed:
            if t.size == 0 or t[0] != 0.0:
                raise ValueError("windowed records must start with an event at time 0")
        elif t.size and t[0] == 0.0:
            raise ValueError("an event at exactly time 0 requires the windowed convention")

    @property
    def n_events(self):
        """All recorded events, including a forced one."""
        return self.times.shape[0]

    @property
    def n_unforced(self):
        """Events that inform the rate likelihood."""
        return self.times.shape[0] - (1 if self.windowed else 0)
