"""Deterministic RNG stream derivation.

Every consumer of randomness gets its own generator derived from the
master seed and a structural key (domain, sweep, subject, ...), so the
draw sequence never depends on execution order or thread count and any
unit of work can be replayed in isolation.
"""

import numpy as np

DOMAIN_SIMULATE = 0
DOMAIN_SWEEP = 1
DOMAIN_PARAMS = 2
DOMAIN_INIT = 3
DOMAIN_RESCUE = 4

__all__ = ["stream"]


def stream(seed, *key):
    """Generator for the stream addressed by (seed, *key)."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in key)))
