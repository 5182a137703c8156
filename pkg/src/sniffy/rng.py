"""Counter-based random numbers keyed by (seed, agent, iteration, slot).

Every waypoint iteration of every agent draws from its own stream, so a run
is reproducible regardless of evaluation order.  The compiled core
implements the same splitmix64 chain bit for bit.
"""

from __future__ import annotations

import math

MASK64 = (1 << 64) - 1
NOISE_SALT = 0x6E6F697365  # "noise"
_INV_2_53 = 1.0 / 9007199254740992.0

# slots within one waypoint iteration
SLOT_RAND_X = 0
SLOT_RAND_Y = 1
SLOT_ALPHA = 2
SLOT_BETA = 3


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def keyed_uniform(seed: int, agent: int, iteration: int, slot: int) -> float:
    """Uniform draw in [0, 1) fully determined by its key."""
    h = splitmix64(seed & MASK64)
    h = splitmix64(h ^ (agent & MASK64))
    h = splitmix64(h ^ (iteration & MASK64))
    h = splitmix64(h ^ (slot & MASK64))
    return (h >> 11) * _INV_2_53


def keyed_normal(seed: int, agent: int, step: int, slot: int) -> float:
    """Standard normal via Box-Muller on two keyed uniforms."""
    u1 = keyed_uniform(seed ^ NOISE_SALT, agent, step, 2 * slot)
    u2 = keyed_uniform(seed ^ NOISE_SALT, agent, step, 2 * slot + 1)
    return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)
