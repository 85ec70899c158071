"""Strong consistency of a two-miner blockchain: who mined what, and when
do both miners hold identical chains.

The relative-length model cannot tell which miner produced the blocks of
the endorsed chain, so this module refines the state to (i, j): the counts
of blocks held exclusively by miner 1 and by miner 2 since the chains last
agreed. A successful transmission of the longer chain collapses the state
to (0, 0) (full agreement); ties i = j > 0 persist until mining breaks
them.

With error-free links only states with |i - j| <= 1 are reachable and the
stationary probabilities tau, the post-sync agreement probability eta and
the per-miner admitted-block shares gamma all have closed forms. With
lossy links the chain is solved numerically on a truncated grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .relchain import stationary
from .twominer import TwoMinerParams

__all__ = [
    "ConsistencyReport",
    "tau",
    "eta",
    "gamma",
    "fdtmc_numeric",
    "enumerate_block_states",
]


@dataclass(frozen=True)
class ConsistencyReport:
    """Consistency metrics of a two-miner chain.

    eta    : probability the two chains are content-identical right after
             the synchronization phase.
    gamma1 : share of endorsed blocks mined by miner 1 (nan when no block
             is ever admitted).
    gamma2 : share mined by miner 2.
    theta  : stationary mass of the tied states i = j (including (0, 0)).
    """

    eta: float
    gamma1: float
    gamma2: float
    theta: float


def _rates(c1: float, c2: float):
    for name, value in (("c1", c1), ("c2", c2)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    if c1 + c2 <= 0.0:
        raise ValueError("at least one mining rate must be positive")
    merge = c1 + c2 - c1 * c2          # some block is mined
    split = c1 + c2 - 2.0 * c1 * c2    # exactly one block is mined
    return merge, split


def tau(i: int, j: int, c1: float, c2: float) -> float:
    """Stationary probability of the exclusive-block state (i, j), ideal links.

    With error-free links the longer chain always wins the next sync, so
    only states with |i - j| <= 1 are reachable; the diagonal decays
    geometrically with ratio c1*c2 / (c1 + c2 - c1*c2).
    """
    if i < 0 or j < 0:
        raise ValueError("block counts must be non-negative")
    if abs(i - j) > 1:
        raise ValueError(f"state ({i}, {j}) is unreachable under ideal links")
    merge, split = _rates(c1, c2)
    if i == j == 0:
        return split * ((1.0 - c1) * (1.0 - c2)) / merge
    if i == j:
        return (c1 * c2) ** i * split / merge ** (i + 1)
    if i == j + 1:  # miner 1 leads by one
        return c1**i * c2 ** (i - 1) * (1.0 - c2) * split / merge**i
    # j == i + 1: miner 2 leads by one
    return c1 ** (j - 1) * c2**j * (1.0 - c1) * split / merge**j


def eta(c1: float, c2: float) -> float:
    """Probability both miners hold identical chains after synchronization.

    Post-sync agreement holds from (0, 0) and from every state with a
    one-block lead (the longer chain flushes through the perfect link);
    only the persistent ties i = j > 0 spoil it. The reachable-state sums
    collapse to (c1 + c2 - 2 c1 c2) / (c1 + c2 - c1 c2).
    """
    merge, split = _rates(c1, c2)
    return split / merge


def gamma(c1: float, c2: float) -> tuple[float, float]:
    """Shares of the endorsed chain mined by each miner, ideal links.

    gamma1 = c1 (1 - c2) / (c1 + c2 - 2 c1 c2) and symmetrically for
    gamma2; the pair is returned with gamma2 = 1 - gamma1 so the shares
    sum to 1 exactly.
    """
    _rates(c1, c2)
    split = c1 + c2 - 2.0 * c1 * c2
    if split == 0.0:
        raise ValueError(
            "admitted-block shares undefined at c1 = c2 = 1: every slot "
            "produces a symmetric fork and no single-miner block is ever "
            "admitted")
    g1 = c1 * (1.0 - c2) / split
    return g1, 1.0 - g1


# ---------------------------------------------------------------------------
# Numeric evaluation for lossy links
# ---------------------------------------------------------------------------

def enumerate_block_states(bound: int) -> list[tuple[int, int]]:
    """All exclusive-block states (i, j) with i + j <= bound, lexicographic."""
    return [(i, j) for i in range(bound + 1) for j in range(bound + 1 - i)]


def fdtmc_numeric(params: TwoMinerParams, bound: int) -> ConsistencyReport:
    """Consistency metrics for lossy links from a truncated block chain.

    States (i, j) with i + j <= bound are enumerated on the full grid
    (failed syncs let both exclusive counts grow). The leading side
    flushes to (0, 0) with its link's success rate, ties persist, and
    mining then adds Bernoulli increments; one-step results beyond the
    bound are redirected to the state with both positive counts
    decremented. Admitted blocks are counted at the flushes: a flush from
    (i, j) with i > j admits miner 1's i blocks and discards miner 2's j.
    """
    if bound < 2:
        raise ValueError("truncation bound must be >= 2")
    c1, c2, a12, a21 = params.c1, params.c2, params.a12, params.a21
    states = enumerate_block_states(bound)
    index = {s: t for t, s in enumerate(states)}
    m = len(states)

    mining = [(1, 0, c1 * (1.0 - c2)), (0, 1, (1.0 - c1) * c2),
              (1, 1, c1 * c2), (0, 0, (1.0 - c1) * (1.0 - c2))]
    mining = [(di, dj, p) for di, dj, p in mining if p > 0.0]

    P = np.zeros((m, m))
    for t, (i, j) in enumerate(states):
        if i == j:
            posts = [((i, j), 1.0)]
        elif i > j:
            posts = [((0, 0), a12), ((i, j), 1.0 - a12)]
        else:
            posts = [((0, 0), a21), ((i, j), 1.0 - a21)]
        for (si, sj), ps in posts:
            if ps == 0.0:
                continue
            for di, dj, pm in mining:
                ni, nj = si + di, sj + dj
                if ni + nj > bound:
                    ni = ni - 1 if ni > 0 else 0
                    nj = nj - 1 if nj > 0 else 0
                P[t, index[(ni, nj)]] += ps * pm

    pi = stationary(P)

    agree = 0.0
    admit1 = 0.0
    admit2 = 0.0
    theta = 0.0
    for t, (i, j) in enumerate(states):
        p = pi[t]
        if i == j:
            theta += p
            if i == 0:
                agree += p
        elif i > j:
            agree += p * a12
            admit1 += p * a12 * i
        else:
            agree += p * a21
            admit2 += p * a21 * j

    admitted = admit1 + admit2
    if admitted > 0.0:
        g1 = admit1 / admitted
        g2 = 1.0 - g1
    else:
        g1 = g2 = math.nan
    return ConsistencyReport(eta=float(agree), gamma1=float(g1),
                             gamma2=float(g2), theta=float(theta))
