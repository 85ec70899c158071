"""Seeded slot-level Monte Carlo simulator of the chain-extension protocol.

Every slot runs a synchronization phase followed by a mining phase. In the
S phase each ordered miner pair (i -> j) draws one Bernoulli(a[i, j]) link
success; every miner then adopts, from the chains it successfully
received, a strictly longer one if any exists (keeping its own on ties,
and preferring the lowest sender index among equally long candidates). In
the M phase each miner independently appends a fresh block with its own
rate. Capacity is the final global maximum height divided by the slot
count; blocks outside the final longest chain are stale.

Randomness: one PCG64 generator per replication, seeded with
numpy.random.SeedSequence(entropy=seed, spawn_key=(replication,)). Per
slot the draw order is fixed: all link draws in lexicographic (i, j)
order over ordered pairs with i != j, then all mining draws in miner
order. Draws happen regardless of whether they matter, so equal seeds
replay bit-identical runs under either chain-selection rule.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .netmodel import NetworkScenario

__all__ = [
    "RULE_LONGEST",
    "RULE_GHOST",
    "SimConfig",
    "SimReport",
    "run",
    "run_replications",
]

RULE_LONGEST = "longest-chain"
RULE_GHOST = "ghost-two-miner"

_CHUNK_SLOTS = 200_000
_BATCHES = 100


@dataclass(frozen=True)
class SimConfig:
    """One simulation request: scenario, horizon, seed and chain rule."""

    scenario: NetworkScenario
    slots: int
    seed: int
    rule: str = RULE_LONGEST
    track_consistency: bool = True
    track_attribution: bool = True
    replications: int = 1

    def __post_init__(self):
        if int(self.slots) < 1:
            raise ValueError("slots must be >= 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.rule not in (RULE_LONGEST, RULE_GHOST):
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.rule == RULE_GHOST and self.scenario.n != 2:
            raise ValueError("ghost-two-miner requires exactly 2 miners")
        if int(self.replications) < 1:
            raise ValueError("replications must be >= 1")
        object.__setattr__(self, "slots", int(self.slots))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "replications", int(self.replications))

    def to_dict(self) -> dict:
        doc = self.scenario.to_dict()
        doc.update({"slots": self.slots, "seed": self.seed, "rule": self.rule,
                    "replications": self.replications,
                    "track_consistency": self.track_consistency,
                    "track_attribution": self.track_attribution})
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, doc: dict) -> "SimConfig":
        return cls(
            scenario=NetworkScenario.from_dict(doc),
            slots=doc["slots"],
            seed=doc["seed"],
            rule=doc.get("rule", RULE_LONGEST),
            track_consistency=bool(doc.get("track_consistency", True)),
            track_attribution=bool(doc.get("track_attribution", True)),
            replications=int(doc.get("replications", 1)),
        )

    @classmethod
    def from_json(cls, text: str) -> "SimConfig":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class SimReport:
    """Result of one run or of an aggregate over replications.

    Standard errors come from batch means (100 batches) in a single run
    and from the spread across replications in an aggregate; gamma gets a
    standard error only in aggregates. Untracked metrics are None.
    """

    capacity_estimate: float
    capacity_stderr: float
    stale_ratio: float
    gamma_empirical: tuple | None
    consistency_fraction: float | None
    consistency_stderr: float | None
    total_mined: int
    total_admitted: int
    seed: int
    slots: int
    rule: str
    replications: int = 1
    gamma_stderr: tuple | None = None


# ---------------------------------------------------------------------------
# Hot loop (longest-chain rule)
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _slot_loop(n, success, mined, tips, lengths, parent, miner, next_id,
               heights_out, consist_out):
    """Advance the chunk slot by slot; returns the next free block id.

    success: (slots, n, n) uint8, success[t, i, j] = link i->j delivered.
    mined:   (slots, n) uint8.
    tips/lengths: per-miner current tip block id and chain length.
    parent/miner: per-block records, written for freshly mined blocks.
    """
    slots = mined.shape[0]
    snap_tips = np.empty(n, np.int64)
    snap_lengths = np.empty(n, np.int64)
    for t in range(slots):
        for i in range(n):
            snap_tips[i] = tips[i]
            snap_lengths[i] = lengths[i]
        for j in range(n):
            best_len = snap_lengths[j]
            best = -1
            for i in range(n):
                if i != j and success[t, i, j] == 1 and snap_lengths[i] > best_len:
                    best_len = snap_lengths[i]
                    best = i
            if best >= 0:
                tips[j] = snap_tips[best]
                lengths[j] = best_len
        agree = 1
        for i in range(1, n):
            if tips[i] != tips[0]:
                agree = 0
                break
        consist_out[t] = agree
        for i in range(n):
            if mined[t, i] == 1:
                parent[next_id] = tips[i]
                miner[next_id] = i
                lengths[i] += 1
                tips[i] = next_id
                next_id += 1
        top = lengths[0]
        for i in range(1, n):
            if lengths[i] > top:
                top = lengths[i]
        heights_out[t] = top
    return next_id


@njit(cache=True, nogil=True)
def _count_chain_miners(tip, parent, miner, counts):
    height = 0
    b = tip
    while b != 0:
        counts[miner[b]] += 1
        b = parent[b]
        height += 1
    return height


def _link_successes(uniforms: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Map the link-draw columns onto a (slots, n, n) success tensor."""
    slots = uniforms.shape[0]
    n = a.shape[0]
    succ = np.zeros((slots, n, n), dtype=np.uint8)
    col = 0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            succ[:, i, j] = uniforms[:, col] < a[i, j]
            col += 1
    return succ


def _replication_rng(seed: int, replication: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(entropy=seed, spawn_key=(replication,))))


def _batch_stderr(cumulative: np.ndarray, batches: int = _BATCHES) -> float:
    """Standard error of a per-slot rate from batch means.

    `cumulative` holds the running total of the metric after each slot;
    equal-size batches are carved from the front, a possible remainder is
    ignored for the error estimate only.
    """
    slots = cumulative.size
    b = min(batches, slots)
    if b < 2:
        return math.nan
    size = slots // b
    ends = cumulative[size * np.arange(1, b + 1) - 1]
    rates = np.diff(np.concatenate(([0.0], ends))) / size
    return float(rates.std(ddof=1) / math.sqrt(b))


def _run_longest(config: SimConfig, replication: int) -> SimReport:
    scenario = config.scenario
    n = scenario.n
    a = scenario.a
    c = scenario.c
    slots = config.slots
    rng = _replication_rng(config.seed, replication)

    n_link = n * (n - 1)
    tips = np.zeros(n, np.int64)
    lengths = np.zeros(n, np.int64)
    heights = np.empty(slots, np.int64)
    consist = np.empty(slots, np.uint8)
    # block 0 is the shared genesis
    parent = np.full(1, -1, np.int64)
    miner = np.full(1, -1, np.int16)
    next_id = 1

    pos = 0
    while pos < slots:
        m = min(_CHUNK_SLOTS, slots - pos)
        uniforms = rng.random((m, n_link + n))
        success = _link_successes(uniforms[:, :n_link], a)
        mined = (uniforms[:, n_link:] < c[None, :]).astype(np.uint8)
        need = next_id + int(mined.sum())
        if need > parent.size:
            grow = max(need, 2 * parent.size)
            parent = np.concatenate([parent, np.empty(grow - parent.size, np.int64)])
            miner = np.concatenate([miner, np.empty(grow - miner.size, np.int16)])
        next_id = _slot_loop(n, success, mined, tips, lengths, parent, miner,
                             next_id, heights[pos:pos + m], consist[pos:pos + m])
        pos += m

    total_mined = next_id - 1
    winner = int(np.argmax(lengths))  # ties resolve to the lowest index
    admitted = int(lengths[winner])

    gamma = None
    if config.track_attribution:
        counts = np.zeros(n, np.int64)
        if admitted > 0:
            _count_chain_miners(tips[winner], parent, miner, counts)
            gamma = tuple(float(x) / admitted for x in counts)
        else:
            gamma = tuple(0.0 for _ in range(n))

    consistency = consistency_se = None
    if config.track_consistency:
        consistency = float(consist.mean())
        consistency_se = _batch_stderr(np.cumsum(consist, dtype=np.float64))

    return SimReport(
        capacity_estimate=admitted / slots,
        capacity_stderr=_batch_stderr(heights.astype(np.float64)),
        stale_ratio=1.0 - admitted / total_mined if total_mined else 0.0,
        gamma_empirical=gamma,
        consistency_fraction=consistency,
        consistency_stderr=consistency_se,
        total_mined=total_mined,
        total_admitted=admitted,
        seed=config.seed,
        slots=slots,
        rule=config.rule,
    )


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------

def run(config: SimConfig) -> SimReport:
    """Run one replication (index 0) of the configured simulation."""
    return _run_single(config, 0)


def _run_single(config: SimConfig, replication: int) -> SimReport:
    if config.rule == RULE_GHOST:
        from .ghost import run_ghost
        return run_ghost(config, replication)
    return _run_longest(config, replication)


def run_replications(config: SimConfig, reps: int) -> SimReport:
    """Mean and spread over independent replications.

    Replication r reseeds the generator with spawn_key=(r,), so the runs
    are independent yet reproducible; reps=1 returns exactly `run(config)`.
    Aggregation is by replication index and therefore order-independent.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if reps == 1:
        return run(config)
    reports = [_run_single(config, r) for r in range(reps)]

    caps = np.array([r.capacity_estimate for r in reports])
    mined = sum(r.total_mined for r in reports)
    admitted = sum(r.total_admitted for r in reports)

    gamma = gamma_se = None
    if config.track_attribution:
        shares = np.array([r.gamma_empirical for r in reports])
        weights = np.array([r.total_admitted for r in reports], dtype=float)
        if weights.sum() > 0:
            pooled = (shares * weights[:, None]).sum(axis=0) / weights.sum()
        else:
            pooled = np.zeros(config.scenario.n)
        gamma = tuple(float(x) for x in pooled)
        gamma_se = tuple(float(x) for x in shares.std(axis=0, ddof=1) / math.sqrt(reps))

    consistency = consistency_se = None
    if config.track_consistency:
        fractions = np.array([r.consistency_fraction for r in reports])
        consistency = float(fractions.mean())
        consistency_se = float(fractions.std(ddof=1) / math.sqrt(reps))

    return SimReport(
        capacity_estimate=float(caps.mean()),
        capacity_stderr=float(caps.std(ddof=1) / math.sqrt(reps)),
        stale_ratio=1.0 - admitted / mined if mined else 0.0,
        gamma_empirical=gamma,
        consistency_fraction=consistency,
        consistency_stderr=consistency_se,
        total_mined=mined,
        total_admitted=admitted,
        seed=config.seed,
        slots=config.slots,
        rule=config.rule,
        replications=reps,
        gamma_stderr=gamma_se,
    )
