"""Network and mining model for slotted proof-of-work blockchains.

A scenario is a set of miners with per-slot mining probabilities connected
by directed lossy links, each link described by a per-slot transmission
success probability. Time is slotted; every slot consists of a
synchronization phase (chain exchange, longest-chain adoption) followed by
a mining phase (independent Bernoulli block production).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NetworkScenario",
    "CapacityResult",
    "ideal_capacity",
    "aggregate_lan",
    "stale_ratio",
    "expected_delay",
    "complete_graph",
    "star_graph",
    "line_graph",
]


def _check_probability(name: str, value: float) -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    return value


@dataclass(frozen=True, eq=False)
class NetworkScenario:
    """Miners, link qualities and block payload of one blockchain network.

    Attributes
    ----------
    c : ndarray, shape (n,)
        Per-slot mining probability of each miner.
    a : ndarray, shape (n, n)
        a[i, j] is the probability that miner i successfully passes its
        local chain to miner j within one slot. The diagonal is 0 by
        convention (a miner does not transmit to itself).
    zeta : int
        Transactions carried per block (payload factor for the
        transactions/slot view of capacity).
    """

    c: np.ndarray
    a: np.ndarray
    zeta: int = 1

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float).copy()
        a = np.asarray(self.a, dtype=float).copy()
        if c.ndim != 1 or c.size < 1:
            raise ValueError("c must be a non-empty vector of mining rates")
        n = c.size
        if a.shape != (n, n):
            raise ValueError(f"a must be an {n}x{n} matrix, got shape {a.shape}")
        if np.any(c < 0) or np.any(c > 1):
            raise ValueError("every mining rate must lie in [0, 1]")
        if np.any(a < 0) or np.any(a > 1):
            raise ValueError("every link success probability must lie in [0, 1]")
        if np.any(np.diag(a) != 0):
            raise ValueError("self links a[i, i] must be 0")
        if int(self.zeta) < 1:
            raise ValueError("zeta must be a positive integer")
        c.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "zeta", int(self.zeta))

    @property
    def n(self) -> int:
        """Number of miners."""
        return self.c.size

    def __eq__(self, other):
        if not isinstance(other, NetworkScenario):
            return NotImplemented
        return (self.zeta == other.zeta and np.array_equal(self.c, other.c)
                and np.array_equal(self.a, other.a))

    __hash__ = None

    def to_json(self) -> str:
        """Serialize to the scenario JSON document."""
        return json.dumps(self.to_dict())

    def to_dict(self) -> dict:
        return {
            "miners": [{"rate": float(ci)} for ci in self.c],
            "links": [[float(x) for x in row] for row in self.a],
            "zeta": self.zeta,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "NetworkScenario":
        try:
            rates = [m["rate"] for m in doc["miners"]]
            links = doc["links"]
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed scenario document: {exc}") from exc
        return cls(np.asarray(rates, dtype=float),
                   np.asarray(links, dtype=float),
                   int(doc.get("zeta", 1)))

    @classmethod
    def from_json(cls, text: str) -> "NetworkScenario":
        """Parse the scenario JSON document (inverse of :meth:`to_json`)."""
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class CapacityResult:
    """Capacity of a scenario in blocks/slot, with the derived views."""

    growth_rate: float
    stale_ratio: float
    transactions_per_slot: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if not 0.0 <= self.growth_rate <= 1.0:
            raise ValueError(f"growth_rate out of [0, 1]: {self.growth_rate!r}")
        if not 0.0 <= self.stale_ratio <= 1.0:
            raise ValueError(f"stale_ratio out of [0, 1]: {self.stale_ratio!r}")
        if self.transactions_per_slot is None:
            object.__setattr__(self, "transactions_per_slot", self.growth_rate)

    @classmethod
    def from_rate(cls, growth_rate: float, scenario: NetworkScenario) -> "CapacityResult":
        """Package a growth rate with its stale ratio for a scenario."""
        return cls(
            growth_rate=growth_rate,
            stale_ratio=stale_ratio(scenario.c, growth_rate),
            transactions_per_slot=growth_rate * scenario.zeta,
        )


def ideal_capacity(c) -> float:
    """Blocks/slot admitted when every link is error-free.

    With perfect synchronization all miners extend a common chain; the
    chain grows whenever at least one miner mines, so the rate is
    1 - prod(1 - c_i).
    """
    c = np.asarray(c, dtype=float)
    if c.ndim != 1 or c.size < 1:
        raise ValueError("c must be a non-empty vector")
    if np.any(c < 0) or np.any(c > 1):
        raise ValueError("every mining rate must lie in [0, 1]")
    if c.size == 1:  # exact single-miner identity, no 1-(1-c) round trip
        return float(c[0])
    return float(1.0 - np.prod(1.0 - c))


def aggregate_lan(per_miner_rate: float, miner_count: int) -> float:
    """Equivalent single-miner rate of an ideally connected LAN.

    A LAN of `miner_count` miners with identical rate behaves, toward the
    rest of the network, like one miner whose rate is the LAN's ideal
    capacity 1 - (1 - rate)^count.
    """
    _check_probability("per_miner_rate", per_miner_rate)
    if int(miner_count) < 1:
        raise ValueError("miner_count must be >= 1")
    # evaluated through the same product as ideal_capacity so the two
    # agree bit-for-bit
    return ideal_capacity(np.full(int(miner_count), per_miner_rate, dtype=float))


def stale_ratio(c, capacity: float) -> float:
    """Fraction of mined blocks that never enter the endorsed chain.

    Blocks are produced at rate sum(c); only `capacity` of them per slot
    survive, so the stale fraction is (sum(c) - capacity) / sum(c).
    """
    c = np.asarray(c, dtype=float)
    total = float(c.sum())
    if total <= 0.0:
        raise ValueError("stale ratio undefined: total mining rate is 0")
    if capacity < 0.0 or capacity > total * (1 + 1e-12):
        raise ValueError(
            f"capacity {capacity!r} outside [0, {total!r}] (total mining rate)")
    return float((total - capacity) / total)


def expected_delay(a_ij: float) -> float:
    """Mean number of slots to get one successful transmission on a link.

    Transmission attempts are independent Bernoulli(a_ij) trials, so the
    wait is geometric with mean 1/a_ij.
    """
    _check_probability("a_ij", a_ij)
    if a_ij == 0.0:
        raise ValueError("a_ij = 0: link never delivers, delay is infinite")
    return 1.0 / a_ij


# ---------------------------------------------------------------------------
# Topology builders used by the experiment harness
# ---------------------------------------------------------------------------

def _symmetric_links(n: int, alpha: float, edges) -> np.ndarray:
    _check_probability("alpha", alpha)
    a = np.zeros((n, n))
    for i, j in edges:
        a[i, j] = alpha
        a[j, i] = alpha
    return a


def complete_graph(n: int, alpha: float) -> np.ndarray:
    """Link matrix of a complete graph with uniform success rate alpha."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _symmetric_links(n, alpha, ((i, j) for i in range(n) for j in range(i + 1, n)))


def star_graph(n: int, alpha: float) -> np.ndarray:
    """Star topology: miner 0 is the hub, all others are leaves."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _symmetric_links(n, alpha, ((0, j) for j in range(1, n)))


def line_graph(n: int, alpha: float) -> np.ndarray:
    """Path topology: miner i is linked to miner i+1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _symmetric_links(n, alpha, ((i, i + 1) for i in range(n - 1)))
