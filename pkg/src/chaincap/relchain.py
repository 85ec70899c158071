"""Markov model of relative chain lengths across n miners.

Absolute chain lengths at the miners form a Markov chain whose one-step
transition is a synchronization kernel (each miner adopts the longest
chain it successfully receives, keeping its own on ties) composed with a
mining kernel (independent Bernoulli extensions). The dynamics only depend
on length differences, so the chain collapses onto relative states
r = b - min(b), which form an ergodic chain whenever the network is
connected enough to flush leads.

The relative chain still has infinitely many states; it is approximated by
enumerating all states with max(r) < k and redirecting any one-step result
that reaches max(r) = k to the state with every positive entry decremented.
Capacity is the steady-state average of the per-state extension
probability omega: the probability that some holder of the longest
post-sync chain mines in that slot.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .netmodel import CapacityResult, NetworkScenario

__all__ = [
    "TruncatedChain",
    "SteadyState",
    "relative_state",
    "enumerate_states",
    "state_count",
    "sync_kernel",
    "mine_kernel",
    "build_chain",
    "stationary",
    "steady_state",
    "capacity",
    "evaluate",
    "converge_k",
    "dump_debug_csv",
]

ROW_SUM_TOL = 1e-12
DEFAULT_STATE_CAP = 100_000


def relative_state(b) -> tuple[int, ...]:
    """Collapse absolute chain lengths to their relative state (min at 0)."""
    b = np.asarray(b, dtype=np.int64)
    return tuple(int(x) for x in b - b.min())


def enumerate_states(n: int, k: int) -> list[tuple[int, ...]]:
    """All relative states with max(r) < k, in lexicographic order."""
    if n < 1 or k < 1:
        raise ValueError("need n >= 1 and k >= 1")
    return [r for r in itertools.product(range(k), repeat=n) if min(r) == 0]


def state_count(n: int, k: int) -> int:
    """Number of relative states with max(r) < k (k^n - (k-1)^n)."""
    return k**n - (k - 1) ** n


@dataclass(frozen=True)
class TruncatedChain:
    """Finite approximation of the relative-length chain at bound k.

    states : tuple of relative-state tuples, lexicographically ordered.
    P      : row-stochastic transition matrix (CSR), one row per state.
    omega  : per-state probability that the longest chain extends.
    """

    scenario: NetworkScenario
    k: int
    states: tuple
    P: sp.csr_matrix
    omega: np.ndarray

    def __post_init__(self):
        row_sums = np.asarray(self.P.sum(axis=1)).ravel()
        bad = np.abs(row_sums - 1.0) > ROW_SUM_TOL
        if bad.any():
            i = int(np.argmax(np.abs(row_sums - 1.0)))
            raise ValueError(
                f"row {i} of P sums to {row_sums[i]!r}, not 1 within {ROW_SUM_TOL}")
        if self.P.nnz and (self.P.data.min() < 0 or self.P.data.max() > 1 + ROW_SUM_TOL):
            raise ValueError("P has entries outside [0, 1]")
        if np.any(self.omega < 0) or np.any(self.omega > 1 + ROW_SUM_TOL):
            raise ValueError("omega has entries outside [0, 1]")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def state_index(self, r) -> int:
        """Index of a relative state in the enumeration order."""
        r = tuple(int(x) for x in r)
        try:
            return self._index[r]
        except AttributeError:
            object.__setattr__(self, "_index",
                               {s: i for i, s in enumerate(self.states)})
            return self._index[r]


@dataclass(frozen=True)
class SteadyState:
    """Stationary distribution of a truncated chain."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float).copy()
        if pi.min() < -1e-12:
            raise ValueError(f"steady state has negative mass {pi.min()!r}")
        pi[pi < 0] = 0.0
        if abs(pi.sum() - 1.0) > 1e-10:
            raise ValueError(f"steady state sums to {pi.sum()!r}, not 1")
        pi.setflags(write=False)
        object.__setattr__(self, "pi", pi)


# ---------------------------------------------------------------------------
# One-slot kernels
# ---------------------------------------------------------------------------

def _sync_outcomes_for_miner(i: int, b, a: np.ndarray):
    """Post-sync length distribution of miner i given all current lengths.

    Miner i ends at level L > b[i] iff at least one holder of an L-block
    chain delivers and every holder of a longer chain fails; it keeps b[i]
    iff every holder of a longer chain fails. Zero-probability outcomes are
    dropped.
    """
    own = b[i]
    levels = sorted({bj for bj in b if bj > own}, reverse=True)
    outcomes = []
    all_longer_fail = 1.0
    for level in levels:
        fail_level = math.prod(1.0 - a[j, i] for j in range(len(b)) if b[j] == level)
        p = (1.0 - fail_level) * all_longer_fail
        if p > 0.0:
            outcomes.append((level, p))
        all_longer_fail *= fail_level
    if all_longer_fail > 0.0:
        outcomes.append((own, all_longer_fail))
    return outcomes


def sync_kernel(b, scenario: NetworkScenario) -> dict:
    """Distribution over length vectors after one synchronization phase.

    Miners update independently given the snapshot b, so the joint
    distribution is the product of the per-miner outcome distributions.
    """
    b = tuple(int(x) for x in b)
    if len(b) != scenario.n:
        raise ValueError(f"b has {len(b)} entries for {scenario.n} miners")
    if any(x < 0 for x in b):
        raise ValueError("chain lengths must be non-negative")
    per_miner = [_sync_outcomes_for_miner(i, b, scenario.a) for i in range(scenario.n)]
    dist: dict = {}
    for combo in itertools.product(*per_miner):
        state = tuple(lvl for lvl, _ in combo)
        p = math.prod(p for _, p in combo)
        dist[state] = dist.get(state, 0.0) + p
    return dist


def mine_kernel(b_bar, scenario: NetworkScenario) -> dict:
    """Distribution over length vectors after one mining phase.

    Each miner independently appends one block with its own rate.
    """
    b_bar = tuple(int(x) for x in b_bar)
    if len(b_bar) != scenario.n:
        raise ValueError(f"b has {len(b_bar)} entries for {scenario.n} miners")
    c = scenario.c
    dist: dict = {}
    for mask in itertools.product((0, 1), repeat=scenario.n):
        p = math.prod(c[i] if m else 1.0 - c[i] for i, m in enumerate(mask))
        if p == 0.0:
            continue
        state = tuple(x + m for x, m in zip(b_bar, mask))
        dist[state] = dist.get(state, 0.0) + p
    return dist


# ---------------------------------------------------------------------------
# Chain construction
# ---------------------------------------------------------------------------

def build_chain(scenario: NetworkScenario, k: int,
                state_cap: int = DEFAULT_STATE_CAP) -> TruncatedChain:
    """Build the truncated relative-length chain with bound k.

    Every state with max(r) < k gets one row: the sync and mining kernels
    are composed, results are renormalized to relative states, and results
    that reach max(r) = k are redirected to the state with all positive
    entries decremented. omega is accumulated over the post-sync
    configurations reachable from each state.
    """
    n = scenario.n
    if k < 1:
        raise ValueError("truncation bound k must be >= 1")
    count = state_count(n, k)
    if count > state_cap:
        raise ValueError(
            f"truncation k={k} needs {count} states, above the cap {state_cap}")
    states = enumerate_states(n, k)
    # lexicographic order over fixed-width digit vectors equals numeric
    # order of their base-k encodings, so lookups can use searchsorted
    radix = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    state_codes = np.array([np.dot(s, radix) for s in states], dtype=np.int64)

    c = scenario.c
    mine_masks = np.array(list(itertools.product((0, 1), repeat=n)), dtype=np.int64)
    mine_probs = np.prod(np.where(mine_masks == 1, c, 1.0 - c), axis=1)
    keep = mine_probs > 0.0
    mine_masks, mine_probs = mine_masks[keep], mine_probs[keep]

    rows, cols, vals = [], [], []
    omega = np.empty(count)
    for row, r in enumerate(states):
        per_miner = [_sync_outcomes_for_miner(i, r, scenario.a) for i in range(n)]
        combos = list(itertools.product(*per_miner))
        sync_states = np.array([[lvl for lvl, _ in combo] for combo in combos],
                               dtype=np.int64)
        sync_probs = np.array([math.prod(p for _, p in combo) for combo in combos])

        # extension probability: some holder of the post-sync maximum mines
        at_max = sync_states == sync_states.max(axis=1, keepdims=True)
        none_at_max_mines = np.prod(np.where(at_max, 1.0 - c, 1.0), axis=1)
        omega[row] = float(sync_probs @ (1.0 - none_at_max_mines))

        post = (sync_states[:, None, :] + mine_masks[None, :, :]).reshape(-1, n)
        probs = (sync_probs[:, None] * mine_probs[None, :]).ravel()
        post -= post.min(axis=1, keepdims=True)
        # one slot can push the spread from k-1 to at most k
        over = post.max(axis=1) >= k
        if over.any():
            block = post[over]
            post[over] = np.where(block > 0, block - 1, 0)
        codes = post @ radix
        uniq, inv = np.unique(codes, return_inverse=True)
        sums = np.bincount(inv, weights=probs)
        rows.append(np.full(uniq.size, row, dtype=np.int64))
        cols.append(np.searchsorted(state_codes, uniq))
        vals.append(sums)

    P = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(count, count))
    return TruncatedChain(scenario=scenario, k=k, states=tuple(states),
                          P=P, omega=omega)


# ---------------------------------------------------------------------------
# Steady state and capacity
# ---------------------------------------------------------------------------

def stationary(P, dense_cutoff: int = 5000, tol: float = 1e-12,
               max_iter: int = 10**6) -> np.ndarray:
    """Stationary row vector of a row-stochastic matrix (dense or CSR).

    Small matrices use a dense linear solve with one balance equation
    replaced by the normalization constraint; larger ones use power
    iteration down to an infinity-norm residual of `tol`. Non-convergence
    raises with the residual actually reached.
    """
    m = P.shape[0]
    if m <= dense_cutoff:
        dense = P.toarray() if sp.issparse(P) else np.asarray(P, dtype=float)
        A = dense.T - np.eye(m)
        A[-1, :] = 1.0
        b = np.zeros(m)
        b[-1] = 1.0
        return np.linalg.solve(A, b)
    pi = np.full(m, 1.0 / m)
    for _ in range(max_iter):
        nxt = pi @ P
        nxt /= nxt.sum()
        residual = np.abs(nxt - pi).max()
        pi = nxt
        if residual <= tol:
            return pi
    raise RuntimeError(
        f"power iteration did not reach residual {tol} in {max_iter} "
        f"iterations (achieved {residual:.3e})")


def steady_state(chain: TruncatedChain, dense_cutoff: int = 5000,
                 tol: float = 1e-12, max_iter: int = 10**6) -> SteadyState:
    """Solve pi P = pi, sum(pi) = 1 for a truncated chain."""
    return SteadyState(stationary(chain.P, dense_cutoff=dense_cutoff,
                                  tol=tol, max_iter=max_iter))


def capacity(chain: TruncatedChain, steady: SteadyState) -> CapacityResult:
    """Capacity of the truncated chain: steady-state average of omega."""
    if steady.pi.size != chain.n_states:
        raise ValueError(
            f"pi has {steady.pi.size} entries for {chain.n_states} states")
    rate = float(steady.pi @ chain.omega)
    return CapacityResult.from_rate(rate, chain.scenario)


def evaluate(scenario: NetworkScenario, k: int,
             state_cap: int = DEFAULT_STATE_CAP) -> CapacityResult:
    """Build, solve and evaluate one truncated chain."""
    chain = build_chain(scenario, k, state_cap=state_cap)
    return capacity(chain, steady_state(chain))


def converge_k(scenario: NetworkScenario, tolerance: float,
               state_cap: int = DEFAULT_STATE_CAP,
               k_start: int = 1) -> tuple[int, CapacityResult]:
    """Grow the truncation bound until the capacity estimate settles.

    Returns the first k with |R(k) - R(k-1)| < tolerance together with its
    capacity. Raises if the state cap is hit before that happens.
    """
    if tolerance <= 0:
        raise ValueError("tolerance must be positive")
    prev = None
    k = max(1, k_start)
    while True:
        try:
            result = evaluate(scenario, k, state_cap=state_cap)
        except ValueError as exc:
            raise ValueError(
                f"state cap reached before convergence at k={k}: {exc}") from exc
        if prev is not None and abs(result.growth_rate - prev.growth_rate) < tolerance:
            return k, result
        prev = result
        k += 1


# ---------------------------------------------------------------------------
# Debug dump
# ---------------------------------------------------------------------------

def dump_debug_csv(chain: TruncatedChain, steady: SteadyState,
                   states_path, matrix_path) -> None:
    """Write (states, pi, omega) and the dense transition matrix as CSV.

    Intended for inspecting small chains; the matrix file is dense and
    grows quadratically with the state count.
    """
    with open(states_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["state_id", "r_vector", "pi", "omega"])
        for i, state in enumerate(chain.states):
            writer.writerow([i, "|".join(str(x) for x in state),
                             repr(float(steady.pi[i])), repr(float(chain.omega[i]))])
    dense = chain.P.toarray()
    with open(matrix_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in dense:
            writer.writerow([repr(float(x)) for x in row])
