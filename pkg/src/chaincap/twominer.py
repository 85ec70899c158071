"""Exact capacity of a two-miner blockchain over unreliable directed links.

The relative chain-length process of two miners is a Markov chain on two
half-axes: states where miner 1 leads by i blocks and states where miner 2
leads by j blocks. Each half-axis behaves like a discrete-time queue with
renovation: a successful transmission of the leader's chain empties the
backlog in one step. Solving the balance equations with probability
generating functions gives the stationary distribution, and with it the
chain growth rate, in closed form.

Two published growth-rate approximations for the same setting are included
as comparison baselines: one built on a constant bidirectional block delay,
the other on a network-wide fork probability.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

__all__ = [
    "TwoMinerParams",
    "TwoMinerSolution",
    "small_root",
    "solve",
    "baseline_constant_delay",
    "baseline_fork_probability",
    "capacity_derivative",
]


@dataclass(frozen=True)
class TwoMinerParams:
    """Mining rates and directed link success probabilities of two miners."""

    c1: float
    c2: float
    a12: float
    a21: float

    def __post_init__(self):
        for name in ("c1", "c2", "a12", "a21"):
            value = float(getattr(self, name))
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
            object.__setattr__(self, name, value)

    def swapped(self) -> "TwoMinerParams":
        """The same network with the two miner roles exchanged."""
        return TwoMinerParams(self.c2, self.c1, self.a21, self.a12)


@dataclass(frozen=True)
class TwoMinerSolution:
    """Stationary distribution and capacity of the two-miner chain.

    pi00 is the probability both miners hold equally long chains; pi10 and
    pi01 are the one-block leads; phi1 and psi1 are the aggregated tails
    (leads of two or more blocks) on each side. z1/z3 are the contraction
    ratios of the two tail recursions, and d/e/f/g the scalars tying the
    tails back to the one-block states. R2 is the growth rate in
    blocks/slot.

    `partitioned` marks inputs with no working link in either direction:
    the chain is not ergodic there, every finite state has zero long-run
    occupancy, and R2 is the growth rate of the faster miner's chain.
    """

    z1: float
    z3: float
    d_const: float
    e_const: float
    f_const: float
    g_const: float
    pi00: float
    pi10: float
    pi01: float
    phi1: float
    psi1: float
    R2: float
    partitioned: bool = False


def small_root(c_fwd: float, c_bwd: float, a: float) -> float:
    """Contraction ratio of one tail recursion, the quadratic root in [0, 1).

    The tail balance equations pi[i] = q*pi[i-1] + w*pi[i] + s*pi[i+1]
    (forward-mining rate q, backward-mining rate s, both damped by the
    failed-sync factor 1-a) force a geometric tail with ratio equal to the
    unique root in (0, 1) of q*z^2 - B*z + s, where B = 1 - (1-a)*w.

    The root is evaluated in the rationalized form 2s / (B + sqrt(B^2-4qs))
    which stays finite for q -> 0 and returns exactly 0 at a = 1 or s = 0.
    """
    for name, value in (("c_fwd", c_fwd), ("c_bwd", c_bwd), ("a", a)):
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {value!r}")
    w = (1.0 - c_fwd) * (1.0 - c_bwd) + c_fwd * c_bwd
    q = (1.0 - a) * (c_fwd * (1.0 - c_bwd))
    s = (1.0 - a) * ((1.0 - c_fwd) * c_bwd)
    lin = 1.0 - (1.0 - a) * w
    if lin == 0.0 and q == 0.0 and s == 0.0:
        raise ValueError("quadratic vanishes identically for these inputs")
    disc = lin * lin - 4.0 * (q * s)
    if disc < 0.0:
        if disc < -1e-14:
            raise ValueError(f"negative discriminant {disc!r}; inputs outside domain")
        disc = 0.0
    return (2.0 * s) / (lin + math.sqrt(disc))


# Helper templates below are shared between the two miner roles so that
# solving the role-swapped parameters reproduces the mirrored solution
# bit-for-bit (every expression sees the same operands in the same order).

def _tail_scale(lead_rate: float, z: float, a: float) -> float:
    # S = pi_lead * (1 + (1-a)*lead_rate*(1-z)/a): one-block state plus tail
    if lead_rate == 0.0:
        return 1.0
    return 1.0 + ((1.0 - a) * (lead_rate * (1.0 - z))) / a

def _drain(w: float, lead_rate: float, z: float, a: float, tail_scale: float) -> float:
    return 1.0 - (1.0 - a) * (w + lead_rate * z) - (tail_scale * a) * lead_rate

def _lead_numerator(lead_rate: float, other_drain: float, other_a: float,
                    other_scale: float, other_rate: float) -> float:
    return lead_rate * (other_drain + (other_a * other_scale) * other_rate)

def _extension_rate(c_lead: float, a_to_follower: float, c_follower: float,
                    c_prod: float) -> float:
    # leader mines, or the follower mines alone after a successful sync
    return c_lead + a_to_follower * (c_follower - c_prod)


def solve(params: TwoMinerParams) -> TwoMinerSolution:
    """Stationary distribution and capacity for two miners, in closed form.

    Degenerate inputs short-circuit: a silent miner leaves the whole chain
    to its peer (c1 = 0 gives R2 = c2 and vice versa), and a network with
    both links dead is flagged `partitioned` with R2 = max(c1, c2). Inputs
    where exactly one link is dead while both miners are active are
    rejected: the lead of the unreachable miner can grow without bound and
    the stationary distribution need not exist.
    """
    c1, c2, a12, a21 = params.c1, params.c2, params.a12, params.a21
    u = c1 * (1.0 - c2)   # only miner 1 mines: lead grows on the [i,0] side
    v = c2 * (1.0 - c1)   # only miner 2 mines
    w = (1.0 - c1) * (1.0 - c2) + c1 * c2  # lead unchanged

    if c1 == 0.0 and c2 == 0.0:
        return TwoMinerSolution(0.0, 0.0, 1.0, 1.0, a12, a21,
                                1.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    if a12 == 0.0 and a21 == 0.0:
        # No link ever delivers: each miner grows its own chain forever and
        # the longest of the two grows at the faster miner's rate.
        return TwoMinerSolution(0.0, 0.0, 1.0, 1.0, 0.0, 0.0,
                                0.0, 0.0, 0.0, 0.0, 0.0,
                                max(c1, c2), partitioned=True)
    if c1 == 0.0 or c2 == 0.0:
        lone_rate, renovation = (c2, a21) if c1 == 0.0 else (c1, a12)
        if renovation == 0.0:
            # The active miner's lead is never flushed back to its peer.
            return TwoMinerSolution(0.0, 0.0, 1.0, 1.0, 0.0, 0.0,
                                    0.0, 0.0, 0.0, 0.0, 0.0,
                                    lone_rate, partitioned=True)
        sol = _solve_ergodic(c1, c2, a12, a21, u, v, w)
        # The capacity is exactly the active miner's rate; the general
        # assembly reproduces it only to rounding.
        return replace(sol, R2=lone_rate)
    if (a12 == 0.0 and u > 0.0) or (a21 == 0.0 and v > 0.0):
        raise ValueError(
            "one link is dead while both miners are active: the leader's "
            "advantage can grow without bound and the closed form does not "
            "apply; evaluate such scenarios with the truncated chain or the "
            "simulator")
    return _solve_ergodic(c1, c2, a12, a21, u, v, w)


def _solve_ergodic(c1, c2, a12, a21, u, v, w) -> TwoMinerSolution:
    # a side that never grows a lead (u or v = 0) has an empty tail; its
    # contraction ratio is vacuous and is reported as 0
    z1 = small_root(c1, c2, a12) if u > 0.0 else 0.0
    z3 = small_root(c2, c1, a21) if v > 0.0 else 0.0
    d = _tail_scale(u, z1, a12)
    e = _tail_scale(v, z3, a21)
    f = _drain(w, u, z1, a12, d)
    g = _drain(w, v, z3, a21, e)
    denom = (f + u * d) * (g + v * e) - (u * v) * (d * e) * ((1.0 - a12) * (1.0 - a21))
    pi10 = _lead_numerator(u, g, a21, e, v) / denom
    pi01 = _lead_numerator(v, f, a12, d, u) / denom
    pi00 = 1.0 - (d * pi10 + e * pi01)
    lead1 = d * pi10   # pi10 + tail on miner 1's side
    lead2 = e * pi01
    r2 = (c1 + c2 - c1 * c2) * pi00 + (
        _extension_rate(c1, a12, c2, c1 * c2) * lead1
        + _extension_rate(c2, a21, c1, c1 * c2) * lead2)
    return TwoMinerSolution(z1, z3, d, e, f, g,
                            pi00, pi10, pi01,
                            (d - 1.0) * pi10, (e - 1.0) * pi01, r2)


def baseline_constant_delay(c1: float, c2: float, alpha: float) -> float:
    """Growth-rate baseline that models the link as a constant delay.

    The link success rate alpha is converted to its mean delay d = 1/alpha
    and plugged into the constant-delay growth-rate formula
    (c1^2 e^{2 c1 d} - c2^2 e^{2 c2 d}) / (c1 e^{2 c1 d} - c2 e^{2 c2 d}),
    which requires c1 != c2 (it is singular at equal rates).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    if c1 == c2:
        raise ValueError("constant-delay baseline is singular at c1 == c2")
    delay = 1.0 / alpha
    # factor out exp(2*cmax*d) so the intermediate terms never overflow
    cm = max(c1, c2)
    e1 = math.exp(2.0 * (c1 - cm) * delay)
    e2 = math.exp(2.0 * (c2 - cm) * delay)
    return (c1 * c1 * e1 - c2 * c2 * e2) / (c1 * e1 - c2 * e2)


def baseline_fork_probability(c1: float, c2: float, alpha: float) -> float:
    """Growth-rate baseline derived from a global fork probability.

    Treats every block mined before the previous one has fully propagated
    (mean delay d = 1/alpha) as a fork: R = (c1+c2) / (2 - e^{-d(c1+c2)}).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    delay = 1.0 / alpha
    total = c1 + c2
    return total / (2.0 - math.exp(-delay * total))


def capacity_derivative(params: TwoMinerParams, h: float, *,
                        couple_c2: bool = True) -> float:
    """Central finite difference of the capacity with respect to c1.

    With couple_c2=True (the default) the total mining rate is held fixed:
    the two evaluation points are (c1 +/- h, c2 -/+ h). This is the slope
    along the constant-sum path used when studying how the split of a fixed
    total hash rate affects capacity. couple_c2=False perturbs c1 alone.
    """
    if h <= 0.0:
        raise ValueError("step h must be positive")
    if params.c1 - h < 0.0 or params.c1 + h > 1.0:
        raise ValueError(f"step {h!r} pushes c1 = {params.c1!r} outside [0, 1]")
    if couple_c2:
        hi = TwoMinerParams(params.c1 + h, params.c2 - h, params.a12, params.a21)
        lo = TwoMinerParams(params.c1 - h, params.c2 + h, params.a12, params.a21)
    else:
        hi = TwoMinerParams(params.c1 + h, params.c2, params.a12, params.a21)
        lo = TwoMinerParams(params.c1 - h, params.c2, params.a12, params.a21)
    return (solve(hi).R2 - solve(lo).R2) / (2.0 * h)
