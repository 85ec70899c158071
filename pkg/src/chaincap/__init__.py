"""chaincap: capacity, stale-block and consistency analysis of slotted
proof-of-work blockchains over lossy links.

Three complementary evaluation routes are provided and cross-validate one
another: exact closed forms for two miners, a truncated Markov chain over
relative chain lengths for any miner count, and a seeded slot-level Monte
Carlo simulator (longest-chain rule, plus a two-miner GHOST variant).
"""

from .netmodel import (CapacityResult, NetworkScenario, aggregate_lan,
                       complete_graph, expected_delay, ideal_capacity,
                       line_graph, stale_ratio, star_graph)
from .twominer import (TwoMinerParams, TwoMinerSolution,
                       baseline_constant_delay, baseline_fork_probability,
                       capacity_derivative, small_root, solve)
from .relchain import (SteadyState, TruncatedChain, build_chain, capacity,
                       converge_k, enumerate_states, evaluate, mine_kernel,
                       relative_state, steady_state, sync_kernel)
from .consistency import (ConsistencyReport, eta, fdtmc_numeric, gamma, tau)
from .simulator import (RULE_GHOST, RULE_LONGEST, SimConfig, SimReport, run,
                        run_replications)
from .ghost import BlockTree, ghost_parent
from .cli import mining_profile

__version__ = "0.1.0"
