"""Heaviest-observed-subtree (GHOST) chain selection for two miners.

Under GHOST a miner keeps every block it has observed in a tree and mines
on the leaf reached by walking from the root, picking at each fork the
child whose observed subtree holds more blocks. Senders still transmit a
single chain per slot: the path of their currently selected leaf. A
successful transmission merges that path into the receiver's tree whether
or not it is longer, so out-competed blocks keep contributing weight.

With two miners each block height hosts at most two blocks (every miner's
mined heights strictly increase), which pins the walk down: at any fork
the side containing a maximum-height leaf outweighs any side that reaches
less high, so the selected leaf always sits at the tree's maximum height
and only a weight comparison between two competing top branches remains.
The simulation exploits that; `BlockTree.ghost_leaf` keeps the literal
walk for small trees and for cross-checking.
"""

from __future__ import annotations

import numpy as np

from .simulator import (RULE_GHOST, SimConfig, SimReport, _batch_stderr,
                        _CHUNK_SLOTS, _replication_rng)

__all__ = ["BlockTree", "ghost_parent", "run_ghost"]


class BlockTree:
    """Append-only block tree; block 0 is the root with height 0."""

    def __init__(self):
        self.parent = [-1]
        self.miner = [-1]
        self.height = [0]
        self.children = {0: []}

    def __len__(self) -> int:
        return len(self.parent)

    def add_block(self, parent_id: int, miner: int) -> int:
        """Append a block under `parent_id`; returns the new block id."""
        if not 0 <= parent_id < len(self.parent):
            raise ValueError(f"unknown parent {parent_id!r}")
        block = len(self.parent)
        self.parent.append(parent_id)
        self.miner.append(miner)
        self.height.append(self.height[parent_id] + 1)
        self.children[parent_id].append(block)
        self.children[block] = []
        return block

    def subtree_sizes(self) -> list[int]:
        """Block count of every subtree; parents precede children by id."""
        sizes = [1] * len(self.parent)
        for b in range(len(self.parent) - 1, 0, -1):
            sizes[self.parent[b]] += sizes[b]
        return sizes


def ghost_parent(tree: BlockTree) -> int:
    """Leaf to mine on under the heaviest-observed-subtree rule.

    Walks from the root; at each fork the child with the larger observed
    subtree wins, ties go to the lower miner index and then to the lower
    (older) block id. On an unforked chain this is simply the tip.
    """
    sizes = tree.subtree_sizes()
    node = 0
    while tree.children[node]:
        node = min(tree.children[node],
                   key=lambda b: (-sizes[b], tree.miner[b], b))
    return node


# ---------------------------------------------------------------------------
# Simulation views
# ---------------------------------------------------------------------------

class _Registry:
    """Block records shared by both miners' views."""

    __slots__ = ("parent", "miner", "height")

    def __init__(self):
        self.parent = [-1]
        self.miner = [-1]
        self.height = [0]

    def new_block(self, parent_id: int, miner: int) -> int:
        block = len(self.parent)
        self.parent.append(parent_id)
        self.miner.append(miner)
        self.height.append(self.height[parent_id] + 1)
        return block


class _View:
    """One miner's observed subset of the registry tree."""

    __slots__ = ("reg", "known", "children", "maxh", "candidates")

    def __init__(self, reg: _Registry):
        self.reg = reg
        self.known = {0}
        self.children: dict[int, list[int]] = {}
        self.maxh = 0
        self.candidates = [0]

    def add(self, block: int) -> None:
        if block in self.known:
            return
        self.known.add(block)
        self.children.setdefault(self.reg.parent[block], []).append(block)
        h = self.reg.height[block]
        if h > self.maxh:
            self.maxh = h
            self.candidates = [block]
        elif h == self.maxh:
            self.candidates.append(block)

    def merge_chain(self, leaf: int) -> None:
        """Absorb the path from `leaf` down to the first shared block."""
        segment = []
        b = leaf
        while b not in self.known:
            segment.append(b)
            b = self.reg.parent[b]
        for blk in reversed(segment):
            self.add(blk)

    def _subtree_size(self, root: int) -> int:
        count = 0
        stack = [root]
        children = self.children
        while stack:
            b = stack.pop()
            count += 1
            kids = children.get(b)
            if kids:
                stack.extend(kids)
        return count

    def _resolve_pair(self, x: int, y: int) -> int:
        # climb both equal-height branches to the sibling blocks under the
        # fork, then compare observed subtree weights there
        parent = self.reg.parent
        ax, ay = x, y
        while parent[ax] != parent[ay]:
            ax = parent[ax]
            ay = parent[ay]
        wx = self._subtree_size(ax)
        wy = self._subtree_size(ay)
        if wx != wy:
            return x if wx > wy else y
        mx, my = self.reg.miner[ax], self.reg.miner[ay]
        if mx != my:
            return x if mx < my else y
        return x if ax < ay else y

    def ghost_leaf(self) -> int:
        """Selected leaf; competing top branches are settled at their fork."""
        cands = self.candidates
        if len(cands) == 1:
            return cands[0]
        if len(cands) == 2:
            return self._resolve_pair(cands[0], cands[1])
        return self.reference_leaf()

    def reference_leaf(self) -> int:
        """Literal root-to-leaf walk over the observed tree (for checks)."""
        sizes: dict[int, int] = {}
        order = sorted(self.known, key=self.reg.height.__getitem__, reverse=True)
        for b in order:
            sizes[b] = 1 + sum(sizes[k] for k in self.children.get(b, ()))
        node = 0
        while self.children.get(node):
            node = min(self.children[node],
                       key=lambda b: (-sizes[b], self.reg.miner[b], b))
        return node


# ---------------------------------------------------------------------------
# Simulation driver
# ---------------------------------------------------------------------------

def run_ghost(config: SimConfig, replication: int = 0) -> SimReport:
    """Two-miner simulation under GHOST, draw-compatible with longest-chain.

    Consumes the identical uniform stream as the longest-chain rule (two
    link draws, then two mining draws per slot), so runs with equal seeds
    see the same successes and the same mining outcomes under both rules.
    """
    scenario = config.scenario
    if scenario.n != 2:
        raise ValueError("ghost-two-miner requires exactly 2 miners")
    a01 = scenario.a[0, 1]
    a10 = scenario.a[1, 0]
    c0, c1 = scenario.c
    slots = config.slots
    rng = _replication_rng(config.seed, replication)

    reg = _Registry()
    views = (_View(reg), _View(reg))
    heights = np.empty(slots, np.int64)
    consist = np.empty(slots, np.uint8)

    pos = 0
    while pos < slots:
        m = min(_CHUNK_SLOTS, slots - pos)
        uniforms = rng.random((m, 4))
        for t in range(m):
            row = uniforms[t]
            s01 = row[0] < a01
            s10 = row[1] < a10
            v0, v1 = views
            if s01 and s10:
                l0 = v0.ghost_leaf()
                l1 = v1.ghost_leaf()
                v1.merge_chain(l0)
                v0.merge_chain(l1)
            elif s01:
                v1.merge_chain(v0.ghost_leaf())
            elif s10:
                v0.merge_chain(v1.ghost_leaf())
            consist[pos + t] = 1 if v0.ghost_leaf() == v1.ghost_leaf() else 0
            if row[2] < c0:
                v0.add(reg.new_block(v0.ghost_leaf(), 0))
            if row[3] < c1:
                v1.add(reg.new_block(v1.ghost_leaf(), 1))
            heights[pos + t] = v0.maxh if v0.maxh >= v1.maxh else v1.maxh
        pos += m

    total_mined = len(reg.parent) - 1
    winner = views[0] if views[0].maxh >= views[1].maxh else views[1]
    admitted = winner.maxh

    gamma = None
    if config.track_attribution:
        counts = [0, 0]
        b = winner.ghost_leaf()
        while b != 0:
            counts[reg.miner[b]] += 1
            b = reg.parent[b]
        if admitted > 0:
            gamma = tuple(x / admitted for x in counts)
        else:
            gamma = (0.0, 0.0)

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
        rule=RULE_GHOST,
    )
