"""Forest construction and loop analysis on switch configurations."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

from .model import Configuration, Island, NetworkCase, SwitchState, islands, make_config


class UnreachableError(ValueError):
    """Some buses cannot be reached from any root."""

    def __init__(self, bus_ids: list[int]):
        super().__init__(f"buses unreachable from every root: {bus_ids}")
        self.bus_ids = bus_ids


@dataclass(frozen=True)
class ForestBuildResult:
    config: Configuration
    open_list: tuple[int, ...]
    insertion_order: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class FundamentalLoop:
    """Closed branches completing a cycle (or root-to-root path) with an open branch.

    For a cycle the ids run from the open branch's from-side around to its
    to-side, so both list ends touch the open branch.  For an inter-feeder
    path they run root-to-root and the open branch sits between positions
    u_side_count-1 and u_side_count.
    """

    branch_ids: tuple[int, ...]
    inter_feeder: bool
    u_side_count: int

    def hop_distance(self, position: int) -> int:
        """Walk length from the open branch to the branch at `position`."""
        if self.inter_feeder:
            k = self.u_side_count
            return k - 1 - position if position < k else position - k
        return min(position, len(self.branch_ids) - 1 - position)


@dataclass(frozen=True)
class ForestIndex:
    """Per-bus tree data for a radial configuration."""

    root_of: dict[int, int]
    parent_bus: dict[int, int | None]
    parent_branch: dict[int, int | None]
    depth: dict[int, int]


def forest_index(case: NetworkCase, config: Configuration) -> ForestIndex:
    root_of: dict[int, int] = {}
    parent_bus: dict[int, int | None] = {}
    parent_branch: dict[int, int | None] = {}
    depth: dict[int, int] = {}
    for island in islands(case, config):
        root_of[island.root] = island.root
        parent_bus[island.root] = None
        parent_branch[island.root] = None
        depth[island.root] = 0
        queue = deque([island.root])
        while queue:
            bus = queue.popleft()
            for branch_id, other in case.adjacency[bus]:
                if branch_id not in island.branches or other in root_of:
                    continue
                root_of[other] = island.root
                parent_bus[other] = bus
                parent_branch[other] = branch_id
                depth[other] = depth[bus] + 1
                queue.append(other)
    return ForestIndex(root_of, parent_bus, parent_branch, depth)


def path_to_root(index: ForestIndex, bus: int) -> list[int]:
    """Branch ids walked from a bus up to its island root."""
    path = []
    current: int | None = bus
    while True:
        branch = index.parent_branch[current]
        if branch is None:
            return path
        path.append(branch)
        current = index.parent_bus[current]


def build_spanning_forest(case: NetworkCase, weights: dict[int, float]) -> ForestBuildResult:
    """Grow one tree per root, always closing the heaviest frontier branch.

    Non-switchable branches pinned closed take absolute priority; pinned-open
    branches are never candidates.  Ties fall to the lower branch id.
    """
    missing = [b.id for b in case.branches if b.id not in weights]
    if missing:
        raise KeyError(f"weights missing for branches {missing}")

    assigned: set[int] = set(case.roots)
    closed: set[int] = set()
    order: list[tuple[int, float]] = []
    candidates = [
        b
        for b in case.branches
        if b.switchable or b.default_state is SwitchState.CLOSED
    ]

    while len(assigned) < len(case.buses):
        best = None
        best_key = None
        for branch in candidates:
            if branch.id in closed:
                continue
            in_from = branch.from_bus in assigned
            in_to = branch.to_bus in assigned
            if in_from == in_to:
                continue  # interior (cycle/merge) or fully outside
            weight = math.inf if not branch.switchable else weights[branch.id]
            key = (-weight, branch.id)
            if best_key is None or key < best_key:
                best, best_key = branch, key
        if best is None:
            raise UnreachableError(sorted(set(case.bus_by_id) - assigned))
        closed.add(best.id)
        assigned.add(best.from_bus if best.from_bus not in assigned else best.to_bus)
        order.append((best.id, weights[best.id]))

    config = make_config(case, closed)
    open_list = tuple(sorted(config.open_ids))
    return ForestBuildResult(config, open_list, tuple(order))


def weights_from_flow(case: NetworkCase, solution) -> dict[int, float]:
    """Branch weights for forest growth: sending-end apparent power in MVA."""
    from .powerflow import NotConvergedError

    if not solution.converged:
        raise NotConvergedError("flow weights need a converged solution")
    weights = {b.id: 0.0 for b in case.branches}
    for branch_id, flow in solution.flows.items():
        weights[branch_id] = math.hypot(flow.p_send, flow.q_send)
    return weights


def fundamental_loop(case: NetworkCase, config: Configuration, open_branch: int) -> FundamentalLoop:
    """Closed branches that form a cycle with `open_branch`, ordered along the walk.

    When the open branch ties two different islands there is no cycle; the
    result is the path from one root to the other through the branch ends,
    flagged inter_feeder.  Opening any branch on it restores radiality.
    """
    if open_branch in config.closed:
        raise ValueError(f"branch {open_branch} is not open")
    branch = case.branch_by_id[open_branch]
    index = forest_index(case, config)
    u, v = branch.from_bus, branch.to_bus
    up, vp = path_to_root(index, u), path_to_root(index, v)
    if index.root_of[u] != index.root_of[v]:
        # root(u) -> ... -> u, then v -> ... -> root(v)
        return FundamentalLoop(
            tuple(reversed(up)) + tuple(vp), inter_feeder=True, u_side_count=len(up)
        )
    shared = 0
    while shared < min(len(up), len(vp)) and up[-1 - shared] == vp[-1 - shared]:
        shared += 1
    cycle = up[: len(up) - shared] + list(reversed(vp[: len(vp) - shared]))
    return FundamentalLoop(tuple(cycle), inter_feeder=False, u_side_count=len(cycle))


def adjacent_switches(case: NetworkCase, config: Configuration, reference: int) -> tuple[int, ...]:
    """Loop branches of an open reference switch, nearest ends first.

    Distance is the hop count from the reference branch along the loop walk;
    equal distances fall back to the lower branch id.
    """
    loop = fundamental_loop(case, config, reference)
    ranked = sorted(
        (loop.hop_distance(pos), branch_id)
        for pos, branch_id in enumerate(loop.branch_ids)
    )
    return tuple(branch_id for _, branch_id in ranked)
