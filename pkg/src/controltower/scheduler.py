"""Gang placement: all-or-nothing assignment of task instances to nodes.

The placement pass is fragmentation-aware best fit: instances are laid down
largest first (GPU, then memory), each onto the feasible node that leaves
the least GPU stranded (ties: least leftover memory, then lowest node id).
Best fit can miss packings that exist, so below a size threshold an
Infeasible verdict is re-checked by exhaustive search over assignments;
above the threshold the heuristic verdict stands (documented approximation).
"""

from __future__ import annotations

from dataclasses import dataclass

from .resources import ResourceSpec

# Exact-feasibility envelope: heuristic misses are corrected by exhaustive
# search up to these sizes; bin packing cost explodes beyond them.
EXHAUSTIVE_MAX_INSTANCES = 12
EXHAUSTIVE_MAX_NODES = 8

Instance = tuple[str, ResourceSpec]  # (task instance id, demand)


@dataclass(frozen=True)
class Placement:
    """Complete gang assignment: every instance mapped to exactly one node."""

    assignments: dict[str, str]  # instance id -> node id
    demands: dict[str, ResourceSpec]  # instance id -> its resources

    def node_of(self, instance: str) -> str:
        return self.assignments[instance]


def _sorted_largest_first(instances: list[Instance]) -> list[Instance]:
    return sorted(
        instances,
        key=lambda inst: (-inst[1].gpu, -inst[1].memory_mib, -inst[1].vcores),
    )


def _best_fit(instances: list[Instance], free: dict[str, ResourceSpec]) -> dict[str, str] | None:
    assignments: dict[str, str] = {}
    for instance_id, need in _sorted_largest_first(instances):
        best: str | None = None
        best_key: tuple[int, int, str] | None = None
        for node_id in sorted(free):
            avail = free[node_id]
            if not need.fits_within(avail):
                continue
            key = (avail.gpu - need.gpu, avail.memory_mib - need.memory_mib, node_id)
            if best_key is None or key < best_key:
                best, best_key = node_id, key
        if best is None:
            return None
        free[best] = free[best].minus(need)
        assignments[instance_id] = best
    return assignments


def _exhaustive(instances: list[Instance], free: dict[str, ResourceSpec]) -> dict[str, str] | None:
    """Backtracking search for any feasible assignment. Symmetry between
    nodes with identical free vectors is skipped; totals prune dead ends."""
    order = _sorted_largest_first(instances)
    node_ids = sorted(free)
    remaining = {n: free[n] for n in node_ids}
    assignments: dict[str, str] = {}

    total_free = ResourceSpec()
    for r in remaining.values():
        total_free = total_free.plus(r)
    total_need = ResourceSpec()
    for _, need in order:
        total_need = total_need.plus(need)
    if not total_need.fits_within(total_free):
        return None

    def place(index: int) -> bool:
        if index == len(order):
            return True
        instance_id, need = order[index]
        seen: set[tuple[int, int, int]] = set()
        for node_id in node_ids:
            avail = remaining[node_id]
            state = (avail.vcores, avail.gpu, avail.memory_mib)
            if state in seen:
                continue
            seen.add(state)
            if not need.fits_within(avail):
                continue
            remaining[node_id] = avail.minus(need)
            assignments[instance_id] = node_id
            if place(index + 1):
                return True
            remaining[node_id] = avail
            del assignments[instance_id]
        return False

    return dict(assignments) if place(0) else None


def gang_schedule(
    instances: list[Instance], free_by_node: dict[str, ResourceSpec]
) -> Placement | None:
    """Place the whole gang or nothing. Returns None when infeasible.

    ``free_by_node`` is read-only here; committing the allocation is the
    caller's job. An empty gang is vacuously placed.
    """
    demands = {instance_id: need for instance_id, need in instances}
    if not instances:
        return Placement(assignments={}, demands={})

    working = dict(free_by_node)
    assignments = _best_fit(instances, working)
    if assignments is None and (
        len(instances) <= EXHAUSTIVE_MAX_INSTANCES
        and len(free_by_node) <= EXHAUSTIVE_MAX_NODES
    ):
        assignments = _exhaustive(instances, dict(free_by_node))
    if assignments is None:
        return None
    return Placement(assignments=assignments, demands=demands)
