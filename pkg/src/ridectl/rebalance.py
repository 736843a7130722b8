"""Idle-driver rebalancing as a minimum-cost flow.

Every region ``i`` has a node ``i`` holding its imbalance and a starred node
``i*`` that idle drivers pass through when they leave the region. A source
``SO`` and a sink ``SI`` close the network: ``SO -> i`` adds an external
driver, ``i -> SI`` removes one, both at a penalty cost ``M`` that dominates any
internal routing, and ``SO -> SI`` carries the slack.

Node names are strings: ``"3"``, ``"3*"``, ``"SO"`` and ``"SI"``.
"""

import heapq
import logging
import re
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from typing import Optional

import networkx as nx

from ridectl.errors import InfeasibleError, InvalidInputError, StateError

logger = logging.getLogger(__name__)

SOURCE = "SO"
SINK = "SI"

Adjacency = set[tuple[int, int]]


def star(region: int) -> str:
    return f"{region}*"


@dataclass(frozen=True)
class RegionSnapshot:
    region: int
    active: int
    idle: int
    target: int

    def __post_init__(self) -> None:
        if min(self.active, self.idle, self.target) < 0:
            raise InvalidInputError(f"region {self.region}: counts must be nonnegative")

    @property
    def supply(self) -> int:
        return self.active + self.idle


@dataclass(frozen=True)
class Imbalance:
    virtual_supply: int
    virtual_demand: int
    delta: int


def imbalance(snapshot: RegionSnapshot) -> Imbalance:
    """Movable excess idle drivers, or the shortfall against the target."""
    gap = snapshot.target - snapshot.supply
    if gap > 0:
        return Imbalance(0, gap, -gap)
    supply = min(snapshot.idle, -gap)
    return Imbalance(supply, 0, supply)


# ─────────────────────────────────────────────────────────────────────────────
# Network
# ─────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Arc:
    tail: str
    head: str
    cost: int
    capacity: Optional[int] = None  # None is unbounded


@dataclass(frozen=True)
class FlowNetwork:
    regions: tuple[int, ...]
    nodes: tuple[str, ...]
    balances: Mapping[str, int]
    arcs: tuple[Arc, ...]
    big_m: int
    external: bool = True

    @property
    def total_balance(self) -> int:
        return sum(self.balances.values())

    def with_balances(self, overrides: Mapping[str, int]) -> "FlowNetwork":
        unknown = sorted(set(overrides) - set(self.nodes))
        if unknown:
            raise InvalidInputError(f"unknown network nodes: {', '.join(unknown)}")
        return replace(self, balances={**self.balances, **overrides})


def default_big_m(deltas: Sequence[int]) -> int:
    return 1 + len(deltas) * (sum(abs(d) for d in deltas) + 1)


def _check_adjacency(adjacency: Iterable[tuple[int, int]], regions: set[int]) -> dict[int, list[int]]:
    pairs = set(adjacency)
    neighbours: dict[int, list[int]] = defaultdict(list)
    for i, j in sorted(pairs):
        if i == j:
            raise InvalidInputError(f"region {i} cannot be adjacent to itself")
        if i not in regions or j not in regions:
            raise InvalidInputError(f"adjacency ({i}, {j}) names an unknown region")
        if (j, i) not in pairs:
            raise InvalidInputError(f"adjacency is not symmetric: ({i}, {j}) has no ({j}, {i})")
        neighbours[i].append(j)
    return neighbours


def build_network(
    snapshots: Sequence[RegionSnapshot],
    adjacency: Iterable[tuple[int, int]],
    big_m: Optional[int] = None,
    external: bool = True,
) -> FlowNetwork:
    """Transformed network for one rebalancing instant.

    ``external=False`` builds the mid-window variant; the network is the same
    but its source and sink flows are reported as shortfall and surplus.
    """
    ordered = sorted(snapshots, key=lambda s: s.region)
    regions = [s.region for s in ordered]
    if len(set(regions)) != len(regions):
        raise InvalidInputError("duplicate region ids in snapshots")
    neighbours = _check_adjacency(adjacency, set(regions))

    imbalances = [imbalance(s) for s in ordered]
    deltas = [imb.delta for imb in imbalances]
    if big_m is None:
        big_m = default_big_m(deltas)
    largest = max((abs(d) for d in deltas), default=0)
    if big_m <= len(regions) * largest:
        raise InvalidInputError(f"penalty cost {big_m} does not dominate internal routing")

    nodes: list[str] = []
    balances: dict[str, int] = {}
    arcs: list[Arc] = []
    for snapshot, imb in zip(ordered, imbalances):
        node = str(snapshot.region)
        nodes += [node, star(snapshot.region)]
        balances[node] = imb.delta
        balances[star(snapshot.region)] = 0
        arcs.append(Arc(node, star(snapshot.region), 1, snapshot.idle))
        arcs += [Arc(star(snapshot.region), str(j), 0) for j in neighbours.get(snapshot.region, [])]
        arcs.append(Arc(node, SINK, big_m))
    arcs += [Arc(SOURCE, str(region), big_m) for region in regions]
    arcs.append(Arc(SOURCE, SINK, 0))
    nodes += [SOURCE, SINK]
    balances[SOURCE] = sum(imb.virtual_demand for imb in imbalances)
    balances[SINK] = -sum(imb.virtual_supply for imb in imbalances)

    return FlowNetwork(tuple(regions), tuple(nodes), balances, tuple(arcs), big_m, external)


# ─────────────────────────────────────────────────────────────────────────────
# Solver
# ─────────────────────────────────────────────────────────────────────────────


class _Residual:
    """Residual graph with paired forward/backward edges."""

    def __init__(self, size: int):
        self.head: list[int] = []
        self.capacity: list[int] = []
        self.cost: list[int] = []
        self.edges: list[list[int]] = [[] for _ in range(size)]

    def add(self, tail: int, head: int, capacity: int, cost: int) -> int:
        index = len(self.head)
        self.head += [head, tail]
        self.capacity += [capacity, 0]
        self.cost += [cost, -cost]
        self.edges[tail].append(index)
        self.edges[head].append(index + 1)
        return index

    def shortest_paths(self, source: int, potential: list[int]) -> tuple[list[Optional[int]], list[int]]:
        dist: list[Optional[int]] = [None] * len(self.edges)
        parent = [-1] * len(self.edges)
        dist[source] = 0
        heap = [(0, source)]
        while heap:
            d, node = heapq.heappop(heap)
            if d != dist[node]:
                continue
            for e in self.edges[node]:
                if self.capacity[e] <= 0:
                    continue
                head = self.head[e]
                candidate = d + self.cost[e] + potential[node] - potential[head]
                if dist[head] is None or candidate < dist[head]:
                    dist[head] = candidate
                    parent[head] = e
                    heapq.heappush(heap, (candidate, head))
        return dist, parent


def solve_mcf(network: FlowNetwork) -> tuple[int, ...]:
    """Integral minimum-cost flow by successive shortest paths with potentials.

    Returns one flow per arc, in ``network.arcs`` order.
    """
    if network.total_balance != 0:
        raise InfeasibleError(f"node balances sum to {network.total_balance}, not 0")
    index = {node: k for k, node in enumerate(network.nodes)}
    supply = sum(b for b in network.balances.values() if b > 0)
    unbounded = supply

    residual = _Residual(len(network.nodes) + 2)
    source, sink = len(network.nodes), len(network.nodes) + 1
    arc_edges = [
        residual.add(index[arc.tail], index[arc.head], unbounded if arc.capacity is None else arc.capacity, arc.cost)
        for arc in network.arcs
    ]
    for node in network.nodes:
        b = network.balances[node]
        if b > 0:
            residual.add(source, index[node], b, 0)
        elif b < 0:
            residual.add(index[node], sink, -b, 0)

    potential = [0] * len(residual.edges)
    sent = 0
    while sent < supply:
        dist, parent = residual.shortest_paths(source, potential)
        if dist[sink] is None:
            raise InfeasibleError(f"only {sent} of {supply} units can be routed")
        # nodes unreachable now stay unreachable, so their potentials never matter
        for node, d in enumerate(dist):
            if d is not None:
                potential[node] += d
        bottleneck = supply - sent
        node = sink
        while node != source:
            e = parent[node]
            bottleneck = min(bottleneck, residual.capacity[e])
            node = residual.head[e ^ 1]
        node = sink
        while node != source:
            e = parent[node]
            residual.capacity[e] -= bottleneck
            residual.capacity[e ^ 1] += bottleneck
            node = residual.head[e ^ 1]
        sent += bottleneck

    flows = tuple(residual.capacity[e + 1] for e in arc_edges)
    if not is_optimal(network, flows):
        raise StateError("solver returned a flow with a negative residual cycle")
    logger.debug("min-cost flow: %d units, cost %d", supply, flow_cost(network, flows))
    return flows


def flow_cost(network: FlowNetwork, flows: Sequence[int]) -> int:
    return sum(arc.cost * x for arc, x in zip(network.arcs, flows))


def is_optimal(network: FlowNetwork, flows: Sequence[int]) -> bool:
    """A feasible flow is optimal iff its residual graph has no negative-cost cycle."""
    graph = nx.MultiDiGraph()
    graph.add_nodes_from(network.nodes)
    for arc, x in zip(network.arcs, flows):
        if arc.capacity is None or x < arc.capacity:
            graph.add_edge(arc.tail, arc.head, weight=arc.cost)
        if x > 0:
            graph.add_edge(arc.head, arc.tail, weight=-arc.cost)
    return not nx.negative_edge_cycle(graph, weight="weight")


# ─────────────────────────────────────────────────────────────────────────────
# Plans
# ─────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class RebalancePlan:
    """Driver movements and fleet-size changes decided at one instant.

    ``shortfall`` and ``surplus`` are only filled by internal-only solves:
    they report drivers the region still lacks or still has in excess, and
    are never applied.
    """

    moves: dict[tuple[int, int], int] = field(default_factory=dict)
    add: dict[int, int] = field(default_factory=dict)
    remove: dict[int, int] = field(default_factory=dict)
    slack: int = 0
    shortfall: dict[int, int] = field(default_factory=dict)
    surplus: dict[int, int] = field(default_factory=dict)
    cost: int = 0

    @property
    def total_internal(self) -> int:
        return sum(self.moves.values())

    @property
    def total_external(self) -> int:
        return sum(self.add.values()) + sum(self.remove.values())

    @property
    def is_empty(self) -> bool:
        return not (self.moves or self.add or self.remove)

    def to_dict(self) -> dict:
        return {
            "moves": [{"from": i, "to": j, "drivers": n} for (i, j), n in sorted(self.moves.items())],
            "add": {str(i): n for i, n in sorted(self.add.items())},
            "remove": {str(i): n for i, n in sorted(self.remove.items())},
            "slack": self.slack,
            "shortfall": {str(i): n for i, n in sorted(self.shortfall.items())},
            "surplus": {str(i): n for i, n in sorted(self.surplus.items())},
            "total_internal": self.total_internal,
            "total_external": self.total_external,
            "cost": self.cost,
        }


def _region(node: str) -> int:
    return int(node.rstrip("*"))


def extract_plan(network: FlowNetwork, flows: Sequence[int]) -> RebalancePlan:
    """Read moves, additions, removals and slack off a feasible flow."""
    if len(flows) != len(network.arcs):
        raise InvalidInputError(f"expected {len(network.arcs)} arc flows, got {len(flows)}")
    net: dict[str, int] = defaultdict(int)
    for arc, x in zip(network.arcs, flows):
        if x < 0 or (arc.capacity is not None and x > arc.capacity):
            raise InvalidInputError(f"flow {x} on {arc.tail}->{arc.head} violates its bounds")
        net[arc.tail] += x
        net[arc.head] -= x
    for node in network.nodes:
        if net[node] != network.balances[node]:
            raise InvalidInputError(f"flow is not conserved at node {node}")

    moves: dict[tuple[int, int], int] = {}
    add: dict[int, int] = {}
    remove: dict[int, int] = {}
    leaving: dict[int, int] = defaultdict(int)
    slack = 0
    for arc, x in zip(network.arcs, flows):
        if arc.tail == SOURCE and arc.head == SINK:
            slack = x
        elif x == 0:
            continue
        elif arc.tail == SOURCE:
            add[_region(arc.head)] = x
        elif arc.head == SINK:
            remove[_region(arc.tail)] = x
        elif arc.tail.endswith("*"):
            moves[(_region(arc.tail), _region(arc.head))] = x
        else:
            leaving[_region(arc.tail)] = x

    sent: dict[int, int] = defaultdict(int)
    for (i, _), x in moves.items():
        sent[i] += x
    if dict(sent) != dict(leaving):
        raise InvalidInputError("drivers leaving a region do not match its outgoing moves")

    demand = network.balances[SOURCE]
    supply = -network.balances[SINK]
    if demand - sum(add.values()) != supply - sum(remove.values()):
        raise StateError("unmatched demand and unmatched supply differ")

    cost = flow_cost(network, flows)
    if not network.external:
        return RebalancePlan(moves=moves, slack=slack, shortfall=add, surplus=remove, cost=cost)
    return RebalancePlan(moves=moves, add=add, remove=remove, slack=slack, cost=cost)


def rebalance(
    snapshots: Sequence[RegionSnapshot],
    adjacency: Iterable[tuple[int, int]],
    external: bool = True,
) -> RebalancePlan:
    network = build_network(snapshots, adjacency, external=external)
    plan = extract_plan(network, solve_mcf(network))
    logger.debug(
        "rebalance (%s): %d internal, %d external",
        "full" if external else "internal only",
        plan.total_internal,
        plan.total_external,
    )
    return plan


def apply_plan(snapshots: Sequence[RegionSnapshot], plan: RebalancePlan, apply_moves: bool = True) -> dict[int, int]:
    """Idle drivers per region after the plan.

    Without ``apply_moves`` drivers stay where they are and removals are
    capped at the idle drivers actually present.
    """
    idle = {s.region: s.idle for s in snapshots}
    if apply_moves:
        for (i, j), n in plan.moves.items():
            idle[i] -= n
            idle[j] += n
    for region, n in plan.add.items():
        idle[region] += n
    for region, n in plan.remove.items():
        idle[region] -= n if apply_moves else min(n, idle[region])
    negative = sorted(r for r, n in idle.items() if n < 0)
    if negative:
        raise StateError(f"plan leaves negative idle counts in regions {negative}")
    return idle


# ─────────────────────────────────────────────────────────────────────────────
# Instance text format
# ─────────────────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class Instance:
    snapshots: tuple[RegionSnapshot, ...]
    adjacency: frozenset[tuple[int, int]]
    balances: Mapping[str, int] = field(default_factory=dict)

    def network(self, external: bool = True) -> FlowNetwork:
        network = build_network(self.snapshots, self.adjacency, external=external)
        return network.with_balances(self.balances) if self.balances else network


_INT = r"-?\d+"
_LINES = {
    "region": re.compile(rf"^region\s+(\d+)\s+({_INT})\s+({_INT})\s+({_INT})$"),
    "adjacent": re.compile(r"^adjacent\s+(\d+)\s+(\d+)$"),
    "arc": re.compile(r"^arc\s+(\d+)\s+(\d+)$"),
    "balance": re.compile(rf"^balance\s+(\S+)\s+({_INT})$"),
}


def parse_instance(text: str) -> Instance:
    """Parse the plain-text instance format.

    ::

        # id active idle target
        region 1 3 4 5
        region 2 3 0 5
        adjacent 1 2      # both directions
        arc 2 3           # one direction only
        balance SO 7      # override a node balance
    """
    snapshots: list[RegionSnapshot] = []
    adjacency: set[tuple[int, int]] = set()
    balances: dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        keyword = line.split()[0]
        match = _LINES[keyword].match(line) if keyword in _LINES else None
        if match is None:
            raise InvalidInputError(f"line {number}: cannot parse {raw.strip()!r}")
        values = match.groups()
        if keyword == "region":
            region, active, idle, target = (int(v) for v in values)
            try:
                snapshots.append(RegionSnapshot(region, active, idle, target))
            except InvalidInputError as e:
                raise InvalidInputError(f"line {number}: {e.message}") from e
        elif keyword == "adjacent":
            i, j = int(values[0]), int(values[1])
            adjacency |= {(i, j), (j, i)}
        elif keyword == "arc":
            adjacency.add((int(values[0]), int(values[1])))
        else:
            balances[values[0]] = int(values[1])
    if not snapshots:
        raise InvalidInputError("instance has no regions")
    return Instance(tuple(snapshots), frozenset(adjacency), balances)
