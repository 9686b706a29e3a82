"""Agent communication graphs and malicious-role assignment.

Graphs are undirected without stored self-loops; neighborhoods include the
agent itself at query time.  Role assignment rejects configurations where
any benign agent would face a malicious-majority neighborhood or where the
benign agents do not form a connected subgraph.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class TopologyError(RuntimeError):
    """Raised when a valid topology cannot be generated or is malformed."""


def erdos_renyi(agent_count: int, edge_probability: float, seed) -> np.ndarray:
    """Random graph: each unordered pair connected independently with prob p."""
    if agent_count < 2:
        raise ValueError("need at least 2 agents")
    if not 0.0 < edge_probability <= 1.0:
        raise ValueError(f"edge probability must lie in (0, 1], got {edge_probability}")
    rng = np.random.default_rng(seed)
    adjacency = np.zeros((agent_count, agent_count), dtype=bool)
    iu = np.triu_indices(agent_count, k=1)
    adjacency[iu] = rng.random(iu[0].size) < edge_probability
    return adjacency | adjacency.T


@dataclass(frozen=True, eq=False)
class NetworkTopology:
    adjacency: np.ndarray  # (K, K) bool, symmetric, zero diagonal
    malicious: np.ndarray  # (K,) bool

    def __post_init__(self) -> None:
        adj = np.asarray(self.adjacency, dtype=bool)
        mal = np.asarray(self.malicious, dtype=bool).ravel()
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise TopologyError("adjacency must be square")
        if adj.diagonal().any():
            raise TopologyError("adjacency must not store self-loops")
        if not np.array_equal(adj, adj.T):
            raise TopologyError("adjacency must be symmetric")
        if mal.size != adj.shape[0]:
            raise TopologyError("role vector length must match agent count")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "malicious", mal)

    @property
    def agent_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_malicious(self) -> int:
        return int(self.malicious.sum())

    @property
    def benign_agents(self) -> np.ndarray:
        return np.flatnonzero(~self.malicious)

    @property
    def malicious_agents(self) -> np.ndarray:
        return np.flatnonzero(self.malicious)

    def neighborhood(self, k: int) -> np.ndarray:
        """Agent ids adjacent to k, plus k itself, sorted."""
        if not 0 <= k < self.agent_count:
            raise ValueError(f"agent id {k} out of range")
        nb = self.adjacency[k].copy()
        nb[k] = True
        return np.flatnonzero(nb)

    def to_text(self) -> str:
        """Edge list ("k l" per line) followed by role lines ("k B|M")."""
        lines = []
        iu = np.triu_indices(self.agent_count, k=1)
        for i, j in zip(*iu):
            if self.adjacency[i, j]:
                lines.append(f"{i} {j}")
        for k in range(self.agent_count):
            lines.append(f"{k} {'M' if self.malicious[k] else 'B'}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())


def benign_majority_holds(adjacency: np.ndarray, malicious: np.ndarray) -> bool:
    """True if every benign agent sees more benign than malicious neighbors."""
    closed = (adjacency | np.eye(adjacency.shape[0], dtype=bool)).astype(np.int64)
    benign_counts = closed @ (~malicious).astype(np.int64)
    malicious_counts = closed @ malicious.astype(np.int64)
    benign = ~malicious
    return bool((benign_counts[benign] > malicious_counts[benign]).all())


def benign_subgraph_connected(adjacency: np.ndarray, malicious: np.ndarray) -> bool:
    """True if the graph restricted to benign agents is connected."""
    benign = np.flatnonzero(~malicious)
    if benign.size == 0:
        return False
    sub = adjacency[np.ix_(benign, benign)]
    seen = np.zeros(benign.size, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        i = stack.pop()
        for j in np.flatnonzero(sub[i]):
            if not seen[j]:
                seen[j] = True
                stack.append(j)
    return bool(seen.all())


def assign_roles(
    adjacency: np.ndarray, num_malicious: int, seed, max_attempts: int = 100
) -> NetworkTopology:
    """Mark a uniformly random subset malicious, resampling until valid.

    Validity requires the benign-majority condition at every benign agent
    and a connected benign subgraph.  Raises ``TopologyError`` naming the
    constraints that failed once ``max_attempts`` is exhausted.
    """
    agent_count = adjacency.shape[0]
    if not 0 <= num_malicious < agent_count / 2:
        raise ValueError(
            f"num_malicious must satisfy 0 <= m < K/2, got {num_malicious} of {agent_count}"
        )
    rng = np.random.default_rng(seed)
    failures = {"benign majority": 0, "benign connectivity": 0}
    for _ in range(max_attempts):
        malicious = np.zeros(agent_count, dtype=bool)
        malicious[rng.choice(agent_count, size=num_malicious, replace=False)] = True
        if not benign_majority_holds(adjacency, malicious):
            failures["benign majority"] += 1
            continue
        if not benign_subgraph_connected(adjacency, malicious):
            failures["benign connectivity"] += 1
            continue
        return NetworkTopology(adjacency, malicious)
    detail = ", ".join(f"{name} failed {n}x" for name, n in failures.items() if n)
    raise TopologyError(
        f"no valid role assignment in {max_attempts} attempts ({detail})"
    )


def generate_topology(
    agent_count: int,
    edge_probability: float,
    num_malicious: int,
    seed,
    max_graph_attempts: int = 100,
    max_role_attempts: int = 100,
) -> NetworkTopology:
    """Sample a graph and role assignment, regenerating the graph if needed."""
    last_error: TopologyError | None = None
    for child in np.random.SeedSequence(seed).spawn(max_graph_attempts):
        graph_seed, role_seed = child.spawn(2)
        adjacency = erdos_renyi(agent_count, edge_probability, graph_seed)
        try:
            return assign_roles(adjacency, num_malicious, role_seed, max_role_attempts)
        except TopologyError as err:
            last_error = err
    raise TopologyError(
        f"no valid topology in {max_graph_attempts} graph attempts: {last_error}"
    )


def contamination_percent(num_malicious: int, agent_count: int) -> int:
    """Contamination rate as the nearest whole percent."""
    return round(100.0 * num_malicious / agent_count)
