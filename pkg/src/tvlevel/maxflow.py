"""Exact integer max-flow (Dinic) with residual reachability queries.

Real capacities are quantized to integers at ``quantum`` units per 1.0
(``round(c * quantum)``); everything afterwards is exact integer arithmetic.
"""

from __future__ import annotations

from collections import deque

import numpy as np

DEFAULT_QUANTUM = 2 ** 32
CAPACITY_LIMIT = 2 ** 62


class CapacityOverflow(OverflowError):
    pass


def quantize(value: float, quantum: int = DEFAULT_QUANTUM, what: str = "capacity") -> int:
    if not np.isfinite(value):
        raise CapacityOverflow(f"{what}: non-finite capacity {value!r}")
    q = int(round(float(value) * quantum))
    if abs(q) > CAPACITY_LIMIT:
        raise CapacityOverflow(f"{what}: capacity {value!r} exceeds {CAPACITY_LIMIT} quanta")
    return q


class FlowGraph:
    """Directed graph on ``n`` inner nodes plus a source and a sink."""

    def __init__(self, n: int, quantum: int = DEFAULT_QUANTUM):
        self.n = n
        self.quantum = quantum
        self.source = n
        self.sink = n + 1
        self.adj: list[list[int]] = [[] for _ in range(n + 2)]
        self.to: list[int] = []
        self.cap: list[int] = []
        self.flow_value: int | None = None

    @property
    def num_edges(self) -> int:
        return len(self.to) // 2

    def add_edge_int(self, u: int, v: int, cap: int, rev_cap: int = 0, label: str = "") -> None:
        if cap < 0 or rev_cap < 0:
            raise ValueError(f"negative capacity on edge {label or (u, v)}")
        if cap > CAPACITY_LIMIT or rev_cap > CAPACITY_LIMIT:
            raise CapacityOverflow(f"edge {label or (u, v)}: capacity exceeds {CAPACITY_LIMIT} quanta")
        if cap == 0 and rev_cap == 0:
            return
        self.adj[u].append(len(self.to))
        self.to.append(v)
        self.cap.append(int(cap))
        self.adj[v].append(len(self.to))
        self.to.append(u)
        self.cap.append(int(rev_cap))

    def add_edge(self, u: int, v: int, cap: float, rev_cap: float = 0.0) -> None:
        label = f"({u}->{v})"
        self.add_edge_int(u, v, quantize(cap, self.quantum, label),
                          quantize(rev_cap, self.quantum, label), label)

    def add_tedge_int(self, i: int, cap_source: int, cap_sink: int) -> None:
        if cap_source:
            self.add_edge_int(self.source, i, cap_source, label=f"(source->{i})")
        if cap_sink:
            self.add_edge_int(i, self.sink, cap_sink, label=f"({i}->sink)")

    # -- Dinic ----------------------------------------------------------------

    def _levels(self) -> list[int] | None:
        level = [-1] * (self.n + 2)
        level[self.source] = 0
        q = deque([self.source])
        adj, to, cap = self.adj, self.to, self.cap
        while q:
            v = q.popleft()
            for e in adj[v]:
                w = to[e]
                if cap[e] > 0 and level[w] < 0:
                    level[w] = level[v] + 1
                    q.append(w)
        return level if level[self.sink] >= 0 else None

    def _blocking_flow(self, level: list[int]) -> int:
        adj, to, cap = self.adj, self.to, self.cap
        s, t = self.source, self.sink
        ptr = [0] * (self.n + 2)
        total = 0
        stack: list[int] = []
        v = s
        while True:
            if v == t:
                f = min(cap[e] for e in stack)
                cut_at = len(stack)
                for k, e in enumerate(stack):
                    cap[e] -= f
                    cap[e ^ 1] += f
                    if cap[e] == 0 and k < cut_at:
                        cut_at = k
                total += f
                del stack[cut_at:]
                v = to[stack[-1]] if stack else s
                continue
            edges = adj[v]
            i = ptr[v]
            advanced = False
            while i < len(edges):
                e = edges[i]
                w = to[e]
                if cap[e] > 0 and level[w] == level[v] + 1:
                    advanced = True
                    break
                i += 1
            ptr[v] = i
            if advanced:
                stack.append(edges[i])
                v = to[edges[i]]
                continue
            if v == s:
                return total
            level[v] = -1
            e = stack.pop()
            v = to[e ^ 1]
            ptr[v] += 1

    def maxflow(self) -> int:
        """Run to completion; returns the flow value in quanta."""
        total = 0
        while True:
            level = self._levels()
            if level is None:
                break
            total += self._blocking_flow(level)
        self.flow_value = total
        return total

    # -- residual reachability ----------------------------------------------

    def source_side(self) -> np.ndarray:
        """Inner nodes reachable from the source in the residual graph."""
        seen = [False] * (self.n + 2)
        seen[self.source] = True
        q = deque([self.source])
        while q:
            v = q.popleft()
            for e in self.adj[v]:
                w = self.to[e]
                if self.cap[e] > 0 and not seen[w]:
                    seen[w] = True
                    q.append(w)
        return np.array(seen[: self.n], dtype=bool)

    def sink_side(self) -> np.ndarray:
        """Inner nodes that can still reach the sink in the residual graph."""
        seen = [False] * (self.n + 2)
        seen[self.sink] = True
        q = deque([self.sink])
        while q:
            w = q.popleft()
            for e in self.adj[w]:
                v = self.to[e]
                if self.cap[e ^ 1] > 0 and not seen[v]:
                    seen[v] = True
                    q.append(v)
        return np.array(seen[: self.n], dtype=bool)
