"""Dinic maximum flow on real capacities, with residual reachability for cuts."""
from __future__ import annotations

from collections import deque

INF = float("inf")


class FlowNetwork:
    def __init__(self, n: int, eps: float = 1e-15):
        self.n = n
        self.eps = eps
        self.head: list[int] = []
        self.cap: list[float] = []
        self.adj: list[list[int]] = [[] for _ in range(n)]

    def add_edge(self, u: int, v: int, c: float) -> int:
        """Add arc ``u -> v``; returns its index (the reverse arc is index + 1)."""
        i = len(self.head)
        self.head += [v, u]
        self.cap += [c, 0.0]
        self.adj[u].append(i)
        self.adj[v].append(i + 1)
        return i

    def push(self, i: int, amount: float) -> None:
        self.cap[i] -= amount
        self.cap[i ^ 1] += amount

    def flow_on(self, i: int) -> float:
        return self.cap[i ^ 1]

    def _levels(self, s: int, t: int):
        level = [-1] * self.n
        level[s] = 0
        q = deque([s])
        head, cap, eps = self.head, self.cap, self.eps
        while q:
            u = q.popleft()
            for i in self.adj[u]:
                v = head[i]
                if level[v] < 0 and cap[i] > eps:
                    level[v] = level[u] + 1
                    q.append(v)
        return level if level[t] >= 0 else None

    def _blocking(self, s: int, t: int, level) -> float:
        head, cap, adj, eps = self.head, self.cap, self.adj, self.eps
        it = [0] * self.n
        total = 0.0
        while True:
            # iterative DFS for one augmenting path in the level graph
            path: list[int] = []
            u = s
            while u != t:
                arcs = adj[u]
                advanced = False
                while it[u] < len(arcs):
                    i = arcs[it[u]]
                    v = head[i]
                    if cap[i] > eps and level[v] == level[u] + 1:
                        path.append(i)
                        u = v
                        advanced = True
                        break
                    it[u] += 1
                if not advanced:
                    if u == s:
                        return total
                    level[u] = -1
                    i = path.pop()
                    u = head[i ^ 1]
                    it[u] += 1
            delta = min(cap[i] for i in path)
            for i in path:
                cap[i] -= delta
                cap[i ^ 1] += delta
            total += delta

    def max_flow(self, s: int, t: int) -> float:
        total = 0.0
        while True:
            level = self._levels(s, t)
            if level is None:
                return total
            total += self._blocking(s, t, level)

    def reachable(self, s: int) -> list[bool]:
        seen = [False] * self.n
        seen[s] = True
        q = deque([s])
        while q:
            u = q.popleft()
            for i in self.adj[u]:
                v = self.head[i]
                if not seen[v] and self.cap[i] > self.eps:
                    seen[v] = True
                    q.append(v)
        return seen
