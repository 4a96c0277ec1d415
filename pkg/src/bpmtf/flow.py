"""Minimum-cost circulation with real capacities and small integer costs.

Negative-cost arcs are saturated up front, leaving node imbalances and a
residual network whose arc costs are all nonnegative; the imbalances are then
drained by successive shortest augmenting paths (Dijkstra with Johnson
potentials). Exact for the problem class used here: costs in {-1, 0},
capacities are probabilities.
"""

from __future__ import annotations

import heapq

import numpy as np

from .errors import NumericalError

_CAP_EPS = 1e-15
_MAX_AUGMENTATIONS = 100_000


class MinCostFlow:
    def __init__(self, n_nodes: int):
        self.n = n_nodes
        self.head: list[list[int]] = [[] for _ in range(n_nodes)]
        self.to: list[int] = []
        self.cap: list[float] = []
        self.cost: list[float] = []
        self.orig_cap: list[float] = []

    def add_arc(self, u: int, v: int, cap: float, cost: float) -> int:
        """Returns the arc id; the paired reverse arc is id ^ 1."""
        arc = len(self.to)
        self.head[u].append(arc)
        self.to.append(v)
        self.cap.append(cap)
        self.cost.append(cost)
        self.orig_cap.append(cap)
        self.head[v].append(arc + 1)
        self.to.append(u)
        self.cap.append(0.0)
        self.cost.append(-cost)
        self.orig_cap.append(0.0)
        return arc

    def flow(self, arc: int) -> float:
        # residual updates accumulate roundoff; true flow lies in [0, cap]
        return min(max(self.orig_cap[arc] - self.cap[arc], 0.0), self.orig_cap[arc])

    def _arc_from(self, arc: int) -> int:
        return self.to[arc ^ 1]

    def solve_circulation(self) -> float:
        """Find the min-cost circulation; returns its total cost."""
        excess = np.zeros(self.n)
        for arc in range(0, len(self.to), 2):
            if self.cost[arc] < 0 and self.cap[arc] > 0:
                amount = self.cap[arc]
                u, v = self._arc_from(arc), self.to[arc]
                self.cap[arc] = 0.0
                self.cap[arc ^ 1] += amount
                excess[u] -= amount
                excess[v] += amount

        potential = np.zeros(self.n)
        augmentations = 0
        while True:
            sources = np.flatnonzero(excess > _CAP_EPS)
            if sources.size == 0:
                break
            augmentations += 1
            if augmentations > _MAX_AUGMENTATIONS:
                raise NumericalError("min-cost flow: augmentation cap exceeded")
            s = int(sources[0])
            dist = np.full(self.n, np.inf)
            dist[s] = 0.0
            prev_arc = np.full(self.n, -1, dtype=int)
            done = np.zeros(self.n, dtype=bool)
            heap = [(0.0, s)]
            target = -1
            while heap:
                d, u = heapq.heappop(heap)
                if done[u]:
                    continue
                done[u] = True
                if excess[u] < -_CAP_EPS:
                    target = u
                    break
                for arc in self.head[u]:
                    if self.cap[arc] <= _CAP_EPS:
                        continue
                    v = self.to[arc]
                    if done[v]:
                        continue
                    nd = d + self.cost[arc] + potential[u] - potential[v]
                    if nd < dist[v] - 1e-15:
                        dist[v] = nd
                        prev_arc[v] = arc
                        heapq.heappush(heap, (nd, v))
            if target < 0:
                raise NumericalError("min-cost flow: no augmenting path to a deficit node")
            d_target = dist[target]
            for v in range(self.n):
                if done[v] or np.isfinite(dist[v]):
                    potential[v] += min(dist[v], d_target)

            bottleneck = min(excess[s], -excess[target])
            v = target
            while v != s:
                arc = prev_arc[v]
                bottleneck = min(bottleneck, self.cap[arc])
                v = self._arc_from(arc)
            v = target
            while v != s:
                arc = prev_arc[v]
                self.cap[arc] -= bottleneck
                self.cap[arc ^ 1] += bottleneck
                v = self._arc_from(arc)
            excess[s] -= bottleneck
            excess[target] += bottleneck

        total = 0.0
        for arc in range(0, len(self.to), 2):
            total += self.flow(arc) * self.cost[arc]
        return total
