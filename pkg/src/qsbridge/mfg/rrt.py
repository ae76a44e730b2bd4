"""RRT* planner on an :class:`Environment`, with greedy shortcut smoothing."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .environment import Environment

log = logging.getLogger(__name__)


class PlanningError(RuntimeError):
    """No collision-free path was found."""


@dataclass(frozen=True)
class RRTConfig:
    step: float = 0.5
    radius: float = 2.0
    goal_bias: float = 0.05
    max_nodes: int = 5000
    shortcut: bool = True

    def __post_init__(self):
        if self.step <= 0 or self.radius <= 0:
            raise ValueError("step and radius must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if self.max_nodes < 2:
            raise ValueError("max_nodes must be at least 2")


@dataclass
class RRTResult:
    path: np.ndarray        # (m, 2) polyline, start first
    nodes: np.ndarray       # tree vertices
    parents: np.ndarray     # parent index per vertex, -1 at the root
    cost: float             # length of ``path``


def _segments_free(env: Environment, a: np.ndarray, B: np.ndarray, resolution: float) -> np.ndarray:
    """Collision-free mask for the segments ``a -> B[k]``, sampled at spacing <= resolution."""
    B = np.atleast_2d(B)
    length = np.linalg.norm(B - a, axis=1)
    m = max(int(np.ceil(length.max(initial=0.0) / resolution)), 1)
    s = np.linspace(0.0, 1.0, m + 1)
    pts = a + s[None, :, None] * (B - a)[:, None, :]
    return ~env.collides(pts).any(axis=1)


def path_length(path) -> float:
    path = np.asarray(path, dtype=np.float64)
    return float(np.sum(np.linalg.norm(np.diff(path, axis=0), axis=1)))


def shortcut_path(env: Environment, path: np.ndarray, resolution: float) -> np.ndarray:
    """Greedy pruning: from each kept vertex jump to the farthest directly visible one."""
    keep = [0]
    i = 0
    n = len(path)
    while i < n - 1:
        free = _segments_free(env, path[i], path[i + 1:], resolution)
        # the next vertex is always visible (it is a tree edge); take the farthest visible
        j = i + 1 + int(np.flatnonzero(free)[-1]) if free.any() else i + 1
        keep.append(j)
        i = j
    return path[keep]


def rrt_star(env: Environment, start, goal, cfg: RRTConfig | None = None,
             rng: np.random.Generator | int | None = None) -> RRTResult:
    """Grow an RRT* tree of ``cfg.max_nodes`` vertices and return the best start-goal path.

    Edges are collision checked every ``step / 4``. The goal is connected to
    the cheapest tree vertex within ``radius`` that sees it.
    """
    cfg = cfg or RRTConfig()
    rng = np.random.default_rng(rng)
    start = np.asarray(start, dtype=np.float64)
    goal = np.asarray(goal, dtype=np.float64)
    for name, p in (("start", start), ("goal", goal)):
        if env.collides(p):
            raise PlanningError(f"{name} point {p.tolist()} is in collision")
    if np.array_equal(start, goal):
        return RRTResult(start[None].copy(), start[None].copy(), np.array([-1]), 0.0)

    res = cfg.step / 4.0
    nodes = np.empty((cfg.max_nodes, 2))
    parents = np.full(cfg.max_nodes, -1, dtype=np.int64)
    cost = np.zeros(cfg.max_nodes)
    children: list[list[int]] = [[] for _ in range(cfg.max_nodes)]
    nodes[0] = start
    n = 1
    budget = 50 * cfg.max_nodes
    while n < cfg.max_nodes and budget > 0:
        budget -= 1
        target = goal if rng.random() < cfg.goal_bias else env.sample_free_box(rng, 1)[0]
        d2 = np.sum((nodes[:n] - target) ** 2, axis=1)
        near_i = int(np.argmin(d2))
        dist = np.sqrt(d2[near_i])
        if dist == 0.0:
            continue
        new = nodes[near_i] + (target - nodes[near_i]) * min(1.0, cfg.step / dist)
        if env.collides(new) or not _segments_free(env, nodes[near_i], new, res)[0]:
            continue
        dn = np.linalg.norm(nodes[:n] - new, axis=1)
        near = np.flatnonzero(dn <= cfg.radius)
        free = _segments_free(env, new, nodes[near], res)
        near = near[free]
        if near.size == 0:
            near = np.array([near_i])
        via = cost[near] + dn[near]
        best = int(near[np.argmin(via)])
        nodes[n] = new
        parents[n] = best
        cost[n] = cost[best] + dn[best]
        children[best].append(n)
        # rewire neighbours that get cheaper through the new vertex
        for k in near[cost[n] + dn[near] < cost[near] - 1e-12]:
            k = int(k)
            if k == best:
                continue
            children[parents[k]].remove(k)
            parents[k] = n
            children[n].append(k)
            delta = cost[n] + dn[k] - cost[k]
            stack = [k]
            while stack:
                q = stack.pop()
                cost[q] += delta
                stack.extend(children[q])
        n += 1

    nodes, parents, cost = nodes[:n], parents[:n], cost[:n]
    dg = np.linalg.norm(nodes - goal, axis=1)
    cand = np.flatnonzero(dg <= cfg.radius)
    if cand.size:
        cand = cand[_segments_free(env, goal, nodes[cand], res)]
    if cand.size == 0:
        raise PlanningError(f"no path to goal found with a tree of {n} vertices")
    last = int(cand[np.argmin(cost[cand] + dg[cand])])
    chain = [goal]
    while last >= 0:
        chain.append(nodes[last])
        last = int(parents[last])
    path = np.array(chain[::-1])
    if cfg.shortcut:
        path = shortcut_path(env, path, res)
    log.debug("rrt*: %d vertices, path of %d points, length %.4f", n, len(path), path_length(path))
    return RRTResult(path, nodes, parents, path_length(path))
