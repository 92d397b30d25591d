"""Robust index assignment as a travelling-salesman problem.

Under the nearest-neighbour feedback error model on a single PSK symbol,
the expected feedback distortion of an index mapping equals the length of
the Hamiltonian cycle that visits codewords in ring order, with
prior-weighted pairwise distortions as edge lengths. Any tour therefore
defines a mapping (tour position ``k`` -> PSK point ``k``).

Solvers: :func:`cnna` (greedy circled nearest neighbour), :func:`two_opt`
(local search) and :func:`exhaustive_tsp` (exact, small ``N`` only).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .codebook import Codebook
from .feedback import IndexMapping

__all__ = [
    "TspInstance",
    "TourSolution",
    "ComplexityError",
    "expected_distortion",
    "build_tsp",
    "cycle_cost",
    "cnna",
    "exhaustive_tsp",
    "two_opt",
    "tour_to_mapping",
    "mapping_to_tour",
    "ring_to_grid",
    "solve",
    "SOLVERS",
]

SOLVERS = ("cnna", "two-opt", "exhaustive", "identity", "random")
MAX_EXHAUSTIVE = 10


class ComplexityError(ValueError):
    """Raised when an exact search would enumerate too many tours."""


@dataclass(frozen=True)
class TspInstance:
    dist: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.dist, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ValueError("distance matrix must be square")
        if np.max(np.abs(d - d.T)) > 1e-12 or np.any(d < 0) or np.any(np.diag(d) != 0):
            raise ValueError("distance matrix must be symmetric, nonnegative, zero-diagonal")
        object.__setattr__(self, "dist", d)

    @property
    def n_cities(self) -> int:
        return self.dist.shape[0]


@dataclass(frozen=True)
class TourSolution:
    order: np.ndarray
    cost: float


def expected_distortion(xi: IndexMapping, priors, p_ch, cb: Codebook) -> float:
    """Average feedback distortion ``sum_ij Pr(i) P_ch[xi(i), xi(j)] d(i, j)``."""
    p = np.asarray(p_ch)[np.ix_(xi.forward, xi.forward)]
    return float(np.sum(np.asarray(priors)[:, None] * p * cb.distortion_matrix))


def build_tsp(cb: Codebook, priors, p_e: float) -> TspInstance:
    """Virtual-city distances ``p_e * (Pr(i) d_ij + Pr(j) d_ji) / 2``."""
    w = np.asarray(priors, dtype=float)[:, None] * cb.distortion_matrix
    dist = 0.5 * p_e * (w + w.T)
    np.fill_diagonal(dist, 0.0)
    return TspInstance(dist)


def _as_tour(order, n):
    order = np.asarray(order, dtype=np.intp)
    if order.size != n or not np.array_equal(np.sort(order), np.arange(n)):
        raise ValueError(f"tour {order!r} is not a permutation of 0..{n - 1}")
    return order


def cycle_cost(order, inst: TspInstance) -> float:
    order = _as_tour(order, inst.n_cities)
    return float(np.sum(inst.dist[order, np.roll(order, -1)]))


def _solution(order, inst):
    order = np.asarray(order, dtype=np.intp)
    return TourSolution(order, cycle_cost(order, inst))


def pole(inst: TspInstance) -> int:
    """City with the largest summed distance to all others."""
    return int(np.argmax(inst.dist.sum(axis=1)))


def cnna(inst: TspInstance, start: int | None = None, rng=None) -> TourSolution:
    """Circled nearest-neighbour tour.

    From the current city move to the nearest unvisited one; near-ties
    (relative 1e-12) go to the candidate with the smallest summed distance
    to the cities already visited. ``start=None`` begins at :func:`pole`;
    ``start="random"`` draws the first city from ``rng``.
    """
    d = inst.dist
    n = inst.n_cities
    if start is None:
        start = pole(inst)
    elif start == "random":
        start = int(rng.integers(n))
    visited = np.zeros(n, dtype=bool)
    to_visited = np.zeros(n)  # summed distance from each city to the visited set
    order = [int(start)]
    visited[start] = True
    to_visited += d[start]
    cur = start
    for _ in range(n - 1):
        cand = np.where(visited, np.inf, d[cur])
        best = cand.min()
        tied = np.flatnonzero(cand <= best + 1e-12 * max(best, 1e-300))
        nxt = int(tied[np.argmin(to_visited[tied])]) if tied.size > 1 else int(tied[0])
        order.append(nxt)
        visited[nxt] = True
        to_visited += d[nxt]
        cur = nxt
    return _solution(order, inst)


def exhaustive_tsp(inst: TspInstance) -> TourSolution:
    """Globally optimal tour by enumeration of ``(N - 1)! / 2`` cycles.

    City 0 is fixed first and each cycle is counted in one direction only;
    among equal costs the lexicographically first tour wins.
    """
    n = inst.n_cities
    if n > MAX_EXHAUSTIVE:
        raise ComplexityError(f"exhaustive search refused for N={n} > {MAX_EXHAUSTIVE}")
    if n <= 3:
        return _solution(np.arange(n), inst)
    perms = np.array(list(itertools.permutations(range(1, n))), dtype=np.intp)
    perms = perms[perms[:, 0] < perms[:, -1]]
    tours = np.concatenate([np.zeros((perms.shape[0], 1), dtype=np.intp), perms], axis=1)
    d = inst.dist
    costs = d[tours, np.roll(tours, -1, axis=1)].sum(axis=1)
    best = int(np.argmin(costs))
    return _solution(tours[best], inst)


def two_opt(inst: TspInstance, initial: TourSolution) -> TourSolution:
    """Best-improvement 2-opt until no exchange shortens the tour."""
    d = inst.dist
    tour = np.array(initial.order, dtype=np.intp)
    n = tour.size
    if n < 4:
        return _solution(tour, inst)
    while True:
        a = tour
        b = np.roll(tour, -1)
        # gain of reversing tour[i+1..j]: edges (a_i,b_i),(a_j,b_j) -> (a_i,a_j),(b_i,b_j)
        delta = (d[a[:, None], a[None, :]] + d[b[:, None], b[None, :]]
                 - d[a, b][:, None] - d[a, b][None, :])
        delta = np.triu(delta, 2)
        delta[0, n - 1] = 0.0
        i, j = np.unravel_index(np.argmin(delta), delta.shape)
        if delta[i, j] >= -1e-15:
            break
        tour[i + 1: j + 1] = tour[i + 1: j + 1][::-1].copy()
    return _solution(tour, inst)


def ring_to_grid(n_points: int, order: int) -> np.ndarray:
    """Boustrophedon walk over the composite points of several symbols.

    Consecutive positions differ in exactly one symbol by one ring step, so
    tour neighbours stay channel neighbours. For a single symbol this is
    the identity.
    """
    n_symbols = round(np.log(n_points) / np.log(order))
    if order**n_symbols != n_points:
        raise ValueError(f"{n_points} is not a power of {order}")

    def walk(depth):
        if depth == 1:
            return [[s] for s in range(order)]
        inner = walk(depth - 1)
        out = []
        for s in range(order):
            seq = inner if s % 2 == 0 else inner[::-1]
            out.extend([[s] + t for t in seq])
        return out

    digits = np.array(walk(n_symbols), dtype=np.intp)
    weights = order ** np.arange(n_symbols - 1, -1, -1)
    return digits @ weights


def tour_to_mapping(tour: TourSolution, order: int, symbol_order: int | None = None) -> IndexMapping:
    """Place the ``k``-th city of the tour on ring position ``k``.

    ``order`` is the number of (composite) constellation points; when the
    feedback spans several symbols of ``symbol_order`` points each, ring
    positions follow :func:`ring_to_grid`.
    """
    cities = np.asarray(tour.order, dtype=np.intp)
    if cities.size != order:
        raise ValueError(f"tour visits {cities.size} cities, constellation has {order} points")
    points = np.arange(order) if symbol_order in (None, order) else ring_to_grid(order, symbol_order)
    fwd = np.empty(order, dtype=np.intp)
    fwd[cities] = points
    return IndexMapping(fwd)


def mapping_to_tour(xi: IndexMapping) -> np.ndarray:
    """Codewords in ring order (inverse of :func:`tour_to_mapping`)."""
    return xi.inverse.copy()


def solve(inst: TspInstance, solver: str = "cnna", rng=None) -> TourSolution:
    n = inst.n_cities
    if solver == "cnna":
        return cnna(inst)
    if solver == "two-opt":
        return two_opt(inst, cnna(inst))
    if solver == "exhaustive":
        return exhaustive_tsp(inst)
    if solver == "identity":
        return _solution(np.arange(n), inst)
    if solver == "random":
        return _solution(rng.permutation(n), inst)
    raise ValueError(f"unknown solver {solver!r}; choose from {SOLVERS}")
