"""
Chain-cost computations on a ChainGraph.

Walk costs follow the "at least one edge" convention: a source cell's own value
is its cheapest closed walk, not zero. Sublevel thresholds are inclusive up to
a slack of LENGTH_TOL * h.
"""
import heapq
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, List, Optional, Sequence

import numpy as np
from loguru import logger
from scipy import sparse
from scipy.sparse.csgraph import dijkstra

from src.config import config
from src.errors import EmptySetError
from src.graph import ChainGraph, reverse_graph
from src.models import PropertyCheck, PropertyReport
from src.reachability import ReachabilityIndex
from src.space import LENGTH_TOL, CellSet

ROW_CHUNK = 512


class CostField:
    """Cheapest walk cost from a source set to every cell."""

    def __init__(self, G: ChainGraph, source: CellSet, values: np.ndarray,
                 pred: Optional[np.ndarray] = None, seeded: Optional[np.ndarray] = None):
        self.grid = G.grid
        self.source = source
        self.T = G.T
        self.c_max = G.c_max
        self.values = values
        # pred[x]: cell before x on the cheapest walk; seeded[x]: that walk has a single edge
        self.pred = pred
        self.seeded = seeded

    def __getitem__(self, i: int) -> float:
        return float(self.values[i])

    def sublevel(self, eps: float) -> CellSet:
        return CellSet(self.grid, self.values <= eps + LENGTH_TOL * self.grid.h)

    def first_step(self, x: int) -> int:
        """Cell following the source on the cheapest walk to x (-1 when unreachable)."""
        if self.pred is None:
            raise ValueError("cost field was computed without predecessors")
        if not math.isfinite(self.values[x]):
            return -1
        v = x
        while not self.seeded[v]:
            v = int(self.pred[v])
        return v

    def csv_rows(self) -> List[List[str]]:
        mids = self.grid.midpoints
        return [[str(i), repr(float(mids[i])), "inf" if not math.isfinite(v) else repr(float(v))]
                for i, v in enumerate(self.values)]


def _require_nonempty(S: CellSet, what: str):
    if not S:
        raise EmptySetError(f"{what} must be a nonempty cell set")


def relation_index(G: ChainGraph) -> ReachabilityIndex:
    if "relation_index" not in G.derived:
        G.derived["relation_index"] = ReachabilityIndex(G.relation)
    return G.derived["relation_index"]


def chain_adjacency(G: ChainGraph) -> sparse.csr_matrix:
    """Relation edges plus every cost edge no longer than one cell width."""
    short = G.cost.copy()
    short.data = (short.data <= G.h * (1 + LENGTH_TOL)).astype(np.int8)
    short.eliminate_zeros()
    merged = (short + G.relation.astype(np.int8)).tocsr()
    merged.data[:] = 1
    merged.sort_indices()
    return merged


def chain_index(G: ChainGraph) -> ReachabilityIndex:
    if "chain_index" not in G.derived:
        G.derived["chain_index"] = ReachabilityIndex(chain_adjacency(G))
    return G.derived["chain_index"]


def reversed_of(G: ChainGraph) -> ChainGraph:
    if "reverse" not in G.derived:
        R = reverse_graph(G)
        R.derived["reverse"] = G
        G.derived["reverse"] = R
    return G.derived["reverse"]


# Shortest walks

def cost_from(G: ChainGraph, Y: CellSet) -> CostField:
    """Multi-source Dijkstra seeded with the out-edges of Y. Ties go to the smaller (cost, cell, predecessor)."""
    _require_nonempty(Y, "source set")
    targets, weights = G.cost_adjacency()
    n = G.n
    dist = [math.inf] * n
    best = [math.inf] * n
    pred = [-1] * n
    seeded = [False] * n
    done = [False] * n
    heap = []
    for y in Y.to_list():
        for k, w in zip(targets[y], weights[y]):
            if w <= best[k]:
                best[k] = w
                heap.append((w, k, y, True))
    heapq.heapify(heap)
    while heap:
        d, v, u, first = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        dist[v] = d
        pred[v] = u
        seeded[v] = first
        for k, w in zip(targets[v], weights[v]):
            nd = d + w
            if not done[k] and nd < best[k]:
                best[k] = nd
                heapq.heappush(heap, (nd, k, v, False))
    return CostField(G, Y, np.asarray(dist), np.asarray(pred, dtype=np.int64), np.asarray(seeded))


def _rows_chunk(G: ChainGraph, sources: np.ndarray, limit: float) -> np.ndarray:
    indptr, indices, data = G.cost.indptr, G.cost.indices, G.cost.data
    firsts = np.unique(indices[np.concatenate([np.arange(indptr[s], indptr[s + 1]) for s in sources])])
    out = np.full((sources.size, G.n), np.inf)
    if firsts.size == 0:
        return out
    D = dijkstra(G.cost, directed=True, indices=firsts, limit=limit)
    D = D.reshape(firsts.size, G.n)
    pos = {int(k): r for r, k in enumerate(firsts)}
    for r, s in enumerate(sources):
        for e in range(indptr[s], indptr[s + 1]):
            np.minimum(out[r], data[e] + D[pos[int(indices[e])]], out=out[r])
    return out


def _chunked(G: ChainGraph, items: np.ndarray, work) -> List[np.ndarray]:
    chunks = [items[i:i + ROW_CHUNK] for i in range(0, items.size, ROW_CHUNK)]
    threads = config.thread_count()
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, chunks))
    return [work(c) for c in chunks]


def cost_rows(G: ChainGraph, sources: Sequence[int], limit: float = np.inf) -> np.ndarray:
    """cost_from({s}) for many single sources at once, one row per source.

    Values above `limit` come back as inf. Rows are computed in chunks, possibly
    on several threads; assembly order is the source order.
    """
    src = np.asarray(list(sources), dtype=np.int64)
    if src.size == 0:
        return np.zeros((0, G.n))
    parts = _chunked(G, src, lambda chunk: _rows_chunk(G, chunk, limit))
    rows = np.vstack(parts)
    rows[rows > limit] = np.inf
    return rows


def min_cycle_cost(G: ChainGraph, limit: float = np.inf) -> np.ndarray:
    """Cheapest closed walk (>= 1 edge) through each cell; values above `limit` are inf."""
    n = G.n
    out = np.full(n, np.inf)
    loops = G.self_loop_weights()
    out[loops == 0.0] = 0.0
    todo = np.flatnonzero(out != 0.0)
    if todo.size:
        back = G.cost.transpose().tocsr()
        indptr, indices, data = G.cost.indptr, G.cost.indices, G.cost.data

        def work(chunk: np.ndarray) -> np.ndarray:
            # DT[r, k] = cheapest 0-or-more-edge walk k -> chunk[r]
            DT = dijkstra(back, directed=True, indices=chunk, limit=limit)
            vals = np.full(chunk.size, np.inf)
            for r, i in enumerate(chunk):
                start, end = indptr[i], indptr[i + 1]
                if end > start:
                    vals[r] = float(np.min(data[start:end] + DT[r, indices[start:end]]))
            return vals

        out[todo] = np.concatenate(_chunked(G, todo, work))
    out[out > limit] = np.inf
    return out


# Recurrence sets

def cr_cells(G: ChainGraph, mode: str = "chain") -> CellSet:
    """Chain recurrent cells.

    mode "chain": recurrent cells of the relation layer joined with every cost
    edge of weight <= h; mode "relation": the overlap layer alone.
    """
    if mode == "chain":
        index = chain_index(G)
    elif mode == "relation":
        index = relation_index(G)
    else:
        raise ValueError(f"unknown cr mode '{mode}'")
    return CellSet(G.grid, index.recurrent_mask())


def scr_cells(G: ChainGraph, tau: Optional[float] = None) -> CellSet:
    tau = 2 * G.h if tau is None else tau
    if tau < 0:
        raise ValueError(f"tau must be nonnegative, got {tau}")
    slack = LENGTH_TOL * G.h
    mcc = min_cycle_cost(G, limit=tau + slack)
    return CellSet(G.grid, mcc <= tau + slack)


def omega_sublevel(G: ChainGraph, Y: CellSet, eps: float) -> CellSet:
    if eps < 0:
        raise ValueError(f"eps must be nonnegative, got {eps}")
    return cost_from(G, Y).sublevel(eps)


def omega_limit_cells(G: ChainGraph, U: CellSet) -> CellSet:
    """Relation-layer omega-enclosure: everything reachable from the recurrent cells reachable from U."""
    _require_nonempty(U, "U")
    return CellSet(G.grid, relation_index(G).omega_mask(U.mask))


def alpha_limit_cells(G: ChainGraph, U: CellSet) -> CellSet:
    return omega_limit_cells(reversed_of(G), U)


def omega_bar_cells(G: ChainGraph, Y: CellSet, tau: Optional[float] = None) -> CellSet:
    tau = 2 * G.h if tau is None else tau
    S = omega_sublevel(G, Y, tau)
    if not S:
        return G.grid.empty()
    return omega_limit_cells(G, S)


def omega_bar_over_T(graphs: Sequence[ChainGraph], Y: Sequence[int],
                     tau: Optional[float] = None) -> Dict[str, List[int]]:
    """Omega-bar estimate per step time and the intersection over all of them.

    All graphs must share the grid resolution; keys are "T=<value>" plus "all".
    """
    if not graphs:
        raise ValueError("need at least one graph")
    n = graphs[0].n
    result: Dict[str, List[int]] = {}
    inter = np.ones(n, dtype=bool)
    for G in graphs:
        if G.n != n:
            raise ValueError("graphs have different resolutions")
        cells = omega_bar_cells(G, G.grid.cells(Y), tau)
        result[f"T={G.T:g}"] = cells.to_list()
        inter &= cells.mask
    result["all"] = [int(i) for i in np.flatnonzero(inter)]
    return result


def sp_contains(G: ChainGraph, y: int, x: int, tau: float) -> bool:
    return cost_from(G, G.grid.cells([y]))[x] <= tau + LENGTH_TOL * G.h


# Property harness

def omega_tolerance(h: float) -> float:
    return max(0.0, 10 * h * math.log2(1 / h))


def _check(name: str, anchor: str, violation: float, tolerance: float, samples: int, skipped: int = 0) -> PropertyCheck:
    return PropertyCheck(name=name, anchor=anchor, passed=violation <= tolerance, violation=violation,
                         tolerance=tolerance, samples=samples, skipped=skipped)


def _excess(lhs: np.ndarray, rhs: np.ndarray) -> float:
    """Largest amount by which lhs exceeds rhs; inf when a finite rhs faces an infinite lhs."""
    finite = np.isfinite(rhs)
    if not finite.any():
        return 0.0
    gap = lhs[finite] - rhs[finite]
    if np.any(np.isinf(gap)):
        return math.inf
    return max(0.0, float(gap.max()))


def verify_lemmas(G: ChainGraph, sample_count: int, seed: int = 0) -> PropertyReport:
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(seed)
    n, h = G.n, G.h
    pool = np.sort(rng.choice(n, size=min(n, 32), replace=False))
    C = cost_rows(G, pool)
    row_of = {int(s): r for r, s in enumerate(pool)}
    F, Fw = G.cheapest_out()
    index = relation_index(G)
    unstable = index.unstable_recurrent_mask()
    tau_w = omega_tolerance(h)
    checks = []

    # (1) cost(y->z) <= cost(y->x) + cost(x->z)
    ys = rng.integers(0, pool.size, sample_count)
    xs = rng.integers(0, pool.size, sample_count)
    zs = rng.integers(0, n, sample_count)
    lhs = C[ys, zs]
    rhs = C[ys, pool[xs]] + C[xs, zs]
    checks.append(_check("transitivity", "Omega(Omega(Y,e1,T),e2,T) in Omega(Y,e1+e2,T)",
                         _excess(lhs, rhs), 1e-9, sample_count))

    # (2) moving the endpoint by d raises the cost by at most d
    worst, samples = 0.0, 0
    sources = pool[:4]
    per_source = max(1, sample_count // len(sources))
    for y in sources:
        field = cost_from(G, G.grid.cells([int(y)]))
        reachable = np.flatnonzero(np.isfinite(field.values))
        for x in rng.choice(reachable, size=min(per_source, reachable.size), replace=False):
            u = int(field.pred[x])
            base = 0.0 if field.seeded[x] else field.values[u]
            c_e = float(field.values[x] - base)
            room = G.c_max - c_e - 1e-12
            if room < 0:
                continue
            d = G.grid.dist(G.grid.midpoints[x], G.grid.midpoints)
            near = np.flatnonzero(d <= room)
            gap = field.values[near] - (field.values[x] + d[near])
            worst = max(worst, float(gap.max()))
            samples += 1
    checks.append(_check("dilation", "d(x, Omega-bar(Y,e,T)) < eta implies x in Omega-bar(Y,e+eta,T)",
                         worst, 1e-9, samples))

    # (3) following the cheapest edge out of x costs at most h/2 more
    lhs = C[:, F]
    rhs = C + h / 2
    checks.append(_check("forward_invariance", "cl phi_[T,inf)(Omega-bar(Y,e,T)) in Omega-bar(Y,e,T)",
                         _excess(lhs, rhs), 1e-6, int(C.size)))

    # (4) omega(Y) within the tau_w sublevel, (5) omega of a sublevel within 2h of that sublevel
    worst4 = worst5 = 0.0
    samples4 = samples5 = skipped4 = skipped5 = 0
    eps_grid = [h * 2 ** k for k in range(0, 64) if h * 2 ** k <= G.grid.domain.length / 4] or [h]
    for y in pool:
        row = C[row_of[int(y)]]
        single = np.zeros(n, dtype=bool)
        single[y] = True
        if np.any(index.reach_mask(single) & unstable):
            skipped4 += 1
        else:
            samples4 += 1
            omega = index.omega_mask(single)
            worst4 = max(worst4, _excess(row[omega], np.zeros(int(omega.sum()))))
        for eps in eps_grid:
            S = row <= eps + LENGTH_TOL * h
            if not S.any():
                continue
            if np.any(index.reach_mask(S) & unstable):
                skipped5 += 1
                continue
            samples5 += 1
            omega = index.omega_mask(S)
            worst5 = max(worst5, _excess(row[omega], np.full(int(omega.sum()), eps)))
    checks.append(_check("omega_in_sublevel", "omega(Y) in Omega-bar(Y,e,T)",
                         worst4, tau_w, samples4, skipped4))
    checks.append(_check("sandwich", "Omega-bar(Y) = cap over e,T of omega(Omega-bar(Y,e,T))",
                         worst5, 2 * h + LENGTH_TOL * h, samples5, skipped5))

    # (6) shifting the source one step along its cheapest walk and the target by F
    worst, samples = 0.0, 0
    pairs = []
    for y in sources:
        field = cost_from(G, G.grid.cells([int(y)]))
        reachable = np.flatnonzero(np.isfinite(field.values))
        for x in rng.choice(reachable, size=min(per_source, reachable.size), replace=False):
            pairs.append((field.first_step(int(x)), int(F[x]), float(field.values[x])))
    if pairs:
        starts = sorted({p[0] for p in pairs})
        rows = cost_rows(G, starts)
        at = {s: r for r, s in enumerate(starts)}
        for p, fx, c in pairs:
            worst = max(worst, float(rows[at[p], fx]) - (c + h))
            samples += 1
    checks.append(_check("sp_flow_shift", "(y,x) in SP implies (phi_t(y),phi_s(x)) in SP",
                         max(worst, 0.0), 1e-6, samples))

    report = PropertyReport(system=G.system.system_id, n=n, T=G.T, checks=checks)
    for c in checks:
        log = logger.info if c.passed else logger.warning
        log(f"check {c.name}: violation={c.violation:.3g} tolerance={c.tolerance:.3g} "
            f"samples={c.samples} skipped={c.skipped}")
    return report


def idempotence_check(G: ChainGraph, Y: CellSet, tau: Optional[float] = None) -> PropertyCheck:
    """Omega-bar(Omega-bar(Y)) stays inside the 2*tau + 2h sublevel of Y."""
    tau = 2 * G.h if tau is None else tau
    field = cost_from(G, Y)
    S = field.sublevel(tau)
    if not S:
        return _check("idempotence", "Omega-bar(Omega-bar(Y)) = Omega-bar(Y)", 0.0, 0.0, 0)
    again = cost_from(G, S).sublevel(tau)
    limit = 2 * tau + 2 * G.h + LENGTH_TOL * G.h
    outside = again.mask & ~(field.values <= limit)
    violation = float(field.values[outside].max() - limit) if outside.any() else 0.0
    return _check("idempotence", "Omega-bar(Omega-bar(Y)) = Omega-bar(Y)", violation, 0.0, len(again))
