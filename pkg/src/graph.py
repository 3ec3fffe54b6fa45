"""
Dual-layer transition graph over grid cells for a fixed step time T.

cost layer:     i -> j with weight d(phi_T(mid_i), mid_j) <= c_max
relation layer: i -> j when the image enclosure of cell i overlaps cell j
                with positive length
"""
import json
import math
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import sparse

from src.errors import CutoffTooSmallError, PreconditionError
from src.flow import cell_images, flow_points
from src.models import GraphDump, IntegratorConfig, SystemSpec
from src.space import Grid, build_grid

GRAPH_FORMAT = "scr-chain-graph"
GRAPH_FORMAT_VERSION = 1


class ChainGraph:
    def __init__(self, grid: Grid, system: SystemSpec, T: float, c_max: float, cfg: IntegratorConfig,
                 cost: sparse.csr_matrix, relation: sparse.csr_matrix, reversed_: bool = False):
        self.grid = grid
        self.system = system
        self.T = T
        self.c_max = c_max
        self.cfg = cfg
        self.cost = cost
        self.relation = relation
        self.reversed = reversed_
        self._cheapest: Optional[Tuple[np.ndarray, np.ndarray]] = None
        self._cost_lists: Optional[Tuple[List[List[int]], List[List[float]]]] = None
        # Lazily derived structures (reachability indices, reversed graph)
        self.derived: Dict[str, Any] = {}

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def h(self) -> float:
        return self.grid.h

    def __repr__(self) -> str:
        tag = ", reversed" if self.reversed else ""
        return (f"ChainGraph({self.system.system_id}, n={self.n}, T={self.T}, "
                f"cost_edges={self.cost.nnz}, relation_edges={self.relation.nnz}{tag})")

    def cost_out(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        start, end = self.cost.indptr[i], self.cost.indptr[i + 1]
        return self.cost.indices[start:end], self.cost.data[start:end]

    def relation_out(self, i: int) -> np.ndarray:
        start, end = self.relation.indptr[i], self.relation.indptr[i + 1]
        return self.relation.indices[start:end]

    def cost_adjacency(self) -> Tuple[List[List[int]], List[List[float]]]:
        """Cost layer as Python lists, for the heap-based shortest-walk search."""
        if self._cost_lists is None:
            indptr = self.cost.indptr.tolist()
            indices = self.cost.indices.tolist()
            data = self.cost.data.tolist()
            targets = [indices[indptr[i]:indptr[i + 1]] for i in range(self.n)]
            weights = [data[indptr[i]:indptr[i + 1]] for i in range(self.n)]
            self._cost_lists = (targets, weights)
        return self._cost_lists

    def cheapest_out(self) -> Tuple[np.ndarray, np.ndarray]:
        """(target, weight) of each cell's cheapest outgoing cost edge; ties go to the smaller index."""
        if self._cheapest is None:
            targets = np.full(self.n, -1, dtype=np.int64)
            weights = np.full(self.n, np.inf)
            indptr, indices, data = self.cost.indptr, self.cost.indices, self.cost.data
            for i in range(self.n):
                start, end = indptr[i], indptr[i + 1]
                if end > start:
                    k = start + int(np.argmin(data[start:end]))
                    targets[i] = indices[k]
                    weights[i] = data[k]
            self._cheapest = (targets, weights)
        return self._cheapest

    def self_loop_weights(self) -> np.ndarray:
        """Weight of the cost self-loop of each cell (inf when absent)."""
        out = np.full(self.n, np.inf)
        coo = self.cost.tocoo()
        diag = coo.row == coo.col
        out[coo.row[diag]] = coo.data[diag]
        return out

    # Serialization

    def header(self) -> Dict[str, Any]:
        return {
            "system": self.system.model_dump(mode="json"),
            "system_id": self.system.system_id,
            "n": self.n,
            "T": self.T,
            "c_max": self.c_max,
            "integrator": self.cfg.model_dump(mode="json"),
            "reversed": self.reversed,
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format": GRAPH_FORMAT,
            "version": GRAPH_FORMAT_VERSION,
            "header": self.header(),
            "cost": {
                "indptr": self.cost.indptr.tolist(),
                "indices": self.cost.indices.tolist(),
                "weights": self.cost.data.tolist(),
            },
            "relation": {
                "indptr": self.relation.indptr.tolist(),
                "indices": self.relation.indices.tolist(),
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ChainGraph":
        if data.get("format") != GRAPH_FORMAT or data.get("version") != GRAPH_FORMAT_VERSION:
            raise ValueError(f"not a {GRAPH_FORMAT} v{GRAPH_FORMAT_VERSION} document")
        dump = GraphDump.model_validate(data)
        head = dump.header
        grid = build_grid(head.system.domain, head.n)
        n = grid.n
        cost = sparse.csr_matrix(
            (np.asarray(dump.cost.weights, dtype=float),
             np.asarray(dump.cost.indices, dtype=np.int32),
             np.asarray(dump.cost.indptr, dtype=np.int32)),
            shape=(n, n),
        )
        rel_indices = np.asarray(dump.relation.indices, dtype=np.int32)
        relation = sparse.csr_matrix(
            (np.ones(rel_indices.size, dtype=np.int8), rel_indices,
             np.asarray(dump.relation.indptr, dtype=np.int32)),
            shape=(n, n),
        )
        return cls(grid, head.system, head.T, head.c_max, head.integrator, cost, relation,
                   reversed_=head.reversed)

    @classmethod
    def from_json(cls, text: str) -> "ChainGraph":
        return cls.from_dict(json.loads(text))

    def to_dot(self) -> str:
        lines = [f'digraph "{self.system.system_id} T={self.T}" {{']
        for i in range(self.n):
            lines.append(f'  {i} [label="{i}\\n{self.grid.midpoints[i]:.6g}"];')
        for i in range(self.n):
            for j in self.relation_out(i):
                lines.append(f"  {i} -> {int(j)};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _cost_layer(grid: Grid, images: np.ndarray, c_max: float) -> sparse.csr_matrix:
    n = grid.n
    reach = math.ceil(c_max / grid.h) + 1
    base = grid.cells_of(images)
    offsets = np.arange(-reach, reach + 1)
    cand = base[:, None] + offsets[None, :]
    if grid.is_circle:
        cand = np.mod(cand, n)
        valid = np.ones(cand.shape, dtype=bool)
    else:
        valid = (cand >= 0) & (cand < n)
        cand = np.clip(cand, 0, n - 1)
    weights = grid.dist(images[:, None], grid.midpoints[cand])
    valid &= weights <= c_max + grid.tol
    rows = np.broadcast_to(np.arange(n)[:, None], cand.shape)[valid]
    cols = cand[valid]
    data = weights[valid]
    order = np.lexsort((cols, rows))
    rows, cols, data = rows[order], cols[order], data[order]
    if grid.is_circle and 2 * reach + 1 > n:
        keep = np.ones(rows.size, dtype=bool)
        keep[1:] = (rows[1:] != rows[:-1]) | (cols[1:] != cols[:-1])
        rows, cols, data = rows[keep], cols[keep], data[keep]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    return sparse.csr_matrix((data.astype(float), cols.astype(np.int32), indptr.astype(np.int32)), shape=(n, n))


def _relation_layer(grid: Grid, lo: np.ndarray, hi: np.ndarray) -> sparse.csr_matrix:
    n = grid.n
    lefts = grid.lefts
    indptr = [0]
    indices = []
    fallback = 0
    if grid.is_circle:
        L = grid.domain.upper
        lefts_ext = np.concatenate([lefts, lefts + L, lefts + 2 * L])
    for i in range(n):
        a, b = float(lo[i]), float(hi[i])
        if grid.is_circle:
            shift = math.floor(a / L) * L
            a, b = a - shift, b - shift
            j0 = int(np.searchsorted(lefts, a, side="right") - 1)
            if b <= a:
                targets = [j0]
                fallback += 1
            elif b - a >= L:
                targets = list(range(n))
            else:
                j1 = int(np.searchsorted(lefts_ext, b, side="left") - 1)
                targets = sorted({j % n for j in range(j0, j1 + 1)})
        else:
            j0 = grid.cell_of(a)
            if b <= a:
                targets = [j0]
                fallback += 1
            else:
                j1 = int(np.searchsorted(lefts, b, side="left") - 1)
                targets = list(range(j0, max(j0, j1) + 1))
        indices.extend(targets)
        indptr.append(len(indices))
    if fallback:
        logger.warning(f"{fallback} cells had degenerate image enclosures; used the cell containing the image")
    idx = np.asarray(indices, dtype=np.int32)
    return sparse.csr_matrix((np.ones(idx.size, dtype=np.int8), idx, np.asarray(indptr, dtype=np.int32)),
                             shape=(n, n))


def build_chain_graph(grid: Grid, sys: SystemSpec, T: float, c_max: Optional[float] = None,
                      cfg: Optional[IntegratorConfig] = None) -> ChainGraph:
    cfg = cfg or IntegratorConfig()
    if not T > 0:
        raise PreconditionError(f"T must be positive, got {T}")
    if grid.domain != sys.domain:
        raise PreconditionError(f"grid domain {grid.domain} does not match system domain {sys.domain}")
    if c_max is None:
        c_max = 3 * grid.h
    if c_max < grid.h - grid.tol:
        raise CutoffTooSmallError(f"c_max={c_max} is below the cell width h={grid.h}")
    images = flow_points(sys, grid.midpoints, T, cfg)
    if grid.is_circle:
        images = np.mod(images, grid.domain.upper)
    cost = _cost_layer(grid, images, c_max)
    lo, hi = cell_images(sys, grid.lefts, grid.rights, T, cfg)
    relation = _relation_layer(grid, lo, hi)
    G = ChainGraph(grid, sys, float(T), float(c_max), cfg, cost, relation)
    logger.info(f"Built {G}")
    return G


def reverse_graph(G: ChainGraph) -> ChainGraph:
    cost = G.cost.transpose().tocsr()
    cost.sort_indices()
    relation = G.relation.transpose().tocsr()
    relation.sort_indices()
    return ChainGraph(G.grid, G.system, G.T, G.c_max, G.cfg, cost, relation, reversed_=not G.reversed)
