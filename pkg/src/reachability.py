"""
Strongly connected components and forward-reachability bitsets of a cell digraph.

Components are numbered in the order Tarjan's algorithm completes them, which
is a reverse topological order of the condensation: every edge between two
different components goes from a higher to a lower component number.
"""
from typing import List, Tuple

import numpy as np
from loguru import logger
from scipy import sparse


def strongly_connected_components(adjacency: sparse.csr_matrix) -> Tuple[np.ndarray, int]:
    """Iterative Tarjan. Roots are tried by increasing cell index, successors in CSR order.

    Returns (component number per cell, component count).
    """
    n = adjacency.shape[0]
    indptr = adjacency.indptr.tolist()
    indices = adjacency.indices.tolist()
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    comp = [-1] * n
    stack: List[int] = []
    counter = 0
    n_comps = 0

    for root in range(n):
        if index[root] != -1:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack[root] = True
        work = [[root, indptr[root]]]
        while work:
            frame = work[-1]
            v, ptr = frame
            if ptr < indptr[v + 1]:
                w = indices[ptr]
                frame[1] = ptr + 1
                if index[w] == -1:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack[w] = True
                    work.append([w, indptr[w]])
                elif on_stack[w] and index[w] < low[v]:
                    low[v] = index[w]
                continue
            work.pop()
            if work:
                u = work[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
            if low[v] == index[v]:
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = n_comps
                    if w == v:
                        break
                n_comps += 1

    return np.asarray(comp, dtype=np.int64), n_comps


def post_image(adjacency: sparse.csr_matrix, mask: np.ndarray) -> np.ndarray:
    """Cells reached from `mask` by exactly one edge."""
    hits = adjacency.transpose().dot(mask.astype(np.int32))
    return np.asarray(hits).ravel() > 0


def _set_bits(row: np.ndarray, members: np.ndarray):
    np.bitwise_or.at(row, members >> 3, (128 >> (members & 7)).astype(np.uint8))


class ReachabilityIndex:
    """SCC structure plus per-component descendant and omega bitsets.

    reach[c]: every cell reachable from component c (c included).
    omega[c]: union of reach[r] over the recurrent components r reachable
    from c; the omega-enclosure of any cell of c.
    """

    def __init__(self, adjacency: sparse.csr_matrix):
        self.adjacency = adjacency
        self.n = adjacency.shape[0]
        self.comp_of, self.n_comps = strongly_connected_components(adjacency)

        order = np.argsort(self.comp_of, kind="stable")
        bounds = np.searchsorted(self.comp_of[order], np.arange(self.n_comps + 1))
        self.members: List[np.ndarray] = [order[bounds[c]:bounds[c + 1]] for c in range(self.n_comps)]
        sizes = np.diff(bounds)

        coo = adjacency.tocoo()
        loops = np.zeros(self.n, dtype=bool)
        loops[coo.row[coo.row == coo.col]] = True
        comp_loop = np.zeros(self.n_comps, dtype=bool)
        comp_loop[self.comp_of[loops]] = True
        self.recurrent_comp = (sizes > 1) | comp_loop

        cu = self.comp_of[coo.row]
        cv = self.comp_of[coo.col]
        cross = cu != cv
        pairs = np.unique(cu[cross] * self.n_comps + cv[cross])
        src, dst = pairs // self.n_comps, pairs % self.n_comps
        succ_bounds = np.searchsorted(src, np.arange(self.n_comps + 1))
        self.successors: List[np.ndarray] = [dst[succ_bounds[c]:succ_bounds[c + 1]] for c in range(self.n_comps)]

        self._reach = None
        self._omega = None
        logger.debug(f"Reachability index: {self.n} cells, {self.n_comps} components, "
                     f"{int(self.recurrent_comp.sum())} recurrent")

    def _build_bitsets(self):
        width = (self.n + 7) // 8
        reach = np.zeros((self.n_comps, width), dtype=np.uint8)
        omega = np.zeros((self.n_comps, width), dtype=np.uint8)
        # successors always carry smaller component numbers
        for c in range(self.n_comps):
            _set_bits(reach[c], self.members[c])
            succ = self.successors[c]
            if succ.size:
                reach[c] |= np.bitwise_or.reduce(reach[succ], axis=0)
                omega[c] = np.bitwise_or.reduce(omega[succ], axis=0)
            if self.recurrent_comp[c]:
                omega[c] |= reach[c]
        self._reach, self._omega = reach, omega

    @property
    def reach_bits(self) -> np.ndarray:
        if self._reach is None:
            self._build_bitsets()
        return self._reach

    @property
    def omega_bits(self) -> np.ndarray:
        if self._omega is None:
            self._build_bitsets()
        return self._omega

    def _unpack(self, packed: np.ndarray) -> np.ndarray:
        return np.unpackbits(packed, count=self.n).astype(bool)

    def _union(self, bits: np.ndarray, mask: np.ndarray) -> np.ndarray:
        comps = np.unique(self.comp_of[mask])
        if comps.size == 0:
            return np.zeros(self.n, dtype=bool)
        return self._unpack(np.bitwise_or.reduce(bits[comps], axis=0))

    def recurrent_mask(self) -> np.ndarray:
        """Cells in a component of size > 1 or carrying a self-loop."""
        return self.recurrent_comp[self.comp_of]

    def stable_recurrent_mask(self) -> np.ndarray:
        """Recurrent cells whose component has no way out."""
        sink = np.array([s.size == 0 for s in self.successors], dtype=bool)
        return (self.recurrent_comp & sink)[self.comp_of]

    def unstable_recurrent_mask(self) -> np.ndarray:
        return self.recurrent_mask() & ~self.stable_recurrent_mask()

    def reach_mask(self, mask: np.ndarray) -> np.ndarray:
        return self._union(self.reach_bits, mask)

    def omega_mask(self, mask: np.ndarray) -> np.ndarray:
        return self._union(self.omega_bits, mask)

    def omega_misses(self, target: np.ndarray) -> np.ndarray:
        """Cells whose own omega-enclosure is disjoint from `target`."""
        packed = np.packbits(target)
        hits = np.any(self.omega_bits & packed[None, :], axis=1)
        return ~hits[self.comp_of]

    def omega_within(self, target: np.ndarray) -> np.ndarray:
        """Cells whose own omega-enclosure lies inside `target`."""
        outside = np.packbits(~target)
        leaks = np.any(self.omega_bits & outside[None, :], axis=1)
        return ~leaks[self.comp_of]

    def representatives(self) -> np.ndarray:
        """Smallest cell of each component, sorted by cell index."""
        return np.sort(np.array([int(m.min()) for m in self.members], dtype=np.int64))
