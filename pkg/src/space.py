"""
Compact 1-D domains, their uniform cell grids and metric utilities.

Cells are half-open [l, r); on an interval the right endpoint of the domain is
assigned to the last cell so the partition is exact.
"""
import math
from typing import Iterable, Iterator, List, Sequence

import numpy as np

from src.errors import EmptySetError, InvalidDomainError, InvalidResolutionError, OutOfDomainError
from src.models import Domain, SetComparison

# Relative slack for "<=" comparisons on lengths measured in cell widths.
LENGTH_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class Grid:
    def __init__(self, domain: Domain, n: int):
        self.domain = domain
        self.n = n
        self.h = domain.length / n
        idx = np.arange(n, dtype=float)
        lefts = domain.lower + idx * self.h
        rights = domain.lower + (idx + 1.0) * self.h
        rights[-1] = domain.upper
        self.lefts = _readonly(lefts)
        self.rights = _readonly(rights)
        self.midpoints = _readonly(domain.lower + (idx + 0.5) * self.h)

    @property
    def is_circle(self) -> bool:
        return self.domain.is_circle

    @property
    def covering_radius(self) -> float:
        return self.h / 2

    @property
    def tol(self) -> float:
        return LENGTH_TOL * self.h

    def __repr__(self) -> str:
        return f"Grid({self.domain.kind}[{self.domain.lower}, {self.domain.upper}], n={self.n})"

    def reduce(self, p):
        """Map a point (or array) into the domain; circles wrap, intervals must contain it."""
        if self.is_circle:
            return np.mod(p, self.domain.upper)
        arr = np.asarray(p, dtype=float)
        if np.any(~np.isfinite(arr)) or np.any(arr < self.domain.lower) or np.any(arr > self.domain.upper):
            raise OutOfDomainError(f"point(s) outside [{self.domain.lower}, {self.domain.upper}]")
        return p

    def cell_of(self, p: float) -> int:
        return int(self.cells_of(np.asarray([p], dtype=float))[0])

    def cells_of(self, points: np.ndarray) -> np.ndarray:
        pts = self.reduce(np.asarray(points, dtype=float))
        idx = np.searchsorted(self.lefts, pts, side="right") - 1
        return np.clip(idx, 0, self.n - 1)

    def dist(self, p, q):
        """Domain metric; works elementwise on arrays."""
        diff = np.abs(np.asarray(p, dtype=float) - np.asarray(q, dtype=float))
        if self.is_circle:
            L = self.domain.upper
            diff = np.mod(diff, L)
            diff = np.minimum(diff, L - diff)
        return diff

    # Cell-set constructors

    def empty(self) -> "CellSet":
        return CellSet(self, np.zeros(self.n, dtype=bool))

    def all_cells(self) -> "CellSet":
        return CellSet(self, np.ones(self.n, dtype=bool))

    def cells(self, indices: Iterable[int]) -> "CellSet":
        mask = np.zeros(self.n, dtype=bool)
        idx = np.fromiter((int(i) for i in indices), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= self.n):
            raise IndexError(f"cell index out of range [0, {self.n})")
        mask[idx] = True
        return CellSet(self, mask)

    def cells_at(self, points: Iterable[float]) -> "CellSet":
        return self.cells(self.cells_of(np.asarray(list(points), dtype=float)))

    def cells_meeting(self, lo: float, hi: float) -> "CellSet":
        """Cells meeting the closed interval [lo, hi] (an arc from lo to hi on circles)."""
        if hi < lo:
            raise EmptySetError(f"empty interval [{lo}, {hi}]")
        if self.is_circle:
            L = self.domain.upper
            if hi - lo >= L:
                return self.all_cells()
            start = math.floor(lo / L) * L
            lo, hi = lo - start, hi - start
            mask = (self.lefts <= hi) & (self.rights > lo)
            if hi > L:
                mask |= self.lefts <= hi - L
            mask[self.cell_of(lo)] = True
            return CellSet(self, mask)
        lo_c = max(lo, self.domain.lower)
        hi_c = min(hi, self.domain.upper)
        if hi_c < lo_c:
            return self.empty()
        mask = (self.lefts <= hi_c) & (self.rights > lo_c)
        mask[self.cell_of(lo_c)] = True
        mask[self.cell_of(hi_c)] = True
        return CellSet(self, mask)


class CellSet:
    """Immutable subset of a grid's cells, stored as a boolean mask."""

    __slots__ = ("grid", "mask")

    def __init__(self, grid: Grid, mask: np.ndarray):
        if mask.shape != (grid.n,):
            raise ValueError(f"mask shape {mask.shape} does not match grid size {grid.n}")
        self.grid = grid
        m = np.array(mask, dtype=bool, copy=True)
        m.setflags(write=False)
        self.mask = m

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def to_list(self) -> List[int]:
        return [int(i) for i in np.flatnonzero(self.mask)]

    def key(self) -> bytes:
        return np.packbits(self.mask).tobytes()

    def __len__(self) -> int:
        return int(self.mask.sum())

    def __iter__(self) -> Iterator[int]:
        return iter(self.to_list())

    def __contains__(self, i) -> bool:
        return bool(self.mask[int(i)])

    def __bool__(self) -> bool:
        return bool(self.mask.any())

    def __eq__(self, other) -> bool:
        if not isinstance(other, CellSet):
            return NotImplemented
        return self.grid is other.grid and bool(np.array_equal(self.mask, other.mask))

    def __hash__(self) -> int:
        return hash(self.key())

    def __or__(self, other: "CellSet") -> "CellSet":
        return CellSet(self.grid, self.mask | other.mask)

    def __and__(self, other: "CellSet") -> "CellSet":
        return CellSet(self.grid, self.mask & other.mask)

    def __sub__(self, other: "CellSet") -> "CellSet":
        return CellSet(self.grid, self.mask & ~other.mask)

    def __invert__(self) -> "CellSet":
        return CellSet(self.grid, ~self.mask)

    def issubset(self, other: "CellSet") -> bool:
        return not bool(np.any(self.mask & ~other.mask))

    def __le__(self, other: "CellSet") -> bool:
        return self.issubset(other)

    def __repr__(self) -> str:
        idx = self.to_list()
        shown = idx if len(idx) <= 8 else idx[:4] + ["..."] + idx[-2:]
        return f"CellSet({len(idx)} cells: {shown})"


def build_grid(domain: Domain, n: int) -> Grid:
    if not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidResolutionError(f"grid needs at least 2 cells, got {n}")
    if not (math.isfinite(domain.lower) and math.isfinite(domain.upper)) or domain.length <= 0:
        raise InvalidDomainError(f"invalid domain {domain}")
    return Grid(domain, int(n))


def dist(grid: Grid, p: float, q: float) -> float:
    grid.reduce(np.asarray([p, q], dtype=float))
    return float(grid.dist(p, q))


def set_distance(grid: Grid, I: Sequence[float], J: Sequence[float]) -> float:
    """Distance between two closed intervals (arcs given by lifted endpoints on circles)."""
    (a1, b1), (a2, b2) = I, J
    if b1 < a1 or b2 < a2:
        raise EmptySetError(f"empty interval in {I} / {J}")
    if not grid.is_circle:
        return float(max(0.0, a2 - b1, a1 - b2))
    L = grid.domain.upper
    if b1 - a1 >= L or b2 - a2 >= L:
        return 0.0
    # bring J next to I in the lifted line, then try the neighbouring sheets
    shift = math.floor((a1 - a2) / L) * L
    best = math.inf
    for k in (-1, 0, 1, 2):
        lo, hi = a2 + shift + k * L, b2 + shift + k * L
        best = min(best, max(0.0, lo - b1, a1 - hi))
    return float(best)


def eta_neighborhood(grid: Grid, S: CellSet, eta: float) -> CellSet:
    """Cells whose midpoint lies within eta of a midpoint of S (grid-scale metric ball U_eta)."""
    if eta < 0:
        raise ValueError(f"eta must be nonnegative, got {eta}")
    idx = S.indices()
    if idx.size == 0:
        return grid.empty()
    centres = grid.midpoints[idx]
    mids = grid.midpoints
    if grid.is_circle:
        L = grid.domain.upper
        centres = np.concatenate([centres - L, centres, centres + L])
    pos = np.searchsorted(centres, mids)
    left = centres[np.clip(pos - 1, 0, centres.size - 1)]
    right = centres[np.clip(pos, 0, centres.size - 1)]
    nearest = np.minimum(np.abs(mids - left), np.abs(mids - right))
    return CellSet(grid, (nearest <= eta + grid.tol) | S.mask)


def boundary_collar(S: CellSet, k: int) -> CellSet:
    """Cells within k cell-steps of the boundary of S (cells on either side of a membership change)."""
    m = S.mask
    n = m.size
    edge = np.zeros(n, dtype=bool)
    if S.grid.is_circle:
        change = m != np.roll(m, -1)
        edge |= change | np.roll(change, 1)
    else:
        change = m[:-1] != m[1:]
        edge[:-1] |= change
        edge[1:] |= change
    out = edge.copy()
    for step in range(1, k + 1):
        if S.grid.is_circle:
            out |= np.roll(edge, step) | np.roll(edge, -step)
        else:
            out[step:] |= edge[:-step]
            out[:-step] |= edge[step:]
    return CellSet(S.grid, out)


def compare_sets(left: CellSet, right: CellSet, collar: int) -> SetComparison:
    """Symmetric difference of two cell sets, tolerated inside a collar of the right set's boundary."""
    diff = CellSet(left.grid, left.mask ^ right.mask)
    violations = diff - boundary_collar(right, collar)
    return SetComparison(
        left=left.to_list(),
        right=right.to_list(),
        symmetric_difference=diff.to_list(),
        collar_violations=violations.to_list(),
        collar=collar,
        passed=not violations,
    )


def hausdorff_cells(A: CellSet, B: CellSet) -> float:
    """Hausdorff distance between the midpoint sets of two nonempty cell sets."""
    if not A or not B:
        raise EmptySetError("Hausdorff distance needs nonempty sets")
    grid = A.grid
    a = grid.midpoints[A.indices()]
    b = grid.midpoints[B.indices()]

    def directed(p: np.ndarray, q: np.ndarray) -> float:
        worst = 0.0
        for chunk in np.array_split(p, max(1, p.size // 512)):
            d = grid.dist(chunk[:, None], q[None, :]).min(axis=1)
            worst = max(worst, float(d.max()))
        return worst

    return max(directed(a, b), directed(b, a))
