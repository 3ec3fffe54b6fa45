"""
Strongly stable sets, attractors, complementary sets and the decomposition checks.

Set equalities are judged with a collar tolerance: a difference is accepted
when it lies within one (or two) cells of the boundary of the reference set.
"""
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict

from src.analysis import (
    chain_index,
    cost_rows,
    cr_cells,
    omega_bar_cells,
    omega_limit_cells,
    relation_index,
    reversed_of,
    scr_cells,
)
from src.errors import EmptySetError, PreconditionError
from src.graph import ChainGraph
from src.models import (
    AttractorRecord,
    CandidateRecord,
    ConleyResult,
    DecomposeReport,
    GridInfo,
    SetComparison,
    StabilityReport,
    Theorem1Result,
)
from src.reachability import post_image
from src.space import LENGTH_TOL, CellSet, compare_sets, eta_neighborhood

ONE_CELL = 1
TWO_CELLS = 2


class StronglyStableWitness(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    B: CellSet
    eta_grid: List[float]
    absorption_steps: List[int]
    omega_enclosures: List[CellSet]

    def absorption_times(self, T: float) -> List[float]:
        """t(eta) = k(eta) * T."""
        return [k * T for k in self.absorption_steps]


class DecompositionCandidate(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    B: CellSet
    B_bullet: CellSet
    class_set: CellSet
    source: Optional[int] = None
    eps: Optional[float] = None

    def record(self) -> CandidateRecord:
        return CandidateRecord(B=self.B.to_list(), B_bullet=self.B_bullet.to_list(),
                               class_set=self.class_set.to_list(), source=self.source, eps=self.eps)


def default_stability_etas(h: float, rho: Optional[float] = None) -> List[float]:
    return _clip([h / 4, h / 2, h, 2 * h, 4 * h, 8 * h, 16 * h], rho)


def default_attractor_etas(h: float, rho: Optional[float] = None) -> List[float]:
    return _clip([2 * h, 4 * h, 8 * h, 16 * h], rho)


def default_eps_grid(G: ChainGraph) -> List[float]:
    """{h, 2h, 4h, ...} up to a quarter of the domain length."""
    h = G.h
    top = G.grid.domain.length / 4
    grid = []
    eps = h
    while eps <= top * (1 + LENGTH_TOL):
        grid.append(eps)
        eps *= 2
    return grid or [h]


def _clip(etas: List[float], rho: Optional[float]) -> List[float]:
    if rho is None:
        return etas
    kept = [e for e in etas if e < rho]
    if not kept:
        raise PreconditionError(f"no radius of the eta grid lies below rho={rho}")
    return kept


def _one_cell_hull(G: ChainGraph, B: CellSet) -> CellSet:
    return eta_neighborhood(G.grid, B, G.h)


# Complementary sets

def complementary(G: ChainGraph, B: CellSet) -> Tuple[CellSet, CellSet]:
    """(B_bullet, connecting set): cells whose omega-enclosure misses B, and X minus both."""
    if not B:
        raise EmptySetError("B must be nonempty")
    misses = relation_index(G).omega_misses(B.mask) & ~B.mask
    bullet = CellSet(G.grid, misses)
    connecting = CellSet(G.grid, ~(misses | B.mask))
    return bullet, connecting


# Attractors and stability

def _is_attractor(G: ChainGraph, B: CellSet, eta_grid: Sequence[float]) -> bool:
    if not B:
        raise EmptySetError("B must be nonempty")
    hull = _one_cell_hull(G, B)
    leak = omega_limit_cells(G, B) - hull
    if leak:
        raise PreconditionError(f"B is not invariant: its omega-enclosure leaves B at {len(leak)} cells")
    for eta in eta_grid:
        if omega_limit_cells(G, eta_neighborhood(G.grid, B, eta)) <= hull:
            return True
    return False


def is_attractor(G: ChainGraph, B: CellSet, eta_grid: Optional[Sequence[float]] = None) -> bool:
    return _is_attractor(G, B, eta_grid or default_attractor_etas(G.h))


def is_repeller(G: ChainGraph, B: CellSet, eta_grid: Optional[Sequence[float]] = None) -> bool:
    return _is_attractor(reversed_of(G), B, eta_grid or default_attractor_etas(G.h))


def forward_orbit(G: ChainGraph, U: CellSet) -> Tuple[List[np.ndarray], int]:
    """Relation iterates U, Post(U), ... until a set repeats.

    Returns (iterates, first index of the cycle); the iterates from that index
    on repeat forever. At most n + 1 iterates are produced; a cycle index of -1
    means no repeat was seen within that bound.
    """
    seen: Dict[bytes, int] = {}
    sets = []
    current = U.mask.copy()
    for step in range(G.n + 1):
        key = np.packbits(current).tobytes()
        if key in seen:
            return sets, seen[key]
        seen[key] = step
        sets.append(current)
        current = post_image(G.relation, current)
    return sets, -1


def absorption_step(G: ChainGraph, U: CellSet) -> Optional[int]:
    """Smallest k with every relation iterate from step k on inside U; None when there is none."""
    sets, cycle = forward_orbit(G, U)
    if cycle < 0:
        return None
    inside = [not np.any(s & ~U.mask) for s in sets]
    if not all(inside[cycle:]):
        return None
    k = 0
    for j in range(cycle):
        if not inside[j]:
            k = j + 1
    return k


def is_strongly_stable(G: ChainGraph, B: CellSet, eta_grid: Optional[Sequence[float]] = None
                       ) -> Tuple[bool, Optional[StronglyStableWitness], List[str]]:
    if not B:
        raise EmptySetError("B must be nonempty")
    etas = list(eta_grid or default_stability_etas(G.h))
    steps: List[Optional[int]] = []
    omegas: List[CellSet] = []
    diagnostics: List[str] = []
    inter = np.ones(G.n, dtype=bool)
    for eta in etas:
        U = eta_neighborhood(G.grid, B, eta)
        k = absorption_step(G, U)
        steps.append(k)
        if k is None:
            diagnostics.append(f"eta={eta:.6g}: relation iterates of U_eta never settle inside U_eta")
        omega = omega_limit_cells(G, U)
        omegas.append(omega)
        inter &= omega.mask
    comparison = compare_sets(CellSet(G.grid, inter), B, ONE_CELL)
    if not comparison.passed:
        diagnostics.append(f"intersection of omega(U_eta) differs from B at {comparison.collar_violations[:10]}")
    ok = all(k is not None for k in steps) and comparison.passed
    if not ok:
        return False, None, diagnostics
    witness = StronglyStableWitness(B=B, eta_grid=etas, absorption_steps=[int(k) for k in steps],
                                    omega_enclosures=omegas)
    return True, witness, diagnostics


def is_stable(G: ChainGraph, B: CellSet, eta_grid: Optional[Sequence[float]] = None) -> bool:
    """Every U_eta of the grid contains the whole forward orbit of the smallest U_eta."""
    if not B:
        raise EmptySetError("B must be nonempty")
    etas = list(eta_grid or default_stability_etas(G.h))
    sets, _ = forward_orbit(G, eta_neighborhood(G.grid, B, etas[0]))
    orbit = np.logical_or.reduce(sets)
    for eta in etas[1:]:
        if np.any(orbit & ~eta_neighborhood(G.grid, B, eta).mask):
            return False
    return True


def stability_report(G: ChainGraph, B: CellSet, eta_grid: Optional[Sequence[float]] = None) -> StabilityReport:
    etas = list(eta_grid or default_stability_etas(G.h))
    ok, witness, diagnostics = is_strongly_stable(G, B, etas)
    steps = [absorption_step(G, eta_neighborhood(G.grid, B, eta)) for eta in etas] if witness is None \
        else list(witness.absorption_steps)
    try:
        attractor = is_attractor(G, B)
    except PreconditionError as e:
        attractor = None
        diagnostics.append(str(e))
    try:
        repeller = is_repeller(G, B)
    except PreconditionError as e:
        repeller = None
        diagnostics.append(f"reversed: {e}")
    return StabilityReport(B=B.to_list(), attractor=attractor, repeller=repeller, stable=is_stable(G, B, etas),
                           strongly_stable=ok, eta_grid=etas, absorption_steps=steps, diagnostics=diagnostics)


# Candidate enumeration

def enumerate_strongly_stable(G: ChainGraph, eps_grid: Optional[Sequence[float]] = None,
                              sources: Optional[CellSet] = None, dedupe: str = "class"
                              ) -> List[DecompositionCandidate]:
    """B = omega(Omega-bar({s}, eps, T)) for every source s and eps, with B_bullet and class B | B_bullet.

    dedupe "class" keeps one candidate per class set, "B" one per distinct B.
    Candidates are ordered by first appearance (source index, then eps).
    """
    if dedupe not in ("class", "B"):
        raise ValueError(f"unknown dedupe mode '{dedupe}'")
    eps_grid = list(eps_grid or default_eps_grid(G))
    if not eps_grid:
        raise ValueError("eps_grid must be nonempty")
    index = relation_index(G)
    src = sources.indices() if sources is not None else index.representatives()
    rows = cost_rows(G, src, limit=max(eps_grid) * (1 + LENGTH_TOL) + LENGTH_TOL * G.h)
    slack = LENGTH_TOL * G.h

    seen_S = set()
    seen_B = set()
    seen_class = set()
    out: List[DecompositionCandidate] = []
    for r, s in enumerate(src):
        for eps in eps_grid:
            S = rows[r] <= eps + slack
            if not S.any():
                continue
            key_S = np.packbits(S).tobytes()
            if key_S in seen_S:
                continue
            seen_S.add(key_S)
            B = CellSet(G.grid, index.omega_mask(S))
            if B.key() in seen_B:
                continue
            seen_B.add(B.key())
            bullet, _ = complementary(G, B)
            cls = B | bullet
            if dedupe == "class":
                if cls.key() in seen_class:
                    continue
                seen_class.add(cls.key())
            out.append(DecompositionCandidate(B=B, B_bullet=bullet, class_set=cls, source=int(s), eps=float(eps)))
    logger.info(f"Enumerated {len(out)} candidates from {len(src)} sources and {len(eps_grid)} budgets "
                f"({len(seen_B)} distinct B, dedupe={dedupe})")
    return out


def equivalence_classes(candidates: Sequence[DecompositionCandidate]
                        ) -> List[Tuple[CellSet, List[DecompositionCandidate]]]:
    """Group candidates by B | B_bullet, in order of first appearance."""
    groups: Dict[bytes, Tuple[CellSet, List[DecompositionCandidate]]] = {}
    for c in candidates:
        groups.setdefault(c.class_set.key(), (c.class_set, []))[1].append(c)
    return list(groups.values())


def _intersection(G: ChainGraph, sets: Sequence[CellSet]) -> CellSet:
    inter = np.ones(G.n, dtype=bool)
    for s in sets:
        inter &= s.mask
    return CellSet(G.grid, inter)


# Decomposition checks

def theorem1_check(G: ChainGraph, Y: CellSet, candidates: Sequence[DecompositionCandidate],
                   tau: Optional[float] = None) -> Theorem1Result:
    """Omega-bar(Y) against the intersection of the candidate B containing omega(Y)."""
    left = omega_bar_cells(G, Y, tau)
    omega_Y = omega_limit_cells(G, Y)
    containing = [c.B for c in candidates if omega_Y <= c.B]
    if not containing:
        logger.warning(f"no candidate contains omega(Y) for Y={Y}; using all cells")
    right = _intersection(G, containing)
    return Theorem1Result(source=Y.to_list(), omega_of_source=omega_Y.to_list(),
                          comparison=compare_sets(left, right, TWO_CELLS), containing_candidates=len(containing))


def scr_decomposition(G: ChainGraph, candidates: Sequence[DecompositionCandidate],
                      tau: Optional[float] = None) -> SetComparison:
    """Intersection of all classes B | B_bullet against scr_cells."""
    if not candidates:
        raise EmptySetError("need at least one candidate")
    classes = _intersection(G, [c.class_set for c in candidates])
    return compare_sets(classes, scr_cells(G, tau), TWO_CELLS)


def recurrent_blocks(G: ChainGraph) -> List[CellSet]:
    """Recurrent components of the chain layer, ordered by their smallest cell."""
    index = chain_index(G)
    blocks = [index.members[c] for c in range(index.n_comps) if index.recurrent_comp[c]]
    blocks.sort(key=lambda m: int(m.min()))
    return [G.grid.cells(m) for m in blocks]


def relation_attractor_candidates(G: ChainGraph, eta_grid: Sequence[float]) -> List[CellSet]:
    """Omega-enclosures of each recurrent block and of its eta-neighbourhoods."""
    out, seen = [], set()
    for block in recurrent_blocks(G):
        for eta in [0.0, *eta_grid]:
            B = omega_limit_cells(G, eta_neighborhood(G.grid, block, eta))
            if B.key() not in seen:
                seen.add(B.key())
                out.append(B)
    return out


def attractor_repeller_pairs(G: ChainGraph, candidates: Sequence[DecompositionCandidate],
                             eta_grid: Optional[Sequence[float]] = None) -> List[AttractorRecord]:
    """Attractors with their dual repellers A*.

    Tried in order: X itself, the candidate B, then the omega-enclosures of the
    recurrent blocks and their eta-neighbourhoods.
    """
    etas = list(eta_grid or default_attractor_etas(G.h))
    X = G.grid.all_cells()
    attractors = [X]
    seen = {X.key()}
    for B in [c.B for c in candidates] + relation_attractor_candidates(G, etas):
        if B.key() in seen:
            continue
        seen.add(B.key())
        try:
            if _is_attractor(G, B, etas):
                attractors.append(B)
        except PreconditionError:
            continue
    records = []
    for A in attractors:
        if A == X:
            star = G.grid.empty()
            confirmed = True
        else:
            star, _ = complementary(G, A)
            try:
                confirmed = bool(star) and is_repeller(G, star, etas)
            except PreconditionError:
                confirmed = False
        records.append(AttractorRecord(A=A.to_list(), A_star=star.to_list(), repeller_confirmed=confirmed))
    logger.debug(f"Found {len(records)} attractors")
    return records


def cr_attractor_decomposition(G: ChainGraph, candidates: Sequence[DecompositionCandidate],
                               eta_grid: Optional[Sequence[float]] = None, cr_mode: str = "chain") -> ConleyResult:
    pairs = attractor_repeller_pairs(G, candidates, eta_grid)
    index = relation_index(G)
    inter = np.ones(G.n, dtype=bool)
    violations = np.zeros(G.n, dtype=bool)
    for rec in pairs:
        A = G.grid.cells(rec.A)
        star = G.grid.cells(rec.A_star)
        inter &= (A | star).mask
        # either omega(x) sits in A (up to one cell) or x belongs to A*
        inside = index.omega_within(_one_cell_hull(G, A).mask)
        violations |= ~(inside | star.mask)
    comparison = compare_sets(CellSet(G.grid, inter), cr_cells(G, cr_mode), TWO_CELLS)
    return ConleyResult(attractors=pairs, comparison=comparison,
                        dichotomy_violations=[int(i) for i in np.flatnonzero(violations)])


def grid_info(G: ChainGraph) -> GridInfo:
    d = G.grid.domain
    return GridInfo(kind=d.kind, lower=d.lower, upper=d.upper, n=G.n, h=G.h)


def decompose(G: ChainGraph, Y: Optional[CellSet] = None, tau: Optional[float] = None,
              eps_grid: Optional[Sequence[float]] = None, eta_grid: Optional[Sequence[float]] = None,
              cr_mode: str = "chain") -> DecomposeReport:
    """Enumerate candidates and run every decomposition check."""
    tau = 2 * G.h if tau is None else tau
    candidates = enumerate_strongly_stable(G, eps_grid, dedupe="B")
    classes = equivalence_classes(candidates)
    representatives = [members[0] for _, members in classes]

    scr = scr_cells(G, tau)
    cr = cr_cells(G, cr_mode)
    theorem1 = theorem1_check(G, Y, candidates, tau) if Y is not None else None
    scr_cmp = scr_decomposition(G, representatives, tau)
    conley = cr_attractor_decomposition(G, candidates, eta_grid, cr_mode)

    A_sets = [G.grid.cells(r.A) | G.grid.cells(r.A_star) for r in conley.attractors]
    intersections = {
        "classes": scr_cmp.left,
        "attractor_classes": _intersection(G, A_sets).to_list(),
    }
    pass_flags = {"scr_decomposition": scr_cmp.passed, "conley": conley.comparison.passed}
    collar_violations = {"scr_decomposition": scr_cmp.collar_violations,
                         "conley": conley.comparison.collar_violations}
    if theorem1 is not None:
        pass_flags["theorem1"] = theorem1.comparison.passed
        collar_violations["theorem1"] = theorem1.comparison.collar_violations

    notes = [f"{len(classes)} equivalence classes B | B_bullet among {len(candidates)} candidates"]
    if conley.dichotomy_violations:
        notes.append(f"{len(conley.dichotomy_violations)} cells violate the attractor dichotomy at grid scale")
    report = DecomposeReport(
        system=G.system.system_id, grid=grid_info(G), T=G.T, tau=tau,
        candidates=[c.record() for c in representatives],
        scr=scr.to_list(), cr=cr.to_list(), intersections=intersections, theorem1=theorem1,
        scr_decomposition=scr_cmp, conley=conley, pass_flags=pass_flags,
        collar_violations=collar_violations, notes=notes,
    )
    for name, ok in pass_flags.items():
        (logger.info if ok else logger.warning)(f"{name}: {'pass' if ok else 'FAIL'}")
    return report
