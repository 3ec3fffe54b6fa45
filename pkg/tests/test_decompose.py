import pytest
import numpy as np

from src.analysis import relation_index
from src.decompose import (
    absorption_step,
    attractor_repeller_pairs,
    complementary,
    cr_attractor_decomposition,
    decompose,
    default_attractor_etas,
    default_eps_grid,
    default_stability_etas,
    enumerate_strongly_stable,
    equivalence_classes,
    forward_orbit,
    is_attractor,
    is_repeller,
    is_stable,
    is_strongly_stable,
    recurrent_blocks,
    relation_attractor_candidates,
    scr_decomposition,
    stability_report,
    theorem1_check,
)
from src.errors import EmptySetError, PreconditionError
from src.space import eta_neighborhood, hausdorff_cells


@pytest.fixture(scope="module")
def figure1_candidates(figure1_500):
    return enumerate_strongly_stable(figure1_500, dedupe="B")


def test_complementary_identity_flow(trivial_100):
    G = trivial_100
    B = G.grid.cells([3, 4, 5, 60])
    bullet, connecting = complementary(G, B)
    assert bullet == ~B
    assert not connecting
    with pytest.raises(EmptySetError):
        complementary(G, G.grid.empty())


def test_complementary_figure1_attractor(figure1_500):
    G = figure1_500
    bullet, connecting = complementary(G, G.grid.cells([499]))
    assert bullet.to_list() == list(range(350))
    assert connecting.to_list() == list(range(350, 499))


def test_complementary_circle_entry_end(circle_500):
    G = circle_500
    # non-fixed cells settle in the last cell before the entry point
    B = G.grid.cells([0, 499])
    bullet, connecting = complementary(G, B)
    assert bullet.to_list() == list(range(1, 125))
    assert connecting.to_list() == list(range(125, 499))


def test_attractor_examples(figure1_500, circle_500):
    G = figure1_500
    assert is_attractor(G, G.grid.cells([499]))
    assert is_attractor(G, G.grid.cells([499]), [2 * G.h, 4 * G.h, 8 * G.h])
    assert not is_attractor(G, G.grid.cells_meeting(2.4, 3.0))
    assert not is_attractor(circle_500, circle_500.grid.cells(range(125)))


def test_attractor_needs_invariant_set(figure1_500):
    G = figure1_500
    with pytest.raises(PreconditionError):
        is_attractor(G, G.grid.cells_at([1.0]))
    with pytest.raises(EmptySetError):
        is_attractor(G, G.grid.empty())


def test_repeller_at_the_lower_end(figure1_500):
    G = figure1_500
    assert is_repeller(G, G.grid.cells([0]))
    assert not is_repeller(G, G.grid.cells_meeting(2.4, 3.0))


def test_strong_stability_examples(figure1_500, trivial_100):
    G = figure1_500
    ok, witness, diagnostics = is_strongly_stable(G, G.grid.cells_meeting(2.4, 3.0))
    assert ok
    assert diagnostics == []
    assert witness.absorption_steps == [0] * len(witness.eta_grid)
    assert witness.absorption_times(G.T) == [0.0] * len(witness.eta_grid)
    assert witness.eta_grid == sorted(witness.eta_grid)

    ok, witness, diagnostics = is_strongly_stable(G, G.grid.cells_meeting(2.4, 3.5))
    assert not ok
    assert witness is None
    assert diagnostics

    ok, _, _ = is_strongly_stable(trivial_100, trivial_100.grid.cells(list(range(10, 21)) + [50]))
    assert ok


def test_attractor_is_strongly_stable(figure1_500):
    G = figure1_500
    ok, witness, _ = is_strongly_stable(G, G.grid.cells([499]))
    assert ok
    assert all(omega.to_list() == [499] for omega in witness.omega_enclosures)


def test_stability(figure1_500):
    G = figure1_500
    assert is_stable(G, G.grid.cells_meeting(2.4, 3.0))
    assert not is_stable(G, G.grid.cells_meeting(2.4, 3.5))


def test_absorption_after_excursion(linear_sink_500):
    G = linear_sink_500
    core = G.grid.cells_meeting(-0.5, 0.5)
    assert absorption_step(G, core) == 0
    # the cell of 0.9 first lands near 0.12, outside U, then falls back in
    U = G.grid.cells_meeting(-0.05, 0.05) | G.grid.cells_at([0.9])
    assert absorption_step(G, U) == 2
    assert absorption_step(G, G.grid.cells_meeting(0.3, 0.5)) is None


def test_forward_orbit_repeats(figure1_500):
    G = figure1_500
    sets, cycle = forward_orbit(G, G.grid.cells([250]))
    assert cycle == 0
    assert len(sets) == 1


def test_stability_report(figure1_500):
    G = figure1_500
    report = stability_report(G, G.grid.cells([499]))
    assert report.attractor is True
    assert report.strongly_stable is True
    assert report.stable is True
    transient = stability_report(G, G.grid.cells_at([1.0]))
    assert transient.attractor is None
    assert transient.strongly_stable is False
    assert any("not invariant" in d for d in transient.diagnostics)


def test_enumeration_identity_flow(trivial_100):
    G = trivial_100
    everything = G.grid.all_cells()
    by_class = enumerate_strongly_stable(G, [0.0], everything)
    assert len(by_class) == 1
    assert by_class[0].class_set == everything
    by_B = enumerate_strongly_stable(G, [0.0], everything, dedupe="B")
    assert [c.B.to_list() for c in by_B] == [[i] for i in range(100)]
    assert len(equivalence_classes(by_B)) == 1
    with pytest.raises(ValueError):
        enumerate_strongly_stable(G, [0.0], everything, dedupe="other")


def test_enumeration_figure1_sources(figure1_500):
    G = figure1_500
    upper = enumerate_strongly_stable(G, [G.h, 0.05, 0.1], G.grid.cells_at([4.0]), dedupe="B")
    assert [c.B.to_list() for c in upper] == [[499]]

    block = enumerate_strongly_stable(G, [0.3], G.grid.cells_at([2.5]))
    assert len(block) == 1
    assert hausdorff_cells(block[0].B, G.grid.cells_meeting(2.2, 2.8)) <= 2 * G.h


def test_candidates_partition_cells(figure1_candidates):
    for c in figure1_candidates:
        assert not (c.B & c.B_bullet)
        assert c.class_set == c.B | c.B_bullet
        record = c.record()
        assert record.model_dump(by_alias=True)["class"] == c.class_set.to_list()


BUILTINS_500 = ["trivial_500", "figure1_500", "circle_500", "linear_sink_500", "cantor_500"]


@pytest.fixture(scope="module")
def candidates_500(request):
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = enumerate_strongly_stable(request.getfixturevalue(name), dedupe="B")
        return cache[name]
    return get


@pytest.mark.parametrize("fixture", BUILTINS_500)
def test_dichotomy_up_to_unstable_reach(fixture, request, candidates_500):
    G = request.getfixturevalue(fixture)
    index = relation_index(G)
    # cells that can still run into an unstable recurrent cell
    packed = np.packbits(index.unstable_recurrent_mask())
    touches = np.any(index.reach_bits & packed[None, :], axis=1)[index.comp_of]
    checked = 0
    for c in candidates_500(fixture):
        ok, _, _ = is_strongly_stable(G, c.B)
        if not ok:
            continue
        checked += 1
        inside = index.omega_within(eta_neighborhood(G.grid, c.B, 2 * G.h).mask)
        outside = index.omega_misses(c.B.mask)
        violating = ~(inside | outside)
        assert not np.any(violating & ~touches), c.B.to_list()[:10]
    assert checked > 0


@pytest.mark.parametrize("fixture", BUILTINS_500)
def test_every_attractor_is_strongly_stable(fixture, request, candidates_500):
    G = request.getfixturevalue(fixture)
    for rec in attractor_repeller_pairs(G, candidates_500(fixture)):
        ok, _, diagnostics = is_strongly_stable(G, G.grid.cells(rec.A))
        assert ok, (rec.A[:10], diagnostics)


def test_default_grids(figure1_500):
    h = figure1_500.h
    assert default_eps_grid(figure1_500) == pytest.approx([h * 2 ** k for k in range(7)])
    assert default_stability_etas(h, rho=2 * h) == [h / 4, h / 2, h]
    with pytest.raises(PreconditionError):
        default_stability_etas(h, rho=h / 8)


def test_theorem1_identity_flow(trivial_100):
    G = trivial_100
    candidates = enumerate_strongly_stable(G, [0.0], dedupe="B")
    result = theorem1_check(G, G.grid.cells([40]), candidates, tau=0.0)
    assert result.comparison.passed
    assert result.comparison.symmetric_difference == []
    assert result.containing_candidates == 1
    assert result.omega_of_source == [40]

    fallback = theorem1_check(G, G.grid.cells([40]), [], tau=0.0)
    assert fallback.containing_candidates == 0
    assert fallback.comparison.right == list(range(100))


def test_scr_decomposition_identity_flow(trivial_100):
    G = trivial_100
    candidates = enumerate_strongly_stable(G, [0.0])
    comparison = scr_decomposition(G, candidates)
    assert comparison.passed
    assert comparison.left == list(range(100))
    with pytest.raises(EmptySetError):
        scr_decomposition(G, [])


def test_identity_flow_has_only_the_trivial_attractor(trivial_100):
    G = trivial_100
    candidates = enumerate_strongly_stable(G, [0.0], dedupe="B")
    pairs = attractor_repeller_pairs(G, candidates)
    assert len(pairs) == 1
    assert pairs[0].A == list(range(100))
    assert pairs[0].A_star == []
    conley = cr_attractor_decomposition(G, candidates)
    assert conley.comparison.passed
    assert conley.dichotomy_violations == []


def test_figure1_attractors(figure1_500, figure1_candidates):
    pairs = attractor_repeller_pairs(figure1_500, figure1_candidates)
    assert pairs[0].A == list(range(500))
    top = [p for p in pairs if p.A == [499]]
    assert len(top) == 1
    assert top[0].A_star == list(range(350))
    assert top[0].repeller_confirmed


def test_decompose_report(trivial_100):
    G = trivial_100
    report = decompose(G, G.grid.cells([40]), tau=0.0, eps_grid=[0.0])
    assert report.passed
    assert set(report.pass_flags) == {"scr_decomposition", "conley", "theorem1"}
    assert report.intersections["classes"] == list(range(100))
    assert report.scr == report.cr == list(range(100))
    assert len(report.candidates) == 1
    assert report.notes[0].startswith("1 equivalence classes")

    without_source = decompose(G, tau=0.0, eps_grid=[0.0])
    assert without_source.theorem1 is None
    assert "theorem1" not in without_source.pass_flags


def test_recurrent_blocks_figure1(figure1_500):
    G = figure1_500
    blocks = recurrent_blocks(G)
    assert blocks[0].to_list()[0] == 0
    assert blocks[-1].to_list()[-1] == 499
    assert any(set(range(210, 340)) <= set(b.to_list()) for b in blocks)


def test_figure1_block_attractor_from_recurrent_blocks(figure1_500):
    G = figure1_500
    derived = relation_attractor_candidates(G, default_attractor_etas(G.h))
    assert G.grid.all_cells() in derived
    block = [B for B in derived if B.to_list()[-1] == 499 and 190 <= B.to_list()[0] <= 205]
    assert block
    assert block[0].to_list() == list(range(block[0].to_list()[0], 500))


def test_figure1_conley_decomposition(figure1_500, figure1_candidates):
    G = figure1_500
    conley = cr_attractor_decomposition(G, figure1_candidates)
    assert conley.comparison.passed, conley.comparison.collar_violations[:20]
    attractors = [rec.A for rec in conley.attractors]
    assert [499] in attractors
    assert any(190 <= A[0] <= 205 and A == list(range(A[0], 500)) for A in attractors)


def test_figure1_decompose_conley_flag(figure1_500):
    report = decompose(figure1_500, figure1_500.grid.cells_at([0.1]))
    assert report.pass_flags["conley"]
    assert any(rec.A[-1] == 499 and rec.A[0] < 250 for rec in report.conley.attractors)
