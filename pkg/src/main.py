import argparse
import sys
from typing import Callable, Dict, List, Optional

from loguru import logger
from pydantic import ValidationError

from src.analysis import (
    cost_from,
    cr_cells,
    min_cycle_cost,
    omega_bar_cells,
    omega_bar_over_T,
    omega_limit_cells,
    scr_cells,
    verify_lemmas,
)
from src.config import config
from src.decompose import (
    attractor_repeller_pairs,
    decompose,
    enumerate_strongly_stable,
    equivalence_classes,
    grid_info,
    stability_report,
)
from src.errors import ChainRecurrenceError
from src.graph import ChainGraph
from src.graph_cache import GraphCache
from src.models import (
    AttractorReport,
    CandidateReport,
    CellSetReport,
    DecomposeReport,
    GraphDump,
    OmegaBarOverT,
    PropertyReport,
    StabilityReport,
)
from src.report_writer import ReportWriter, to_json_text
from src.run_config import RunConfig, load_run_config
from src.system_registry import system_registry

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_INPUT_ERROR = 2

REPORT_MODELS = {
    "decompose": DecomposeReport,
    "check": PropertyReport,
    "stable": CandidateReport,
    "stability": StabilityReport,
    "attractors": AttractorReport,
    "cellset": CellSetReport,
    "omega_bar_over_T": OmegaBarOverT,
    "graph": GraphDump,
}


class Run:
    """One command execution: the parsed config, its graphs and an output writer."""

    def __init__(self, run: RunConfig, output_dir: str):
        self.run = run
        self.system = run.build_system()
        self.grid = run.build_grid(self.system)
        self.writer = ReportWriter(output_dir)
        self.cache = GraphCache()
        self._graphs: Dict[float, ChainGraph] = {}

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def tau(self) -> float:
        return self.run.tau.resolve(self.h)

    def graph(self, T: float) -> ChainGraph:
        if T not in self._graphs:
            self._graphs[T] = self.cache.get_or_build(self.grid, self.system, T,
                                                      self.run.c_max.resolve(self.h), self.run.integrator)
        return self._graphs[T]

    def graphs(self):
        for T in self.run.T:
            yield T, self.graph(T)

    def suffix(self, T: float) -> str:
        return f"T{T:g}"

    def cellset_report(self, G: ChainGraph, name: str, cells, **parameters) -> CellSetReport:
        return CellSetReport(system=self.system.system_id, grid=grid_info(G), T=G.T, name=name,
                             cells=cells.to_list(), parameters=parameters)


def _mcc_rows(G: ChainGraph, values) -> List[List[str]]:
    mids = G.grid.midpoints
    return [[str(i), repr(float(mids[i])), "inf" if v == float("inf") else repr(float(v))]
            for i, v in enumerate(values)]


def cmd_build(r: Run) -> int:
    for T, G in r.graphs():
        r.writer.write_text(f"graph_{r.suffix(T)}.json", G.to_json())
    return EXIT_OK


def cmd_cr(r: Run) -> int:
    for T, G in r.graphs():
        cells = cr_cells(G, r.run.cr_mode)
        r.writer.write_json(f"cr_{r.suffix(T)}.json", r.cellset_report(G, f"cr[{r.run.cr_mode}]", cells))
        r.writer.write_csv(f"min_cycle_cost_{r.suffix(T)}.csv", _mcc_rows(G, min_cycle_cost(G)))
        logger.info(f"T={T:g}: {len(cells)} chain recurrent cells")
    return EXIT_OK


def cmd_scr(r: Run) -> int:
    for T, G in r.graphs():
        cells = scr_cells(G, r.tau)
        r.writer.write_json(f"scr_{r.suffix(T)}.json", r.cellset_report(G, "scr", cells, tau=r.tau))
        r.writer.write_csv(f"min_cycle_cost_{r.suffix(T)}.csv", _mcc_rows(G, min_cycle_cost(G)))
        logger.info(f"T={T:g}: {len(cells)} strong chain recurrent cells")
    return EXIT_OK


def cmd_cost(r: Run) -> int:
    for T, G in r.graphs():
        field = cost_from(G, r.run.source_cells(G.grid))
        r.writer.write_csv(f"cost_{r.suffix(T)}.csv", field.csv_rows())
    return EXIT_OK


def cmd_omega_bar(r: Run) -> int:
    graphs = []
    for T, G in r.graphs():
        Y = r.run.source_cells(G.grid)
        r.writer.write_csv(f"cost_{r.suffix(T)}.csv", cost_from(G, Y).csv_rows())
        cells = omega_bar_cells(G, Y, r.tau)
        r.writer.write_json(f"omega_bar_{r.suffix(T)}.json", r.cellset_report(G, "omega_bar", cells, tau=r.tau))
        graphs.append(G)
    Y = r.run.source_cells(r.grid).to_list()
    r.writer.write_json("omega_bar_over_T.json", OmegaBarOverT(omega_bar_over_T(graphs, Y, r.tau)))
    return EXIT_OK


def cmd_omega_limit(r: Run) -> int:
    for T, G in r.graphs():
        cells = omega_limit_cells(G, r.run.set_cells(G.grid))
        r.writer.write_json(f"omega_limit_{r.suffix(T)}.json", r.cellset_report(G, "omega_limit", cells))
    return EXIT_OK


def cmd_attractors(r: Run) -> int:
    for T, G in r.graphs():
        h = G.h
        candidates = enumerate_strongly_stable(G, r.run.eps_values(h), dedupe="B")
        pairs = attractor_repeller_pairs(G, candidates, r.run.eta_values(h))
        report = AttractorReport(system=r.system.system_id, grid=grid_info(G), T=T, attractors=pairs)
        r.writer.write_json(f"attractors_{r.suffix(T)}.json", report)
    return EXIT_OK


def cmd_stable(r: Run) -> int:
    for T, G in r.graphs():
        h = G.h
        etas = r.run.eta_values(h)
        candidates = enumerate_strongly_stable(G, r.run.eps_values(h), dedupe="B")
        classes = equivalence_classes(candidates)
        if r.run.set_intervals:
            targets = [r.run.set_cells(G.grid)]
        else:
            targets = [c.B for c in candidates]
        notes = [f"{len(classes)} equivalence classes among {len(candidates)} candidates"]
        report = CandidateReport(
            system=r.system.system_id, grid=grid_info(G), T=T,
            candidates=[c.record() for c in candidates],
            stability=[stability_report(G, B, etas) for B in targets],
            classes=[cls.to_list() for cls, _ in classes], notes=notes,
        )
        r.writer.write_json(f"stable_{r.suffix(T)}.json", report)
    return EXIT_OK


def cmd_decompose(r: Run) -> int:
    status = EXIT_OK
    for T, G in r.graphs():
        h = G.h
        Y = r.run.source_cells(G.grid) if r.run.sources else None
        report = decompose(G, Y, r.tau, r.run.eps_values(h), r.run.eta_values(h), r.run.cr_mode)
        if G.grid.is_circle:
            report.notes.append("class count on circles can be lower than for the smooth flow; "
                                "only the intersection of classes is checked")
        r.writer.write_json(f"decompose_{r.suffix(T)}.json", report)
        if not report.passed:
            status = EXIT_CHECK_FAILED
    return status


def cmd_check(r: Run) -> int:
    status = EXIT_OK
    for T, G in r.graphs():
        report = verify_lemmas(G, r.run.samples, r.run.seed)
        r.writer.write_json(f"check_{r.suffix(T)}.json", report)
        if not report.passed:
            status = EXIT_CHECK_FAILED
    return status


def cmd_export_dot(r: Run) -> int:
    for T, G in r.graphs():
        r.writer.write_text(f"relation_{r.suffix(T)}.dot", G.to_dot())
    return EXIT_OK


COMMANDS: Dict[str, Callable[[Run], int]] = {
    "build": cmd_build,
    "cr": cmd_cr,
    "scr": cmd_scr,
    "cost": cmd_cost,
    "omega-bar": cmd_omega_bar,
    "omega-limit": cmd_omega_limit,
    "attractors": cmd_attractors,
    "stable": cmd_stable,
    "decompose": cmd_decompose,
    "check": cmd_check,
    "export-dot": cmd_export_dot,
}


def schema_text() -> str:
    schemas = {name: model.model_json_schema(by_alias=True) for name, model in REPORT_MODELS.items()}
    return to_json_text(schemas)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scr-decomp",
                                     description="Chain recurrence and strong chain recurrence of 1-D flows")
    parser.add_argument("--log-level", help="Override LOG_LEVEL")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("config", help="Run configuration file")
        p.add_argument("-o", "--output", help="Output directory (overrides [output] dir)")
    p = sub.add_parser("schema", help="Print the JSON schema of every report")
    p.add_argument("-o", "--output", help="Write schema.json into this directory instead of stdout")
    sub.add_parser("systems", help="List builtin systems")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_INPUT_ERROR if e.code else EXIT_OK

    if args.log_level:
        config.LOG_LEVEL = args.log_level
    config.validate()

    if args.command == "systems":
        print("\n".join(system_registry.names()))
        return EXIT_OK
    if args.command == "schema":
        if args.output:
            ReportWriter(args.output).write_text("schema.json", schema_text())
        else:
            print(schema_text(), end="")
        return EXIT_OK

    try:
        run = load_run_config(args.config)
        output_dir = args.output or config.SCR_OUTPUT_DIR or run.output_dir
        r = Run(run, output_dir)
        logger.info(f"{args.command}: {r.system.system_id} n={run.n} T={run.T} -> {output_dir}")
        return COMMANDS[args.command](r)
    except (ChainRecurrenceError, ValidationError) as e:
        logger.error(f"Input error: {e}")
        return EXIT_INPUT_ERROR
    except RuntimeError as e:
        logger.error(f"Run failed: {e}")
        return EXIT_CHECK_FAILED


if __name__ == "__main__":
    sys.exit(main())
