import pytest

from src.errors import ConfigError
from src.models import IntegratorConfig
from src.run_config import Length, RunConfig, load_run_config, parse_length, parse_run_config

FULL = """
[system]
name = cantor
kind = fat
depth = 3

[grid]
n = 400

[run]
T = 1, 2.5          ; two step times
c_max = 4h
tau = 0.01
eps_grid = h, 2h, 0.1
eta_grid = 2h, 4h
cr_mode = relation

[integrator]
dt = 0.005
pad = 0

[output]
dir = results

[query]
sources = 0.101, 0.751
set = 0.2:0.3, 0.901
samples = 50
seed = 4
"""


def test_parse_full_config():
    run = parse_run_config(FULL)
    assert run.system_name == "cantor"
    assert run.system_params == {"kind": "fat", "depth": "3"}
    assert run.n == 400
    assert run.T == [1.0, 2.5]
    assert run.c_max == Length(value=4, in_cells=True)
    assert run.tau == Length(value=0.01)
    assert run.eps_values(0.5) == [0.5, 1.0, 0.1]
    assert run.eta_values(0.5) == [1.0, 2.0]
    assert run.cr_mode == "relation"
    assert run.integrator == IntegratorConfig(dt=0.005, pad=0.0)
    assert run.output_dir == "results"
    assert run.sources == [0.101, 0.751]
    assert run.set_intervals == [(0.2, 0.3), (0.901, 0.901)]
    assert run.samples == 50
    assert run.seed == 4


def test_defaults():
    run = parse_run_config("[system]\nname = figure1\n[grid]\nn = 100\n")
    assert run.T == [2.0]
    assert run.c_max.resolve(0.05) == pytest.approx(0.15)
    assert run.tau.resolve(0.05) == pytest.approx(0.1)
    assert run.eps_values(0.05) is None
    assert run.eta_values(0.05) is None
    assert run.cr_mode == "chain"
    assert run.output_dir == "out"
    assert run.samples == 1000


def test_builds_system_grid_and_cells():
    run = parse_run_config(FULL)
    sys = run.build_system()
    grid = run.build_grid(sys)
    assert sys.system_id == "cantor(depth=3,kind=fat)"
    assert grid.n == 400
    assert run.source_cells(grid).to_list() == [40, 300]
    assert 360 in run.set_cells(grid)


def test_missing_query_values():
    run = parse_run_config("[system]\nname = trivial\n[grid]\nn = 10\n")
    grid = run.build_grid(run.build_system())
    with pytest.raises(ConfigError) as exc:
        run.source_cells(grid)
    assert exc.value.location == "query.sources"
    with pytest.raises(ConfigError) as exc:
        run.set_cells(grid)
    assert exc.value.location == "query.set"


@pytest.mark.parametrize("text, location", [
    ("[grid]\nn = 10\n", "system.name"),
    ("[system]\nname = trivial\n", "grid.n"),
    ("[system]\nname = trivial\n[grid]\nn = ten\n", "grid.n"),
    ("[system]\nname = trivial\n[grid]\nn = 1\n", "grid.n"),
    ("[system]\nname = trivial\n[grid]\nn = 10\n[run]\nT = 0\n", "run.T"),
    ("[system]\nname = trivial\n[grid]\nn = 10\n[run]\nc_max = -2h\n", "run.c_max"),
    ("[system]\nname = trivial\n[grid]\nn = 10\n[run]\ncr_mode = fast\n", "run.cr_mode"),
    ("[system]\nname = trivial\n[grid]\nn = 10\n[run]\nspeed = 3\n", "run.speed"),
    ("[system]\nname = trivial\n[grid]\nn = 10\n[integrator]\ndt = -1\n", "integrator.dt"),
    ("[system]\nname = trivial\n[grid]\nn = 10\n[query]\nset = 3:1\n", "query.set"),
    ("[system]\nname = trivial\n[grid]\nn = 10\n[plot]\nwidth = 3\n", "plot"),
])
def test_config_errors_name_their_location(text, location):
    with pytest.raises(ConfigError) as exc:
        parse_run_config(text)
    assert exc.value.location == location


def test_syntax_error_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_run_config("[system]\nname = trivial\nthis line is not a key\n")
    assert exc.value.location == "line 3"


def test_missing_section_header_reports_line():
    with pytest.raises(ConfigError) as exc:
        parse_run_config("name = trivial\n[grid]\nn = 10\n")
    assert exc.value.location == "line 1"


def test_parse_length():
    assert parse_length("3h", "x").resolve(0.1) == pytest.approx(0.3)
    assert parse_length(" h ", "x") == Length(value=1, in_cells=True)
    assert parse_length("0.25", "x").resolve(0.1) == 0.25
    assert str(parse_length("2h", "x")) == "2h"
    with pytest.raises(ConfigError):
        parse_length("fast", "run.tau")


def test_load_run_config(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[system]\nname = linear_sink\n[grid]\nn = 20\n", encoding="utf-8")
    assert load_run_config(str(path)) == RunConfig(system_name="linear_sink", n=20)
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "missing.ini"))
