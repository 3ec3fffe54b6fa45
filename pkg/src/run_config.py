"""
Run configuration files.

    [system]
    name = figure1              ; builtin name, other keys are its parameters
    [grid]
    n = 2000
    [run]
    T = 2                       ; one or more step times, comma separated
    c_max = 3h                  ; lengths take an optional trailing h (cell widths)
    tau = 2h
    eps_grid = h, 2h, 4h        ; optional
    eta_grid = 2h, 4h           ; optional
    cr_mode = chain             ; chain | relation
    [integrator]
    dt = 0.01
    pad = 0
    [output]
    dir = out
    [query]
    sources = 0.1               ; points, mapped to their cells
    set = 2.4:3.0               ; closed intervals, mapped to the cells they meet
    samples = 1000
    seed = 0
"""
import configparser
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.errors import ConfigError
from src.models import IntegratorConfig, SystemSpec
from src.space import CellSet, Grid, build_grid
from src.system_registry import parse_interval_list, system_registry

KNOWN_KEYS = {
    "system": None,  # builtin parameters are open-ended
    "grid": {"n"},
    "run": {"t", "c_max", "tau", "eps_grid", "eta_grid", "cr_mode"},
    "integrator": {"dt", "pad"},
    "output": {"dir"},
    "query": {"sources", "set", "samples", "seed"},
}

# RunConfig field -> "section.key" for diagnostics
FIELD_LOCATIONS = {
    "system_name": "system.name",
    "system_params": "system",
    "n": "grid.n",
    "T": "run.T",
    "c_max": "run.c_max",
    "tau": "run.tau",
    "eps_grid": "run.eps_grid",
    "eta_grid": "run.eta_grid",
    "cr_mode": "run.cr_mode",
    "integrator": "integrator",
    "output_dir": "output.dir",
    "sources": "query.sources",
    "set_intervals": "query.set",
    "samples": "query.samples",
    "seed": "query.seed",
}


class Length(BaseModel):
    """A length in domain units, or in cell widths when `in_cells` is set."""
    model_config = ConfigDict(frozen=True)

    value: float = Field(ge=0)
    in_cells: bool = False

    def resolve(self, h: float) -> float:
        return self.value * h if self.in_cells else self.value

    def __str__(self) -> str:
        return f"{self.value:g}h" if self.in_cells else f"{self.value:g}"


def parse_length(raw: str, location: str) -> Length:
    text = raw.strip().lower()
    in_cells = text.endswith("h")
    if in_cells:
        text = text[:-1].strip() or "1"
    try:
        value = float(text)
    except ValueError:
        raise ConfigError(f"'{raw}' is not a length (number, optionally followed by h)", location)
    if value < 0:
        raise ConfigError(f"length '{raw}' must be nonnegative", location)
    return Length(value=value, in_cells=in_cells)


def _split(raw: str) -> List[str]:
    return [item.strip() for item in raw.replace(";", ",").split(",") if item.strip()]


class RunConfig(BaseModel):
    system_name: str
    system_params: Dict[str, str] = Field(default_factory=dict)
    n: int = Field(ge=2)
    T: List[float] = Field(default_factory=lambda: [2.0], min_length=1)
    c_max: Length = Length(value=3, in_cells=True)
    tau: Length = Length(value=2, in_cells=True)
    eps_grid: Optional[List[Length]] = None
    eta_grid: Optional[List[Length]] = None
    cr_mode: Literal["chain", "relation"] = "chain"
    integrator: IntegratorConfig = Field(default_factory=IntegratorConfig)
    output_dir: str = "out"
    sources: List[float] = Field(default_factory=list)
    set_intervals: List[Tuple[float, float]] = Field(default_factory=list)
    samples: int = Field(default=1000, ge=1)
    seed: int = 0

    @field_validator("T")
    @classmethod
    def check_T(cls, v):
        for t in v:
            if not t > 0:
                raise ValueError(f"step time {t} must be positive")
        return v

    def build_system(self) -> SystemSpec:
        return system_registry.build(self.system_name, self.system_params)

    def build_grid(self, sys: SystemSpec) -> Grid:
        return build_grid(sys.domain, self.n)

    def eps_values(self, h: float) -> Optional[List[float]]:
        return None if self.eps_grid is None else [e.resolve(h) for e in self.eps_grid]

    def eta_values(self, h: float) -> Optional[List[float]]:
        return None if self.eta_grid is None else [e.resolve(h) for e in self.eta_grid]

    def source_cells(self, grid: Grid) -> CellSet:
        if not self.sources:
            raise ConfigError("this command needs at least one source point", "query.sources")
        return grid.cells_at(self.sources)

    def set_cells(self, grid: Grid) -> CellSet:
        if not self.set_intervals:
            raise ConfigError("this command needs a cell set", "query.set")
        out = grid.empty()
        for lo, hi in self.set_intervals:
            out = out | grid.cells_meeting(lo, hi)
        return out


def _parser_error(e: configparser.Error) -> ConfigError:
    lineno = getattr(e, "lineno", None)
    # MissingSectionHeaderError is a ParsingError without an errors list
    errors = getattr(e, "errors", None)
    if errors:
        lineno, line = errors[0]
        return ConfigError(f"cannot parse {line!r}", f"line {lineno}")
    message = getattr(e, "message", str(e)).splitlines()[0]
    return ConfigError(message, f"line {lineno}" if lineno else "")


def _number(raw: str, location: str, kind=float):
    try:
        return kind(raw.strip())
    except ValueError:
        raise ConfigError(f"'{raw}' is not a valid {kind.__name__}", location)


def parse_run_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as e:
        raise _parser_error(e)

    for section in parser.sections():
        if section not in KNOWN_KEYS:
            raise ConfigError(f"unknown section [{section}]", section)
        allowed = KNOWN_KEYS[section]
        if allowed is not None:
            for key in parser[section]:
                if key not in allowed:
                    raise ConfigError("unknown key", f"{section}.{key}")

    if not parser.has_option("system", "name"):
        raise ConfigError("missing builtin system name", "system.name")
    if not parser.has_option("grid", "n"):
        raise ConfigError("missing cell count", "grid.n")

    fields: Dict[str, object] = {
        "system_name": parser["system"]["name"].strip(),
        "system_params": {k: v.strip() for k, v in parser["system"].items() if k != "name"},
        "n": _number(parser["grid"]["n"], "grid.n", int),
    }
    if parser.has_section("run"):
        run = parser["run"]
        if "t" in run:
            fields["T"] = [_number(t, "run.T") for t in _split(run["t"])]
        if "c_max" in run:
            fields["c_max"] = parse_length(run["c_max"], "run.c_max")
        if "tau" in run:
            fields["tau"] = parse_length(run["tau"], "run.tau")
        if "eps_grid" in run:
            fields["eps_grid"] = [parse_length(e, "run.eps_grid") for e in _split(run["eps_grid"])]
        if "eta_grid" in run:
            fields["eta_grid"] = [parse_length(e, "run.eta_grid") for e in _split(run["eta_grid"])]
        if "cr_mode" in run:
            fields["cr_mode"] = run["cr_mode"].strip()
    if parser.has_section("integrator"):
        integ = parser["integrator"]
        fields["integrator"] = {k: _number(v, f"integrator.{k}") for k, v in integ.items()}
    if parser.has_option("output", "dir"):
        fields["output_dir"] = parser["output"]["dir"].strip()
    if parser.has_section("query"):
        query = parser["query"]
        if "sources" in query:
            fields["sources"] = [_number(p, "query.sources") for p in _split(query["sources"])]
        if "set" in query:
            fields["set_intervals"] = parse_interval_list(query["set"], "query.set")
        if "samples" in query:
            fields["samples"] = _number(query["samples"], "query.samples", int)
        if "seed" in query:
            fields["seed"] = _number(query["seed"], "query.seed", int)

    try:
        return RunConfig(**fields)
    except ValidationError as e:
        err = e.errors()[0]
        loc = err["loc"]
        location = FIELD_LOCATIONS.get(str(loc[0]), str(loc[0])) if loc else ""
        if loc and loc[0] == "integrator" and len(loc) > 1:
            location = f"integrator.{loc[1]}"
        raise ConfigError(err["msg"], location)


def load_run_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", path)
    return parse_run_config(text)
