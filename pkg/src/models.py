import math
from typing import Dict, List, Literal, Optional, Tuple
from pydantic import BaseModel, ConfigDict, Field, RootModel, field_validator, model_validator

from src.errors import InvalidDomainError


class Domain(BaseModel):
    """Compact 1-D domain: the interval [lower, upper] or the circle R/(upper Z)."""
    model_config = ConfigDict(frozen=True)

    kind: Literal["interval", "circle"]
    lower: float = 0.0
    upper: float = 1.0

    @model_validator(mode="after")
    def check_extent(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError("domain endpoints must be finite")
        if self.upper - self.lower <= 0:
            raise ValueError("domain must have positive length")
        if self.kind == "circle" and self.lower != 0.0:
            raise ValueError("circle domains start at 0")
        return self

    @classmethod
    def interval(cls, a: float, b: float) -> "Domain":
        if not (math.isfinite(a) and math.isfinite(b)):
            raise InvalidDomainError(f"non-finite interval endpoints ({a}, {b})")
        if b - a <= 0:
            raise InvalidDomainError(f"interval needs a < b, got ({a}, {b})")
        return cls(kind="interval", lower=a, upper=b)

    @classmethod
    def circle(cls, circumference: float) -> "Domain":
        if not math.isfinite(circumference) or circumference <= 0:
            raise InvalidDomainError(f"circle circumference must be positive, got {circumference}")
        return cls(kind="circle", lower=0.0, upper=circumference)

    @property
    def length(self) -> float:
        return self.upper - self.lower

    @property
    def is_circle(self) -> bool:
        return self.kind == "circle"


class IntegratorConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dt: float = Field(default=0.01, gt=0)
    pad: float = Field(default=0.0, ge=0)


class SystemSpec(BaseModel):
    """A flow on a compact 1-D domain.

    field:
      - "zero": V = 0 everywhere
      - "linear": V(x) = -x
      - "distance": V(x) = direction * d(x, fixed), fixed being closed intervals
    """
    model_config = ConfigDict(frozen=True)

    name: str
    domain: Domain
    field: Literal["zero", "linear", "distance"]
    fixed: Tuple[Tuple[float, float], ...] = ()
    direction: int = 1
    params: Dict[str, str] = Field(default_factory=dict)

    @field_validator("fixed")
    @classmethod
    def check_fixed(cls, v):
        previous = None
        for left, right in v:
            if not (math.isfinite(left) and math.isfinite(right)) or right < left:
                raise ValueError(f"fixed interval [{left}, {right}] is malformed")
            if previous is not None and left <= previous:
                raise ValueError("fixed intervals must be sorted and disjoint")
            previous = right
        return v

    @field_validator("direction")
    @classmethod
    def check_direction(cls, v):
        if v not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        return v

    @property
    def system_id(self) -> str:
        if not self.params:
            return self.name
        args = ",".join(f"{k}={self.params[k]}" for k in sorted(self.params))
        return f"{self.name}({args})"


# Graph dump ------------------------------------------------------------------

class CostLayerDump(BaseModel):
    indptr: List[int]
    indices: List[int]
    weights: List[float]


class RelationLayerDump(BaseModel):
    indptr: List[int]
    indices: List[int]


class GraphHeader(BaseModel):
    system: SystemSpec
    system_id: str
    n: int
    T: float
    c_max: float
    integrator: IntegratorConfig
    reversed: bool = False


class GraphDump(BaseModel):
    """Both layers of a chain graph as CSR arrays over cell indices."""
    format: str
    version: int
    header: GraphHeader
    cost: CostLayerDump
    relation: RelationLayerDump


# Reports ---------------------------------------------------------------------

class PropertyCheck(BaseModel):
    name: str
    anchor: str
    passed: bool
    violation: float
    tolerance: float
    samples: int
    skipped: int = 0


class PropertyReport(BaseModel):
    system: str
    n: int
    T: float
    checks: List[PropertyCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> PropertyCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


class GridInfo(BaseModel):
    kind: Literal["interval", "circle"]
    lower: float
    upper: float
    n: int
    h: float


class CandidateRecord(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    B: List[int]
    B_bullet: List[int]
    class_set: List[int] = Field(alias="class")
    source: Optional[int] = None
    eps: Optional[float] = None


class SetComparison(BaseModel):
    """Two independently computed cell sets and their collar-tolerant agreement."""
    left: List[int]
    right: List[int]
    symmetric_difference: List[int]
    collar_violations: List[int]
    collar: int
    passed: bool


class Theorem1Result(BaseModel):
    source: List[int]
    omega_of_source: List[int]
    comparison: SetComparison
    containing_candidates: int


class AttractorRecord(BaseModel):
    A: List[int]
    A_star: List[int]
    repeller_confirmed: bool


class ConleyResult(BaseModel):
    attractors: List[AttractorRecord]
    comparison: SetComparison
    dichotomy_violations: List[int]


class DecomposeReport(BaseModel):
    system: str
    grid: GridInfo
    T: float
    tau: float
    candidates: List[CandidateRecord]
    scr: List[int]
    cr: List[int]
    intersections: Dict[str, List[int]]
    theorem1: Optional[Theorem1Result] = None
    scr_decomposition: SetComparison
    conley: ConleyResult
    pass_flags: Dict[str, bool]
    collar_violations: Dict[str, List[int]]
    notes: List[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.pass_flags.values())


class StabilityReport(BaseModel):
    """Outcome of the attractor / strong-stability tests for one set."""
    B: List[int]
    attractor: Optional[bool] = None
    repeller: Optional[bool] = None
    stable: Optional[bool] = None
    strongly_stable: bool
    eta_grid: List[float]
    absorption_steps: List[Optional[int]]
    diagnostics: List[str] = Field(default_factory=list)


class CandidateReport(BaseModel):
    system: str
    grid: GridInfo
    T: float
    candidates: List[CandidateRecord]
    stability: List[StabilityReport]
    classes: List[List[int]]
    notes: List[str] = Field(default_factory=list)


class AttractorReport(BaseModel):
    system: str
    grid: GridInfo
    T: float
    attractors: List[AttractorRecord]


class CellSetReport(BaseModel):
    """A named cell set for one step time."""
    system: str
    grid: GridInfo
    T: float
    name: str
    cells: List[int]
    parameters: Dict[str, float] = Field(default_factory=dict)


class OmegaBarOverT(RootModel[Dict[str, List[int]]]):
    """Omega-bar cells per step time ("T=<value>") and their intersection ("all")."""
