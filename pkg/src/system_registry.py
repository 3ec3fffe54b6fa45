from typing import Callable, Dict, List, Optional, Sequence, Tuple
from loguru import logger

from src.errors import ConfigError
from src.models import Domain, SystemSpec

Interval = Tuple[float, float]


def cantor_stage(kind: str, depth: int) -> List[Interval]:
    """Closed intervals of the depth-m construction stage on [0, 1].

    standard: middle thirds, 2^m intervals of total length (2/3)^m.
    fat: Smith-Volterra-Cantor, step k removes a centred open interval of
    length 4^-k from each piece; total length 1/2 + 2^-(m+1).
    """
    if depth < 1:
        raise ConfigError(f"cantor depth must be >= 1, got {depth}", "system.depth")
    if kind not in ("standard", "fat"):
        raise ConfigError(f"unknown cantor kind '{kind}'", "system.kind")
    pieces: List[Interval] = [(0.0, 1.0)]
    for k in range(1, depth + 1):
        refined = []
        for left, right in pieces:
            if kind == "standard":
                third = (right - left) / 3.0
                refined.append((left, left + third))
                refined.append((right - third, right))
            else:
                centre = (left + right) / 2.0
                half_gap = 0.5 * 4.0 ** (-k)
                refined.append((left, centre - half_gap))
                refined.append((centre + half_gap, right))
        pieces = refined
    return pieces


def lebesgue_measure(intervals: Sequence[Interval]) -> float:
    return float(sum(right - left for left, right in intervals))


def parse_interval_list(raw: str, location: str = "system.fixed") -> List[Interval]:
    """Parse 'a:b, c:d, e' (a bare number is a single fixed point)."""
    intervals: List[Interval] = []
    for item in raw.replace(";", ",").split(","):
        item = item.strip()
        if not item:
            continue
        parts = item.split(":")
        try:
            if len(parts) == 1:
                left = right = float(parts[0])
            elif len(parts) == 2:
                left, right = float(parts[0]), float(parts[1])
            else:
                raise ValueError(item)
        except ValueError:
            raise ConfigError(f"cannot parse interval '{item}'", location)
        if right < left:
            raise ConfigError(f"interval '{item}' has right < left", location)
        intervals.append((left, right))
    return sorted(intervals)


class SystemRegistry:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super(SystemRegistry, cls).__new__(cls)
            cls._instance._builders = {
                "trivial": cls._trivial,
                "linear_sink": cls._linear_sink,
                "figure1": cls._figure1,
                "circle_arc": cls._circle_arc,
                "cantor": cls._cantor,
                "fixed_set_field": cls._fixed_set_field,
            }
        return cls._instance

    def names(self) -> List[str]:
        return list(self._builders)

    def build(self, name: str, params: Optional[Dict[str, str]] = None) -> SystemSpec:
        builder: Optional[Callable] = self._builders.get(name)
        if builder is None:
            raise ConfigError(f"unknown builtin system '{name}' (known: {', '.join(self.names())})", "system.name")
        sys = builder(dict(params or {}))
        logger.debug(f"Built system {sys.system_id} on {sys.domain.kind} [{sys.domain.lower}, {sys.domain.upper}]")
        return sys

    @staticmethod
    def _trivial(params: Dict[str, str]) -> SystemSpec:
        return SystemSpec(name="trivial", domain=Domain.interval(0.0, 1.0), field="zero")

    @staticmethod
    def _linear_sink(params: Dict[str, str]) -> SystemSpec:
        return SystemSpec(name="linear_sink", domain=Domain.interval(-1.0, 1.0), field="linear")

    @staticmethod
    def _figure1(params: Dict[str, str]) -> SystemSpec:
        return SystemSpec(
            name="figure1",
            domain=Domain.interval(0.0, 5.0),
            field="distance",
            fixed=((0.0, 0.0), (2.0, 3.5), (5.0, 5.0)),
        )

    @staticmethod
    def _circle_arc(params: Dict[str, str]) -> SystemSpec:
        return SystemSpec(name="circle_arc", domain=Domain.circle(1.0), field="distance", fixed=((0.0, 0.25),))

    @staticmethod
    def _cantor(params: Dict[str, str]) -> SystemSpec:
        kind = params.get("kind", "standard")
        try:
            depth = int(params.get("depth", "4"))
        except ValueError:
            raise ConfigError(f"depth '{params.get('depth')}' is not an integer", "system.depth")
        pieces = cantor_stage(kind, depth)
        return SystemSpec(
            name="cantor",
            domain=Domain.interval(0.0, 1.0),
            field="distance",
            fixed=tuple(pieces),
            params={"kind": kind, "depth": str(depth)},
        )

    @staticmethod
    def _fixed_set_field(params: Dict[str, str]) -> SystemSpec:
        if "domain" not in params:
            raise ConfigError("fixed_set_field needs 'domain = a, b'", "system.domain")
        bounds = [b.strip() for b in params["domain"].split(",") if b.strip()]
        if len(bounds) != 2:
            raise ConfigError(f"domain '{params['domain']}' must be 'a, b'", "system.domain")
        try:
            a, b = float(bounds[0]), float(bounds[1])
        except ValueError:
            raise ConfigError(f"domain '{params['domain']}' is not numeric", "system.domain")
        domain = Domain.interval(a, b)
        fixed = parse_interval_list(params.get("fixed", ""))
        for left, right in fixed:
            if left < a or right > b:
                raise ConfigError(f"fixed interval [{left}, {right}] leaves the domain", "system.fixed")
        for (l1, r1), (l2, r2) in zip(fixed, fixed[1:]):
            if l2 <= r1:
                raise ConfigError(f"fixed intervals [{l1}, {r1}] and [{l2}, {r2}] overlap", "system.fixed")
        return SystemSpec(
            name="fixed_set_field",
            domain=domain,
            field="distance",
            fixed=tuple(fixed),
            params={"domain": f"{a},{b}", "fixed": params.get("fixed", "").replace(" ", "")},
        )


# Global instance
system_registry = SystemRegistry()
