"""
Vector fields on 1-D domains and their numerical time-T maps.

Integration is classical RK4 with a fixed step, vectorized over many starting
points at once. A point where the field vanishes exactly never moves: all four
stages are then zero, so fixed points map to themselves bit for bit.
"""
import math
from typing import Tuple

import numpy as np
from loguru import logger

from src.errors import IntegrationError, OutOfDomainError
from src.models import IntegratorConfig, SystemSpec


def _fixed_arrays(sys: SystemSpec) -> Tuple[np.ndarray, np.ndarray]:
    lefts = np.array([iv[0] for iv in sys.fixed], dtype=float)
    rights = np.array([iv[1] for iv in sys.fixed], dtype=float)
    if sys.domain.is_circle and lefts.size:
        L = sys.domain.upper
        lefts = np.concatenate([lefts - L, lefts, lefts + L])
        rights = np.concatenate([rights - L, rights, rights + L])
    return lefts, rights


def distance_to_fixed(sys: SystemSpec, xs: np.ndarray) -> np.ndarray:
    """d(x, S) for the declared fixed intervals S; +inf everywhere when S is empty."""
    lefts, rights = _fixed_arrays(sys)
    xs = np.asarray(xs, dtype=float)
    if lefts.size == 0:
        return np.full(xs.shape, np.inf)
    if sys.domain.is_circle:
        xs = np.mod(xs, sys.domain.upper)
    k = np.searchsorted(lefts, xs, side="right") - 1
    below = np.where(k >= 0, xs - rights[np.clip(k, 0, None)], np.inf)
    above = np.where(k + 1 < lefts.size, lefts[np.clip(k + 1, None, lefts.size - 1)] - xs, np.inf)
    return np.minimum(np.maximum(below, 0.0), above)


def field_values(sys: SystemSpec, xs: np.ndarray) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if sys.field == "zero":
        return np.zeros(xs.shape)
    if sys.field == "linear":
        return -xs
    return sys.direction * distance_to_fixed(sys, xs)


def _check_points(sys: SystemSpec, xs: np.ndarray):
    if not np.all(np.isfinite(xs)):
        raise OutOfDomainError("non-finite point")
    if not sys.domain.is_circle and (np.any(xs < sys.domain.lower) or np.any(xs > sys.domain.upper)):
        raise OutOfDomainError(f"point outside [{sys.domain.lower}, {sys.domain.upper}] for {sys.system_id}")


def field_value(sys: SystemSpec, x: float) -> float:
    xs = np.asarray([x], dtype=float)
    _check_points(sys, xs)
    return float(field_values(sys, xs)[0])


def flow_points(sys: SystemSpec, xs: np.ndarray, T: float, cfg: IntegratorConfig) -> np.ndarray:
    """phi_T applied to every point of xs. Circle results stay in lifted coordinates."""
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    x = np.array(xs, dtype=float, copy=True)
    if sys.field == "zero":
        return x
    lo, hi = sys.domain.lower, sys.domain.upper
    circle = sys.domain.is_circle

    def clamp(y):
        return y if circle else np.clip(y, lo, hi)

    steps = max(1, math.ceil(T / cfg.dt - 1e-9))
    last = T - (steps - 1) * cfg.dt
    for s in range(steps):
        dt = cfg.dt if s < steps - 1 else last
        k1 = field_values(sys, x)
        k2 = field_values(sys, clamp(x + 0.5 * dt * k1))
        k3 = field_values(sys, clamp(x + 0.5 * dt * k2))
        k4 = field_values(sys, clamp(x + dt * k3))
        x = clamp(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
        if not np.all(np.isfinite(x)):
            raise IntegrationError(f"non-finite state while integrating {sys.system_id} at step {s}")
    return x


def time_t_map(sys: SystemSpec, x: float, T: float, cfg: IntegratorConfig) -> float:
    xs = np.asarray([x], dtype=float)
    _check_points(sys, xs)
    y = float(flow_points(sys, xs, T, cfg)[0])
    if sys.domain.is_circle:
        y = math.fmod(y, sys.domain.upper)
        if y < 0:
            y += sys.domain.upper
    return y


def cell_images(sys: SystemSpec, lefts: np.ndarray, rights: np.ndarray, T: float,
                cfg: IntegratorConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Enclosures [phi_T(l) - pad, phi_T(r) + pad) of many cells at once.

    1-D flows preserve order, so the endpoint images bound the image of the cell.
    On circles the result is expressed in lifted coordinates.
    """
    pts = np.concatenate([np.asarray(lefts, dtype=float), np.asarray(rights, dtype=float)])
    images = flow_points(sys, pts, T, cfg)
    m = len(lefts)
    lo = images[:m] - cfg.pad
    hi = images[m:] + cfg.pad
    if not sys.domain.is_circle:
        lo = np.clip(lo, sys.domain.lower, sys.domain.upper)
        hi = np.clip(hi, sys.domain.lower, sys.domain.upper)
    collapsed = int(np.count_nonzero(hi <= lo))
    if collapsed:
        logger.debug(f"{collapsed} cell images collapsed to zero length for {sys.system_id}")
    return lo, hi


def cell_image(sys: SystemSpec, cell: Tuple[float, float], T: float, cfg: IntegratorConfig) -> Tuple[float, float]:
    l, r = cell
    lo, hi = cell_images(sys, np.asarray([l]), np.asarray([r]), T, cfg)
    return float(lo[0]), float(hi[0])
