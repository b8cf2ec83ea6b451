#!/usr/bin/env python3
"""
pectl - Nonlinearity Registry
-----------
Globally Lipschitz scalar maps with f(0) = 0, lifted node-wise to fields.
Each carries its Lipschitz certificate ``gain`` so the gain conditions in
``analysis`` can use exact constants.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, Sequence, Tuple, Union

import numpy as np

from .errors import CertificateError, InvalidParameterError
from .grid import Field

logger = logging.getLogger(__name__)

AUDIT_RELATIVE_SLACK = 1e-9
AUDIT_SAMPLES = 100_000
AUDIT_RANGE = 100.0


class NonlinearityKind(Enum):
    """Supported scalar nonlinearities."""
    ZERO = "zero"
    SCALED_TANH = "scaled_tanh"
    SCALED_SIN = "scaled_sin"
    SATURATION = "saturation"
    CUSTOM_TABLE = "custom_table"


@dataclass(frozen=True)
class Nonlinearity:
    """Scalar map s -> f(s) with |f(a) - f(b)| <= gain |a - b| and f(0) = 0.

    ``parameters`` is only used by CUSTOM_TABLE: flattened breakpoints
    (x1, y1, x2, y2, ...), interpolated linearly through the origin and held
    constant beyond the outermost breakpoints.
    """
    kind: NonlinearityKind = NonlinearityKind.ZERO
    gain: float = 0.0
    parameters: Tuple[float, ...] = ()

    def __post_init__(self):
        if not np.isfinite(self.gain):
            raise InvalidParameterError("nonlinearity gain must be finite")
        if self.kind is NonlinearityKind.CUSTOM_TABLE:
            xs, ys = self.table()
            slopes = np.abs(np.diff(ys) / np.diff(xs))
            certificate = float(slopes.max()) if slopes.size else 0.0
            if self.gain < certificate * (1.0 - AUDIT_RELATIVE_SLACK):
                raise InvalidParameterError(
                    f"table gain {self.gain} is below its steepest segment {certificate}"
                )

    @property
    def lipschitz(self) -> float:
        """Certified Lipschitz constant (M_i)."""
        return abs(self.gain)

    @property
    def is_zero(self) -> bool:
        return self.kind is NonlinearityKind.ZERO or self.gain == 0.0

    def table(self) -> Tuple[np.ndarray, np.ndarray]:
        """Sorted breakpoints of a CUSTOM_TABLE, origin included."""
        return _breakpoints(self.parameters)

    def __call__(self, s: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return evaluate(self, s)

    def describe(self) -> str:
        """Scenario-file spelling of this nonlinearity."""
        if self.kind is NonlinearityKind.ZERO:
            return "zero"
        if self.kind is NonlinearityKind.CUSTOM_TABLE:
            pairs = np.asarray(self.parameters).reshape(-1, 2)
            return "table(" + ", ".join(f"{float(x)!r}:{float(y)!r}" for x, y in pairs) + ")"
        return f"{_SPELLING[self.kind]}({self.gain!r})"


ZERO = Nonlinearity()


def scaled_tanh(gain: float) -> Nonlinearity:
    return Nonlinearity(NonlinearityKind.SCALED_TANH, float(gain))


def scaled_sin(gain: float) -> Nonlinearity:
    return Nonlinearity(NonlinearityKind.SCALED_SIN, float(gain))


def saturation(gain: float = 1.0) -> Nonlinearity:
    return Nonlinearity(NonlinearityKind.SATURATION, float(gain))


def custom_table(points: Sequence[Tuple[float, float]]) -> Nonlinearity:
    """Piecewise-linear map through the origin; gain is its steepest segment."""
    flat = tuple(float(v) for pt in points for v in pt)
    xs, ys = _breakpoints(flat)
    slopes = np.abs(np.diff(ys) / np.diff(xs))
    return Nonlinearity(NonlinearityKind.CUSTOM_TABLE, float(slopes.max()), flat)


def _breakpoints(parameters: Sequence[float]) -> Tuple[np.ndarray, np.ndarray]:
    pts = np.asarray(parameters, dtype=float)
    if pts.size < 2 or pts.size % 2:
        raise InvalidParameterError("table needs an even number of values, at least one point")
    pairs = pts.reshape(-1, 2)
    at_origin = pairs[:, 0] == 0.0
    if np.any(pairs[at_origin, 1] != 0.0):
        raise InvalidParameterError("table must pass through the origin")
    pairs = np.vstack([pairs[~at_origin], [0.0, 0.0]])
    pairs = pairs[np.argsort(pairs[:, 0])]
    xs, ys = pairs[:, 0], pairs[:, 1]
    if np.any(np.diff(xs) <= 0.0):
        raise InvalidParameterError("table breakpoints must be distinct")
    return xs, ys


# Scenario-file names -> constructors taking the numeric arguments.
REGISTRY: Dict[str, Callable[..., Nonlinearity]] = {
    "zero": lambda: ZERO,
    "tanh": scaled_tanh,
    "sin": scaled_sin,
    "sat": saturation,
}

_SPELLING = {
    NonlinearityKind.SCALED_TANH: "tanh",
    NonlinearityKind.SCALED_SIN: "sin",
    NonlinearityKind.SATURATION: "sat",
}


def evaluate(f: Nonlinearity, s: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Pointwise action; scalars in, scalars out."""
    arr = np.asarray(s, dtype=float)
    if f.kind is NonlinearityKind.ZERO:
        out = np.zeros_like(arr)
    elif f.kind is NonlinearityKind.SCALED_TANH:
        out = f.gain * np.tanh(arr)
    elif f.kind is NonlinearityKind.SCALED_SIN:
        out = f.gain * np.sin(arr)
    elif f.kind is NonlinearityKind.SATURATION:
        out = f.gain * np.clip(arr, -1.0, 1.0)
    else:
        xs, ys = f.table()
        out = np.interp(arr, xs, ys)
    if out.ndim == 0:
        return float(out)
    return out


def apply_field(f: Nonlinearity, u: Field) -> Field:
    """Node-wise lift of ``evaluate``."""
    if f.kind is NonlinearityKind.ZERO:
        return u.grid.zeros()
    return Field(u.grid, evaluate(f, u.values))


def lipschitz_audit(
    f: Nonlinearity,
    samples: int = AUDIT_SAMPLES,
    range: float = AUDIT_RANGE,
    seed: int = 0,
    strict: bool = True,
) -> float:
    """Largest |f(a) - f(b)| / |a - b| over random pairs in [-range, range].

    Raises CertificateError when the ratio beats the declared gain and
    ``strict`` is set.
    """
    if samples < 2:
        raise InvalidParameterError("lipschitz_audit needs at least 2 samples")
    rng = np.random.default_rng(seed)
    a = rng.uniform(-range, range, samples)
    b = rng.uniform(-range, range, samples)
    keep = a != b
    a, b = a[keep], b[keep]
    ratio = np.abs(evaluate(f, a) - evaluate(f, b)) / np.abs(a - b)
    observed = float(ratio.max()) if ratio.size else 0.0
    logger.debug(f"Lipschitz audit {f.describe()}: observed {observed:.6g}, declared {f.lipschitz:.6g}")
    if observed > f.lipschitz * (1.0 + AUDIT_RELATIVE_SLACK):
        if strict:
            raise CertificateError(f.describe(), observed, f.lipschitz)
        logger.warning(f"Lipschitz certificate violated for {f.describe()}")
    return observed
