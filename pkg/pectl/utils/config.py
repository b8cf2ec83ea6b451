#!/usr/bin/env python3
"""
pectl - Configuration Module
-----------
Loading, validating and saving scenario files.

A scenario is a flat ``key = value`` file. ``#`` starts a comment, blank
lines are ignored, keys are case-insensitive. Missing keys take their
value from DEFAULT_SCENARIO.
"""
import logging
import math
import re
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from ..core.errors import (
    ConfigError,
    ConfigInvariantError,
    InvalidParameterError,
    MalformedValueError,
    ResonanceError,
    UnknownKeyError,
)
from ..core.grid import Field, Grid
from ..core.kernel import KernelConfig
from ..core.nonlin import REGISTRY, Nonlinearity, custom_table
from ..core.pde import SystemParams

logger = logging.getLogger(__name__)

# Default scenario, in file spelling.
DEFAULT_SCENARIO: Dict[str, str] = {
    "rho": "0",
    "alpha": "0",
    "beta": "0",
    "gamma": "1",
    "c1": "2",
    "grid_n": "201",
    "dt": "1e-4",
    "t": "5",
    "mode": "open_loop",
    "f1": "zero",
    "f2": "zero",
    "f3": "zero",
    "u0": "constant(1)",
    "observer_u0": "constant(0)",
    "out": "trajectory.csv",
    "seed": "0",
    "noise_std": "0",
    "workers": "4",
    "snapshot_every": "100",
    "fit_start": "",
    "fit_end": "",
}

MIN_GRID_POINTS = 51
MAX_DT = 0.01
# Scenario values are typed to a few decimals, so resonance is rejected in a
# wider band than SystemParams uses.
CONFIG_RESONANCE_BAND = 1e-4

NUMERIC_KEYS = ("rho", "alpha", "beta", "gamma", "c1", "dt", "t", "noise_std")
INTEGER_KEYS = ("grid_n", "seed", "workers", "snapshot_every")

_CALL = re.compile(r"^([A-Za-z_]\w*)\s*(?:\((.*)\))?$")


class ScenarioMode(Enum):
    OPEN_LOOP = "open_loop"
    STATE_FEEDBACK = "state_feedback"
    OBSERVER_ONLY = "observer_only"
    OUTPUT_FEEDBACK = "output_feedback"
    TARGET_SYSTEM = "target_system"

    @property
    def needs_kernel(self) -> bool:
        return self is not ScenarioMode.OPEN_LOOP

    @property
    def has_observer(self) -> bool:
        return self in (ScenarioMode.OBSERVER_ONLY, ScenarioMode.OUTPUT_FEEDBACK)


@dataclass(frozen=True)
class InitialCondition:
    """Initial-profile recipe: constant, cosine_mode, gaussian_bump or from_csv."""
    kind: str
    args: Tuple[float, ...] = ()
    path: Optional[Path] = None

    def build(self, grid: Grid) -> Field:
        x = grid.nodes
        if self.kind == "constant":
            return grid.field(self.args[0])
        if self.kind == "cosine_mode":
            m, a = self.args
            return grid.field(a * np.cos(m * np.pi * x))
        if self.kind == "gaussian_bump":
            center, width, a = self.args
            return grid.field(a * np.exp(-0.5 * ((x - center) / width) ** 2))
        data = _read_profile(self.path)
        return grid.field(np.interp(x, data[:, 0], data[:, 1]))

    def describe(self) -> str:
        if self.kind == "from_csv":
            return f"from_csv({self.path})"
        if self.kind == "cosine_mode":
            return f"cosine_mode({int(self.args[0])}, {self.args[1]!r})"
        return f"{self.kind}(" + ", ".join(repr(a) for a in self.args) + ")"


def _read_profile(path: Path) -> np.ndarray:
    try:
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except ValueError:
        data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2, skiprows=1)
    if data.shape[1] < 2 or data.shape[0] < 2:
        raise InvalidParameterError(f"{path}: need at least two rows of x,u")
    order = np.argsort(data[:, 0])
    return data[order]


@dataclass(frozen=True)
class ScenarioConfig:
    params: SystemParams
    c1: float = 2.0
    grid_n: int = 201
    dt: float = 1e-4
    T: float = 5.0
    mode: ScenarioMode = ScenarioMode.OPEN_LOOP
    u0: InitialCondition = InitialCondition("constant", (1.0,))
    observer_u0: InitialCondition = InitialCondition("constant", (0.0,))
    out: Path = Path("trajectory.csv")
    seed: int = 0
    noise_std: float = 0.0
    workers: int = 4
    snapshot_every: int = 100
    fit_window: Optional[Tuple[float, float]] = None

    @property
    def grid(self) -> Grid:
        return Grid(self.grid_n)

    @property
    def kernel_config(self) -> KernelConfig:
        return KernelConfig(c1=self.c1)

    def with_value(self, key: str, value: float) -> "ScenarioConfig":
        """Copy with one numeric key changed (sweep helper); re-validated."""
        key = key.lower()
        spelled = int(value) if key in INTEGER_KEYS else float(value)
        return parse_config(f"{format_config(self)}{key} = {spelled!r}\n", allow_override=True)


def _parse_float(key: str, raw: str, line: Optional[int]) -> float:
    try:
        value = float(raw)
    except ValueError:
        raise MalformedValueError(f"{key}: expected a number, got {raw!r}", line, key) from None
    if not math.isfinite(value):
        raise ConfigInvariantError(f"{key} must be finite", line, key)
    return value


def _parse_int(key: str, raw: str, line: Optional[int]) -> int:
    try:
        return int(raw)
    except ValueError:
        raise MalformedValueError(f"{key}: expected an integer, got {raw!r}", line, key) from None


def _split_call(key: str, raw: str, line: Optional[int]) -> Tuple[str, list]:
    match = _CALL.match(raw.strip())
    if not match:
        raise MalformedValueError(f"{key}: cannot parse {raw!r}", line, key)
    name, body = match.group(1).lower(), match.group(2)
    args = [a.strip() for a in body.split(",")] if body and body.strip() else []
    return name, args


def parse_nonlinearity(key: str, raw: str, line: Optional[int] = None) -> Nonlinearity:
    """``zero``, ``tanh(g)``, ``sin(g)``, ``sat(g)`` or ``table(x1:y1, x2:y2, ...)``."""
    name, args = _split_call(key, raw, line)
    try:
        if name == "table":
            points = []
            for pair in args:
                x, _, y = pair.partition(":")
                points.append((float(x), float(y)))
            return custom_table(points)
        if name not in REGISTRY:
            raise MalformedValueError(f"{key}: unknown nonlinearity {name!r}", line, key)
        return REGISTRY[name](*[float(a) for a in args])
    except InvalidParameterError as exc:
        raise ConfigInvariantError(f"{key}: {exc}", line, key) from None
    except (TypeError, ValueError) as exc:
        raise MalformedValueError(f"{key}: {exc}", line, key) from None


def parse_initial_condition(key: str, raw: str, line: Optional[int] = None,
                            base_dir: Optional[Path] = None) -> InitialCondition:
    name, args = _split_call(key, raw, line)
    arity = {"constant": 1, "cosine_mode": 2, "gaussian_bump": 3, "from_csv": 1}
    if name not in arity:
        raise MalformedValueError(f"{key}: unknown initial condition {name!r}", line, key)
    if len(args) != arity[name]:
        raise MalformedValueError(f"{key}: {name} takes {arity[name]} argument(s)", line, key)
    if name == "from_csv":
        path = Path(args[0].strip("'\""))
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ConfigInvariantError(f"{key}: {path} does not exist", line, key)
        return InitialCondition(name, (), path)
    values = tuple(_parse_float(key, a, line) for a in args)
    if name == "cosine_mode" and (values[0] < 0 or values[0] != int(values[0])):
        raise ConfigInvariantError(f"{key}: mode index must be a nonnegative integer", line, key)
    if name == "gaussian_bump" and values[1] <= 0.0:
        raise ConfigInvariantError(f"{key}: width must be positive", line, key)
    return InitialCondition(name, values)


def _read_pairs(text: str, allow_override: bool) -> Tuple[Dict[str, str], Dict[str, int]]:
    values: Dict[str, str] = {}
    lines: Dict[str, int] = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        content = raw_line.split("#", 1)[0].strip()
        if not content:
            continue
        key, sep, value = content.partition("=")
        key = key.strip().lower()
        if not sep or not key:
            raise MalformedValueError(f"expected 'key = value', got {raw_line.strip()!r}", number)
        if key not in DEFAULT_SCENARIO:
            raise UnknownKeyError(f"unknown key {key!r}", number, key)
        if key in values and not allow_override:
            raise MalformedValueError(f"duplicate key {key!r}", number, key)
        values[key] = value.strip()
        lines[key] = number
    return values, lines


def parse_config(text: str, base_dir: Optional[Path] = None, allow_override: bool = False) -> ScenarioConfig:
    """Validated ScenarioConfig; the first problem found raises a ConfigError with its line."""
    given, lines = _read_pairs(text, allow_override)
    raw = {**DEFAULT_SCENARIO, **given}

    def line_of(key: str) -> Optional[int]:
        return lines.get(key)

    nums = {k: _parse_float(k, raw[k], line_of(k)) for k in NUMERIC_KEYS}
    ints = {k: _parse_int(k, raw[k], line_of(k)) for k in INTEGER_KEYS}
    nonlins = {k: parse_nonlinearity(k, raw[k], line_of(k)) for k in ("f1", "f2", "f3")}

    try:
        mode = ScenarioMode(raw["mode"].lower())
    except ValueError:
        raise MalformedValueError(f"mode: unknown mode {raw['mode']!r}", line_of("mode"), "mode") from None

    u0 = parse_initial_condition("u0", raw["u0"], line_of("u0"), base_dir)
    observer_u0 = parse_initial_condition("observer_u0", raw["observer_u0"], line_of("observer_u0"), base_dir)

    if ints["grid_n"] < MIN_GRID_POINTS:
        raise ConfigInvariantError(f"grid_n must be >= {MIN_GRID_POINTS}", line_of("grid_n"), "grid_n")
    if not 0.0 < nums["dt"] <= MAX_DT:
        raise ConfigInvariantError(f"dt must lie in (0, {MAX_DT}]", line_of("dt"), "dt")
    if nums["t"] <= 0.0:
        raise ConfigInvariantError("T must be positive", line_of("t"), "t")
    if nums["c1"] <= 0.0:
        raise ConfigInvariantError("c1 must be positive", line_of("c1"), "c1")
    if nums["noise_std"] < 0.0:
        raise ConfigInvariantError("noise_std must be nonnegative", line_of("noise_std"), "noise_std")
    for key in ("workers", "snapshot_every"):
        if ints[key] < 1:
            raise ConfigInvariantError(f"{key} must be >= 1", line_of(key), key)

    gamma = nums["gamma"]
    n_top = math.ceil(math.sqrt(abs(gamma)) / math.pi) + 2
    gaps = np.abs(gamma + (np.arange(n_top + 1) * np.pi) ** 2)
    if gaps.min() <= CONFIG_RESONANCE_BAND:
        raise ConfigInvariantError(
            f"gamma={gamma} violates the resonance guard (gamma = -(n pi)^2, n={int(gaps.argmin())})",
            line_of("gamma"), "gamma",
        )
    try:
        params = SystemParams(nums["rho"], nums["alpha"], nums["beta"], gamma,
                              nonlins["f1"], nonlins["f2"], nonlins["f3"])
    except (ResonanceError, InvalidParameterError) as exc:
        raise ConfigInvariantError(str(exc), line_of("gamma"), "gamma") from None

    fit_window = None
    if raw["fit_start"] or raw["fit_end"]:
        start = _parse_float("fit_start", raw["fit_start"], line_of("fit_start")) if raw["fit_start"] else 0.5 * nums["t"]
        end = _parse_float("fit_end", raw["fit_end"], line_of("fit_end")) if raw["fit_end"] else nums["t"]
        if not 0.0 <= start < end <= nums["t"]:
            key = "fit_end" if raw["fit_end"] else "fit_start"
            raise ConfigInvariantError("fit window must satisfy 0 <= fit_start < fit_end <= T", line_of(key), key)
        fit_window = (start, end)

    out = Path(raw["out"])

    return ScenarioConfig(
        params=params,
        c1=nums["c1"],
        grid_n=ints["grid_n"],
        dt=nums["dt"],
        T=nums["t"],
        mode=mode,
        u0=u0,
        observer_u0=observer_u0,
        out=out,
        seed=ints["seed"],
        noise_std=nums["noise_std"],
        workers=ints["workers"],
        snapshot_every=ints["snapshot_every"],
        fit_window=fit_window,
    )


def load_config(path: Union[str, Path]) -> ScenarioConfig:
    """Parse a scenario file; from_csv paths resolve against its directory, ``out`` against the cwd."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    cfg = parse_config(text, base_dir=path.parent)
    logger.debug(f"Loaded scenario {path} ({cfg.mode.value})")
    return cfg


def format_config(cfg: ScenarioConfig) -> str:
    """Scenario-file text that parses back to ``cfg``."""
    p = cfg.params
    lines = [
        f"rho = {p.rho!r}",
        f"alpha = {p.alpha!r}",
        f"beta = {p.beta!r}",
        f"gamma = {p.gamma!r}",
        f"c1 = {cfg.c1!r}",
        f"grid_n = {cfg.grid_n}",
        f"dt = {cfg.dt!r}",
        f"T = {cfg.T!r}",
        f"mode = {cfg.mode.value}",
        f"f1 = {p.f1.describe()}",
        f"f2 = {p.f2.describe()}",
        f"f3 = {p.f3.describe()}",
        f"u0 = {cfg.u0.describe()}",
        f"observer_u0 = {cfg.observer_u0.describe()}",
        f"out = {cfg.out}",
        f"seed = {cfg.seed}",
        f"noise_std = {cfg.noise_std!r}",
        f"workers = {cfg.workers}",
        f"snapshot_every = {cfg.snapshot_every}",
    ]
    if cfg.fit_window is not None:
        lines += [f"fit_start = {cfg.fit_window[0]!r}", f"fit_end = {cfg.fit_window[1]!r}"]
    return "\n".join(lines) + "\n"


def save_config(cfg: ScenarioConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(format_config(cfg))
    return path


def with_output(cfg: ScenarioConfig, out: Union[str, Path]) -> ScenarioConfig:
    return replace(cfg, out=Path(out))
