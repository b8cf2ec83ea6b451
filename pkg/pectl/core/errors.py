#!/usr/bin/env python3
"""
pectl - Exceptions
-----------
Error types raised by the numerical core and the scenario layer.
"""
from typing import Optional


class PectlError(Exception):
    """Base class for all pectl errors."""


class GridMismatchError(PectlError, ValueError):
    """Operands live on different grids."""


class InvalidParameterError(PectlError, ValueError):
    """An argument is outside its admissible range."""


class ResonanceError(InvalidParameterError):
    """gamma sits on (or too close to) a Neumann eigenvalue of -d2/dx2."""


class ConvergenceError(PectlError):
    """Successive approximations did not settle."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class DivergenceError(PectlError):
    """The blow-up guard tripped during time stepping."""

    def __init__(self, t: float, norm: float):
        super().__init__(f"state norm {norm:.3e} exceeded the blow-up guard at t={t:.6g}")
        self.t = t
        self.norm = norm


class CertificateError(PectlError):
    """An audited Lipschitz ratio exceeded the declared gain."""

    def __init__(self, name: str, observed: float, declared: float):
        super().__init__(
            f"{name}: observed Lipschitz ratio {observed:.6g} exceeds certificate {declared:.6g}"
        )
        self.observed = observed
        self.declared = declared


class DecayFitError(PectlError, ValueError):
    """A decay fit was requested on unusable data."""


class InfeasibleGainError(PectlError):
    """No design gain in the search interval meets the requested margin."""


class ConfigError(PectlError):
    """Base for scenario file problems."""

    def __init__(self, message: str, line: Optional[int] = None, key: Optional[str] = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")
        self.line = line
        self.key = key


class UnknownKeyError(ConfigError):
    """Key not in the scenario vocabulary."""


class MalformedValueError(ConfigError):
    """Value does not parse for its key."""


class ConfigInvariantError(ConfigError):
    """Values parse but violate a scenario invariant."""
