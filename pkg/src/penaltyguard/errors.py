"""Exception hierarchy shared across the package.

Each class carries the CLI exit code it maps to.
"""


class PenaltyGuardError(Exception):
    exit_code = 1


class ContractError(PenaltyGuardError, ValueError):
    """A caller violated a documented precondition (shape, label, domain)."""

    exit_code = 2


class ConfigError(ContractError):
    """Invalid experiment configuration or plan."""

    exit_code = 2


class NumericalContractError(PenaltyGuardError, ArithmeticError):
    """A numerical postcondition failed (norm drift, identity residual, ...)."""

    exit_code = 3


class StiffnessError(NumericalContractError):
    """Adaptive stepping underflowed its minimum step."""


class DetectionFailure(NumericalContractError):
    """A code failed to detect an error it claims to detect."""


class OutputError(PenaltyGuardError, OSError):
    exit_code = 4
