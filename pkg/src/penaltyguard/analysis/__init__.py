"""Diagnostics and theory checks on evolved states and model instances."""

from .dynamics import (
    CI_AVERAGING_TIMES,
    PAPER_AVERAGING_TIMES,
    LongTermResult,
    ProtectionTime,
    SystemFidelityProbe,
    dephasing_prediction,
    longterm_fidelity,
    plus_minus_state,
    protection_time,
)
from .errorop import (
    DecayReport,
    FreeEigenbasis,
    FSeries,
    InstanceNorms,
    bound_F,
    compute_F,
    cross_term_norm,
    fidelity_bound,
    instance_norms,
    leakage_difference,
    power_law_fit,
    theorem_limit_check,
)
from .fidelity import (
    FidelityPoint,
    codespace_probability,
    fidelity_points,
    partial_trace_env,
    system_fidelity_sq,
    system_fidelity_sq_series,
    total_fidelity_sq,
)
from .toy import ToyModelParams, ToyModelResult, toy_model, toy_transition_probability

__all__ = [name for name in dir() if not name.startswith("_")]
