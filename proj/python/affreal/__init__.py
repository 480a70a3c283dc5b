"""Affine realizations of Levy-driven SPDEs: function algebra, eigen catalogs and scenario workflows."""

from ._core import (
    AffrealError,
    Outcome,
    QExp,
    Scenario,
    differentiate,
    eigenpairs,
    gaussian_taylor,
    integrate_T,
    multiply,
    parse_qexp,
    shift,
)

__all__ = [
    "AffrealError",
    "Outcome",
    "QExp",
    "Scenario",
    "differentiate",
    "eigenpairs",
    "gaussian_taylor",
    "integrate_T",
    "multiply",
    "parse_qexp",
    "shift",
]
