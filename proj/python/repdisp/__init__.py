"""Representation dispersion diagnostics."""

from ._core import (
    RepdispError,
    __version__,
    aux_cross_domain,
    aux_single_domain,
    correlation,
    dispersion,
    dispersion_gap,
    read_edf,
    read_safetensors,
    uniform_ppl_select,
    write_edf,
)

__all__ = [
    "RepdispError",
    "__version__",
    "aux_cross_domain",
    "aux_single_domain",
    "correlation",
    "dispersion",
    "dispersion_gap",
    "read_edf",
    "read_safetensors",
    "uniform_ppl_select",
    "write_edf",
]
