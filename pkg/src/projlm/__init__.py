"""projlm: simulation and verification of nonlinear long-memory moving averages
whose coefficients are driven by the innovations themselves."""

from projlm.model import (
    AlphaScheme,
    BetaScheme,
    DFun,
    EquationSpec,
    Kernel,
    Sequence,
    TruncationPolicy,
)

__version__ = "0.1.0"

__all__ = [
    "AlphaScheme",
    "BetaScheme",
    "DFun",
    "EquationSpec",
    "Kernel",
    "Sequence",
    "TruncationPolicy",
    "__version__",
]
