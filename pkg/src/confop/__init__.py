"""confop: symbolic and numeric tools for conformally invariant operators.

Modules
-------
expr_core   expression DSL, terms and linear combinations
algebra     canonical forms and formal zero tests
conformal   conformal variation, invariance checks, Im^Z coefficients
jets        Taylor jets of metrics and numeric tensor evaluation
ambient     Fefferman-Graham ambient metric, harmonic extension, GJMS
cli         the ``confop`` command line
"""
from .expr_core import LinearCombination, parse, format_lc

__version__ = "0.1.0"

__all__ = ["LinearCombination", "parse", "format_lc", "__version__"]
