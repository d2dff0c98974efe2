"""eigrefine: iterative refinement of approximate dense eigendecompositions."""

__version__ = "0.1.0"
