"""taildom: a Monte Carlo and convex-optimization lab for tail comparison
of random vectors.

The package measures, at desk scale, when per-functional (weak) tail
domination between two random vectors upgrades to a comparison of norm
tails or norm means, certifies the regularity hypotheses that drive the
upgrade, and reproduces a sup-norm pair for which weak domination holds
while the mean norms diverge like sqrt(ln n).
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractError,
    DegenerateInputError,
    ModelError,
    ParameterError,
    ShapeError,
    TaildomError,
)

__all__ = [
    "__version__",
    "TaildomError",
    "ParameterError",
    "ModelError",
    "ShapeError",
    "ConfigError",
    "DegenerateInputError",
    "ContractError",
]
