"""fbmlab: a numerical laboratory for SDEs driven by fractional Brownian motion.

Subpackages cover exact fBm sampling, pathwise (Young) calculus, the
fractional Cameron-Martin geometry, first-variation and Malliavin matrices,
quantitative Norris-type statistics, Lie-bracket rank analysis, and
small-time density asymptotics.
"""

__version__ = "0.1.0"

from .fbm import Hurst, TimeGrid, FbmPath, covariance, sample_cholesky, sample_volterra

__all__ = [
    "__version__",
    "Hurst",
    "TimeGrid",
    "FbmPath",
    "covariance",
    "sample_cholesky",
    "sample_volterra",
]
