"""pcabench: PCA-reduced transformer forecasting benchmark.

Library layout:
    linalg     dense kernels (matmul, softmax, layer norm, QR, Jacobi)
    autodiff   minimal reverse-mode engine over float64 arrays
    pca        exact + randomized PCA with explained-variance accounting
    dataset    CSV ingestion, chronological split, standardize, windowing
    transformer / training   encoder-decoder forecaster and its loop
    analysis   metrics, Pearson matrices, reduction tables
    harness    sweep runner producing manifests and CSV artifacts
    cli        the `pcabench` command group
"""

__version__ = "0.1.0"

from .errors import (
    ContractError,
    ConvergenceError,
    DataError,
    InsufficientDataError,
    ShapeError,
    TrainingError,
)
from .rng import SeededRng

__all__ = [
    "ContractError",
    "ConvergenceError",
    "DataError",
    "InsufficientDataError",
    "ShapeError",
    "TrainingError",
    "SeededRng",
    "__version__",
]
