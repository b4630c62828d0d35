"""kanmix: mixture-of-KAN forecaster for multivariate time series.

Channel-independent forecasting with Kolmogorov-Arnold layers (B-spline,
Chebyshev/Jacobi, Taylor and wavelet edge functions) routed by a sparse
noisy top-k gate, trained with hand-derived analytic gradients.
"""

from .basis import SplineGrid
from .data import SyntheticSpec, TimeSeriesDataset, VarSpec, gen_synthetic, load_csv
from .kernels import BACKEND as KERNEL_BACKEND
from .model import ForecastModel, ModelConfig, load_checkpoint, presample_init, save_checkpoint
from .numeric import SeededRng
from .train import Adam, TrainConfig, fit, run_seeds, total_loss

__version__ = "0.1.0"

__all__ = [
    "Adam",
    "ForecastModel",
    "KERNEL_BACKEND",
    "ModelConfig",
    "SeededRng",
    "SplineGrid",
    "SyntheticSpec",
    "TimeSeriesDataset",
    "TrainConfig",
    "VarSpec",
    "fit",
    "gen_synthetic",
    "load_checkpoint",
    "load_csv",
    "presample_init",
    "run_seeds",
    "save_checkpoint",
    "total_loss",
]
