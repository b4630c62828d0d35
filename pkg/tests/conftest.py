import os

import numpy as np
import pytest

from kanmix.data import SyntheticSpec, VarSpec, chrono_split, gen_synthetic, standardize
from kanmix.numeric import SeededRng

# Real benchmark CSVs are looked up here when present (they are not bundled).
ETT_DIR = os.environ.get("KANMIX_ETT_DIR",
                         os.path.join(os.path.dirname(__file__), "..", "data"))


def etth1_path():
    return os.path.join(ETT_DIR, "ETTh1.csv")


def has_etth1():
    return os.path.exists(etth1_path())


requires_etth1 = pytest.mark.skipif(
    not has_etth1(),
    reason="ETTh1.csv not available in this environment; place it under "
           "data/ (or set KANMIX_ETT_DIR) to run the benchmark-gated checks",
)


@pytest.fixture
def rng():
    return SeededRng(0)


@pytest.fixture
def small_dataset():
    """Standardized 3-variable synthetic series with ratio splits."""
    spec = SyntheticSpec(length=1200, noise=0.05, variables=[
        VarSpec("sine", {"period": 24.0}),
        VarSpec("sine", {"period": 48.0, "phase": 1.0}),
        VarSpec("ar1", {"rho": 0.8}),
    ])
    ds = gen_synthetic(spec, SeededRng(11))
    return standardize(chrono_split(ds, "ratio", lookback=48))


def fd_grad(f, x, h=1e-6):
    """Central finite differences of scalar f at every entry of x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(x)
        flat[i] = orig - h
        down = f(x)
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return g
