import os

# pin BLAS threads before numpy loads: deterministic and faster at this scale
for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
    os.environ.setdefault(var, "1")

import numpy as np
import pytest

from domainswap.config import RunConfig
from domainswap.data import default_domain_specs, generate_dataset


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """Small 16x16 triangle/ellipse dataset shared by fast tests."""
    root = tmp_path_factory.mktemp("toydata")
    for spec in default_domain_specs(size=16, count=24, seed=7):
        generate_dataset(spec, root)
    return root


@pytest.fixture()
def tiny_run_config(toy_dataset, tmp_path):
    """A very small but complete training config for fast end-to-end tests."""
    return RunConfig(
        data_root=str(toy_dataset),
        out_dir=str(tmp_path / "out"),
        image_size=16,
        base_channels=4,
        style_dim=4,
        iters=8,
        checkpoint_every=4,
        seed=0,
    )


@pytest.fixture()
def rng():
    return np.random.default_rng(0)
