import numpy as np
import pytest
import torch

from uwbright.imageops import save_image
from uwbright.losses import FeatureExtractor

# multi-threaded CPU reductions are not bitwise reproducible run-to-run;
# the whole suite runs in the single-thread deterministic mode
torch.set_num_threads(1)


def random_image(rng: np.random.Generator, height: int = 32, width: int = 32) -> np.ndarray:
    return rng.random((height, width, 3)).astype(np.float32)


def textured_image(rng: np.random.Generator, size: int = 64) -> np.ndarray:
    """Smooth gradients plus speckle: enough structure for the metrics."""
    y, x = np.mgrid[0:size, 0:size] / size
    base = np.stack([0.3 + 0.4 * x, 0.2 + 0.5 * y, 0.4 + 0.3 * x * y], axis=-1)
    speckle = 0.15 * rng.random((size, size, 3))
    return np.clip(base + speckle, 0.0, 1.0).astype(np.float32)


@pytest.fixture(scope="session")
def extractor() -> FeatureExtractor:
    return FeatureExtractor.seeded(0)


@pytest.fixture
def image_dir(tmp_path):
    """Factory writing n seeded random PNGs into a fresh directory."""

    def build(n: int = 10, size: int = 48, seed: int = 0, name: str = "imgs"):
        directory = tmp_path / name
        directory.mkdir(exist_ok=True)
        rng = np.random.default_rng(seed)
        for i in range(n):
            save_image(textured_image(rng, size), directory / f"img_{i:03d}.png")
        return directory

    return build
