import numpy as np
import pytest

from spamvision import dataset as ds
from spamvision.imaging import ImageBuffer


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """20 ham + 20 spam demo images; enough for CLI plumbing tests."""
    root = tmp_path_factory.mktemp("tiny_corpus")
    ds.write_demo_corpus(root, n_ham=20, n_spam=20, seed=3)
    return root


@pytest.fixture(scope="session")
def demo_corpus(tmp_path_factory):
    """The 200-image separable corpus used by the end-to-end gates."""
    root = tmp_path_factory.mktemp("demo_corpus")
    ds.write_demo_corpus(root, n_ham=100, n_spam=100, seed=7)
    return root


def make_buffer(values, channels=3):
    """ImageBuffer from a nested list/array; grayscale gets a channel axis."""
    arr = np.asarray(values, dtype=np.uint8)
    if arr.ndim == 2:
        arr = arr[..., None]
    if arr.shape[2] == 1 and channels == 3:
        arr = np.repeat(arr, 3, axis=2)
    return ImageBuffer(arr)


@pytest.fixture
def square_on_black():
    """16x16 black image with a centered 8x8 white square (3 channels)."""
    px = np.zeros((16, 16, 3), dtype=np.uint8)
    px[4:12, 4:12] = 255
    return ImageBuffer(px)
