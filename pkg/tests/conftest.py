import numpy as np
import pytest

from cpdetect.decomposition import AlsOptions
from cpdetect.synthetic import gen_model, gen_scene


def compact_model(seed=0, low_rank=2, n_parts=2, bias=0.1):
    """Small star model: 3x4 root, two 4x4 parts, 6 channels."""
    return gen_model(
        root_size=(3, 4),
        part_size=(4, 4),
        n_parts=n_parts,
        channels=6,
        low_rank=low_rank,
        search_radius=2,
        bias=bias,
        seed=seed,
    )


def compact_scene(model, seed=0, n_objects=2, noise=0.05,
                  level_shapes=((30, 34), (26, 28))):
    return gen_scene(
        model, n_objects=n_objects, noise=noise,
        level_shapes=level_shapes, seed=seed,
    )


@pytest.fixture
def fast_opts():
    return AlsOptions(max_iterations=100, restarts=1, seed=0)


def sliding_window_norms(level, dims):
    """Frobenius norm of every valid filter-sized window (loop oracle)."""
    H, W, _ = level.shape
    n, m, _ = dims
    out = np.empty((H - n + 1, W - m + 1))
    for y in range(H - n + 1):
        for x in range(W - m + 1):
            out[y, x] = np.linalg.norm(level[y : y + n, x : x + m, :])
    return out
