"""Test modules/datasets.py"""
import numpy as np
import pytest

from errors import ConfigError
from modules.datasets import (
    SyntheticDataset, mean_mode_distance, mode_coverage, nearest_mode_distances
)
from rng import Xoshiro256pp


def test_ring_samples_sit_near_their_modes():
    dataset = SyntheticDataset()
    samples = dataset.sample(Xoshiro256pp(1), 2000)
    assert samples.shape == (2000, 2)
    assert nearest_mode_distances(samples, dataset).max() < 6 * dataset.sigma
    assert mode_coverage(samples, dataset) == 8


def test_ring_centres_lie_on_the_circle():
    centres = SyntheticDataset(modes=5, radius=3.0).centers()
    np.testing.assert_allclose(np.linalg.norm(centres, axis=1), 3.0, rtol=1e-12)


def test_sampling_is_seeded():
    dataset = SyntheticDataset()
    a = dataset.sample(Xoshiro256pp(4), 10)
    assert a.tobytes() == dataset.sample(Xoshiro256pp(4), 10).tobytes()
    assert a.tobytes() != dataset.sample(Xoshiro256pp(5), 10).tobytes()


def test_checkerboard_uses_dark_cells_only():
    samples = SyntheticDataset("checkerboard").sample(Xoshiro256pp(2), 1000)
    assert np.all(np.abs(samples) <= 2.0)
    columns = np.minimum(np.floor(samples[:, 0] + 2.0), 3).astype(int)
    rows = np.minimum(np.floor(samples[:, 1] + 2.0), 3).astype(int)
    assert np.all((rows - columns) % 2 == 0)


def test_tiles_are_images_in_range():
    dataset = SyntheticDataset("tiles", side=6)
    samples = dataset.sample(Xoshiro256pp(3), 20)
    assert dataset.dim == 36
    assert samples.shape == (20, 36)
    assert np.all(np.abs(samples) <= 1.0)


def test_collapsed_samples_cover_one_mode():
    dataset = SyntheticDataset()
    collapsed = np.tile(dataset.centers()[2], (100, 1))
    assert mode_coverage(collapsed, dataset) == 1
    assert mean_mode_distance(collapsed, dataset) == pytest.approx(0.0, abs=1e-12)


def test_origin_is_one_radius_from_every_mode():
    assert mean_mode_distance(np.zeros((3, 2)), SyntheticDataset(radius=2.0)) == pytest.approx(2.0)


@pytest.mark.parametrize("kwargs", [{"variant": "spiral"}, {"modes": 0}, {"sigma": -1.0}, {"side": 1}])
def test_invalid_datasets(kwargs):
    with pytest.raises(ConfigError):
        SyntheticDataset(**kwargs)


def test_from_dict_accepts_bare_variant():
    assert SyntheticDataset.from_dict("tiles").variant == "tiles"
    with pytest.raises(ConfigError):
        SyntheticDataset.from_dict({"shape": "ring"})


@pytest.mark.parametrize("variant", ["checkerboard", "tiles"])
@pytest.mark.parametrize("metric", [mode_coverage, nearest_mode_distances, mean_mode_distance])
def test_mode_metrics_need_the_ring(variant, metric):
    with pytest.raises(ConfigError):
        metric(np.zeros((4, 2)), SyntheticDataset(variant=variant))
