import sys
import os
os.environ["ENV"] = "test"
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import numpy as np
import pytest

from models.errors import InvalidInputError
from models.schemas import MatrixKind, RandomAccessConfig
from services.random_access import (
    RandomAccessSampler,
    build_augmented_matrix,
    build_codes,
    random_access_context,
    random_access_experiment,
)


def _config(**overrides) -> RandomAccessConfig:
    data = {
        "P": 40,
        "Delta": 1,
        "family": "gold",
        "n": 5,
        "K": 2,
        "snr_db": 5.0,
        "change_point": 5,
        "detectors": [{"variant": "aggregate"}],
        "thresholds": [6.0],
        "trials": 20,
        "horizon": 20_000,
        "seed": 3,
    }
    data.update(overrides)
    return RandomAccessConfig(**data)


def test_sampler_places_users_at_their_offsets():
    sampler = RandomAccessSampler(P=10, Delta=3, K=4, sigma_x_sq=2.0, noise_variance=1.0, M=12)
    rng = np.random.default_rng(0)
    for _ in range(50):
        scenario = sampler(rng, 7)
        users = [i // 4 for i in scenario.support]
        assert len(set(users)) == 4
        assert all(0 <= i < 40 for i in scenario.support)
        assert scenario.N == 40
        assert scenario.change_point == 7


def test_gold_codes_and_capacity():
    codes, capacity, kind = build_codes(_config(Delta=2, P=20))
    assert capacity == 33 * 10
    assert len(codes) == 20
    assert kind == MatrixKind.GOLD_AUGMENTED
    with pytest.raises(InvalidInputError):
        build_codes(_config(Delta=2, P=331))


def test_sic_codes_and_capacity():
    config = _config(family="sic_povm", d=3, n=None, Delta=0, P=9)
    codes, capacity, kind = build_codes(config)
    assert capacity == 9
    assert kind == MatrixKind.SIC_AUGMENTED
    A, _ = build_augmented_matrix(config)
    assert (A.M, A.N) == (3, 9)
    assert A.coherence == pytest.approx(0.5)
    with pytest.raises(InvalidInputError):
        build_codes(config.model_copy(update={"P": 10}))


def test_augmented_gold_matrix():
    A, capacity = build_augmented_matrix(_config(Delta=2, P=20))
    assert (A.M, A.N) == (33, 60)
    assert capacity == 330


def test_context_checks():
    config = _config()
    A, _ = build_augmented_matrix(config)
    with pytest.raises(InvalidInputError):
        random_access_context(config.model_copy(update={"K": 41}), A)
    tall, _ = build_augmented_matrix(_config(P=1, K=1))
    with pytest.raises(InvalidInputError):
        random_access_context(_config(P=1, K=1), tall)


def test_snr_counts_augmented_rows():
    config = _config(snr_db=0.0)
    A, _ = build_augmented_matrix(config)
    context = random_access_context(config, A)
    assert context.sampler.sigma_x_sq == pytest.approx(A.M / 2)
    assert context.bounds is None


def test_small_experiment():
    result = random_access_experiment(_config())
    assert (result.rows, result.columns) == (32, 80)
    assert result.capacity == 33 * 15
    assert 0.0 < result.coherence < 1.0
    assert [c.detector for c in result.curves] == ["aggregate"]
    assert len(result.curves[0].points) == 1
    assert len(result.identification) == 1
    point = result.identification[0]
    assert point.threshold == 6.0
    assert 0.0 <= point.identification_pct <= 100.0
