from __future__ import annotations

import numpy as np
import pytest

from radloc import datasets as D
from radloc import reftable
from radloc.errors import CorruptFileError, KindError, SchemaError
from radloc.geometry import ArrayGeometry, SourcePose
from radloc.transport import Scene, expected_counts, sample_counts

ANGLES = np.arange(0.0, 360.0, 5.0)


@pytest.fixture(scope="module")
def scene():
    return Scene(ArrayGeometry.ring(8))


@pytest.fixture(scope="module")
def noiseless(scene):
    return reftable.calibrate(scene, ANGLES, noiseless=True)


def test_single_replicate_noiseless_rows_equal_expected(scene, noiseless):
    for i, a in enumerate(ANGLES[:10]):
        np.testing.assert_array_equal(noiseless.responses[i], expected_counts(scene.with_pose(SourcePose(2.0, a))))


def test_rows_sorted_and_shaped(scene):
    table = reftable.calibrate(scene, ANGLES[::-1], replicates=2)
    np.testing.assert_array_equal(table.calib_angles, ANGLES)
    assert table.responses.shape == (72, 8)
    assert table.calib_distance == 2.0


def test_cyclic_shift_symmetry(noiseless):
    # 45 degrees is 9 grid steps and one detector position
    for i in range(72 - 9):
        np.testing.assert_allclose(np.roll(noiseless.responses[i], 1), noiseless.responses[i + 9], rtol=1e-9)


def test_standard_error_shrinks(scene):
    small = reftable.calibrate(scene, [30.0], replicates=10)
    big = reftable.calibrate(scene, [30.0], replicates=1000)
    lam = expected_counts(scene.with_pose(SourcePose(2.0, 30.0)))
    # the error of a mean of n Poisson draws has sd sqrt(lam / n)
    z_small = (small.responses[0] - lam) / np.sqrt(lam / 10)
    z_big = (big.responses[0] - lam) / np.sqrt(lam / 1000)
    assert np.all(np.abs(z_small) < 5) and np.all(np.abs(z_big) < 5)
    assert np.abs(big.responses[0] - lam).mean() < np.abs(small.responses[0] - lam).mean()


def test_exact_on_own_rows_and_member_of_grid(noiseless):
    np.testing.assert_array_equal(noiseless.predict(noiseless.responses), ANGLES)
    rng = np.random.default_rng(0)
    pred = noiseless.predict(rng.poisson(100, (50, 8)))
    assert set(pred) <= set(ANGLES)


def test_tie_goes_to_smallest_angle():
    table = reftable.ReferenceTable(np.array([10.0, 20.0, 30.0]), np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]]), 2.0, 1e-5, 14.0)
    assert reftable.predict_angle(table, [1.0, 0.0]) == 10.0
    assert reftable.predict_angle(table, [0.5, 0.5]) == 10.0


def test_translation_invariance(noiseless):
    rng = np.random.default_rng(3)
    x = rng.poisson(noiseless.responses[rng.integers(0, 72, 40)])
    shifted = reftable.ReferenceTable(noiseless.calib_angles, noiseless.responses + 123.0, 2.0, 1e-5, 14.0)
    np.testing.assert_array_equal(noiseless.predict(x), shifted.predict(x + 123.0))


def test_far_queries_are_worse(scene):
    table = reftable.calibrate(scene, ANGLES, replicates=100, seed=1)

    def err(distance):
        q = np.array([sample_counts(expected_counts(scene.with_pose(SourcePose(distance, a))), 7 + i)
                      for i, a in enumerate(ANGLES)])
        pred = table.predict(q)
        d = np.abs(pred - ANGLES) % 360
        return np.minimum(d, 360 - d).mean()

    assert err(10.0) > err(2.0)


def test_dimension_mismatch(noiseless):
    with pytest.raises(SchemaError):
        noiseless.predict(np.ones((2, 4)))


def test_normalized_variant_scale_invariant(noiseless):
    x = noiseless.responses[::7]
    np.testing.assert_array_equal(noiseless.predict(x, normalized=True), noiseless.predict(5.0 * x, normalized=True))


def test_save_load_round_trip(noiseless, tmp_path):
    p = tmp_path / "t.json"
    reftable.save(noiseless, p)
    back = reftable.load(p)
    assert back == noiseless
    np.testing.assert_array_equal(back.responses, noiseless.responses)


def test_load_rejects_model_and_corruption(noiseless, tmp_path):
    from radloc import models

    p = tmp_path / "t.json"
    reftable.save(noiseless, p)
    p.write_text(p.read_text()[:-40])
    with pytest.raises(CorruptFileError):
        reftable.load(p)
    ds = D.generate(*D.preset("L1"))
    m = models.train_dataset(models.ModelConfig("dtree"), ds)
    models.save(m, tmp_path / "m.json")
    with pytest.raises(KindError):
        reftable.load(tmp_path / "m.json")
