import math

import numpy as np
import pytest

from mixplan import ConfigurationError, ContractViolation, RegularizedCovariance
from mixplan.covariance import CovarianceSnapshot


def _random_unit_vectors(rng, count, d):
    vecs = rng.normal(size=(count, d))
    vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
    return vecs * rng.uniform(0.0, 1.0, size=(count, 1))


def test_new_identity():
    cov = RegularizedCovariance(2, 1.0, 1.0)
    assert np.array_equal(cov.matrix, np.eye(2))
    assert cov.update_count == 0


def test_new_scaled_identity_determinant():
    cov = RegularizedCovariance(3, 0.5, 1.0)
    assert np.array_equal(cov.matrix, 0.5 * np.eye(3))
    assert math.exp(cov.log_det()) == pytest.approx(0.125, rel=1e-12)


def test_new_small_alpha_spectrum():
    cov = RegularizedCovariance(20, 1.0, 0.05)
    eigs = np.linalg.eigvalsh(cov.matrix)
    assert eigs.min() == pytest.approx(1.0)
    assert eigs.max() == pytest.approx(1.0)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"d": 0, "lambda_reg": 1.0},
        {"d": 2, "lambda_reg": 0.0},
        {"d": 2, "lambda_reg": -1.0},
        {"d": 2, "lambda_reg": 1.0, "alpha": 0.0},
        {"d": 2, "lambda_reg": 1.0, "alpha": 1.2},
        {"d": 2, "lambda_reg": 1.0, "norm_cap": 0.0},
    ],
)
def test_new_validation(kwargs):
    with pytest.raises(ConfigurationError):
        RegularizedCovariance(**kwargs)


def test_rank_one_update_basis_vector():
    cov = RegularizedCovariance(2, 1.0, 1.0)
    cov.rank_one_update(np.array([1.0, 0.0]))
    assert np.array_equal(cov.matrix, np.diag([2.0, 1.0]))
    assert cov.update_count == 1


def test_rank_one_update_scaled():
    cov = RegularizedCovariance(2, 1.0, 0.5)
    cov.rank_one_update(np.array([0.0, 1.0]))
    assert np.array_equal(cov.matrix, np.diag([1.0, 1.5]))


def test_rank_one_update_matches_batch_oracle():
    rng = np.random.default_rng(5)
    d, n, lam, alpha = 5, 100, 0.7, 0.3
    features = _random_unit_vectors(rng, n, d)
    cov = RegularizedCovariance(d, lam, alpha)
    for phi in features:
        cov.rank_one_update(phi)
    oracle = lam * np.eye(d) + alpha * features.T @ features
    assert np.allclose(cov.matrix, oracle, rtol=1e-9, atol=0.0)
    assert cov.update_count == n


def test_bulk_update_matches_sequential():
    rng = np.random.default_rng(6)
    features = _random_unit_vectors(rng, 60, 4)
    one_by_one = RegularizedCovariance(4, 1.0, 1.0)
    for phi in features:
        one_by_one.rank_one_update(phi)
    bulk = RegularizedCovariance(4, 1.0, 1.0)
    bulk.rank_one_update_many(features)
    assert np.allclose(one_by_one.matrix, bulk.matrix, atol=1e-9)
    assert bulk.update_count == 60


def test_norm_gate_rejects_long_features():
    cov = RegularizedCovariance(2, 1.0, 1.0)
    with pytest.raises(ContractViolation):
        cov.rank_one_update(np.array([1.1, 0.0]))
    uncapped = RegularizedCovariance(2, 1.0, 1.0, norm_cap=None)
    uncapped.rank_one_update(np.array([3.0, 4.0]))
    assert uncapped.update_count == 1


def test_update_rejects_non_finite():
    cov = RegularizedCovariance(2, 1.0, 1.0)
    with pytest.raises(ContractViolation):
        cov.rank_one_update(np.array([np.nan, 0.0]))


def test_mahalanobis_identity():
    cov = RegularizedCovariance(2, 1.0, 1.0)
    assert cov.mahalanobis(np.array([1.0, 0.0])) == pytest.approx(1.0, rel=1e-12)


def test_mahalanobis_diagonal():
    cov = RegularizedCovariance.from_state(np.diag([4.0, 1.0]), lambda_reg=1.0)
    assert cov.mahalanobis(np.array([2.0, 0.0])) == pytest.approx(1.0, rel=1e-12)


def test_mahalanobis_matches_dense_solve_oracle():
    rng = np.random.default_rng(11)
    for _ in range(10):
        base = rng.normal(size=(6, 6))
        spd = base @ base.T + 6 * np.eye(6)
        cov = RegularizedCovariance.from_state(spd, lambda_reg=1.0)
        x = rng.normal(size=6)
        oracle = math.sqrt(float(x @ np.linalg.solve(spd, x)))
        assert cov.mahalanobis(x) == pytest.approx(oracle, rel=1e-10)


def test_mahalanobis_bounded_by_euclidean_over_sqrt_lambda():
    rng = np.random.default_rng(12)
    lam = 2.5
    cov = RegularizedCovariance(4, lam, 1.0)
    for phi in _random_unit_vectors(rng, 50, 4):
        cov.rank_one_update(phi)
    for _ in range(20):
        x = rng.normal(size=4)
        assert cov.mahalanobis(x) <= np.linalg.norm(x) / math.sqrt(lam) + 1e-12


def test_det_ratio_of_unchanged_state_is_one():
    cov = RegularizedCovariance(3, 2.0, 1.0)
    snap = cov.snapshot()
    assert cov.det_ratio(snap) == pytest.approx(1.0, rel=1e-14)


def test_det_ratio_after_basis_update():
    cov = RegularizedCovariance(2, 1.0, 1.0)
    snap = cov.snapshot()
    cov.rank_one_update(np.array([1.0, 0.0]))
    assert cov.det_ratio(snap) == pytest.approx(2.0, rel=1e-12)


def test_det_ratio_matches_direct_determinant_oracle():
    rng = np.random.default_rng(13)
    cov = RegularizedCovariance(4, 1.0, 0.8)
    snap = cov.snapshot()
    for phi in _random_unit_vectors(rng, 50, 4):
        cov.rank_one_update(phi)
    oracle = np.linalg.det(cov.matrix) / np.linalg.det(snap.matrix)
    assert cov.det_ratio(snap) == pytest.approx(oracle, rel=1e-8)


def test_snapshots_are_psd_ordered_and_norms_shrink():
    rng = np.random.default_rng(14)
    cov = RegularizedCovariance(5, 1.0, 1.0)
    snapshots = [cov.snapshot()]
    for phi in _random_unit_vectors(rng, 120, 5):
        cov.rank_one_update(phi)
        if cov.update_count % 30 == 0:
            snapshots.append(cov.snapshot())
    probes = rng.normal(size=(10, 5))
    for earlier, later in zip(snapshots, snapshots[1:]):
        gap = later.matrix - earlier.matrix
        assert np.linalg.eigvalsh(gap).min() >= -1e-8
        for x in probes:
            assert later.mahalanobis(x) <= earlier.mahalanobis(x) + 1e-8


def test_max_det_ratio_under_doubling_schedule():
    # Doubling rule plus lambda >= 1 and unit-ball features keeps the
    # current/snapshot determinant ratio at or below 4.
    rng = np.random.default_rng(15)
    for d in (2, 4):
        cov = RegularizedCovariance(d, 1.0, 1.0)
        snap = cov.snapshot()
        worst = 1.0
        for phi in _random_unit_vectors(rng, 400, d):
            if cov.det_ratio(snap) > 2.0:
                snap = cov.snapshot()
            cov.rank_one_update(phi)
            worst = max(worst, cov.det_ratio(snap))
        assert worst <= 4.0 + 1e-9


def test_matrix_stays_symmetric_and_positive():
    rng = np.random.default_rng(16)
    cov = RegularizedCovariance(6, 0.9, 0.4)
    for phi in _random_unit_vectors(rng, 200, 6):
        cov.rank_one_update(phi)
    assert np.abs(cov.matrix - cov.matrix.T).max() <= 1e-10
    assert np.linalg.eigvalsh(cov.matrix).min() >= 0.9 - 1e-8


def test_snapshot_matrices_are_immutable():
    cov = RegularizedCovariance(2, 1.0, 1.0)
    snap = cov.snapshot()
    with pytest.raises(ValueError):
        snap.matrix[0, 0] = 5.0


def test_snapshot_from_matrix_round_trip():
    spd = np.array([[2.0, 0.5], [0.5, 1.0]])
    snap = CovarianceSnapshot.from_matrix(spd)
    assert math.exp(snap.log_det) == pytest.approx(np.linalg.det(spd), rel=1e-12)
    x = np.array([0.3, -0.7])
    oracle = math.sqrt(float(x @ np.linalg.solve(spd, x)))
    assert snap.mahalanobis(x) == pytest.approx(oracle, rel=1e-12)
