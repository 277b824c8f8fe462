import itertools

import numpy as np
import pytest

from mvrm import (
    Effect,
    centering_matrix,
    custom_hypothesis_matrix,
    hypothesis_matrix,
    kronecker,
)

ALL_DIMS = [
    (g, t, p)
    for g, t, p in itertools.product(range(2, 5), range(1, 5), range(1, 4))
]


class TestCenteringMatrix:
    def test_order_two(self):
        np.testing.assert_array_equal(
            centering_matrix(2), [[0.5, -0.5], [-0.5, 0.5]]
        )

    def test_order_one_is_zero(self):
        np.testing.assert_array_equal(centering_matrix(1), [[0.0]])

    def test_projector_identity_order_three(self):
        C = centering_matrix(3)
        np.testing.assert_allclose(C.sum(axis=1), 0.0, atol=1e-15)
        np.testing.assert_allclose(C @ C, C, atol=1e-15)
        assert np.linalg.matrix_rank(C) == 2

    def test_zero_order_rejected(self):
        with pytest.raises(ValueError):
            centering_matrix(0)


class TestKronecker:
    def test_identity_times_block_is_block_diagonal(self):
        B = np.array([[1.0, 2.0], [3.0, 4.0]])
        out = kronecker(np.eye(2), B)
        np.testing.assert_array_equal(out[:2, :2], B)
        np.testing.assert_array_equal(out[2:, 2:], B)
        np.testing.assert_array_equal(out[:2, 2:], np.zeros((2, 2)))

    def test_scalar_one_is_identity_operation(self):
        A = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(kronecker(A, np.array([[1.0]])), A)

    def test_mixed_product_law(self):
        # (A x B)(C x D) = (AC) x (BD), checked by direct multiplication
        rng = np.random.default_rng(42)
        for _ in range(20):
            A, B, C, D = (rng.normal(size=(2, 2)) for _ in range(4))
            left = kronecker(A, B) @ kronecker(C, D)
            right = kronecker(A @ C, B @ D)
            np.testing.assert_allclose(left, right, atol=1e-12)


class TestHypothesisMatrix:
    def test_group_contrast_2x2x1_hand_expansion(self):
        # C_2 x J_2/2 x I_1: quarter blocks with sign pattern [[+, -], [-, +]]
        expected = 0.25 * np.array(
            [
                [1, 1, -1, -1],
                [1, 1, -1, -1],
                [-1, -1, 1, 1],
                [-1, -1, 1, 1],
            ],
            dtype=float,
        )
        hm = hypothesis_matrix("group", 2, 2, 1)
        np.testing.assert_allclose(hm.matrix, expected, atol=1e-15)

    def test_interaction_contrast_2x2x1_checkerboard(self):
        expected = 0.25 * np.array(
            [
                [1, -1, -1, 1],
                [-1, 1, 1, -1],
                [-1, 1, 1, -1],
                [1, -1, -1, 1],
            ],
            dtype=float,
        )
        hm = hypothesis_matrix("interaction", 2, 2, 1)
        np.testing.assert_allclose(hm.matrix, expected, atol=1e-15)

    def test_group_and_interaction_annihilate_constant_vector(self):
        ones = np.ones(2 * 3 * 2)
        for effect in ("group", "interaction"):
            hm = hypothesis_matrix(effect, 2, 3, 2)
            np.testing.assert_allclose(hm.matrix @ ones, 0.0, atol=1e-14)

    def test_time_contrast_annihilates_time_constant_means(self):
        g, t, p = 3, 4, 2
        rng = np.random.default_rng(7)
        per_group = rng.normal(size=(g, p))
        mu = np.concatenate([np.tile(per_group[i], t) for i in range(g)])
        hm = hypothesis_matrix("time", g, t, p)
        np.testing.assert_allclose(hm.matrix @ mu, 0.0, atol=1e-13)

    @pytest.mark.parametrize("g,t,p", ALL_DIMS)
    def test_projector_invariants_across_designs(self, g, t, p):
        effects = ["group"] if t == 1 else ["group", "time", "interaction"]
        for effect in effects:
            T = hypothesis_matrix(effect, g, t, p).matrix
            assert np.max(np.abs(T - T.T)) <= 1e-12
            assert np.max(np.abs(T @ T - T)) <= 1e-12

    def test_commutes_with_per_variable_scaling(self):
        rng = np.random.default_rng(3)
        for g, t, p in [(2, 2, 3), (3, 2, 2), (4, 3, 3)]:
            scale = np.diag(np.kron(np.ones(g * t), rng.uniform(0.5, 2.0, size=p)))
            for effect in ("group", "time", "interaction"):
                T = hypothesis_matrix(effect, g, t, p).matrix
                np.testing.assert_allclose(T @ scale, scale @ T, atol=1e-12)

    def test_time_contrast_rejected_for_single_time_point(self):
        with pytest.raises(ValueError, match="t=1"):
            hypothesis_matrix("time", 2, 1, 2)
        with pytest.raises(ValueError, match="t=1"):
            hypothesis_matrix("interaction", 2, 1, 2)

    def test_single_group_rejected(self):
        with pytest.raises(ValueError, match="groups"):
            hypothesis_matrix("group", 1, 2, 1)

    def test_effect_tag_and_dims_recorded(self):
        hm = hypothesis_matrix(Effect.GROUP, 2, 2, 2)
        assert hm.effect is Effect.GROUP
        assert hm.dims == (2, 2, 2)
        assert hm.matrix.shape == (8, 8)

    def test_matrix_is_read_only(self):
        hm = hypothesis_matrix("group", 2, 2, 1)
        with pytest.raises(ValueError):
            hm.matrix[0, 0] = 1.0


class TestCustomContrast:
    def test_projector_passes_silently(self):
        T = hypothesis_matrix("group", 2, 1, 1).matrix
        import warnings

        with warnings.catch_warnings():
            warnings.simplefilter("error")
            hm = custom_hypothesis_matrix(T, 2, 1, 1)
        assert hm.effect is Effect.CUSTOM

    def test_non_projector_warns_but_builds(self):
        T = np.array([[1.0, 1.0], [0.0, 1.0]])
        with pytest.warns(UserWarning, match="projector"):
            hm = custom_hypothesis_matrix(T, 2, 1, 1)
        assert not hm.is_projector()

    def test_wrong_shape_rejected(self):
        with pytest.raises(ValueError, match="4x4"):
            custom_hypothesis_matrix(np.eye(3), 2, 2, 1)
