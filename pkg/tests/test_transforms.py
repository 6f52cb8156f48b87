import numpy as np
import pytest

from vipcop.tables import DataError, Table
from vipcop.transforms import (
    AugmentSpec,
    NoiseSpec,
    augment_features,
    augment_samples,
    inject_noise,
    mix_rows,
    project_features,
)


def small_table(n=5, d=2, seed=1, classes=2):
    rng = np.random.default_rng(seed)
    return Table(
        x=rng.normal(size=(n, d)),
        y=np.arange(n) % classes,
        class_count=classes,
    )


class TestAugmentSamples:
    def test_mix_rows_hand_value(self):
        # 0.25 * (0,0) + 0.75 * (2,2) = (1.5, 1.5); alpha <= 0.5 keeps y_k
        mixed = mix_rows(np.array([0.0, 0.0]), np.array([2.0, 2.0]), 0.25)
        assert mixed.tolist() == [1.5, 1.5]

    def test_mix_rows_alpha_one_is_first_row(self):
        xk = np.array([3.0, -1.0])
        assert np.array_equal(mix_rows(xk, np.array([9.0, 9.0]), 1.0), xk)

    def test_append_only_and_counts(self):
        table = small_table(n=5)
        out = augment_samples(table, AugmentSpec("sample_affine", target_n=8, seed=3))
        assert out.n_rows == 8
        assert np.array_equal(out.x[:5], table.x)
        assert np.array_equal(out.y[:5], table.y)
        assert out.injected_rows.tolist() == [False] * 5 + [True] * 3

    def test_label_rule_by_replaying_the_generator(self):
        table = small_table(n=20, seed=5)
        spec = AugmentSpec("sample_affine", target_n=50, seed=12)
        out = augment_samples(table, spec)

        m = 30
        rng = np.random.default_rng(spec.seed)
        ks = rng.integers(0, 20, size=m)
        ls = rng.integers(0, 19, size=m)
        ls = np.where(ls >= ks, ls + 1, ls)
        alphas = rng.random(m)
        assert np.all(ks != ls)
        expected_y = np.where(alphas <= 0.5, table.y[ks], table.y[ls])
        assert np.array_equal(out.y[20:], expected_y)
        expected_x = alphas[:, None] * table.x[ks] + (1 - alphas)[:, None] * table.x[ls]
        assert np.allclose(out.x[20:], expected_x)

    def test_deterministic_under_spec(self):
        table = small_table(n=6)
        spec = AugmentSpec("sample_affine", target_n=11, seed=99)
        a = augment_samples(table, spec)
        b = augment_samples(table, spec)
        assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)

    def test_target_not_larger_rejected(self):
        with pytest.raises(DataError):
            augment_samples(small_table(n=5), AugmentSpec("sample_affine", target_n=5))

    def test_too_few_rows_rejected(self):
        table = Table(x=np.ones((1, 2)), y=np.array([0]), class_count=2)
        with pytest.raises(DataError):
            augment_samples(table, AugmentSpec("sample_affine", target_n=3))


class TestAugmentFeatures:
    def test_unit_projection_copies_column(self):
        x = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 3.0]])
        projection = np.array([[1.0], [0.0]])
        assert np.array_equal(project_features(x, projection)[:, 0], x[:, 0])

    def test_appended_column_count_and_order(self):
        table = small_table(n=4, d=3)
        out = augment_features(table, AugmentSpec("feature_projection", target_d=4, seed=0))
        assert out.n_cols == 4
        assert np.array_equal(out.x[:, :3], table.x)
        assert out.injected_cols.tolist() == [False, False, False, True]

    def test_projected_variance_matches_expectation(self):
        # for standardized columns each projected column's variance
        # concentrates near (sum of column variances) / d_new
        rng = np.random.default_rng(42)
        x = rng.normal(size=(10_000, 100))
        x = (x - x.mean(axis=0)) / x.std(axis=0)
        table = Table(x=x, y=np.arange(10_000) % 2, class_count=2)
        out = augment_features(
            table, AugmentSpec("feature_projection", target_d=110, seed=7)
        )
        target = x.var(axis=0, ddof=1).sum() / 10.0
        for j in range(100, 110):
            assert 0.5 * target <= out.x[:, j].var(ddof=1) <= 1.5 * target


class TestInjectNoise:
    def test_f2_injected_column_is_permutation_of_source(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(30, 4))
        table = Table(x=x, y=np.arange(30) % 2, class_count=2)
        out = inject_noise(table, NoiseSpec("f2_permute", seed=5))
        assert out.n_cols == 4
        injected = np.flatnonzero(out.injected_cols)
        assert injected.size == 2
        surviving = out.x[:, ~out.injected_cols]
        for j in injected:
            matches = [
                np.array_equal(np.sort(out.x[:, j]), np.sort(surviving[:, s]))
                for s in range(surviving.shape[1])
            ]
            assert any(matches)

    def test_s1_constant_column_stays_constant(self):
        x = np.column_stack([np.full(20, 3.5), np.arange(20, dtype=float)])
        table = Table(x=x, y=np.arange(20) % 2, class_count=2)
        out = inject_noise(table, NoiseSpec("s1_marginal", seed=1))
        assert np.all(out.x[:, 0] == 3.5)

    def test_s1_cells_come_from_surviving_marginals(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(40, 3))
        table = Table(x=x, y=np.arange(40) % 2, class_count=2)
        out = inject_noise(table, NoiseSpec("s1_marginal", seed=9))
        surviving = out.x[~out.injected_rows]
        injected = out.x[out.injected_rows]
        for j in range(3):
            assert np.isin(injected[:, j], surviving[:, j]).all()

    def test_f1_noise_variance_near_three_times_source(self):
        rng = np.random.default_rng(11)
        base = rng.normal(0.0, np.sqrt(2.0), size=10_000)
        x = np.column_stack([base, base])
        table = Table(x=x, y=np.arange(10_000) % 2, class_count=2)
        out = inject_noise(table, NoiseSpec("f1_jitter", seed=2))
        injected = np.flatnonzero(out.injected_cols)
        assert injected.size == 1
        source = out.x[:, 0]
        noise = out.x[:, injected[0]] - source
        assert 5.4 <= noise.var(ddof=1) <= 6.6

    def test_shape_preserved_for_both_axes(self):
        table = small_table(n=21, d=7, seed=4)
        for kind in ("s1_marginal", "s2_gaussian"):
            out = inject_noise(table, NoiseSpec(kind, seed=0))
            assert (out.n_rows, out.n_cols) == (21, 7)
            assert out.injected_rows.sum() == 10  # floor(0.5 * 21)
        for kind in ("f1_jitter", "f2_permute", "f_mixed"):
            out = inject_noise(table, NoiseSpec(kind, seed=0))
            assert (out.n_rows, out.n_cols) == (21, 7)
            assert out.injected_cols.sum() == 3  # floor(0.5 * 7)

    def test_s2_draws_from_fitted_gaussian(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(2000, 2)) @ np.array([[1.0, 0.6], [0.0, 0.8]])
        table = Table(x=x, y=np.arange(2000) % 2, class_count=2)
        out = inject_noise(table, NoiseSpec("s2_gaussian", seed=4))
        surviving = out.x[~out.injected_rows]
        injected = out.x[out.injected_rows]
        assert np.allclose(injected.mean(axis=0), surviving.mean(axis=0), atol=0.15)
        assert np.allclose(
            np.cov(injected, rowvar=False), np.cov(surviving, rowvar=False), atol=0.2
        )

    def test_labels_resampled_from_surviving_rows(self):
        table = small_table(n=30, seed=2, classes=3)
        out = inject_noise(table, NoiseSpec("s2_gaussian", seed=6))
        surviving_labels = set(out.y[~out.injected_rows].tolist())
        assert set(out.y[out.injected_rows].tolist()) <= surviving_labels

    def test_deterministic_under_spec(self):
        table = small_table(n=12, d=4, seed=3)
        spec = NoiseSpec("f_mixed", seed=21)
        a = inject_noise(table, spec)
        b = inject_noise(table, spec)
        assert np.array_equal(a.x, b.x)

    def test_drop_fraction_bounds(self):
        with pytest.raises(DataError):
            NoiseSpec("s1_marginal", drop_fraction=1.0)
