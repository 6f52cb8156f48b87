"""Training-table augmentation and noise-injection transforms.

All transforms are pure functions of (table, parameters): appended
rows/columns never disturb the originals, provenance flags mark exactly
what was injected, and every random draw comes from a generator seeded by
the parameter object, so equal inputs give equal outputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tables import DataError, Table

AUGMENT_KINDS = ("sample_affine", "feature_projection")
NOISE_KINDS = ("s1_marginal", "s2_gaussian", "f1_jitter", "f2_permute", "f_mixed")


@dataclass(frozen=True)
class AugmentSpec:
    """Parameters for growing a table along one axis.

    ``sample_affine`` mixes random row pairs up to ``target_n`` rows;
    ``feature_projection`` appends random projections up to ``target_d``
    columns.
    """

    kind: str
    target_n: int | None = None
    target_d: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in AUGMENT_KINDS:
            raise DataError(f"unknown augment kind {self.kind!r}")
        if self.kind == "sample_affine" and not self.target_n:
            raise DataError("sample_affine requires target_n")
        if self.kind == "feature_projection" and not self.target_d:
            raise DataError("feature_projection requires target_d")


@dataclass(frozen=True)
class NoiseSpec:
    """Parameters for the drop-and-inject noising schemes.

    Sample kinds replace a fraction of rows with synthetic rows (s1:
    per-feature marginal resampling, s2: one global Gaussian); feature
    kinds replace columns (f1: copy plus Gaussian jitter at 3x the source
    variance, f2: copy then permute, f_mixed: coin flip between the two).
    """

    kind: str
    drop_fraction: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise DataError(f"unknown noise kind {self.kind!r}")
        if not 0.0 < self.drop_fraction < 1.0:
            raise DataError("drop_fraction must lie in (0, 1)")


def mix_rows(x_k: np.ndarray, x_l: np.ndarray, alpha: float) -> np.ndarray:
    """Affine combination of two rows: alpha * x_k + (1 - alpha) * x_l."""
    return alpha * np.asarray(x_k, dtype=np.float64) + (1.0 - alpha) * np.asarray(
        x_l, dtype=np.float64
    )


def augment_samples(table: Table, spec: AugmentSpec) -> Table:
    """Append mixed rows until the table has ``spec.target_n`` rows.

    Each appended row combines two distinct original rows k != l with a
    Uniform(0,1) coefficient; its label follows the dominant partner
    (y_k when alpha <= 0.5, else y_l). Draw order from the seeded
    generator: partner indices k, partner offsets l, then coefficients.
    """
    if spec.kind != "sample_affine":
        raise DataError(f"augment_samples got spec kind {spec.kind!r}")
    n = table.n_rows
    if n < 2:
        raise DataError("sample augmentation needs at least 2 rows")
    if spec.target_n <= n:
        raise DataError(f"target_n={spec.target_n} must exceed current n={n}")

    m = spec.target_n - n
    rng = np.random.default_rng(spec.seed)
    ks = rng.integers(0, n, size=m)
    ls = rng.integers(0, n - 1, size=m)
    ls = np.where(ls >= ks, ls + 1, ls)  # uniform over l != k
    alphas = rng.random(m)

    new_x = alphas[:, None] * table.x[ks] + (1.0 - alphas)[:, None] * table.x[ls]
    new_y = np.where(alphas <= 0.5, table.y[ks], table.y[ls])
    return Table(
        x=np.vstack([table.x, new_x]),
        y=np.concatenate([table.y, new_y]),
        class_count=table.class_count,
        feature_names=table.feature_names,
        injected_rows=np.concatenate([table.row_flags(), np.ones(m, dtype=bool)]),
        injected_cols=table.injected_cols,
    )


def project_features(x: np.ndarray, projection: np.ndarray) -> np.ndarray:
    """New feature columns formed as the matrix product x @ projection."""
    return np.asarray(x, dtype=np.float64) @ np.asarray(projection, dtype=np.float64)


def augment_features(table: Table, spec: AugmentSpec) -> Table:
    """Append random-projection columns until the table has ``target_d``.

    The projection matrix has iid Normal(0, 1/d_new) entries where d_new
    is the number of appended columns.
    """
    if spec.kind != "feature_projection":
        raise DataError(f"augment_features got spec kind {spec.kind!r}")
    d = table.n_cols
    if d < 1:
        raise DataError("feature augmentation needs at least 1 column")
    if spec.target_d <= d:
        raise DataError(f"target_d={spec.target_d} must exceed current d={d}")

    d_new = spec.target_d - d
    rng = np.random.default_rng(spec.seed)
    projection = rng.normal(0.0, np.sqrt(1.0 / d_new), size=(d, d_new))
    new_cols = project_features(table.x, projection)

    names = None
    if table.feature_names is not None:
        names = table.feature_names + tuple(f"proj_{j}" for j in range(d_new))
    return Table(
        x=np.hstack([table.x, new_cols]),
        y=table.y,
        class_count=table.class_count,
        feature_names=names,
        injected_rows=table.injected_rows,
        injected_cols=np.concatenate([table.col_flags(), np.ones(d_new, dtype=bool)]),
    )


def _inject_rows(table: Table, spec: NoiseSpec, rng: np.random.Generator) -> Table:
    n, d = table.n_rows, table.n_cols
    if n < 2:
        raise DataError("sample noising needs at least 2 rows")
    n_drop = int(spec.drop_fraction * n)
    dropped = rng.choice(n, size=n_drop, replace=False)
    keep = np.setdiff1d(np.arange(n), dropped)
    xs, ys = table.x[keep], table.y[keep]
    n_keep = keep.size

    if spec.kind == "s1_marginal":
        # each cell resampled independently from its column's surviving values
        picks = rng.integers(0, n_keep, size=(n_drop, d))
        new_x = np.take_along_axis(xs, picks, axis=0)
    elif spec.kind == "s2_gaussian":
        if n_keep < 2:
            raise DataError("s2_gaussian needs at least 2 surviving rows")
        mean = xs.mean(axis=0)
        cov = np.atleast_2d(np.cov(xs, rowvar=False))
        cov = cov + (1e-6 * np.trace(cov) / d) * np.eye(d)
        new_x = rng.multivariate_normal(mean, cov, size=n_drop)
    else:
        raise DataError(f"{spec.kind!r} is not a sample-noise kind")

    new_y = ys[rng.integers(0, n_keep, size=n_drop)]
    keep_flags = table.row_flags()[keep]
    return Table(
        x=np.vstack([xs, new_x]),
        y=np.concatenate([ys, new_y]),
        class_count=table.class_count,
        feature_names=table.feature_names,
        injected_rows=np.concatenate([keep_flags, np.ones(n_drop, dtype=bool)]),
        injected_cols=table.injected_cols,
    )


def _inject_cols(table: Table, spec: NoiseSpec, rng: np.random.Generator) -> Table:
    n, d = table.n_rows, table.n_cols
    if d < 2:
        raise DataError("feature noising needs at least 2 columns")
    d_drop = int(spec.drop_fraction * d)
    dropped = rng.choice(d, size=d_drop, replace=False)
    keep = np.setdiff1d(np.arange(d), dropped)
    xs = table.x[:, keep]
    d_keep = keep.size

    new_cols = np.empty((n, d_drop))
    schemes: list[str] = []
    for j in range(d_drop):
        if spec.kind == "f_mixed":
            scheme = "f1_jitter" if rng.random() < 0.5 else "f2_permute"
        else:
            scheme = spec.kind
        schemes.append(scheme)
        src = xs[:, rng.integers(0, d_keep)]
        if scheme == "f1_jitter":
            sd = np.sqrt(3.0 * src.var(ddof=1))
            new_cols[:, j] = src + rng.normal(0.0, sd, size=n)
        elif scheme == "f2_permute":
            new_cols[:, j] = rng.permutation(src)
        else:
            raise DataError(f"{spec.kind!r} is not a feature-noise kind")

    names = None
    if table.feature_names is not None:
        kept_names = tuple(table.feature_names[i] for i in keep)
        names = kept_names + tuple(f"noise_{s[:2]}_{j}" for j, s in enumerate(schemes))
    keep_flags = table.col_flags()[keep]
    return Table(
        x=np.hstack([xs, new_cols]),
        y=table.y,
        class_count=table.class_count,
        feature_names=names,
        injected_rows=table.injected_rows,
        injected_cols=np.concatenate([keep_flags, np.ones(d_drop, dtype=bool)]),
    )


def inject_noise(table: Table, spec: NoiseSpec) -> Table:
    """Drop a fraction of rows (sample kinds) or columns (feature kinds)
    uniformly at random and append the same number of noisy replacements,
    so the table keeps its original shape. Injected items are flagged.
    """
    rng = np.random.default_rng(spec.seed)
    if spec.kind in ("s1_marginal", "s2_gaussian"):
        return _inject_rows(table, spec, rng)
    return _inject_cols(table, spec, rng)
