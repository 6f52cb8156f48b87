import numpy as np
import pytest

from vipcop.tables import Table


def make_gaussian_table(
    n: int, d: int = 10, sep: float = 1.0, seed: int = 0, class_count: int = 2
) -> Table:
    """Two (or more) spherical Gaussian classes with means at +/- sep * 1."""
    rng = np.random.default_rng(seed)
    per = n // class_count
    xs, ys = [], []
    for cls in range(class_count):
        mean = sep * (2 * cls - 1) * np.ones(d) if class_count == 2 else rng.normal(0, 3, d)
        xs.append(rng.normal(mean, 1.0, size=(per, d)))
        ys.append(np.full(per, cls))
    x = np.vstack(xs)
    y = np.concatenate(ys)
    order = rng.permutation(x.shape[0])
    return Table(x=x[order], y=y[order], class_count=class_count)


@pytest.fixture
def gaussian_table():
    return make_gaussian_table(200, d=4, seed=7)
