import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blobs(rng, n_per_class=30, n_classes=3, n_features=4, spread=0.3):
    """Well separated Gaussian blobs with distinct rows."""
    centers = rng.normal(scale=5.0, size=(n_classes, n_features))
    X = np.vstack([c + spread * rng.standard_normal((n_per_class, n_features)) for c in centers])
    y = np.repeat(np.arange(n_classes), n_per_class)
    return X, y


def random_tree(rng, n_features=6, max_depth=4, n_classes=3, leaf_prob=0.25):
    """Random tree with random splits, random covers and random leaf distributions."""
    from dentalfusion.learn import TreeModel

    feature, threshold, left, right, value, cover = [], [], [], [], [], []

    def grow(depth, n):
        node = len(feature)
        for arr in (feature, threshold, left, right, value, cover):
            arr.append(None)
        cover[node] = n
        if depth == max_depth or n < 2 or (depth > 0 and rng.random() < leaf_prob):
            feature[node], threshold[node], left[node], right[node] = -1, 0.0, -1, -1
            value[node] = rng.dirichlet(np.ones(n_classes))
            return node
        feature[node] = int(rng.integers(n_features))
        threshold[node] = float(rng.normal())
        n_left = int(rng.integers(1, n))
        left[node] = grow(depth + 1, n_left)
        right[node] = grow(depth + 1, n - n_left)
        # internal value: cover-weighted mean of the children, as a trained tree stores
        value[node] = (cover[left[node]] * value[left[node]] + cover[right[node]] * value[right[node]]) / n
        return node

    grow(0, int(rng.integers(20, 200)))
    return TreeModel(np.array(feature, dtype=np.int64), np.array(threshold), np.array(left, dtype=np.int64),
                     np.array(right, dtype=np.int64), np.vstack(value), np.array(cover, dtype=float),
                     n_features, n_classes, max_depth)
