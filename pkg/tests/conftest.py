import numpy as np
import pytest

import gapsgd as G
from gapsgd.harness import SyntheticParams, build_spec, generate_synthetic
from gapsgd.solvers import _spectral_bound


def hand_lasso():
    """A = [[1,2],[3,4]], y = (1,-1), squared loss, singleton L1 blocks."""
    ds = G.Dataset(np.array([[1.0, 2.0], [3.0, 4.0]]), np.array([1.0, -1.0]))
    return G.ProblemSpec(dataset=ds, partition=G.BlockPartition.singletons(2),
                         loss=G.LOSSES["squared"], reg=G.REGULARIZERS["l1"], lam=1.0)


def make_instance(seed, n=100, d=200, model="lasso", ratio=0.5, q=10,
                  sparsity=0.5, support=8, placement="random", noise=0.05,
                  scale=1.0, mu_p=0.0, reg="l1"):
    data = generate_synthetic(SyntheticParams(
        n=n, d=d, sparsity=sparsity, noise=noise, seed=seed, model=model,
        support_size=support, support_placement=placement, feature_scale=scale))
    return build_spec(data, model=model, lambda_ratio=ratio, q=q, mu_p=mu_p, reg=reg)


def tuned_eta(spec, factor=4.0):
    """Shared benchmark step size: 1 / (factor * spectral smoothness bound)."""
    return 1.0 / (factor * _spectral_bound(spec))


@pytest.fixture
def lasso_spec():
    return make_instance(seed=5)
