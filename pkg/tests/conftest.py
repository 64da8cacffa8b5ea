import math

import pytest

from volterra_clt.kernels import QuadratureConfig
from volterra_clt.paths import make_increment_stack
from volterra_clt.solver import VolterraScheme


@pytest.fixture(scope="session")
def quad():
    return QuadratureConfig()


def simulate_fluctuations(model, k1, k2, grid, x0, eps_values, paths, seed,
                          scheme_cfg=None):
    """Coupled ensembles on shared noise: returns (Z, {eps: Z_eps})."""
    scheme = VolterraScheme(k1, k2, grid, scheme_cfg)
    dB = make_increment_stack(seed, range(paths), grid, model.m)
    skeleton = scheme.deterministic(model, x0)
    limit = scheme.limit(model, x0, dB, x0_traj=skeleton)
    rescaled = {}
    for eps in eps_values:
        x_eps = scheme.perturbed(model, x0, eps, dB)
        rescaled[eps] = (x_eps - skeleton[None]) / math.sqrt(eps)
    return limit, rescaled
