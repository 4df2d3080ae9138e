import numpy as np
import pytest

from delicoco import _pykernels
from delicoco.numkit import DATA_STREAM, SeededRng
from delicoco.objectives import centralized_optimum, gen_syn1, gen_syn2, make_objective

try:
    from delicoco import _kernels
except ImportError:  # extension not built
    _kernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
if _kernels is not None:
    BACKENDS.append(pytest.param(_kernels, id="cython"))


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def syn1_objective(seed=0, m=200, d=20, n=4, noise_var=0.05, l2=0.0):
    ds, theta = gen_syn1(SeededRng(seed).spawn(DATA_STREAM), m, d, noise_var)
    return make_objective(ds, n, l2), theta


def syn2_objective(seed=0, m=200, d=20, n=4, noise_var=0.05, l2=0.0):
    ds, theta = gen_syn2(SeededRng(seed).spawn(DATA_STREAM), m, d, noise_var)
    return make_objective(ds, n, l2), theta


@pytest.fixture(scope="session")
def desk_syn1():
    """SYN-1 at desk scale: m=200, d=20, n=4, with its centralized optimum."""
    obj, _ = syn1_objective()
    return obj, centralized_optimum(obj)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
