"""
Pytest configuration and fixtures for agebif tests
"""
import json
import os

import django
import pytest

# Configure Django settings
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'tests.test_settings')

try:
    django.setup()
except Exception:
    pass

from apps.branches.points import BifurcationProblem  # noqa: E402
from apps.grid.meshes import BirthProfile  # noqa: E402
from apps.spectral.radius import normalize_birth  # noqa: E402

from .factories import (  # noqa: E402
    AgeGridFactory,
    DiscretizationFactory,
    ModelParamsFactory,
    RunDocumentFactory,
    SpatialGridFactory,
)


def make_disc(n_x=16, n_a=32, a_m=1.0):
    return DiscretizationFactory(space=SpatialGridFactory(n_x=n_x), ages=AgeGridFactory(n_a=n_a, a_m=a_m))


def make_problem(n_x=12, n_a=32, **params):
    disc = make_disc(n_x, n_a)
    b, _ = normalize_birth(disc, BirthProfile.constant(disc.ages))
    return BifurcationProblem(disc, b, ModelParamsFactory(**params))


@pytest.fixture
def disc():
    """Desk-scale discretization (n_x = 16, n_a = 32)"""
    return make_disc()


@pytest.fixture
def birth(disc):
    """Constant birth profile normalized on `disc`"""
    b, _ = normalize_birth(disc, BirthProfile.constant(disc.ages))
    return b


@pytest.fixture(scope='session')
def problem():
    """Shared problem with default coefficients; semi-trivial caches fill up across tests"""
    return make_problem()


@pytest.fixture(scope='session')
def problem_no_cross_diffusion():
    return make_problem(gamma=0.0)


@pytest.fixture
def run_document():
    return RunDocumentFactory()


@pytest.fixture
def config_file(tmp_path, run_document):
    """Write the run document to a JSON file and return its path"""
    path = tmp_path / 'run.json'
    path.write_text(json.dumps(run_document), encoding='utf-8')
    return path


@pytest.fixture
def out_dir(tmp_path):
    return tmp_path / 'out'
