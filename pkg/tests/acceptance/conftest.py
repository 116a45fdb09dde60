import os
from tempfile import gettempdir

import pytest

from rfadvq.config import OUTPUT_ROOT_ENV
from rfadvq.config import parse
from rfadvq.harness import run_experiment


@pytest.fixture(scope='session')
def desk():
    """The configuration and the report of the desk-size experiment."""
    root = os.getenv(OUTPUT_ROOT_ENV) or gettempdir()
    cfg = parse('[experiment]\nseed = 7', {'experiment.output': os.path.join(root, 'rfadvq-acceptance')})
    return cfg, run_experiment(cfg)
