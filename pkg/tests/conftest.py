import os

import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("qtomo", max_examples=40, deadline=None)
settings.load_profile("qtomo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tmp_cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("QTOMO_SEED", raising=False)
    return tmp_path


def pytest_report_header(config):
    from qtomo import BACKEND_NAME

    return f"qtomo kernel backend: {BACKEND_NAME} (QTOMO_PURE_PYTHON={os.environ.get('QTOMO_PURE_PYTHON', '')})"
