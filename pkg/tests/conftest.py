from __future__ import annotations

import pytest

from mockcorpus import build_fixture


@pytest.fixture
def env(tmp_path):
    return build_fixture(tmp_path)
