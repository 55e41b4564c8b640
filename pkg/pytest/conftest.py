#!/usr/bin/env python
# -*-coding:utf-8 -*-

import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import pytest  # noqa: E402

from kobayashipy import Cusp, MollifierKernel, Params  # noqa: E402


@pytest.fixture(scope="session")
def table():
    return Params.build_table("exp:10", 4, 512)


@pytest.fixture(scope="session")
def light_table():
    return Params.build_table("exp:10", 2, 512)


@pytest.fixture(scope="session")
def kernel():
    return MollifierKernel.default(64)


@pytest.fixture(scope="session")
def cusp_run(light_table, kernel):
    """Light table with its Levi constants filled, and the two summands."""
    return Cusp.build_summands(light_table, shell=(3, 2, 3, 2), directions=16, seed=1, kernel=kernel)
