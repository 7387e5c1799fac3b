"""
共通フィクスチャと --runslow オプション
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.nn_core import set_default_dtype


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="長時間の受け入れ実験も実行する")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 長時間テスト（--runslow で実行）")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="--runslow で実行")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def float64_default():
    """テストごとに既定 dtype を float64 に戻す"""
    set_default_dtype(np.float64)
    yield
    set_default_dtype(np.float64)


@pytest.fixture(scope="session")
def tiny_manifest(tmp_path_factory):
    """4ビュー（train 3 / test 1）8x8、s_num=4 の小さな合成データセット"""
    from src.dataset_io import ViewLayout, default_scene, gen_synthetic
    from src.spectral_color import load_illuminant, make_partition

    layout = ViewLayout(n_train=3, n_test=1, width=8, height=8)
    return gen_synthetic(tmp_path_factory.mktemp("tiny"), default_scene(), make_partition(4),
                         load_illuminant("D65"), 0, views=layout, samples_per_ray=64)
