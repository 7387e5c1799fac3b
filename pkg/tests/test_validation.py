"""
検証モジュール（勾配検証スイート / 求積の収束）テスト
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.nn_core import GRADCHECK_TOL
from src.validation import gradcheck_cases, jittered_slab_errors, slab_quadrature_error, summarize_gradcheck


class TestGradcheckSuite:
    @pytest.fixture(scope="class")
    def reports(self):
        return gradcheck_cases(seed=0)

    def test_all_cases_pass(self, reports):
        failed = [r.summary() for r in reports if not r.passed]
        assert not failed, "\n".join(failed)

    def test_covers_every_layer_kind(self, reports):
        names = {r.name.split(".")[0] for r in reports}
        expected = {"dense", "conv2d", "relu", "sigmoid", "global_avg_pool", "downsample2", "upsample2",
                    "concat", "mse", "exclusive_cumsum", "attention_gate", "sa_block", "field", "quadrature"}
        assert expected <= names

    def test_summary(self, reports):
        s = summarize_gradcheck(reports)
        assert s["n_cases"] == len(reports)
        assert s["n_failed"] == 0
        assert s["worst_rel_error"] <= GRADCHECK_TOL

    def test_other_seed(self):
        assert summarize_gradcheck(gradcheck_cases(seed=1))["n_failed"] == 0


class TestQuadratureConvergence:
    def test_constant_slab_exact(self):
        # 区間内で密度一定なら区分定数の求積は厳密
        for n in (2, 16, 256):
            assert slab_quadrature_error(n) < 1e-12

    def test_thick_slab(self):
        assert slab_quadrature_error(64, sigma=20.0, depth=2.0) < 1e-12

    def test_jittered_errors_finite(self):
        errors = jittered_slab_errors((16, 64), n_rays=8)
        assert len(errors) == 2
        assert np.all(np.isfinite(errors))
