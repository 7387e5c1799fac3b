"""
損失（losses）と画質指標（metrics）テスト
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pandas as pd
import pytest

from src.errors import InvalidArgument, ShapeMismatch, TooSmall
from src.losses import (
    LossConfig, SpectralWeights, rgb_loss, spectral_loss, total_loss, update_ws, ws_from_psnr,
)
from src.metrics import (
    METRIC_COLUMNS, band_psnr_row, image_metrics, l1, metrics_table, per_band_psnr, psnr, read_metrics_csv,
    ssim, summarize, write_metrics_csv,
)
from src.nn_core import Tensor, finite_diff_check


# ===========================================================
# w_s テスト
# ===========================================================

class TestSpectralWeights:
    def test_equal_psnr_gives_two(self):
        np.testing.assert_allclose(ws_from_psnr([30.0, 30.0, 30.0]), [2.0, 2.0, 2.0])

    def test_half_psnr_gives_four(self):
        w = ws_from_psnr([40.0, 20.0])
        assert w[0] == pytest.approx(2.0)
        assert w[1] == pytest.approx(4.0)

    def test_monotone(self):
        p = np.array([35.0, 30.0, 25.0, 20.0, 15.0])
        assert np.all(np.diff(ws_from_psnr(p)) > 0)

    def test_initial_state(self):
        np.testing.assert_array_equal(SpectralWeights(4).w_s, np.full(4, 2.0))
        np.testing.assert_array_equal(SpectralWeights(4, uniform=True).w_s, np.ones(4))

    def test_nonpositive_psnr(self):
        with pytest.raises(InvalidArgument):
            ws_from_psnr([10.0, 0.0])

    def test_update_ema(self):
        cfg = LossConfig(ema_decay=0.5)
        target = np.full((8, 2, 3), 0.5)
        pred = target.copy()
        pred[:, 0, :] += 0.1
        pred[:, 1, :] += 0.01
        state = update_ws(pred, target, SpectralWeights(2), cfg)
        np.testing.assert_allclose(state.p_lambda, [20.0, 40.0])
        assert state.n_updates == 1
        state = update_ws(target + 0.1, target, state, cfg)
        np.testing.assert_allclose(state.p_lambda, [20.0, 30.0])

    def test_update_perfect_band_clamped(self):
        target = np.zeros((4, 2, 3))
        pred = target.copy()
        pred[:, 0, :] = 0.1
        state = update_ws(pred, target, SpectralWeights(2), LossConfig())
        assert state.p_lambda[1] == pytest.approx(60.0)

    def test_records_round_trip(self):
        state = SpectralWeights(3, np.array([20.0, 25.0, 30.0]), n_updates=4)
        back = SpectralWeights.from_records(state.to_records())
        np.testing.assert_array_equal(back.p_lambda, state.p_lambda)
        assert back.n_updates == 4
        assert SpectralWeights.from_records(SpectralWeights(3).to_records()).p_lambda is None


# ===========================================================
# 損失 テスト
# ===========================================================

class TestLosses:
    def test_spectral_loss_hand_value(self):
        target = np.zeros((2, 2, 3))
        coarse = np.zeros((2, 2, 3))
        coarse[:, 0, 0] = 1.0
        fine = np.zeros((2, 2, 3))
        loss = spectral_loss(coarse, fine, target, np.array([3.0, 1.0]))
        assert loss.item() == pytest.approx(3.0)

    def test_spectral_loss_zero(self):
        t = np.random.default_rng(0).uniform(size=(5, 3, 3))
        assert spectral_loss(t, t, t, SpectralWeights(3)).item() == 0.0

    def test_spectral_loss_gradcheck(self):
        rng = np.random.default_rng(1)
        coarse = Tensor(rng.uniform(size=(4, 3, 3)), requires_grad=True)
        fine = Tensor(rng.uniform(size=(4, 3, 3)), requires_grad=True)
        target = rng.uniform(size=(4, 3, 3))
        w = np.array([2.0, 2.5, 4.0])
        for t in (coarse, fine):
            report = finite_diff_check(lambda: spectral_loss(coarse, fine, target, w), t)
            assert report.passed, report.summary()

    def test_spectral_loss_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            spectral_loss(np.zeros((2, 3, 3)), np.zeros((2, 3, 3)), np.zeros((2, 3, 3)), np.ones(2))

    def test_rgb_loss(self):
        assert rgb_loss(np.full((2, 3), 0.5), np.zeros((2, 3))).item() == pytest.approx(0.25)
        with pytest.raises(ShapeMismatch):
            rgb_loss(np.zeros((2, 3)), np.zeros((3, 3)))

    def test_total_loss_lambda(self):
        assert total_loss(1.0, 2.0) == pytest.approx(1.0 + 1.1 * 2.0)
        assert total_loss(1.0, 2.0, 0.0) == pytest.approx(1.0)
        with pytest.raises(InvalidArgument):
            total_loss(1.0, 2.0, -1.0)

    def test_loss_config_validation(self):
        with pytest.raises(InvalidArgument):
            LossConfig(lambda_rgb=0.0)
        with pytest.raises(InvalidArgument):
            LossConfig(ema_decay=1.0)


# ===========================================================
# 画質指標 テスト
# ===========================================================

class TestMetrics:
    def test_psnr_identical(self):
        img = np.random.default_rng(0).uniform(size=(8, 8, 3))
        assert psnr(img, img) == 60.0

    def test_psnr_hand_value(self):
        assert psnr(np.full((4, 4), 0.1), np.zeros((4, 4))) == pytest.approx(20.0)

    def test_psnr_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            psnr(np.zeros((4, 4)), np.zeros((4, 5)))

    def test_per_band(self):
        target = np.zeros((6, 2, 3))
        pred = target.copy()
        pred[:, 0, :] = 0.1
        np.testing.assert_allclose(per_band_psnr(pred, target), [20.0, 60.0])

    def test_ssim_identical(self):
        img = np.random.default_rng(1).uniform(size=(16, 16, 3))
        assert ssim(img, img) == pytest.approx(1.0)

    def test_ssim_decreases_with_noise(self):
        rng = np.random.default_rng(2)
        img = rng.uniform(size=(32, 32))
        assert ssim(img, np.clip(img + rng.normal(0, 0.2, img.shape), 0, 1)) < 0.9

    def test_ssim_too_small(self):
        with pytest.raises(TooSmall):
            ssim(np.zeros((10, 20)), np.zeros((10, 20)))

    def test_l1(self):
        assert l1(np.full(4, 0.25), np.zeros(4)) == pytest.approx(0.25)
        assert l1(np.full(4, 0.25), np.zeros(4), report_scale=True) == pytest.approx(250.0)

    def test_image_metrics_keys(self):
        img = np.full((12, 12, 3), 0.5)
        m = image_metrics(img, img)
        assert m == {"psnr": 60.0, "ssim": pytest.approx(1.0), "l1": 0.0}

    def test_band_psnr_row(self):
        row = band_psnr_row(np.zeros((3, 2, 3)), np.full((3, 2, 3), 0.1), [450.0, 650.0])
        assert set(row) == {"psnr_450", "psnr_650"}
        assert row["psnr_450"] == pytest.approx(20.0)


class TestMetricsTable:
    def _rows(self):
        return [
            {"scene": "ball", "view": "test_000", "psnr": 30.0, "ssim": 0.9, "l1": 12.0},
            {"scene": "ball", "view": "test_001", "psnr": 32.0, "ssim": 0.8, "l1": 10.0},
        ]

    def test_mean_row(self):
        df = metrics_table(self._rows())
        assert list(df.columns) == METRIC_COLUMNS
        mean = df[df["view"] == "mean"].iloc[0]
        assert mean["psnr"] == pytest.approx(31.0)
        assert mean["ssim"] == pytest.approx(0.85)

    def test_csv_round_trip(self, tmp_path):
        df = metrics_table(self._rows())
        back = read_metrics_csv(write_metrics_csv(df, tmp_path / "m.csv"))
        pd.testing.assert_frame_equal(back, df, check_dtype=False)

    def test_summarize_skips_mean(self):
        s = summarize(metrics_table(self._rows()), scene="ball")
        assert s == {"psnr": pytest.approx(31.0), "ssim": pytest.approx(0.85), "l1": pytest.approx(11.0)}
