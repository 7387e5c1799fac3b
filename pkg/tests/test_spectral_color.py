"""
色彩計算（spectral_color）テスト
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.errors import DegenerateIlluminant, EmptyStack, InvalidArgument, OutOfRange
from src.spectral_color import (
    CMFTable, REAL8_CENTERS_NM, SPD, band_coefficients, cmf_lookup, compose_rgb, equal_energy_spd,
    kappa_for_illuminant, load_cmf_table, load_illuminant, make_explicit_partition, make_partition,
    normalize_band_colors, partition_from_config, partition_from_dict, rgb_from_xyz, xyz_from_band_samples,
    xyz_from_spd,
)

WL = np.arange(380.0, 785.0, 5.0)


def constant_table(fx: float, fy: float, fz: float) -> CMFTable:
    return CMFTable(WL, np.full_like(WL, fx), np.full_like(WL, fy), np.full_like(WL, fz))


def constant_spd(value: float) -> SPD:
    return SPD(WL, np.full_like(WL, value), name="const")


@pytest.fixture(scope="module")
def cie():
    return load_cmf_table()


@pytest.fixture(scope="module")
def d65():
    return load_illuminant("D65")


# ===========================================================
# 等色関数テーブル テスト
# ===========================================================

class TestCMF:
    def test_lookup_at_node(self, cie):
        i = 34
        assert cmf_lookup(cie, cie.wavelengths_nm[i]) == pytest.approx((cie.fx[i], cie.fy[i], cie.fz[i]))

    def test_lookup_midpoint(self, cie):
        mid = 0.5 * (cie.wavelengths_nm[10] + cie.wavelengths_nm[11])
        expected = [0.5 * (c[10] + c[11]) for c in (cie.fx, cie.fy, cie.fz)]
        assert cmf_lookup(cie, mid) == pytest.approx(tuple(expected))

    def test_out_of_range(self, cie):
        with pytest.raises(OutOfRange):
            cmf_lookup(cie, 300.0)

    def test_standard_observer_peak(self, cie):
        cie.check_observer()
        assert 550.0 <= cie.y_peak_nm <= 560.0

    def test_table_must_cover_visible(self):
        wl = np.arange(400.0, 700.0, 5.0)
        with pytest.raises(InvalidArgument):
            CMFTable(wl, np.ones_like(wl), np.ones_like(wl), np.ones_like(wl))

    def test_negative_spd_rejected(self):
        with pytest.raises(InvalidArgument):
            SPD(WL, np.full_like(WL, -1.0))


# ===========================================================
# バンド分割 テスト
# ===========================================================

class TestPartition:
    def test_eleven_bands(self):
        p = make_partition(11)
        assert p.delta_lambda_nm == pytest.approx(400.0 / 11)
        assert p.centers[5] == 580.0

    def test_single_band(self):
        p = make_partition(1)
        assert p.centers_nm == (580.0,)
        assert p.delta_lambda_nm == 400.0

    def test_zero_bands(self):
        with pytest.raises(InvalidArgument):
            make_partition(0)

    def test_inverted_range(self):
        with pytest.raises(InvalidArgument):
            make_partition(4, 780.0, 380.0)

    def test_real_device_layout(self):
        p = make_explicit_partition(REAL8_CENTERS_NM)
        assert p.s_num == 8
        assert p.explicit
        assert p.delta_lambda_nm == 50.0

    def test_from_config_real8(self):
        p = partition_from_config({"layout": "real8"})
        assert p.centers_nm == REAL8_CENTERS_NM

    def test_dict_round_trip(self):
        for p in (make_partition(7), make_explicit_partition([450.0, 550.0, 650.0])):
            assert partition_from_dict(p.to_dict()) == p


# ===========================================================
# κ / XYZ / RGB テスト
# ===========================================================

class TestConversion:
    def test_kappa_zero_spd(self, cie):
        with pytest.raises(DegenerateIlluminant):
            kappa_for_illuminant(cie, constant_spd(0.0), make_partition(4))

    def test_kappa_reciprocal(self):
        p = make_explicit_partition([580.0], delta_lambda_nm=1.0)
        assert kappa_for_illuminant(constant_table(0.0, 1.0, 0.0), constant_spd(2.0), p) == pytest.approx(0.5)

    def test_kappa_normalizes_y(self, cie, d65):
        p = make_partition(11)
        kappa = kappa_for_illuminant(cie, d65, p)
        assert xyz_from_spd(cie, d65, p, kappa)[1] == pytest.approx(1.0, abs=1e-12)

    def test_xyz_single_band(self):
        p = make_explicit_partition([580.0], delta_lambda_nm=1.0)
        xyz = xyz_from_spd(constant_table(0.2, 0.5, 0.1), constant_spd(1.0), p, 1.0)
        np.testing.assert_allclose(xyz, [0.2, 0.5, 0.1])

    def test_xyz_zero_and_linear(self, cie, d65):
        p = make_partition(8)
        np.testing.assert_array_equal(xyz_from_spd(cie, constant_spd(0.0), p, 1.0), np.zeros(3))
        np.testing.assert_allclose(xyz_from_spd(cie, d65.scaled(2.0), p, 0.1), 2.0 * xyz_from_spd(cie, d65, p, 0.1))

    def test_rgb_columns(self):
        np.testing.assert_allclose(rgb_from_xyz([1.0, 0.0, 0.0]), [3.133, -0.978, 0.072])
        np.testing.assert_allclose(rgb_from_xyz([1.0, 1.0, 1.0]), [1.027, 0.971, 1.248])
        np.testing.assert_array_equal(rgb_from_xyz([0.0, 0.0, 0.0]), np.zeros(3))


class TestBandCoefficients:
    def test_single_band_column(self):
        p = make_explicit_partition([580.0], delta_lambda_nm=1.0)
        w = band_coefficients(constant_table(1.0, 0.0, 0.0), constant_spd(1.0), p)
        np.testing.assert_allclose(w[0], [3.133, -0.978, 0.072])

    def test_dark_band_is_zero(self, cie):
        p = make_partition(4)
        power = np.where(WL < 480.0, 0.0, 1.0)
        w = band_coefficients(cie, SPD(WL, power), p)
        np.testing.assert_array_equal(w[0], np.zeros(3))

    def test_sum_matches_direct_path(self, cie, d65):
        p = make_partition(11)
        kappa = kappa_for_illuminant(cie, d65, p)
        composed = kappa * band_coefficients(cie, d65, p).sum(axis=0)
        direct = rgb_from_xyz(xyz_from_spd(cie, d65, p, kappa))
        np.testing.assert_allclose(composed, direct, rtol=1e-12)

    def test_signed_colors_keep_colorimetry(self, cie, d65):
        """符号付きバンド色 × 利得の合成 = 分光から XYZ 経由で求めた白の RGB"""
        p = make_partition(11)
        kappa = kappa_for_illuminant(cie, d65, p)
        coeffs = band_coefficients(cie, d65, p)
        colors, gain = normalize_band_colors(coeffs)
        assert colors.min() < 0.0
        assert np.abs(colors).max() == pytest.approx(1.0)
        composed = kappa * gain * colors.sum(axis=0)
        np.testing.assert_allclose(composed, kappa * coeffs.sum(axis=0), rtol=1e-12)
        np.testing.assert_allclose(composed, rgb_from_xyz(xyz_from_spd(cie, d65, p, kappa)), rtol=1e-9)

    def test_clipped_colors_in_unit_range(self, cie, d65):
        coeffs = band_coefficients(cie, d65, make_partition(11))
        colors, gain = normalize_band_colors(coeffs, "clipped")
        assert gain > 0
        assert colors.min() >= 0.0 and colors.max() == pytest.approx(1.0)
        # 負成分を切った分だけ白が測色値からずれる
        assert not np.allclose(gain * colors.sum(axis=0), coeffs.sum(axis=0))

    def test_unknown_color_mode(self, cie, d65):
        with pytest.raises(InvalidArgument):
            normalize_band_colors(band_coefficients(cie, d65, make_partition(4)), "abs")

    def test_vanishing_coefficients(self):
        with pytest.raises(DegenerateIlluminant):
            normalize_band_colors(np.zeros((4, 3)))


# ===========================================================
# compose_rgb テスト
# ===========================================================

class TestComposeRGB:
    def test_zero_stack(self):
        np.testing.assert_array_equal(compose_rgb(np.zeros((4, 4, 3, 3)), 1.0), np.zeros((4, 4, 3)))

    def test_one_band_identity(self):
        stack = np.random.default_rng(0).uniform(size=(5, 6, 1, 3))
        np.testing.assert_array_equal(compose_rgb(stack, 1.0), stack[:, :, 0, :])

    def test_empty_stack(self):
        with pytest.raises(EmptyStack):
            compose_rgb(np.zeros((2, 2, 0, 3)), 1.0)

    def test_matches_direct_path_per_pixel(self, cie):
        """画素ごとのランダム SPD: バンド係数で作ったスタックの合成 = XYZ 経由の直接計算"""
        p = make_partition(11)
        rng = np.random.default_rng(1)
        samples = rng.uniform(0.0, 2.0, size=(1000, p.s_num))
        kappa = kappa_for_illuminant(cie, equal_energy_spd(), p)
        coeffs = band_coefficients(cie, None, p)
        stack = samples[:, :, None] * coeffs[None, :, :]
        composed = compose_rgb(stack, kappa)
        direct = rgb_from_xyz(xyz_from_band_samples(cie, p, samples, kappa))
        np.testing.assert_allclose(composed, direct, rtol=1e-6, atol=1e-12)
