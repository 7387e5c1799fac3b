"""
色彩計算（CIE 等色関数、バンド分割、XYZ/sRGB 変換、スペクトルマップ合成）
"""
from src.spectral_color.cmf import (
    CMFTable, SPD, cmf_lookup, cmf_samples, spd_samples,
    load_cmf_table, load_spd, load_illuminant, equal_energy_spd,
)
from src.spectral_color.partition import (
    BandPartition, REAL8_CENTERS_NM, make_partition, make_explicit_partition,
    partition_from_config, partition_from_dict,
)
from src.spectral_color.conversion import (
    SRGB_FROM_XYZ, kappa_for_illuminant, xyz_from_spd, xyz_from_band_samples,
    rgb_from_xyz, band_coefficients, compose_rgb, illuminant_at_centers, BAND_COLOR_MODES, normalize_band_colors,
)
