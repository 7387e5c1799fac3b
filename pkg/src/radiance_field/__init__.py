"""
スペクトル放射場（位置エンコーディング + SpectralMLP）
"""
from src.radiance_field.encoding import EncodingConfig, encode, encode_position, encode_direction
from src.radiance_field.mlp import (
    SpectralMLPConfig, SpectralField, FieldSample, FieldOutput,
    make_field, field_eval, field_to_records, field_from_records, check_directions,
)
