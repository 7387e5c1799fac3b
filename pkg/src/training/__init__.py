"""
学習ループ（フィールド / SAUNet / 同時学習）
"""
from src.training.state import adam_to_records, adam_from_records, decayed_lr
from src.training.field import FieldTrainConfig, FieldTrainer, RayPool, load_fields
from src.training.fusion import FusionTrainConfig, FusionTrainer, random_crop
from src.training.joint import JointTrainer
