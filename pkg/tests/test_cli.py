"""
コマンドライン（cli / commands / config_loader）テスト
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pandas as pd
import pytest
import yaml

from src.cli import (
    EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION, build_parser, main, overrides_from_args, parse_sa_placement, run_guarded,
)
from src.commands import read_stack_dir
from src.config_loader import load_run_config
from src.dataset_io import load_dataset, sfm_read
from src.errors import InvalidArgument, NumericFailure, SingularSystem
from src.env_check import ENV_CMF_PATH
from src.nn_core import Tensor, tensor
from src.spectral_color import (
    band_coefficients, load_cmf_table, load_illuminant, make_partition, normalize_band_colors,
)
from src.spectral_color.cmf import DEFAULT_CMF_PATH

TINY_CONFIG = {
    "seed": 1,
    "spectral": {"layout": "uniform", "s_num": 4},
    "field": {"depth": 2, "width": 16, "skip_layer": 1, "bottleneck_width": 8,
              "num_freqs_position": 3, "num_freqs_direction": 1},
    "render": {"n_coarse": 8, "n_fine": 8, "batch_rays": 256},
    "fusion": {"base_channels": 4, "se_reduction": 2, "iterations": 2, "crop": 8},
    "train": {"iterations": 2, "batch_rays": 32, "log_every": 0, "eval_every": 0, "ckpt_every": 0,
              "eval_views": 1},
    "dataset": {"n_train": 3, "n_test": 1, "width": 12, "height": 12, "samples_per_ray": 32},
}


def write_config(path: Path, **sections) -> Path:
    cfg = {k: dict(v) if isinstance(v, dict) else v for k, v in TINY_CONFIG.items()}
    for name, values in sections.items():
        cfg.setdefault(name, {}).update(values)
    path.write_text(yaml.safe_dump(cfg, sort_keys=False), encoding="utf-8")
    return path


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """gen-synthetic → train-field → render-spectra を一度だけ通す"""
    root = tmp_path_factory.mktemp("cli")
    cfg = write_config(root / "tiny.yaml")
    data, field, spectra = root / "data", root / "field", root / "spectra"
    common = ["--config", str(cfg)]
    assert main(["gen-synthetic", *common, "--out", str(data)]) == EXIT_OK
    assert main(["train-field", *common, "--data", str(data), "--out", str(field)]) == EXIT_OK
    assert main(["render-spectra", *common, "--data", str(data), "--out", str(spectra),
                 "--checkpoint", str(field / "field_final.spnf")]) == EXIT_OK
    return {"root": root, "cfg": cfg, "data": data, "field": field, "spectra": spectra}


# ===========================================================
# 引数 / 設定 テスト
# ===========================================================

class TestArguments:
    def test_sa_placement(self):
        assert parse_sa_placement("E1,E2") == ["E1", "E2"]
        assert parse_sa_placement(" e1 , e3 ") == ["E1", "E3"]
        assert parse_sa_placement("none") == []

    def test_overrides(self):
        args = build_parser().parse_args(["train-field", "--snum", "8", "--lr", "1e-3", "--ncoarse", "32",
                                          "--lambda-rgb", "0.5", "--sa-placement", "none"])
        o = overrides_from_args(args)
        assert o["spectral.s_num"] == 8
        assert o["spectral.layout"] == "uniform"
        assert o["train.lr"] == 1e-3
        assert o["render.n_coarse"] == 32
        assert o["loss.lambda_rgb"] == 0.5
        assert o["fusion.sa_placement"] == []
        assert o["train.joint"] is None

    def test_unspecified_flags_keep_config(self, tmp_path):
        args = build_parser().parse_args(["gen-synthetic"])
        cfg = load_run_config(str(write_config(tmp_path / "c.yaml")), overrides_from_args(args))
        assert cfg.get_partition().s_num == 4
        assert cfg.section("train")["joint"] is False

    def test_derive_leaves_original(self, tmp_path):
        cfg = load_run_config(str(write_config(tmp_path / "c.yaml")))
        sub = cfg.derive({"spectral.s_num": 8})
        assert sub.get_partition().s_num == 8
        assert cfg.get_partition().s_num == 4

    def test_invalid_values(self, tmp_path):
        with pytest.raises(ValueError):
            load_run_config(str(write_config(tmp_path / "c.yaml")), {"loss.lambda_rgb": 0.0})
        with pytest.raises(ValueError):
            load_run_config(str(write_config(tmp_path / "d.yaml", fusion={"crop": 10})))

    def test_dtype_and_band_colors_validated(self, tmp_path):
        path = str(write_config(tmp_path / "c.yaml"))
        assert load_run_config(path).get_dtype() == "float64"
        assert load_run_config(path, {"train.dtype": "float32"}).get_dtype() == "float32"
        with pytest.raises(ValueError):
            load_run_config(path, {"train.dtype": "float16"})
        with pytest.raises(ValueError):
            load_run_config(path, {"dataset.band_colors": "abs"})

    def test_dtype_flag_sets_default(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", dataset={"n_train": 1, "width": 4, "height": 4, "samples_per_ray": 8})
        out = str(tmp_path / "d")
        assert main(["gen-synthetic", "--config", str(cfg), "--dtype", "float32", "--out", out]) == EXIT_OK
        assert tensor.DEFAULT_DTYPE is np.float32
        assert Tensor([1, 2]).data.dtype == np.float32

    def test_cmf_path_from_config(self, tmp_path, monkeypatch):
        monkeypatch.delenv(ENV_CMF_PATH, raising=False)
        table = np.loadtxt(DEFAULT_CMF_PATH, comments="#", ndmin=2)
        swapped = tmp_path / "swapped.txt"
        np.savetxt(swapped, table[:, [0, 3, 2, 1]])
        small = {"n_train": 1, "width": 4, "height": 4, "samples_per_ray": 8}
        base = write_config(tmp_path / "base.yaml", dataset=small)
        custom = write_config(tmp_path / "custom.yaml", dataset=small, spectral={"cmf_path": str(swapped)})
        assert main(["gen-synthetic", "--config", str(base), "--out", str(tmp_path / "a")]) == EXIT_OK
        assert main(["gen-synthetic", "--config", str(custom), "--out", str(tmp_path / "b")]) == EXIT_OK
        colors_a = yaml.safe_load((tmp_path / "a" / "manifest.yaml").read_text(encoding="utf-8"))["band_colors"]
        colors_b = yaml.safe_load((tmp_path / "b" / "manifest.yaml").read_text(encoding="utf-8"))["band_colors"]
        expected, _ = normalize_band_colors(band_coefficients(load_cmf_table(swapped), load_illuminant("D65"),
                                                              make_partition(4)))
        np.testing.assert_allclose(colors_b, expected, rtol=1e-12)
        assert not np.allclose(colors_a, colors_b)

    def test_missing_cmf_path(self, tmp_path, monkeypatch):
        monkeypatch.delenv(ENV_CMF_PATH, raising=False)
        cfg = write_config(tmp_path / "c.yaml", spectral={"cmf_path": str(tmp_path / "none.txt")})
        assert main(["gen-synthetic", "--config", str(cfg), "--out", str(tmp_path / "d")]) == EXIT_VALIDATION

    def test_shipped_configs_load(self):
        root = Path(__file__).parent.parent / "config"
        assert load_run_config(str(root / "default.yaml")).get_partition().s_num == 11
        desk = load_run_config(str(root / "desk.yaml"))
        assert desk.get_field_config().num_parameters() < 100_000


# ===========================================================
# 終了コード テスト
# ===========================================================

class TestExitCodes:
    def test_numeric_failure(self):
        def fail():
            raise SingularSystem("rank deficient")
        assert run_guarded(fail) == EXIT_NUMERIC

    def test_nan_loss_is_numeric(self):
        def fail():
            raise NumericFailure("nan")
        assert run_guarded(fail) == EXIT_NUMERIC

    def test_validation_error(self):
        def fail():
            raise InvalidArgument("bad")
        assert run_guarded(fail) == EXIT_VALIDATION

    def test_missing_config_file(self, tmp_path):
        assert main(["gen-synthetic", "--config", str(tmp_path / "none.yaml")]) == EXIT_VALIDATION

    def test_eval_missing_ground_truth(self, tmp_path):
        assert main(["eval", "--pred", str(tmp_path / "p"), "--gt", str(tmp_path / "g")]) == EXIT_VALIDATION

    def test_gradcheck_passes(self, tmp_path):
        cfg = write_config(tmp_path / "c.yaml", train={"dtype": "float32"})
        out = tmp_path / "out"
        assert main(["gradcheck", "--config", str(cfg), "--out", str(out)]) == EXIT_OK
        df = pd.read_csv(out / "gradcheck.csv")
        assert df["passed"].all()
        echo = yaml.safe_load((out / "config_echo.yaml").read_text(encoding="utf-8"))
        assert echo["seed"] == 1
        assert echo["command"] == "gradcheck"
        assert echo["dtype"] == "float64"


# ===========================================================
# パイプライン テスト
# ===========================================================

class TestPipeline:
    def test_dataset_and_echo(self, pipeline):
        ds = load_dataset(pipeline["data"])
        assert ds.partition.s_num == 4
        echo = yaml.safe_load((pipeline["data"] / "config_echo.yaml").read_text(encoding="utf-8"))
        assert echo["seed"] == 1
        assert echo["command"] == "gen_synthetic"

    def test_training_outputs(self, pipeline):
        assert (pipeline["field"] / "field_final.spnf").exists()
        log = pd.read_csv(pipeline["field"] / "training_log.csv")
        assert list(log["step"]) == [1, 2]

    def test_rendered_stacks(self, pipeline):
        stacks = read_stack_dir(pipeline["spectra"])
        ds = load_dataset(pipeline["data"])
        assert set(stacks) == {v.name for v in ds.test_views}
        stack = next(iter(stacks.values()))
        assert stack.shape == (12, 12, 4, 3)
        center = sfm_read(pipeline["spectra"] / next(iter(stacks)) / "band_01.sfm").band_center_nm
        assert center == pytest.approx(530.0)

    def test_eval_writes_csv(self, pipeline):
        out = pipeline["root"] / "eval"
        assert main(["eval", "--config", str(pipeline["cfg"]), "--pred", str(pipeline["spectra"]),
                     "--gt", str(pipeline["data"]), "--out", str(out), "--scene", "blobs"]) == EXIT_OK
        df = pd.read_csv(out / "metrics.csv")
        assert list(df.columns) == ["scene", "view", "psnr", "ssim", "l1"]
        assert df["view"].iloc[-1] == "mean"
        echo = yaml.safe_load((out / "config_echo.yaml").read_text(encoding="utf-8"))
        assert echo["seed"] == 1
        assert echo["command"] == "eval"

    def test_eval_ground_truth_against_itself(self, pipeline):
        out = pipeline["root"] / "self.csv"
        assert main(["eval", "--pred", str(pipeline["data"]), "--gt", str(pipeline["data"]),
                     "--out", str(out)]) == EXIT_OK
        df = pd.read_csv(out)
        assert np.all(df["psnr"] == 60.0)

    def test_eval_l1_raw(self, pipeline):
        scaled, raw = pipeline["root"] / "scaled.csv", pipeline["root"] / "raw.csv"
        args = ["eval", "--pred", str(pipeline["spectra"]), "--gt", str(pipeline["data"])]
        assert main([*args, "--out", str(scaled)]) == EXIT_OK
        assert main([*args, "--out", str(raw), "--l1-raw"]) == EXIT_OK
        ratio = pd.read_csv(scaled)["l1"] / pd.read_csv(raw)["l1"]
        np.testing.assert_allclose(ratio, 1000.0, rtol=1e-6)

    def test_fit_weights_and_fuse(self, pipeline):
        cfg, data, spectra = str(pipeline["cfg"]), str(pipeline["data"]), str(pipeline["spectra"])
        fit_dir = pipeline["root"] / "fit"
        fused = pipeline["root"] / "fused"
        assert main(["fit-weights", "--config", cfg, "--data", data, "--out", str(fit_dir)]) == EXIT_OK
        report = yaml.safe_load((fit_dir / "fit_report.yaml").read_text(encoding="utf-8"))
        assert report["residual_rms"] < 1e-5
        assert main(["fuse", "--config", cfg, "--model", str(fit_dir / "fusion_weights.txt"),
                     "--stacks", spectra, "--out", str(fused)]) == EXIT_OK
        assert len(list(fused.glob("*/rgb.sfm"))) == 1

    def test_train_fusion_and_fuse(self, pipeline):
        cfg, data = str(pipeline["cfg"]), str(pipeline["data"])
        out = pipeline["root"] / "saunet"
        assert main(["train-fusion", "--config", cfg, "--data", data, "--out", str(out)]) == EXIT_OK
        fused = pipeline["root"] / "fused_saunet"
        assert main(["fuse", "--config", cfg, "--model", str(out / "saunet_final.spnf"),
                     "--stacks", str(pipeline["spectra"]), "--out", str(fused)]) == EXIT_OK
        rgb = sfm_read(next(fused.glob("*/rgb.sfm"))).data
        assert rgb.shape == (12, 12, 3)

    def test_train_fusion_linear_kind(self, pipeline):
        cfg = write_config(pipeline["root"] / "linear.yaml", fusion={"kind": "linear"})
        out = pipeline["root"] / "linear"
        assert main(["train-fusion", "--config", str(cfg), "--data", str(pipeline["data"]),
                     "--out", str(out)]) == EXIT_OK
        assert (out / "fusion_weights.txt").exists()
        assert not (out / "saunet_final.spnf").exists()
        echo = yaml.safe_load((out / "config_echo.yaml").read_text(encoding="utf-8"))
        assert echo["kind"] == "linear"

    def test_train_band_mismatch(self, pipeline, tmp_path):
        code = main(["train-field", "--config", str(pipeline["cfg"]), "--data", str(pipeline["data"]),
                     "--snum", "5", "--out", str(tmp_path)])
        assert code == EXIT_VALIDATION


class TestIlluminantRecovery:
    def test_weights_follow_illuminant(self, tmp_path):
        """単位光源のバンドマップから推定した重みは D65 と強く相関する"""
        cfg = write_config(tmp_path / "c.yaml", spectral={"s_num": 11},
                           dataset={"illuminant_in_maps": False, "width": 8, "height": 8})
        data, fit = tmp_path / "data", tmp_path / "fit"
        assert main(["gen-synthetic", "--config", str(cfg), "--out", str(data)]) == EXIT_OK
        assert main(["fit-weights", "--config", str(cfg), "--data", str(data), "--out", str(fit)]) == EXIT_OK
        report = yaml.safe_load((fit / "fit_report.yaml").read_text(encoding="utf-8"))
        assert report["pearson_r"] >= 0.95
