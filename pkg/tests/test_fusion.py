"""
融合（fusion: 線形 / SAUNet）テスト
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.errors import BadDimensions, InvalidArgument, ShapeMismatch, SingularSystem
from src.fusion import (
    FusionModel, LinearFusionWeights, SAUNetConfig, attention_gate, fit_weights_least_squares, linear_fuse,
    load_fusion_model, make_saunet, read_weights_file, saunet_forward, save_fusion_model, se_scales,
    spectrum_attention, weights_vs_spd, write_weights_file,
)
from src.losses import rgb_loss
from src.nn_core import Tensor, adam_step, finite_diff_check
from src.spectral_color import compose_rgb, load_illuminant, make_partition, spd_samples


def random_stack(seed: int, h: int = 8, w: int = 8, s: int = 3) -> np.ndarray:
    return np.random.default_rng(seed).uniform(size=(h, w, s, 3))


def zero_params(net, prefix: str) -> None:
    for name in net.params:
        if name.startswith(prefix):
            net.params[name].data[:] = 0.0


# ===========================================================
# 線形融合 テスト
# ===========================================================

class TestLinearFuse:
    def test_ones_equals_compose(self):
        stack = random_stack(0)
        np.testing.assert_allclose(linear_fuse(stack, None, 0.7), compose_rgb(stack, 0.7))

    def test_single_band_doubled(self):
        stack = random_stack(1, s=1)
        np.testing.assert_allclose(linear_fuse(stack, [2.0], 1.0), 2.0 * stack[:, :, 0, :])

    def test_band_mismatch(self):
        with pytest.raises(ShapeMismatch):
            linear_fuse(random_stack(0), [1.0, 1.0])

    def test_per_channel_weights(self):
        stack = random_stack(2, s=2)
        w = np.array([[1.0, 0.0, 2.0], [0.5, 1.0, 0.0]])
        out = linear_fuse(stack, w)
        np.testing.assert_allclose(out[..., 0], stack[:, :, 0, 0] + 0.5 * stack[:, :, 1, 0])


class TestFitWeights:
    def test_exact_recovery_orthogonal_supports(self):
        stack = np.zeros((4, 4, 3, 3))
        rng = np.random.default_rng(3)
        stack[:2, :, 0, :] = rng.uniform(size=(2, 4, 3))
        stack[2:3, :, 1, :] = rng.uniform(size=(1, 4, 3))
        stack[3:, :, 2, :] = rng.uniform(size=(1, 4, 3))
        target = 2.0 * stack[:, :, 0, :]
        w = fit_weights_least_squares([stack], [target])
        np.testing.assert_allclose(w.weights, [2.0, 0.0, 0.0], atol=1e-6)

    def test_kappa_recovery(self):
        stacks = [random_stack(s, s=5) for s in range(3)]
        targets = [compose_rgb(st, 0.37) for st in stacks]
        w = fit_weights_least_squares(stacks, targets)
        np.testing.assert_allclose(w.weights, np.full(5, 0.37), rtol=1e-6)
        assert w.residual_rms < 1e-6

    def test_reproduces_targets(self):
        stacks = [random_stack(4, s=4)]
        true_w = np.array([0.2, 1.5, 0.7, 0.1])
        targets = [linear_fuse(stacks[0], true_w)]
        w = fit_weights_least_squares(stacks, targets)
        np.testing.assert_allclose(linear_fuse(stacks[0], w), targets[0], atol=1e-8)

    def test_per_channel_shape(self):
        stacks = [random_stack(5, s=4)]
        w = fit_weights_least_squares(stacks, [compose_rgb(stacks[0], 1.0)], per_channel=True)
        assert w.weights.shape == (4, 3)
        assert w.per_channel

    def test_singular_system(self):
        stack = np.zeros((4, 4, 3, 3))
        with pytest.raises(SingularSystem):
            fit_weights_least_squares([stack], [np.zeros((4, 4, 3))])

    def test_mismatched_lists(self):
        with pytest.raises(ShapeMismatch):
            fit_weights_least_squares([random_stack(0)], [])

    def test_correlation_with_illuminant(self):
        """単位照明のマップに照明を掛けて合成した RGB から、重みが照明の形を復元する"""
        p = make_partition(11)
        L = spd_samples(load_illuminant("D65"), p.centers)
        rng = np.random.default_rng(6)
        stacks = [rng.uniform(size=(8, 8, 11, 3)) for _ in range(3)]
        targets = [linear_fuse(st, L, 0.01) for st in stacks]
        w = fit_weights_least_squares(stacks, targets)
        assert weights_vs_spd(w, p, load_illuminant("D65")) >= 0.95

    def test_weights_file_round_trip(self, tmp_path):
        p = make_partition(4)
        w = LinearFusionWeights(np.array([0.25, 1.0, 2.5, 1e-7]), residual_rms=0.01)
        path = write_weights_file(tmp_path / "w.txt", w, p)
        back = read_weights_file(path)
        np.testing.assert_array_equal(back.weights, w.weights)
        assert path.read_text(encoding="utf-8").startswith("# center_nm w")

    def test_non_finite_weights(self):
        with pytest.raises(InvalidArgument):
            LinearFusionWeights(np.array([1.0, np.nan]))


# ===========================================================
# 注意ゲート / SA ブロック テスト
# ===========================================================

class TestAttentionGate:
    def _net(self):
        return make_saunet(SAUNetConfig(s_num=2, base_channels=4, sa_placement=("E1",), se_reduction=2), 0)

    def test_zero_weights_halves_skip(self):
        net = self._net()
        zero_params(net, "D1.ag.")
        skip = np.random.default_rng(0).normal(size=(1, 4, 4, 4))
        gate = np.random.default_rng(1).normal(size=(1, 8, 2, 2))
        out = attention_gate(skip, gate, net, "D1")
        np.testing.assert_allclose(out.data, skip / 2.0)

    def test_mask_range(self):
        net = self._net()
        rng = np.random.default_rng(2)
        skip = np.ones((1, 4, 4, 4))
        out = attention_gate(skip, rng.normal(size=(1, 8, 2, 2)) * 10, net, "D1").data
        assert out.min() > 0.0 and out.max() < 1.0

    def test_gate_size_mismatch(self):
        with pytest.raises(ShapeMismatch):
            attention_gate(np.zeros((1, 4, 4, 4)), np.zeros((1, 8, 4, 4)), self._net(), "D1")

    def test_gradcheck(self):
        net = self._net()
        rng = np.random.default_rng(3)
        skip = Tensor(rng.normal(size=(1, 4, 4, 4)), requires_grad=True)
        gate = Tensor(rng.normal(size=(1, 8, 2, 2)), requires_grad=True)
        P = rng.normal(size=(1, 4, 4, 4))
        for t in (skip, gate):
            report = finite_diff_check(lambda: (attention_gate(skip, gate, net, "D1") * P).sum(), t)
            assert report.passed, report.summary()


class TestSpectrumAttention:
    def _net(self):
        return make_saunet(SAUNetConfig(s_num=2, base_channels=4, sa_placement=("E1",), se_reduction=2), 0)

    def test_zero_convs_identity(self):
        net = self._net()
        for i in (1, 2, 3):
            net.params[f"E1.sa.c{i}.W"].data[:] = 0.0
        x = np.random.default_rng(0).normal(size=(2, 4, 4, 4))
        np.testing.assert_allclose(spectrum_attention(x, net, "E1").data, x)

    def test_symmetric_scales(self):
        net = self._net()
        net.params["E1.sa.se1.W"].data[:] = 0.3
        net.params["E1.sa.se2.W"].data[:] = -0.2
        zero_params(net, "E1.sa.se1.b")
        zero_params(net, "E1.sa.se2.b")
        y = np.full((1, 4, 3, 3), 0.8)
        s = se_scales(y, net, "E1").data
        np.testing.assert_allclose(s, np.full_like(s, s[0, 0]))

    def test_shape_preserved(self):
        for c in (4, 8):
            net = make_saunet(SAUNetConfig(s_num=1, base_channels=c, sa_placement=("E1",), se_reduction=4), 0)
            x = np.ones((1, c, 4, 4))
            assert spectrum_attention(x, net, "E1").shape == x.shape

    def test_se_reduction_must_divide(self):
        with pytest.raises(InvalidArgument):
            SAUNetConfig(s_num=2, base_channels=6, sa_placement=("E1",), se_reduction=4)


# ===========================================================
# SAUNet テスト
# ===========================================================

class TestSAUNet:
    def test_output_shape_and_range(self):
        net = make_saunet(SAUNetConfig(s_num=3, base_channels=4), 0)
        out = saunet_forward(random_stack(0, 8, 12), net).data
        assert out.shape == (8, 12, 3)
        assert out.min() > 0.0 and out.max() < 1.0

    def test_batched(self):
        net = make_saunet(SAUNetConfig(s_num=3, base_channels=4), 0)
        stack = np.stack([random_stack(1), random_stack(2)])
        assert saunet_forward(stack, net).shape == (2, 8, 8, 3)

    def test_bad_dimensions(self):
        net = make_saunet(SAUNetConfig(s_num=3, base_channels=4), 0)
        with pytest.raises(BadDimensions):
            saunet_forward(random_stack(0, 6, 8), net)

    def test_band_mismatch(self):
        net = make_saunet(SAUNetConfig(s_num=3, base_channels=4), 0)
        with pytest.raises(ShapeMismatch):
            saunet_forward(random_stack(0, s=4), net)

    def test_sa_placement_variants(self):
        counts = set()
        for placement in ((), ("E1",), ("E1", "E2"), ("E1", "E2", "E3")):
            net = make_saunet(SAUNetConfig(s_num=2, base_channels=4, sa_placement=placement, se_reduction=2), 0)
            assert saunet_forward(random_stack(0, s=2), net).shape == (8, 8, 3)
            counts.add(net.num_parameters())
        assert len(counts) == 4

    def test_without_attention_gates(self):
        net = make_saunet(SAUNetConfig(s_num=2, base_channels=4, attention_gates=False, se_reduction=2), 0)
        assert not any(".ag." in n for n in net.params)
        assert saunet_forward(random_stack(0, s=2), net).shape == (8, 8, 3)

    def test_loss_decreases(self):
        net = make_saunet(SAUNetConfig(s_num=2, base_channels=4, se_reduction=2), 0)
        stack = random_stack(3, s=2)
        target = np.random.default_rng(4).uniform(0.2, 0.8, size=(8, 8, 3))
        first = None
        for _ in range(40):
            loss = rgb_loss(saunet_forward(stack, net), target)
            first = loss.item() if first is None else first
            loss.backward()
            adam_step(net.params, 1e-2)
        assert rgb_loss(saunet_forward(stack, net), target).item() < first

    @pytest.mark.slow
    def test_overfit_single_example(self):
        net = make_saunet(SAUNetConfig(s_num=4, base_channels=16), 0)
        stack = random_stack(5, 32, 32, 4)
        target = linear_fuse(stack, None, 0.25)
        for _ in range(2000):
            loss = rgb_loss(saunet_forward(stack, net), target)
            loss.backward()
            adam_step(net.params, 1e-3)
        assert rgb_loss(saunet_forward(stack, net), target).item() < 1e-4


class TestFusionModel:
    def test_linear_default_weights(self):
        stack = random_stack(0)
        np.testing.assert_allclose(FusionModel.linear(kappa=0.5).fuse(stack), compose_rgb(stack, 0.5))

    def test_unknown_kind(self):
        with pytest.raises(InvalidArgument):
            FusionModel("cubic")

    def test_save_load(self, tmp_path):
        net = make_saunet(SAUNetConfig(s_num=3, base_channels=4, sa_placement=("E2",)), 7)
        model = FusionModel.saunet(net)
        path = save_fusion_model(tmp_path / "saunet.spnf", model)
        loaded = load_fusion_model(path)
        assert loaded.net.cfg == net.cfg
        stack = random_stack(1)
        np.testing.assert_array_equal(loaded.fuse(stack), model.fuse(stack))

    def test_linear_not_checkpointed(self, tmp_path):
        with pytest.raises(InvalidArgument):
            save_fusion_model(tmp_path / "x.spnf", FusionModel.linear())
