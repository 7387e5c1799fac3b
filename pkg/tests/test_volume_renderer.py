"""
体積レンダリング（volume_renderer）テスト
"""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
import pytest

from src.errors import InvalidArgument, OutOfBounds, ShapeMismatch
from src.dataset_io import default_scene, oracle_render_rays
from src.radiance_field import EncodingConfig, SpectralMLPConfig, make_field
from src.validation import jittered_slab_errors, slab_quadrature_error
from src.volume_renderer import (
    Camera, RenderConfig, SampleSet, all_pixels, break_ties, generate_rays, hierarchical_resample, look_at,
    per_ray_uniforms, quadrature, render_rays, render_spectrum_maps, sphere_poses, stratified_samples,
)

SMALL = SpectralMLPConfig(s_num=3, depth=2, width=16, skip_layer=1, bottleneck_width=8,
                          encoding=EncodingConfig(3, 1))


def small_camera(size: int = 6) -> Camera:
    return Camera.from_fov(size, size, 40.0, look_at([0.0, -4.0, 0.0]), 2.0, 6.0)


# ===========================================================
# カメラ / レイ生成 テスト
# ===========================================================

class TestRays:
    def test_principal_axis(self):
        cam = Camera(9, 9, 10.0, 10.0, 4.5, 4.5, np.eye(4), 1.0, 5.0)
        rays = generate_rays(cam, [[4.0, 4.0]])
        np.testing.assert_allclose(rays.directions[0], [0.0, 0.0, -1.0], atol=1e-12)

    def test_translation_shifts_origins_only(self):
        pose = np.eye(4)
        pose[:3, 3] = [1.0, 2.0, 3.0]
        base = Camera(4, 4, 5.0, 5.0, 2.0, 2.0, np.eye(4), 1.0, 5.0)
        moved = Camera(4, 4, 5.0, 5.0, 2.0, 2.0, pose, 1.0, 5.0)
        a = generate_rays(base, all_pixels(base))
        b = generate_rays(moved, all_pixels(moved))
        np.testing.assert_allclose(a.directions, b.directions)
        np.testing.assert_allclose(b.origins, np.tile([1.0, 2.0, 3.0], (16, 1)))

    def test_unit_norm(self):
        cam = small_camera(8)
        rays = generate_rays(cam, all_pixels(cam))
        np.testing.assert_allclose(np.linalg.norm(rays.directions, axis=-1), 1.0, atol=1e-9)

    def test_out_of_bounds(self):
        with pytest.raises(OutOfBounds):
            generate_rays(small_camera(4), [[4.0, 0.0]])

    def test_sphere_poses_radius(self):
        for pose in sphere_poses(10, 4.0, seed=3):
            assert np.linalg.norm(pose[:3, 3]) == pytest.approx(4.0)

    def test_invalid_near_far(self):
        with pytest.raises(InvalidArgument):
            Camera(4, 4, 5.0, 5.0, 2.0, 2.0, np.eye(4), 3.0, 2.0)


# ===========================================================
# サンプリング テスト
# ===========================================================

class TestStratified:
    def test_midpoints(self):
        ts = stratified_samples(0.0, 1.0, 4, jitter=False)
        np.testing.assert_allclose(ts.t, [0.125, 0.375, 0.625, 0.875])

    def test_within_bins(self):
        for seed in range(5):
            ts = stratified_samples(2.0, 6.0, 16, seed=seed)
            k = np.floor((ts.t - 2.0) / 0.25)
            np.testing.assert_array_equal(k, np.arange(16))

    def test_same_seed(self):
        np.testing.assert_array_equal(stratified_samples(0, 1, 8, seed=3).t, stratified_samples(0, 1, 8, seed=3).t)

    def test_too_few(self):
        with pytest.raises(InvalidArgument):
            stratified_samples(0.0, 1.0, 1)

    def test_per_ray_uniforms_stable(self):
        a = per_ray_uniforms(0, 0, [3, 4, 5], 8)
        b = per_ray_uniforms(0, 0, [5], 8)
        np.testing.assert_array_equal(a[2], b[0])


class TestHierarchical:
    def test_single_bin(self):
        ts = stratified_samples(0.0, 1.0, 8, jitter=False)
        w = np.zeros(8)
        w[3] = 1.0
        fine = hierarchical_resample(ts, w, 64, seed=0)
        extra = np.setdiff1d(fine.t, ts.t)
        # PDF_FLOOR 分の確率で他の区間に落ちうるが、64 点ではほぼ全て区間 3 に入る
        inside = (extra >= 3 / 8) & (extra <= 4 / 8)
        assert inside.mean() > 0.95

    def test_single_bin_deterministic(self):
        ts = stratified_samples(0.0, 1.0, 8, jitter=False)
        w = np.zeros(8)
        w[5] = 1.0
        fine = hierarchical_resample(ts, w, 16, deterministic=True)
        extra = np.setdiff1d(fine.t, ts.t)
        assert np.all((extra >= 5 / 8) & (extra <= 6 / 8))

    def test_uniform_histogram(self):
        ts = stratified_samples(0.0, 1.0, 8, jitter=False)
        n_fine = 10_000
        fine = hierarchical_resample(ts, np.ones(8), n_fine, seed=0)
        counts = np.histogram(fine.t, bins=np.linspace(0.0, 1.0, 9))[0] - 1
        sigma = np.sqrt(n_fine * (1 / 8) * (7 / 8))
        assert np.all(np.abs(counts - n_fine / 8) < 3 * sigma)

    def test_ascending_within_bounds(self):
        rng = np.random.default_rng(0)
        ts = stratified_samples(2.0, 6.0, 16, rng=rng, n_rays=5)
        fine = hierarchical_resample(ts, rng.uniform(size=(5, 16)), 32, rng=rng)
        assert fine.t.shape == (5, 48)
        assert np.all(np.diff(fine.t, axis=-1) > 0)
        assert fine.t.min() >= 2.0 and fine.t.max() <= 6.0
        assert fine.provenance == "fine"

    def test_coinciding_samples_stay_strict(self):
        ts = stratified_samples(0.0, 1.0, 7, jitter=False)
        fine = hierarchical_resample(ts, np.ones(7), 7, deterministic=True)
        assert len(fine) == 14
        assert np.all(np.diff(fine.t) > 0)

    def test_break_ties(self):
        t = np.array([[0.0, 0.5, 0.5, 0.5, 1.0], [0.1, 0.2, 0.3, 0.4, 0.5]])
        out = break_ties(t)
        assert np.all(np.diff(out, axis=-1) > 0)
        np.testing.assert_allclose(out, t, atol=1e-15)
        np.testing.assert_array_equal(out[1], t[1])

    def test_stratified_uniforms_touching_one(self):
        ts = stratified_samples(0.0, 1.0, 4, uniforms=np.array([[1.0, 0.0, 1.0, 0.0]]), n_rays=1)
        assert np.all(np.diff(ts.t, axis=-1) > 0)

    def test_negative_weights(self):
        ts = stratified_samples(0.0, 1.0, 4, jitter=False)
        with pytest.raises(InvalidArgument):
            hierarchical_resample(ts, np.array([1.0, -1.0, 0.0, 0.0]), 4, seed=0)


# ===========================================================
# 求積 テスト
# ===========================================================

class TestQuadrature:
    def test_zero_density(self):
        ts = stratified_samples(0.0, 1.0, 8, jitter=False)
        values, weights = quadrature(np.zeros(8), np.ones((8, 2, 3)), ts)
        np.testing.assert_array_equal(values.data, np.zeros((2, 3)))
        np.testing.assert_array_equal(weights.data, np.zeros(8))

    def test_white_background(self):
        ts = stratified_samples(0.0, 1.0, 8, jitter=False)
        values, _ = quadrature(np.zeros(8), np.zeros((8, 1, 3)), ts, white_background=True)
        np.testing.assert_allclose(values.data, np.ones((1, 3)))

    def test_homogeneous_slab(self):
        assert slab_quadrature_error(256) < 1e-3

    def test_hand_two_samples(self):
        rad = np.zeros((2, 1, 3))
        rad[0] = 1.0
        rad[1] = 0.5
        values, _ = quadrature(np.array([1.0, 2.0]), rad, np.array([0.0, 0.5]), t_f=1.0)
        expected = (1 - np.exp(-0.5)) + np.exp(-0.5) * (1 - np.exp(-1.0)) * 0.5
        assert values.data[0, 0] == pytest.approx(expected)
        assert expected == pytest.approx(0.58518, abs=1e-5)

    def test_convergence_with_jitter(self):
        errors = jittered_slab_errors()
        for a, b in zip(errors, errors[1:]):
            assert b < a * 1.1

    def test_convergence_smooth_density(self):
        """ガウスブロブのシーン: 4096 点の中点則との差がサンプル数とともに減る"""
        scene = default_scene()
        cam = small_camera(8)
        rays = generate_rays(cam, all_pixels(cam))
        centers = np.array([450.0, 550.0, 650.0])
        reference = oracle_render_rays(scene, rays.origins, rays.directions, cam.near, cam.far, centers, 4096)
        assert reference.max() > 0.1
        rng = np.random.default_rng(0)
        errors = []
        for n in (32, 64, 128, 256, 512):
            ts = stratified_samples(cam.near, cam.far, n, rng=rng, n_rays=len(rays.origins))
            pts = rays.origins[:, None, :] + ts.t[..., None] * rays.directions[:, None, :]
            sigma, rho = scene.density_and_radiance(pts, centers)
            values, _ = quadrature(sigma, np.repeat(rho[..., None], 3, axis=-1), ts)
            errors.append(float(np.mean(np.abs(values.data[..., 0] - reference))))
        for a, b in zip(errors, errors[1:]):
            assert b < a * 1.1
        assert errors[-1] < errors[0] / 4
        assert errors[-1] < 1e-2

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            quadrature(np.zeros(4), np.zeros((5, 1, 3)), np.linspace(0, 1, 4), t_f=1.0)

    def test_bare_array_needs_far(self):
        with pytest.raises(ShapeMismatch):
            quadrature(np.zeros(4), np.zeros((4, 1, 3)), np.linspace(0, 1, 4))


# ===========================================================
# スペクトルマップ描画 テスト
# ===========================================================

class TestRenderSpectrumMaps:
    def _zero_density(self, seed=0):
        coarse, fine = make_field(SMALL, seed)
        for f in (coarse, fine):
            f.params["sigma.W"].data[:] = 0.0
            f.params["sigma.b"].data[:] = 0.0
        return coarse, fine

    def test_shape(self):
        coarse, fine = make_field(SMALL, 0)
        cam = small_camera(5)
        stack_c, stack_f = render_spectrum_maps(coarse, fine, cam, RenderConfig(8, 8, batch_rays=7))
        assert stack_c.shape == stack_f.shape == (5, 5, 3, 3)

    def test_zero_density_black_or_white(self):
        coarse, fine = self._zero_density()
        cam = small_camera(4)
        _, black = render_spectrum_maps(coarse, fine, cam, RenderConfig(8, 8))
        _, white = render_spectrum_maps(coarse, fine, cam, RenderConfig(8, 8, white_background=True))
        np.testing.assert_array_equal(black, 0.0)
        np.testing.assert_allclose(white, 1.0)

    def test_schedule_independent(self):
        coarse, fine = make_field(SMALL, 1)
        cam = small_camera(6)
        a = render_spectrum_maps(coarse, fine, cam, RenderConfig(8, 8, jitter=True, batch_rays=36))[1]
        b = render_spectrum_maps(coarse, fine, cam, RenderConfig(8, 8, jitter=True, batch_rays=5, workers=3))[1]
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)

    def test_render_rays_gradients_flow(self):
        coarse, fine = make_field(SMALL, 2)
        cam = small_camera(4)
        rays = generate_rays(cam, all_pixels(cam))
        res = render_rays(coarse, fine, rays.origins, rays.directions, cam.near, cam.far,
                          RenderConfig(8, 8, jitter=True), rng=np.random.default_rng(0), training=True)
        (res.coarse.sum() + res.fine.sum()).backward()
        assert coarse.params["radiance.W"].grad is not None
        assert fine.params["radiance.W"].grad is not None

    def test_jitter_without_rng_needs_ids(self):
        coarse, fine = make_field(SMALL, 0)
        with pytest.raises(InvalidArgument):
            render_rays(coarse, fine, np.zeros((1, 3)), np.array([[0.0, 0.0, 1.0]]), 2.0, 6.0,
                        RenderConfig(8, 8, jitter=True))

    def test_sample_set_ascending_check(self):
        with pytest.raises(InvalidArgument):
            SampleSet(np.array([0.5, 0.2]), 0.0, 1.0)
        with pytest.raises(InvalidArgument):
            SampleSet(np.array([0.2, 0.5, 0.5]), 0.0, 1.0)
