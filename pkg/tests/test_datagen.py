import numpy as np
import pytest

from defocuskit.config import Config
from defocuskit.datagen import (BlurKernelSpec, blur_patch,
                                build_training_set, manifest_rows,
                                sigma_for_label, split_by_image)
from defocuskit.errors import InputError
from defocuskit.rng import Rng
from defocuskit import synth
from oracles import naive_convolve_valid

CFG = Config()


def test_sigma_ladder_endpoints_and_spacing():
    assert sigma_for_label(1, CFG) == 0.5
    assert sigma_for_label(2, CFG) == pytest.approx(0.65)
    assert sigma_for_label(11, CFG) == pytest.approx(2.0)
    sigmas = [sigma_for_label(l, CFG) for l in range(1, 12)]
    assert np.allclose(np.diff(sigmas), 0.15)


def test_sigma_label_out_of_range():
    with pytest.raises(InputError):
        sigma_for_label(0, CFG)
    with pytest.raises(InputError):
        sigma_for_label(12, CFG)


def test_kernel_spec_normalized_and_symmetric():
    for sigma in (0.5, 1.0, 2.0):
        spec = BlurKernelSpec.build(sigma)
        assert spec.radius == int(np.ceil(3 * sigma))
        assert abs(spec.kernel.sum() - 1.0) < 1e-12
        assert np.allclose(spec.kernel, spec.kernel[::-1, ::-1])
        assert np.allclose(spec.kernel, spec.kernel.T)


def test_blur_constant_patch_unchanged():
    out = blur_patch(np.full((21, 21), 0.37), 1.0)
    assert np.allclose(out, 0.37, atol=1e-12)


def test_blur_impulse_recovers_kernel():
    spec = BlurKernelSpec.build(1.0)
    size = 2 * spec.radius + 1
    src = np.zeros((size + 2 * spec.radius, size + 2 * spec.radius))
    src[size // 2 + spec.radius, size // 2 + spec.radius] = 1.0
    out = blur_patch(src, 1.0)
    assert out.shape == (size, size)
    assert np.abs(out - spec.kernel).max() < 1e-12


def test_blur_matches_naive_convolution_oracle():
    rng = np.random.default_rng(0)
    src = rng.random((25, 25))
    spec = BlurKernelSpec.build(1.0)
    out = blur_patch(src, 1.0)
    oracle = naive_convolve_valid(src, spec.kernel)
    assert out.shape == oracle.shape
    assert np.abs(out - oracle).max() < 1e-12


def test_blur_channels_independent():
    rng = np.random.default_rng(1)
    src = rng.random((25, 25, 3))
    out = blur_patch(src, 0.8)
    for c in range(3):
        assert np.allclose(out[:, :, c], blur_patch(src[:, :, c], 0.8))


def test_blur_preserves_mean_under_wrap():
    # kernel normalization: circular convolution preserves the global mean
    from defocuskit.kernels import gaussian_taps
    from scipy.ndimage import convolve1d
    rng = np.random.default_rng(2)
    src = rng.random((24, 24))
    taps = gaussian_taps(1.3)
    out = convolve1d(convolve1d(src, taps, axis=0, mode="wrap"),
                     taps, axis=1, mode="wrap")
    assert abs(out.mean() - src.mean()) < 1e-10


def test_blur_monotone_variance_over_ladder():
    rng = np.random.default_rng(3)
    src = rng.random((15 + 24, 15 + 24))
    variances = []
    for label in range(1, 12):
        out = blur_patch(src, sigma_for_label(label, CFG))
        excess = (out.shape[0] - 15) // 2
        variances.append(out[excess:excess + 15, excess:excess + 15].var())
    assert all(b <= a + 1e-12 for a, b in zip(variances, variances[1:]))


def test_blur_rejects_small_source():
    with pytest.raises(InputError):
        blur_patch(np.zeros((5, 5)), 2.0)
    with pytest.raises(InputError):
        BlurKernelSpec.build(0.0)


# ---------------------------------------------------------------------------
# training set construction

def _tiny_corpus(seed=7, n=3, size=96):
    return synth.corpus(Rng(seed).child("c").generator, n, size)


def test_training_set_one_patch_per_label():
    cfg = Config()
    cfg.max_train_patches = 5
    recs = build_training_set(_tiny_corpus(), cfg, Rng(0))
    assert len(recs) == 5 * cfg.n_labels
    by_center = {}
    for r in recs:
        by_center.setdefault((r.image_id, r.x, r.y), []).append(r.label)
    for labels in by_center.values():
        assert sorted(labels) == list(range(1, 12))


def test_training_set_balanced_and_sized():
    cfg = Config()
    cfg.max_train_patches = 40
    recs = build_training_set(_tiny_corpus(), cfg, Rng(1))
    hist = np.bincount([r.label for r in recs], minlength=12)[1:]
    assert np.all(hist == hist[0])
    sizes = {"small": cfg.patch_small, "large": cfg.patch_large}
    for r in recs:
        assert r.patch.shape == (sizes[r.scale], sizes[r.scale], 3)
        assert r.hand.shape == (3 * (cfg.bands_small if r.scale == "small"
                                     else cfg.bands_large),)


def test_training_set_warns_when_corpus_too_small():
    cfg = Config()
    cfg.max_train_patches = 100000
    with pytest.warns(UserWarning):
        build_training_set(_tiny_corpus(n=1), cfg, Rng(2))


def test_training_set_deterministic_under_seed():
    cfg = Config()
    cfg.max_train_patches = 30
    a = build_training_set(_tiny_corpus(), cfg, Rng(3))
    b = build_training_set(_tiny_corpus(), cfg, Rng(3))
    assert len(a) == len(b)
    for ra, rb in zip(a, b):
        assert (ra.image_id, ra.x, ra.y, ra.label, ra.scale) == \
               (rb.image_id, rb.x, rb.y, rb.label, rb.scale)
        assert np.array_equal(ra.patch, rb.patch)


def test_split_by_image_separates_sources():
    cfg = Config()
    cfg.max_train_patches = 60
    recs = build_training_set(_tiny_corpus(n=5), cfg, Rng(4))
    train, test = split_by_image(recs, 0.2, Rng(5).generator)
    assert train and test
    assert {r.image_id for r in train}.isdisjoint({r.image_id for r in test})
    assert len(train) + len(test) == len(recs)


def test_manifest_rows_schema():
    cfg = Config()
    cfg.max_train_patches = 4
    recs = build_training_set(_tiny_corpus(), cfg, Rng(6))
    rows = manifest_rows(recs)
    assert len(rows) == len(recs)
    image, x, y, scale, label = rows[0]
    assert scale in ("small", "large") and 1 <= label <= 11
