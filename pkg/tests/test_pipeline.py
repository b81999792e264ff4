import numpy as np
import pytest

from defocuskit.config import Config
from defocuskit.datagen import build_training_set, split_by_image
from defocuskit.errors import InputError
from defocuskit.nn.network import DefocusModel
from defocuskit.nn.training import stack_records, train_stage1
from defocuskit.pipeline import estimate_maps, part_encodings, train_full
from defocuskit.rng import Rng
from defocuskit.sparse_map import encode_samples
from defocuskit import synth


def micro_cfg():
    cfg = Config()
    cfg.max_train_patches = 60
    cfg.stage1_epochs = 2
    cfg.stage2_epochs = 3
    cfg.aux_epochs = 3
    cfg.demo_images = 3
    cfg.demo_image_size = 96
    return cfg


@pytest.fixture(scope="module")
def micro_data():
    cfg = micro_cfg()
    images = synth.corpus(Rng(9).child("c").generator, 3, 96)
    records = build_training_set(images, cfg, Rng(9).child("d"))
    return cfg, images, records


def test_training_bit_reproducible(micro_data):
    cfg, _, records = micro_data
    params = []
    for _ in range(2):
        model = DefocusModel(cfg).init_params(Rng(4))
        data = stack_records(records, model)
        train_stage1(model, data, cfg, Rng(5).generator, epochs=1)
        params.append([arr.copy() for _, _, _, arr in model.param_arrays()])
    for a, b in zip(*params):
        assert np.array_equal(a, b)


def test_part_encodings_mask_slots(micro_data):
    cfg, _, records = micro_data
    model = DefocusModel(cfg).init_params(Rng(6))
    data = stack_records(records[:40], model)
    layout = model.layout

    enc = part_encodings(model, data, ("grad",))
    for scale in ("small", "large"):
        grad = layout.part_slice(scale, "grad")
        dct = layout.part_slice(scale, "dct")
        deep = layout.deep_slice(scale)
        assert np.array_equal(enc[:, grad], data.hand_encoded[:, grad])
        assert not enc[:, dct].any()
        assert not enc[:, deep].any()
    # constants preserved for every row
    consts = enc[:, layout.constant_index("small")] + enc[:, layout.constant_index("large")]
    assert np.all(consts == 1.0)

    enc_deep = part_encodings(model, data, ("deep",))
    nonzero_deep = (np.abs(enc_deep[:, layout.deep_slice("small")]).sum()
                    + np.abs(enc_deep[:, layout.deep_slice("large")]).sum())
    assert nonzero_deep > 0


def test_combined_train_returns_both_curves(micro_data):
    from defocuskit.nn.training import train
    cfg, _, records = micro_data
    model = DefocusModel(cfg).init_params(Rng(10))
    data = stack_records(records, model)
    curves = train(model, data, cfg, Rng(11))
    assert set(curves) == {"stage1", "stage2"}
    assert len(curves["stage1"]) == cfg.stage1_epochs
    assert len(curves["stage2"]) == cfg.stage2_epochs
    assert all(np.isfinite(l) for _, l, _ in curves["stage1"] + curves["stage2"])


def test_train_full_runs_and_reports(micro_data):
    cfg, images, _ = micro_data
    result = train_full(images, cfg, Rng(9), feature_table=False)
    assert set(result.accuracies) == {"deep", "combined"}
    assert 0.0 <= result.accuracies["combined"] <= 1.0
    assert result.n_train > 0 and result.n_test > 0
    assert len(result.curves["stage1"]) == cfg.stage1_epochs
    assert len(result.curves["stage2"]) == cfg.stage2_epochs


def test_train_full_needs_images():
    cfg = micro_cfg()
    flat = synth.Image(np.full((64, 64, 3), 0.5))
    with pytest.raises(InputError):
        train_full([flat], cfg, Rng(1))


def test_estimate_requires_rng_for_seeding(micro_data):
    cfg, images, _ = micro_data
    model = DefocusModel(cfg).init_params(Rng(7))
    with pytest.raises(InputError):
        estimate_maps(images[0], model, cfg, seed_homogeneous=True)


def test_encode_samples_thread_count_invariant(micro_data):
    cfg, images, _ = micro_data
    from defocuskit.edges import canny, extract_patches
    from defocuskit.image import value_channel

    model = DefocusModel(cfg).init_params(Rng(8))
    img = images[0]
    em = canny(value_channel(img).data, cfg.canny_sigma, cfg.canny_low,
               cfg.canny_high)
    samples = extract_patches(img, em, cfg)[:40]
    assert samples
    one = encode_samples(model, samples, threads=1)
    four = encode_samples(model, samples, threads=4)
    assert np.array_equal(one, four)
