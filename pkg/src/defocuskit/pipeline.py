"""End-to-end flows shared by the CLI and the test suite: full training on
a corpus, and single-image defocus map estimation."""

from dataclasses import dataclass, field

import numpy as np

from .datagen import build_training_set, split_by_image
from .edges import canny, extract_patches
from .errors import InputError
from .image import value_channel
from .nn.network import DefocusModel
from .nn.training import (deep_encodings, full_encodings, stack_records,
                          train_classifier, train_stage1, train_stage2,
                          within_tolerance_accuracy)
from .propagate import add_random_seeds, matting_laplacian, solve_propagation
from .sparse_map import (BilateralParams, classify_to_sparse,
                         prob_joint_bilateral, rolling_guidance)

FEATURE_ROWS = ("dct", "gradient", "svd", "hand_crafted", "deep", "combined")


def part_encodings(model, data, parts):
    """Encodings with only the requested descriptor parts populated.

    parts is a subset of {"dct", "grad", "svd", "deep"}; constants are
    always set. Used for the per-feature accuracy comparison.
    """
    layout = model.layout
    enc = np.zeros((len(data), layout.encoded_dim))
    for scale in ("small", "large"):
        enc[:, layout.constant_index(scale)] = \
            data.hand_encoded[:, layout.constant_index(scale)]
    for part in parts:
        if part == "deep":
            continue
        for scale in ("small", "large"):
            sl = layout.part_slice(scale, part)
            enc[:, sl] = data.hand_encoded[:, sl]
    if "deep" in parts:
        deep_enc = deep_encodings(model, data)
        for scale in ("small", "large"):
            sl = layout.deep_slice(scale)
            enc[:, sl] = deep_enc[:, sl]
    return enc


@dataclass
class TrainResult:
    model: DefocusModel
    curves: dict
    accuracies: dict            # within-tolerance accuracy per feature row
    n_train: int
    n_test: int
    test_data: object = None
    test_records: list = field(default_factory=list)


def train_full(images, cfg, rng, feature_table=False, tolerance=None):
    """Corpus -> trained model (+ optional per-feature accuracy table).

    The main model follows the two-stage schedule; its stage-1 snapshot is
    evaluated as the deep-only row. Hand-crafted rows train their own
    classifier on the same split.
    """
    tolerance = cfg.sigma_inter if tolerance is None else tolerance
    records = build_training_set(images, cfg, rng.child("datagen"))
    if not records:
        raise InputError("no usable edges found in the training images")
    train_recs, test_recs = split_by_image(
        records, cfg.holdout_fraction, rng.child("split").generator)
    if not train_recs or not test_recs:
        raise InputError("corpus too small for a train/holdout split")

    model = DefocusModel(cfg).init_params(rng.child("init"))
    data_train = stack_records(train_recs, model)
    data_test = stack_records(test_recs, model)

    gen = rng.child("train").generator
    curves = {}
    accuracies = {}

    curves["stage1"] = train_stage1(model, data_train, cfg, gen)
    accuracies["deep"] = within_tolerance_accuracy(
        model, deep_encodings(model, data_test), data_test, tolerance)
    curves["stage2"] = train_stage2(model, data_train, cfg, gen)
    accuracies["combined"] = within_tolerance_accuracy(
        model, full_encodings(model, data_test), data_test, tolerance)

    if feature_table:
        single = {"dct": ("dct",), "gradient": ("grad",), "svd": ("svd",),
                  "hand_crafted": ("dct", "grad", "svd")}
        for row, parts in single.items():
            aux = DefocusModel(cfg).init_params(rng.child(f"init-{row}"))
            aux_gen = rng.child(f"train-{row}").generator
            enc_train = part_encodings(aux, data_train, parts)
            curves[row] = train_classifier(aux, enc_train, data_train.labels0,
                                           cfg, aux_gen, cfg.aux_epochs,
                                           cfg.learning_rate, row, calibrate=True)
            accuracies[row] = within_tolerance_accuracy(
                aux, part_encodings(aux, data_test, parts), data_test, tolerance)

    return TrainResult(model=model, curves=curves, accuracies=accuracies,
                       n_train=len(train_recs), n_test=len(test_recs),
                       test_data=data_test, test_records=test_recs)


@dataclass
class EstimateResult:
    edges: object
    samples: list
    sparse: object      # SparseDefocusMap after classification (+ seeds)
    filtered: object    # after the confidence-weighted bilateral filter
    guidance: np.ndarray
    dense: np.ndarray


def estimate_maps(img, model, cfg, rng=None, seed_homogeneous=False, threads=1):
    """The full single-image pipeline: edges -> patches -> classify ->
    guidance -> bilateral filter -> matting propagation."""
    rgb = img.to_rgb()
    edges = canny(value_channel(rgb), cfg.canny_sigma, cfg.canny_low,
                  cfg.canny_high, cfg.canny_mid)
    samples = extract_patches(rgb, edges, cfg)
    if not samples:
        raise InputError("no edges found; cannot estimate a defocus map")
    smap = classify_to_sparse(model, samples, (rgb.height, rgb.width),
                              threads=threads)
    guidance = rolling_guidance(rgb, cfg.rgf_sigma_s, cfg.rgf_sigma_r,
                                cfg.rgf_iterations)
    if seed_homogeneous:
        if rng is None:
            raise InputError("homogeneous seeding needs an rng")
        smap = add_random_seeds(smap, edges, rgb, model, cfg,
                                rng.child("seeds"), threads=threads)
    filtered = prob_joint_bilateral(smap, guidance, BilateralParams.from_config(cfg))
    laplacian = matting_laplacian(guidance, cfg.matting_eps)
    dense = solve_propagation(laplacian, filtered, cfg)
    return EstimateResult(edges=edges, samples=samples, sparse=smap,
                          filtered=filtered, guidance=guidance, dense=dense)
