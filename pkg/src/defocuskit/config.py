"""Pipeline configuration.

All tunable parameters live in one flat Config. Files use UTF-8 `key = value`
lines (blank lines and `#` comments allowed); unknown keys are rejected so
typos fail loudly. CLI `--set key=value` overrides take precedence over the
file, which takes precedence over defaults.
"""

import dataclasses
from dataclasses import dataclass

from .errors import InputError


@dataclass
class Config:
    seed: int = 7

    # patch extraction
    patch_small: int = 15
    patch_large: int = 27
    edge_stride: int = 3

    # Canny edge detection on the V channel
    canny_sigma: float = 1.0
    canny_low: float = 0.08
    canny_high: float = 0.2
    canny_mid: float = 0.0          # optional third threshold, 0 disables

    # hand-crafted feature dimensions per scale
    bands_small: int = 13
    bands_large: int = 25

    # blur label ladder
    sigma_min: float = 0.5
    sigma_inter: float = 0.15
    n_labels: int = 11

    # feature-extraction network
    conv1_filters: int = 10
    conv1_size: int = 5
    conv2_filters: int = 20
    conv2_size: int = 3
    pool_size: int = 3

    # classifier network
    fc1: int = 300
    fc2: int = 150
    dropout: float = 0.1

    # training
    learning_rate: float = 0.4
    fine_tune_lr: float = 0.1
    batch_size: int = 16
    stage1_epochs: int = 24
    stage2_epochs: int = 30
    aux_epochs: int = 30
    max_train_patches: int = 1500
    holdout_fraction: float = 0.2

    # sparse-map filtering
    bf_sigma_s: float = 100.0
    bf_sigma_r: float = 100.0
    bf_sigma_c: float = 1.0
    bf_radius: int = 15
    rgf_sigma_s: float = 3.0
    rgf_sigma_r: float = 0.1
    rgf_iterations: int = 4

    # propagation
    matting_eps: float = 1e-5
    gamma: float = 0.005
    cg_tol: float = 1e-6

    # segmentation
    alpha: float = 0.3

    # homogeneous-region seeding
    seed_r_min: int = 20
    seed_grid: int = 6
    seed_jitter: int = 2

    # demo corpus
    demo_images: int = 20
    demo_image_size: int = 128

    def sigma_max(self):
        return self.sigma_min + (self.n_labels - 1) * self.sigma_inter

    def validate(self):
        if self.patch_small >= self.patch_large:
            raise InputError("patch_small must be < patch_large")
        if self.patch_small % 2 == 0 or self.patch_large % 2 == 0:
            raise InputError("patch sizes must be odd")
        if self.n_labels < 2:
            raise InputError("n_labels must be >= 2")
        for key in ("canny_sigma", "sigma_min", "sigma_inter", "bf_sigma_s",
                    "bf_sigma_r", "bf_sigma_c", "rgf_sigma_s", "rgf_sigma_r",
                    "matting_eps", "gamma", "learning_rate", "fine_tune_lr"):
            if getattr(self, key) <= 0:
                raise InputError(f"{key} must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise InputError("alpha must be in [0, 1]")
        if not 0.0 < self.canny_low < self.canny_high:
            raise InputError("need 0 < canny_low < canny_high")
        if not 0.0 <= self.dropout < 1.0:
            raise InputError("dropout must be in [0, 1)")
        if self.bands_small > self.patch_small or self.bands_large > self.patch_large:
            raise InputError("feature dimensions cannot exceed the patch side")
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(Config)}


def _parse_value(name, text):
    field = _FIELDS[name]
    text = text.strip()
    try:
        if field.type in (int, "int"):
            return int(text)
        if field.type in (float, "float"):
            return float(text)
    except ValueError:
        raise InputError(f"config key {name}: cannot parse {text!r}") from None
    return text


def parse_config_text(text, base=None):
    cfg = dataclasses.replace(base) if base is not None else Config()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"config line {lineno}: expected key = value, got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise InputError(f"config line {lineno}: unknown key {key!r}")
        setattr(cfg, key, _parse_value(key, value))
    return cfg.validate()


def load_config(path, base=None):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text, base=base)


def apply_overrides(cfg, pairs):
    """Apply `key=value` strings (CLI --set) on top of cfg."""
    cfg = dataclasses.replace(cfg)
    for pair in pairs:
        if "=" not in pair:
            raise InputError(f"--set expects key=value, got {pair!r}")
        key, value = (part.strip() for part in pair.split("=", 1))
        if key not in _FIELDS:
            raise InputError(f"--set: unknown config key {key!r}")
        setattr(cfg, key, _parse_value(key, value))
    return cfg.validate()


def config_text(cfg):
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in dataclasses.fields(Config)]
    return "\n".join(lines) + "\n"


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_text(cfg))
