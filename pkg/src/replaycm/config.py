"""Flat key = value experiment configuration.

One file drives a whole training run: model spec, loss weights,
optimizer hyperparameters, feature parameters and data paths.  Unknown
keys are an error.  When the decoder is enabled, the batch size drops
to 16 and the pair budget to 5e5 unless the file overrides them, so
the number of steps per epoch stays the same.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .errors import InvalidConfig
from .losses import MODES, LossWeights
from .model import ModelSpec


@dataclass
class ExperimentConfig:
    # experiment
    mode: str = "snn"
    input_kind: str = "logspec"
    pooling: str = "gap"
    with_decoder: bool = False
    stage_filters: tuple[int, ...] = (16, 32, 64, 128)
    stage_blocks: tuple[int, ...] = (3, 4, 6, 3)
    # optimizer
    lr: float = 3.95e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    batch_size: int = 32
    patience: int = 15
    num_samples: int = 1_000_000
    max_epochs: int = 100
    seed: int = 0
    # losses
    cl_gamma: float = 0.001
    rel_weight: float = 50.0
    margin: float = 0.5
    ce_pos_weight: float = 1.0 / 9.0
    centroid_update_rate: float = 0.5
    # features
    buffer_seconds: float = 8.5
    num_filters: int = 80
    lifter_len: int = 30
    # data
    train_manifest: str = ""
    dev_manifest: str = ""
    eval_manifest: str = ""
    features_dir: str = ""

    def __post_init__(self):
        self.mode = self.mode.lower()
        if self.mode not in MODES:
            raise InvalidConfig(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.lr <= 0:
            raise InvalidConfig(f"lr must be positive, got {self.lr}")
        if self.patience < 1:
            raise InvalidConfig(f"patience must be >= 1, got {self.patience}")
        if self.mode in ("snn", "snn_rel") and self.batch_size < 2:
            raise InvalidConfig("batch_size must be >= 2 in Siamese modes")
        if self.mode == "snn_rel" and not self.with_decoder:
            self.with_decoder = True

    @property
    def model_spec(self) -> ModelSpec:
        bins = self.num_filters if self.input_kind == "lfbank" else 401
        return ModelSpec(
            input_kind=self.input_kind,
            pooling=self.pooling,
            with_decoder=self.with_decoder,
            stage_filters=tuple(self.stage_filters),
            stage_blocks=tuple(self.stage_blocks),
            input_bins=bins,
        )

    @property
    def loss_weights(self) -> LossWeights:
        return LossWeights(
            cl_gamma=self.cl_gamma,
            rel_weight=self.rel_weight,
            margin=self.margin,
            ce_pos_weight=self.ce_pos_weight,
        )


_TUPLE_KEYS = {"stage_filters", "stage_blocks"}
_DECODER_DEFAULTS = {"batch_size": 16, "num_samples": 500_000}


def _parse_value(key: str, raw: str, target_type: type):
    raw = raw.strip()
    try:
        if key in _TUPLE_KEYS:
            return tuple(int(v) for v in raw.split(","))
        if target_type is bool:
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        if target_type is int:
            # Accept scientific notation (1e6) for counts.
            as_float = float(raw)
            as_int = int(as_float)
            if as_int != as_float:
                raise ValueError(raw)
            return as_int
        return target_type(raw)
    except ValueError as exc:
        raise InvalidConfig(f"invalid value for key {key!r}: {raw!r}") from exc


def parse_config(path: str | Path) -> ExperimentConfig:
    """Parse a key = value config file; '#' starts a comment line."""
    defaults = ExperimentConfig()
    types = {f.name: type(getattr(defaults, f.name)) for f in fields(ExperimentConfig)}
    values: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            key, sep, raw = stripped.partition("=")
            key = key.strip()
            if not sep:
                raise InvalidConfig(f"{path}:{line_no}: expected 'key = value', got {stripped!r}")
            if key not in types:
                raise InvalidConfig(f"{path}:{line_no}: unknown config key {key!r}")
            values[key] = _parse_value(key, raw, types[key])

    # Decoder runs trade batch size for the same step count per epoch.
    wants_decoder = values.get("with_decoder") or values.get("mode", "").lower() == "snn_rel"
    if wants_decoder:
        for key, default in _DECODER_DEFAULTS.items():
            values.setdefault(key, default)
    return ExperimentConfig(**values)
