"""Thin 34-layer pre-activation ResNet for replay-attack detection.

The network maps a single-channel [bins x frames] feature matrix to a
sigmoid spoofing score.  Residual blocks use full pre-activation
ordering (batchnorm -> ReLU -> conv, 3x3 kernels throughout); the
per-stage 2-D strides depend on the input feature kind.  The head pools
the last convolutional tensor globally (mean, or mean+variance), passes
it through a dense embedding layer with ReLU, and ends in a single
sigmoid output neuron.  An optional lightweight decoder reconstructs
the input feature for the reconstruction-loss training mode.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import InvalidConfig, InvalidInput
from .features import FEATURE_KINDS, KIND_LFBANK, FeatureMatrix

POOLING_GAP = "gap"
POOLING_GAVP = "gavp"

# Per-stage (freq, time) strides: stem conv then the four residual stages.
_STRIDES_WIDE = ((2, 2), (2, 2), (2, 2), (1, 1), (1, 1))
_STRIDES_LFBANK = ((2, 2), (1, 1), (1, 2), (2, 2), (2, 2))

_EMBED_DIM = {POOLING_GAP: 64, POOLING_GAVP: 32}

_DECODER_KERNELS = (32, 16, 8)

# Frequency bins implied by each feature kind at the default analysis setup.
_DEFAULT_BINS = {"logspec": 401, "gdgram": 401, KIND_LFBANK: 80}


@dataclass(frozen=True)
class ModelSpec:
    input_kind: str = "logspec"
    pooling: str = POOLING_GAP
    with_decoder: bool = False
    stage_filters: tuple[int, int, int, int] = (16, 32, 64, 128)
    stage_blocks: tuple[int, int, int, int] = (3, 4, 6, 3)
    input_bins: int = 0  # 0 derives the count from the input kind

    def __post_init__(self):
        if self.input_kind not in FEATURE_KINDS:
            raise InvalidConfig(f"unknown input kind {self.input_kind!r}")
        if self.pooling not in _EMBED_DIM:
            raise InvalidConfig(f"pooling must be gap or gavp, got {self.pooling!r}")
        if len(self.stage_filters) != 4 or len(self.stage_blocks) != 4:
            raise InvalidConfig("stage_filters and stage_blocks must have 4 entries")
        if any(f < 1 for f in self.stage_filters) or any(b < 1 for b in self.stage_blocks):
            raise InvalidConfig("stage filters and block counts must be >= 1")
        if self.input_bins == 0:
            object.__setattr__(self, "input_bins", _DEFAULT_BINS[self.input_kind])
        elif self.input_bins < 1:
            raise InvalidConfig(f"input_bins must be >= 1, got {self.input_bins}")

    @property
    def strides(self) -> tuple[tuple[int, int], ...]:
        return _STRIDES_LFBANK if self.input_kind == KIND_LFBANK else _STRIDES_WIDE

    @property
    def embedding_dim(self) -> int:
        return _EMBED_DIM[self.pooling]


def gap(conv_out: torch.Tensor) -> torch.Tensor:
    """Global average pooling: per-channel mean over both spatial dims."""
    return conv_out.mean(dim=(-2, -1))


def gavp(conv_out: torch.Tensor) -> torch.Tensor:
    """Global average + variance pooling (population variance), concatenated."""
    mean = conv_out.mean(dim=(-2, -1))
    var = conv_out.var(dim=(-2, -1), unbiased=False)
    return torch.cat([mean, var], dim=-1)


class PreActBlock(nn.Module):
    """Full pre-activation residual block: (BN -> ReLU -> conv) twice."""

    def __init__(self, in_ch: int, out_ch: int, stride: tuple[int, int]):
        super().__init__()
        self.bn1 = nn.BatchNorm2d(in_ch)
        self.conv1 = nn.Conv2d(in_ch, out_ch, 3, stride=stride, padding=1, bias=False)
        self.bn2 = nn.BatchNorm2d(out_ch)
        self.conv2 = nn.Conv2d(out_ch, out_ch, 3, stride=1, padding=1, bias=False)
        if stride != (1, 1) or in_ch != out_ch:
            self.shortcut = nn.Conv2d(in_ch, out_ch, 1, stride=stride, bias=False)
        else:
            self.shortcut = None

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        pre = F.relu(self.bn1(x))
        residual = self.shortcut(pre) if self.shortcut is not None else x
        out = self.conv1(pre)
        out = self.conv2(F.relu(self.bn2(out)))
        return out + residual


class Decoder(nn.Module):
    """Reconstruction head: three 2x-upsampling transposed convolutions.

    The convolutional tensor is averaged over its channels first so the
    decoder stays a negligible fraction of the model's parameters; the
    final feature maps are averaged back to a single plane.
    """

    def __init__(self):
        super().__init__()
        chans = (1,) + _DECODER_KERNELS
        self.deconvs = nn.ModuleList(
            nn.ConvTranspose2d(chans[i], chans[i + 1], 3, stride=2, padding=1, output_padding=1)
            for i in range(3)
        )

    def forward(self, conv_out: torch.Tensor) -> torch.Tensor:
        x = conv_out.mean(dim=1, keepdim=True)
        for i, deconv in enumerate(self.deconvs):
            x = deconv(x)
            if i < len(self.deconvs) - 1:
                x = F.relu(x)
        return x.mean(dim=1)


class ReplayDetector(nn.Module):
    """The thin ResNet-34 classifier with pooling head and optional decoder."""

    def __init__(self, spec: ModelSpec):
        super().__init__()
        self.spec = spec
        strides = spec.strides
        filters = spec.stage_filters

        self.stem = nn.Conv2d(1, filters[0], 3, stride=strides[0], padding=1, bias=False)
        stages = []
        in_ch = filters[0]
        for stage, (out_ch, blocks) in enumerate(zip(filters, spec.stage_blocks)):
            layer = []
            for b in range(blocks):
                stride = strides[stage + 1] if b == 0 else (1, 1)
                layer.append(PreActBlock(in_ch, out_ch, stride))
                in_ch = out_ch
            stages.append(nn.Sequential(*layer))
        self.stages = nn.ModuleList(stages)
        self.bn_final = nn.BatchNorm2d(in_ch)

        pool_dim = in_ch if spec.pooling == POOLING_GAP else 2 * in_ch
        self.embed_dense = nn.Linear(pool_dim, spec.embedding_dim)
        self.out = nn.Linear(spec.embedding_dim, 1)
        self.decoder = Decoder() if spec.with_decoder else None

        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
                nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
                if m.bias is not None:
                    nn.init.zeros_(m.bias)
            elif isinstance(m, nn.Linear):
                nn.init.kaiming_normal_(m.weight, mode="fan_in", nonlinearity="relu")
                nn.init.zeros_(m.bias)
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def features(self, x: torch.Tensor) -> torch.Tensor:
        """Last convolutional tensor for input [B, 1, bins, frames]."""
        out = self.stem(x)
        for stage in self.stages:
            out = stage(out)
        return F.relu(self.bn_final(out))

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns (score [B], embedding [B, D], conv_out [B, C, H, W])."""
        conv_out = self.features(x)
        pooled = gap(conv_out) if self.spec.pooling == POOLING_GAP else gavp(conv_out)
        embedding = F.relu(self.embed_dense(pooled))
        score = torch.sigmoid(self.out(embedding).squeeze(-1))
        return score, embedding, conv_out

    def reconstruct(self, conv_out: torch.Tensor, target_shape: tuple[int, int]) -> torch.Tensor:
        return decode(self.decoder, conv_out, target_shape)


def build_model(spec: ModelSpec) -> ReplayDetector:
    return ReplayDetector(spec)


def decode(
    decoder: Decoder | None, conv_out: torch.Tensor, target_shape: tuple[int, int]
) -> torch.Tensor:
    """Run the decoder and crop / zero-pad to exactly ``target_shape``."""
    if decoder is None:
        raise InvalidConfig("model was built without a decoder")
    squeeze = conv_out.dim() == 3
    if squeeze:
        conv_out = conv_out.unsqueeze(0)
    recon = decoder(conv_out)
    bins, frames = target_shape
    recon = recon[:, :bins, :frames]
    pad_f = bins - recon.shape[1]
    pad_t = frames - recon.shape[2]
    if pad_f > 0 or pad_t > 0:
        recon = F.pad(recon, (0, max(pad_t, 0), 0, max(pad_f, 0)))
    return recon.squeeze(0) if squeeze else recon


def embed(model: ReplayDetector, feat: FeatureMatrix) -> tuple[np.ndarray, np.ndarray, float]:
    """Score a single feature matrix.

    Returns (embedding vector, conv output tensor, sigmoid spoof score).
    """
    if feat.kind != model.spec.input_kind:
        raise InvalidInput(
            f"model expects {model.spec.input_kind!r} input, got {feat.kind!r}"
        )
    if feat.bins != model.spec.input_bins:
        raise InvalidInput(
            f"model expects {model.spec.input_bins} frequency bins, got {feat.bins}"
        )
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            x = torch.as_tensor(feat.data, dtype=torch.float32).unsqueeze(0).unsqueeze(0)
            score, embedding, conv_out = model(x)
    finally:
        model.train(was_training)
    return (
        embedding.squeeze(0).numpy(),
        conv_out.squeeze(0).numpy(),
        float(score.item()),
    )


def count_parameters(model: ReplayDetector, include_decoder: bool = True) -> int:
    total = 0
    for name, p in model.named_parameters():
        if not p.requires_grad:
            continue
        if not include_decoder and name.startswith("decoder."):
            continue
        total += p.numel()
    return total


# --------------------------------------------------------------------------
# Checkpoint format: text header (model spec + tensor directory), raw data
# --------------------------------------------------------------------------

_MAGIC = "REPLAYCM-CKPT 1"
_DTYPES = {torch.float32: "f32", torch.int64: "i64"}
_DTYPES_BACK = {"f32": torch.float32, "i64": torch.int64}
_NP_DTYPES = {"f32": "<f4", "i64": "<i8"}


def save_checkpoint(path: str | Path, model: ReplayDetector) -> None:
    """Serialize the model spec and all named tensors, bit-exactly."""
    spec = model.spec
    state = model.state_dict()
    lines = [
        _MAGIC,
        f"input_kind = {spec.input_kind}",
        f"pooling = {spec.pooling}",
        f"with_decoder = {int(spec.with_decoder)}",
        f"stage_filters = {','.join(str(f) for f in spec.stage_filters)}",
        f"stage_blocks = {','.join(str(b) for b in spec.stage_blocks)}",
        f"input_bins = {spec.input_bins}",
        f"tensors = {len(state)}",
    ]
    for name, tensor in state.items():
        if tensor.dtype not in _DTYPES:
            raise InvalidConfig(f"unsupported tensor dtype {tensor.dtype} for {name}")
        dims = " ".join(str(d) for d in tensor.shape)
        lines.append(f"{name} {_DTYPES[tensor.dtype]} {dims}".rstrip())
    lines.append("DATA")
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for tensor in state.values():
            fh.write(tensor.detach().contiguous().numpy().tobytes())


def load_checkpoint(path: str | Path) -> ReplayDetector:
    with open(path, "rb") as fh:
        raw = fh.read()
    marker = raw.find(b"DATA\n")
    if not raw.startswith(_MAGIC.encode()) or marker < 0:
        raise InvalidInput(f"{path}: not a valid checkpoint file")
    header = raw[:marker].decode("utf-8").splitlines()
    blob = raw[marker + len(b"DATA\n") :]

    fields = {}
    directory = []
    n_tensors = None
    for line in header[1:]:
        if n_tensors is None:
            key, _, value = line.partition(" = ")
            fields[key] = value
            if key == "tensors":
                n_tensors = int(value)
        else:
            parts = line.split()
            directory.append((parts[0], parts[1], tuple(int(d) for d in parts[2:])))
    if n_tensors is None or len(directory) != n_tensors:
        raise InvalidInput(f"{path}: corrupt checkpoint tensor directory")

    spec = ModelSpec(
        input_kind=fields["input_kind"],
        pooling=fields["pooling"],
        with_decoder=bool(int(fields["with_decoder"])),
        stage_filters=tuple(int(f) for f in fields["stage_filters"].split(",")),
        stage_blocks=tuple(int(b) for b in fields["stage_blocks"].split(",")),
        input_bins=int(fields["input_bins"]),
    )
    model = ReplayDetector(spec)

    state = {}
    offset = 0
    for name, dtype, shape in directory:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * np.dtype(_NP_DTYPES[dtype]).itemsize
        chunk = blob[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise InvalidInput(f"{path}: truncated checkpoint data for {name}")
        offset += nbytes
        arr = np.frombuffer(chunk, dtype=_NP_DTYPES[dtype]).reshape(shape).copy()
        state[name] = torch.from_numpy(arr).to(_DTYPES_BACK[dtype])
    model.load_state_dict(state)
    model.eval()
    return model
