"""WAV file and feature-cache I/O.

Audio input is RIFF/WAVE PCM16 mono.  FLAC is not decoded here; convert
to WAV first (e.g. ``ffmpeg -i x.flac x.wav``) if your corpus ships FLAC.

Feature cache files are one-per-utterance binaries: a 9-byte header
(kind tag byte, bins as u32 LE, frames as u32 LE) followed by the
row-major float32 feature matrix.
"""

from __future__ import annotations

import struct
import wave
from pathlib import Path

import numpy as np

from .errors import InvalidAudio, InvalidInput
from .features import AudioBuffer, FeatureMatrix

KIND_TAGS = {"logspec": 1, "lfbank": 2, "gdgram": 3}
TAG_KINDS = {v: k for k, v in KIND_TAGS.items()}

_HEADER = struct.Struct("<BII")


def read_wav(path: str | Path) -> AudioBuffer:
    """Load a PCM16 mono WAV file as float64 samples in [-1, 1)."""
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise InvalidAudio(f"{path}: not a readable WAV file ({exc})") from exc
    if channels != 1:
        raise InvalidAudio(f"{path}: expected mono audio, got {channels} channels")
    if width != 2:
        raise InvalidAudio(f"{path}: expected 16-bit PCM, got {8 * width}-bit")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    return AudioBuffer(samples, rate)


def write_wav(path: str | Path, audio: AudioBuffer) -> None:
    """Write float samples (clipped to [-1, 1]) as PCM16 mono WAV."""
    clipped = np.clip(audio.samples, -1.0, 1.0)
    pcm = (clipped * 32767.0).round().astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(audio.sample_rate)
        wf.writeframes(pcm.tobytes())


def write_feature_cache(path: str | Path, feat: FeatureMatrix) -> None:
    data = np.ascontiguousarray(feat.data, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(KIND_TAGS[feat.kind], feat.bins, feat.frames))
        fh.write(data.tobytes())


def read_feature_cache(path: str | Path) -> FeatureMatrix:
    with open(path, "rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) != _HEADER.size:
            raise InvalidInput(f"{path}: truncated feature cache header")
        tag, bins, frames = _HEADER.unpack(header)
        if tag not in TAG_KINDS:
            raise InvalidInput(f"{path}: unknown feature kind tag {tag}")
        raw = fh.read(4 * bins * frames)
    if len(raw) != 4 * bins * frames:
        raise InvalidInput(f"{path}: truncated feature cache payload")
    data = np.frombuffer(raw, dtype="<f4").reshape(bins, frames)
    return FeatureMatrix(TAG_KINDS[tag], data.astype(np.float32))
