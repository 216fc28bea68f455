"""Corpus manifests, synthetic toy corpus, and Siamese pair sampling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator

import numpy as np
from scipy.signal import firwin

from .audio_io import write_wav
from .errors import InvalidDataset, ParseError
from .features import SAMPLE_RATE, AudioBuffer, FeatureMatrix

LABEL_GENUINE = "genuine"
LABEL_SPOOFED = "spoofed"
_KEY_TO_LABEL = {"bonafide": LABEL_GENUINE, "spoof": LABEL_SPOOFED}

SUBSETS = ("train", "dev", "eval")


@dataclass(frozen=True)
class UtteranceRecord:
    utt_id: str
    label: str
    subset: str
    audio_path: str = ""


@dataclass(frozen=True)
class SamplerConfig:
    num_samples: int
    seed: int

    def __post_init__(self):
        if self.num_samples < 1:
            raise InvalidDataset(f"num_samples must be >= 1, got {self.num_samples}")


def parse_manifest(
    path: str | Path, subset: str, audio_dir: str | Path | None = None
) -> list[UtteranceRecord]:
    """Parse a CM protocol manifest into utterance records.

    Lines are whitespace-separated with the key (``bonafide``/``spoof``)
    in the last column.  Five-column ASVspoof-style lines carry the
    utterance id in the second column; two-column ``id key`` lines in
    the first.
    """
    records: list[UtteranceRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            cols = line.split()
            if not cols:
                continue
            if len(cols) < 2:
                raise ParseError(f"expected at least 2 columns, got {len(cols)}", line_no)
            key = cols[-1]
            if key not in _KEY_TO_LABEL:
                raise ParseError(f"unknown key token {key!r}", line_no)
            utt_id = cols[1] if len(cols) >= 3 else cols[0]
            if utt_id in seen:
                raise ParseError(f"duplicate utterance id {utt_id!r}", line_no)
            seen.add(utt_id)
            audio_path = str(Path(audio_dir) / f"{utt_id}.wav") if audio_dir else ""
            records.append(UtteranceRecord(utt_id, _KEY_TO_LABEL[key], subset, audio_path))
    return records


def write_manifest(path: str | Path, records: list[UtteranceRecord]) -> None:
    """Write records in the five-column protocol format."""
    label_to_key = {v: k for k, v in _KEY_TO_LABEL.items()}
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(f"TOY {rec.utt_id} - - {label_to_key[rec.label]}\n")


# --------------------------------------------------------------------------
# Synthetic toy corpus
# --------------------------------------------------------------------------

_REPLAY_CUTOFF_HZ = 4000.0
_REVERB_RT_SECONDS = 0.3
_NOISE_SNR_DB = 30.0


def _tone_complex(rng: np.random.Generator, sample_rate: int) -> np.ndarray:
    """Band-limited tone complex with a smooth amplitude envelope."""
    duration = rng.uniform(1.2, 2.8)
    n = int(duration * sample_rate)
    t = np.arange(n) / sample_rate
    signal = np.zeros(n)
    for _ in range(rng.integers(4, 9)):
        freq = rng.uniform(200.0, 7000.0)
        amp = rng.uniform(0.2, 1.0)
        phase = rng.uniform(0.0, 2 * np.pi)
        signal += amp * np.sin(2 * np.pi * freq * t + phase)
    envelope = 0.55 + 0.45 * np.sin(2 * np.pi * rng.uniform(0.5, 2.0) * t)
    signal *= envelope
    return signal / np.max(np.abs(signal))


def _replay_channel(signal: np.ndarray, rng: np.random.Generator, sample_rate: int) -> np.ndarray:
    """Simulated replay degradation: low-pass, reverberation, additive noise."""
    taps = firwin(101, _REPLAY_CUTOFF_HZ, fs=sample_rate)
    out = np.convolve(signal, taps, mode="same")

    ir_len = int(_REVERB_RT_SECONDS * sample_rate)
    decay = np.exp(-6.9 * np.arange(ir_len) / ir_len)
    ir = decay * rng.standard_normal(ir_len) * 0.3
    ir[0] = 1.0
    out = np.convolve(out, ir)[: len(signal)]

    noise = rng.standard_normal(len(out))
    sig_power = np.mean(out**2)
    noise_power = sig_power / 10 ** (_NOISE_SNR_DB / 10)
    out = out + noise * np.sqrt(noise_power / np.mean(noise**2))
    return out / np.max(np.abs(out))


def make_toy_corpus(
    out_dir: str | Path,
    n_genuine: int,
    n_spoofed: int,
    seed: int,
    subset: str = "train",
    sample_rate: int = SAMPLE_RATE,
) -> list[UtteranceRecord]:
    """Generate a separable synthetic corpus of WAV files plus records.

    Genuine utterances are band-limited tone complexes; spoofed ones are
    tone complexes degraded by a simulated replay channel.  Deterministic
    for a fixed seed.
    """
    if n_genuine < 1 or n_spoofed < 1:
        raise InvalidDataset("toy corpus needs at least one utterance per class")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng([seed, SUBSETS.index(subset)])
    records: list[UtteranceRecord] = []
    for i in range(n_genuine):
        utt_id = f"toy_{subset}_g{i:04d}"
        audio = _tone_complex(rng, sample_rate) * 0.8
        path = out_dir / f"{utt_id}.wav"
        write_wav(path, AudioBuffer(audio, sample_rate))
        records.append(UtteranceRecord(utt_id, LABEL_GENUINE, subset, str(path)))
    for i in range(n_spoofed):
        utt_id = f"toy_{subset}_s{i:04d}"
        audio = _replay_channel(_tone_complex(rng, sample_rate), rng, sample_rate) * 0.8
        path = out_dir / f"{utt_id}.wav"
        write_wav(path, AudioBuffer(audio, sample_rate))
        records.append(UtteranceRecord(utt_id, LABEL_SPOOFED, subset, str(path)))
    return records


# --------------------------------------------------------------------------
# Siamese pair sampling
# --------------------------------------------------------------------------

RecordPair = tuple[UtteranceRecord, UtteranceRecord]


@dataclass(frozen=True)
class PairSample:
    """A materialized training pair: two feature matrices with labels."""

    x1: FeatureMatrix
    y1: str
    x2: FeatureMatrix
    y2: str

    def __post_init__(self):
        if self.x1.kind != self.x2.kind or self.x1.data.shape != self.x2.data.shape:
            raise InvalidDataset(
                f"pair features must share kind and shape, got {self.x1.kind}"
                f"{self.x1.data.shape} vs {self.x2.kind}{self.x2.data.shape}"
            )


def materialize_pair(pair: RecordPair, load: Callable[[str], FeatureMatrix]) -> PairSample:
    """Resolve a sampled record pair into features.  The sampler itself
    only hands out references; feature matrices are loaded at batch time."""
    first, second = pair
    return PairSample(load(first.utt_id), first.label, load(second.utt_id), second.label)


class SnnSampler:
    """Balanced pair sampler over two per-class record lists.

    Each pair element picks a class uniformly at random, then consumes
    the next element of that class's shuffled list through a wrap-around
    counter.  Both lists are reshuffled before every epoch; the class
    choice stream runs across epochs while shuffles are derived from
    (seed, epoch) so they do not depend on how many draws were made.
    """

    def __init__(self, records: list[UtteranceRecord], cfg: SamplerConfig):
        genuine = sorted((r for r in records if r.label == LABEL_GENUINE), key=lambda r: r.utt_id)
        spoofed = sorted((r for r in records if r.label == LABEL_SPOOFED), key=lambda r: r.utt_id)
        if not genuine or not spoofed:
            raise InvalidDataset(
                f"both classes must be non-empty, got {len(genuine)} genuine / "
                f"{len(spoofed)} spoofed"
            )
        self.cfg = cfg
        self._classes = [genuine, spoofed]
        self._order = [np.arange(len(genuine)), np.arange(len(spoofed))]
        self._counters = [0, 0]
        self._choice_rng = np.random.default_rng([cfg.seed, 0])
        self.reshuffle(epoch=0)

    def reshuffle(self, epoch: int) -> None:
        """Re-permute both class lists and reset the wrap-around counters."""
        rng = np.random.default_rng([self.cfg.seed, 1, epoch])
        self._order = [rng.permutation(len(c)) for c in self._classes]
        self._counters = [0, 0]

    def _draw(self) -> UtteranceRecord:
        which = int(self._choice_rng.integers(0, 2))
        order = self._order[which]
        rec = self._classes[which][order[self._counters[which]]]
        self._counters[which] = (self._counters[which] + 1) % len(order)
        return rec

    def pairs(self) -> Iterator[RecordPair]:
        """Yield exactly ``num_samples`` record pairs."""
        for _ in range(self.cfg.num_samples):
            yield self._draw(), self._draw()


def create_snn_dataset(records: list[UtteranceRecord], cfg: SamplerConfig) -> SnnSampler:
    """Build the per-epoch balanced pair sampler (positioned at epoch 0)."""
    return SnnSampler(records, cfg)


def epoch_reshuffle(sampler: SnnSampler, epoch: int) -> SnnSampler:
    """Re-permute the sampler's class lists for a new epoch."""
    sampler.reshuffle(epoch)
    return sampler
