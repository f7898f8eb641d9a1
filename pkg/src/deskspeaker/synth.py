"""Synthetic corpus generator with ground-truth voice/noise flags.

Each speaker is a small Gaussian mixture in feature space: a speaker mean
drawn from an isotropic prior scaled by ``speaker_spread``, per-speaker
component offsets, a per-utterance channel offset, and per-frame residual
noise. Column 0 acts as log-energy and is generated separately so voice and
noise frames are energy-separable: noise frames come from one shared
low-energy distribution (no speaker information) and are injected in bursts
covering an exact, per-utterance count of frames.

``component_speaker_gain`` makes frame informativeness vary the way it does
across phones in real speech. When set, mixture components become shared
anchor clusters and the speaker contribution on a frame is scaled by the
gain of the component that produced it; a gain of zero yields voice frames
that sound the same from every speaker. Left at ``None``, every voice frame
carries the full speaker offset and generation is unchanged.

Everything is deterministic in the master seed; each utterance draws from its
own spawned child stream, so generation order is immaterial.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fileio import AcousticFrameSequence


@dataclass
class SynthCorpusConfig:
    n_speakers: int = 50
    utts_per_speaker: int = 10
    frames_per_utt: int = 300
    feature_dim: int = 12
    speaker_spread: float = 3.0
    channel_spread: float = 1.0
    component_spread: float = 1.0
    residual_std: float = 0.7
    n_components: int = 4
    component_speaker_gain: tuple[float, ...] | None = None
    noise_frame_fraction: float = 0.30
    noise_fraction_jitter: float = 0.0
    noise_feature_std: float = 0.3
    voice_energy_mean: float = 1.0
    voice_energy_std: float = 0.6
    noise_energy_mean: float = -3.0
    noise_energy_std: float = 0.3
    train_speaker_fraction: float = 0.7
    enroll_utts_per_speaker: int = 3
    frame_period: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.noise_frame_fraction < 1.0:
            raise ValueError("noise_frame_fraction must lie in [0, 1)")
        if self.noise_fraction_jitter < 0:
            raise ValueError("noise_fraction_jitter must be non-negative")
        if self.feature_dim < 2:
            raise ValueError("feature_dim must be at least 2 (energy + features)")
        if self.n_speakers < 2:
            raise ValueError("need at least two speakers")
        if not 0.0 < self.train_speaker_fraction < 1.0:
            raise ValueError("train_speaker_fraction must lie in (0, 1)")
        if self.utts_per_speaker <= self.enroll_utts_per_speaker:
            raise ValueError("evaluation speakers need utterances left over for test")
        if self.component_speaker_gain is not None:
            gains = tuple(float(g) for g in self.component_speaker_gain)
            if len(gains) != self.n_components:
                raise ValueError("component_speaker_gain needs one gain per component")
            if any(g < 0 or not np.isfinite(g) for g in gains):
                raise ValueError("component speaker gains must be finite and non-negative")
            self.component_speaker_gain = gains


@dataclass
class SynthCorpus:
    utt_ids: list[str]
    speakers: list[str]
    features: list[AcousticFrameSequence]
    voice: list[np.ndarray]   # bool per frame, True = voice
    partition: list[str]      # "train" | "enroll" | "test"
    speaker_of: dict[str, str] = field(default_factory=dict)

    def indices(self, part: str) -> list[int]:
        return [i for i, p in enumerate(self.partition) if p == part]

    def __len__(self) -> int:
        return len(self.utt_ids)


def _noise_mask(length: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """Bursty boolean mask with exactly ``count`` True entries."""
    mask = np.zeros(length, dtype=bool)
    remaining = count
    attempts = 0
    while remaining > 0 and attempts < 200:
        seg = int(min(remaining, rng.integers(8, 24)))
        start = int(rng.integers(0, length - seg + 1))
        if not mask[start:start + seg].any():
            mask[start:start + seg] = True
            remaining -= seg
        attempts += 1
    if remaining > 0:  # fall back to first free slots, keeping the count exact
        free = np.flatnonzero(~mask)
        mask[free[:remaining]] = True
    return mask


def generate_corpus(cfg: SynthCorpusConfig) -> SynthCorpus:
    root = np.random.SeedSequence(cfg.seed)
    master = np.random.default_rng(root.spawn(1)[0])
    dim = cfg.feature_dim
    fdim = dim - 1  # non-energy feature dims

    speaker_means = master.standard_normal((cfg.n_speakers, fdim)) * cfg.speaker_spread
    component_offsets = master.standard_normal(
        (cfg.n_speakers, cfg.n_components, fdim)) * cfg.component_spread
    gains = None
    anchors = None
    if cfg.component_speaker_gain is not None:
        gains = np.asarray(cfg.component_speaker_gain, dtype=np.float64)
        anchors = master.standard_normal(
            (cfg.n_components, fdim)) * cfg.component_spread

    n_train_speakers = int(round(cfg.train_speaker_fraction * cfg.n_speakers))
    n_train_speakers = min(max(n_train_speakers, 1), cfg.n_speakers - 1)

    n_utts = cfg.n_speakers * cfg.utts_per_speaker
    child_seeds = root.spawn(n_utts)

    utt_ids, speakers, features, voice, partition = [], [], [], [], []
    speaker_of: dict[str, str] = {}
    u = 0
    for s in range(cfg.n_speakers):
        spk = f"spk{s:03d}"
        for j in range(cfg.utts_per_speaker):
            rng = np.random.default_rng(child_seeds[u])
            u += 1
            length = cfg.frames_per_utt
            fraction = cfg.noise_frame_fraction
            if cfg.noise_fraction_jitter > 0:
                fraction = float(np.clip(
                    fraction + rng.uniform(-cfg.noise_fraction_jitter,
                                           cfg.noise_fraction_jitter),
                    0.0, 0.9))
            n_noise = int(round(fraction * length))
            noise = _noise_mask(length, n_noise, rng)

            channel = rng.standard_normal(fdim) * cfg.channel_spread
            comps = rng.integers(0, cfg.n_components, size=length)
            frames = np.empty((length, dim))
            identity = speaker_means[s] + component_offsets[s][comps]
            if gains is not None:
                identity = gains[comps][:, None] * identity + anchors[comps]
            body = (identity + channel
                    + rng.standard_normal((length, fdim)) * cfg.residual_std)
            frames[:, 1:] = body
            frames[:, 0] = (cfg.voice_energy_mean
                            + rng.standard_normal(length) * cfg.voice_energy_std)
            if n_noise:
                frames[noise, 1:] = rng.standard_normal(
                    (n_noise, fdim)) * cfg.noise_feature_std
                frames[noise, 0] = (cfg.noise_energy_mean
                                    + rng.standard_normal(n_noise) * cfg.noise_energy_std)

            utt_id = f"{spk}_u{j:02d}"
            utt_ids.append(utt_id)
            speakers.append(spk)
            speaker_of[utt_id] = spk
            features.append(AcousticFrameSequence(frames, cfg.frame_period))
            voice.append(~noise)
            if s < n_train_speakers:
                partition.append("train")
            elif j < cfg.enroll_utts_per_speaker:
                partition.append("enroll")
            else:
                partition.append("test")

    return SynthCorpus(utt_ids, speakers, features, voice, partition, speaker_of)
