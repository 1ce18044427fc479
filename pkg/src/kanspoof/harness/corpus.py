"""Synthetic bonafide/spoof corpus standing in for a real anti-spoofing dataset.

Bonafide trials are a few harmonic partials under a smooth random envelope
plus a faint noise floor.  Spoof trials come from the same generator with
one injected artifact: a spectral notch, 4-bit quantization, or periodic
phase discontinuities.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ContractError, InputError
from ..metrics import write_labels

SPLITS = ("train", "dev", "eval")
ARTIFACTS = ("notch", "quantize", "phase")


@dataclass
class CorpusSpec:
    n_train: int = 2000
    n_dev: int = 500
    n_eval: int = 500
    sample_rate: int = 16000
    min_seconds: float = 2.0
    max_seconds: float = 6.0
    noise_level: float = 0.005

    def validate(self):
        for name in ("n_train", "n_dev", "n_eval"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be at least 1")
        if self.sample_rate < 1000:
            raise ContractError("sample_rate must be at least 1000 Hz")
        if not 0 < self.min_seconds <= self.max_seconds:
            raise ContractError("need 0 < min_seconds <= max_seconds")
        if self.noise_level < 0:
            raise ContractError("noise_level must be non-negative")
        return self

    def size(self, split):
        return getattr(self, f"n_{split}")


@dataclass
class Trial:
    trial_id: str
    waveform: np.ndarray
    label: str
    artifact: str = ""


@dataclass
class Corpus:
    spec: CorpusSpec
    seed: int
    splits: dict = field(default_factory=dict)

    def trials(self, split):
        return self.splits[split]


def _envelope(rng, n, sr):
    knots = max(2, int(n / sr * 8) + 2)
    points = rng.uniform(0.2, 1.0, knots)
    return np.interp(np.linspace(0, knots - 1, n), np.arange(knots), points)


def _harmonic_signal(rng, n, sr, phase_period=None):
    t = np.arange(n) / sr
    f0 = rng.uniform(90.0, 250.0)
    count = int(rng.integers(3, 9))
    max_harmonic = max(count, int(0.45 * sr / f0))
    harmonics = np.sort(rng.choice(np.arange(1, max_harmonic + 1), size=count, replace=False))
    amps = rng.uniform(0.3, 1.0, count) / np.sqrt(harmonics)
    phases = rng.uniform(0, 2 * np.pi, count)
    offsets = np.zeros((count, n))
    if phase_period is not None:
        starts = np.arange(phase_period, n, phase_period)
        for s in starts:
            offsets[:, s:] += rng.uniform(0.5 * np.pi, 1.5 * np.pi, count)[:, None]
    signal = np.sum(amps[:, None] * np.sin(2 * np.pi * f0 * harmonics[:, None] * t + phases[:, None] + offsets), axis=0)
    return signal * _envelope(rng, n, sr)


def _finish(rng, signal, noise_level):
    signal = 0.8 * signal / max(np.max(np.abs(signal)), 1e-12)
    signal = signal + noise_level * rng.standard_normal(len(signal))
    return np.clip(signal, -1.0, 1.0)


def _notch(rng, signal, sr):
    spectrum = np.fft.rfft(signal)
    freqs = np.fft.rfftfreq(len(signal), 1.0 / sr)
    centre = rng.uniform(400.0, 0.4 * sr)
    width = rng.uniform(1500.0, 3000.0)
    spectrum[np.abs(freqs - centre) < width / 2] = 0.0
    return np.fft.irfft(spectrum, n=len(signal))


def synthesize(rng, n, sr, label, noise_level=0.005):
    """One waveform of ``n`` samples; returns (waveform, artifact name)."""
    if label == "bonafide":
        return _finish(rng, _harmonic_signal(rng, n, sr), noise_level), ""
    artifact = ARTIFACTS[int(rng.integers(len(ARTIFACTS)))]
    if artifact == "phase":
        period = int(rng.integers(sr // 20, sr // 5))
        return _finish(rng, _harmonic_signal(rng, n, sr, phase_period=period), noise_level), artifact
    wave = _finish(rng, _harmonic_signal(rng, n, sr), noise_level)
    if artifact == "notch":
        wave = np.clip(_notch(rng, wave, sr), -1.0, 1.0)
    else:
        wave = np.round(wave * 7.5) / 7.5
    return wave, artifact


def generate_corpus(spec: CorpusSpec | None = None, seed=0):
    """Deterministic corpus: balanced labels per split, ids ``<split>_<index>``."""
    spec = (spec or CorpusSpec()).validate()
    corpus = Corpus(spec, int(seed))
    children = np.random.SeedSequence(int(seed)).spawn(len(SPLITS))
    for split, child in zip(SPLITS, children):
        rng = np.random.default_rng(child)
        size = spec.size(split)
        labels = np.array(["bonafide"] * (size // 2) + ["spoof"] * (size - size // 2))
        labels = labels[rng.permutation(size)]
        trials = []
        for i, label in enumerate(labels):
            seconds = rng.uniform(spec.min_seconds, spec.max_seconds)
            n = max(1, int(round(seconds * spec.sample_rate)))
            wave, artifact = synthesize(rng, n, spec.sample_rate, str(label), spec.noise_level)
            trials.append(Trial(f"{split}_{i:05d}", wave, str(label), artifact))
        corpus.splits[split] = trials
    return corpus


def pad_or_trim(waveform, target_samples):
    """Truncate long inputs; tile short ones by repetition, then truncate."""
    waveform = np.asarray(waveform, dtype=np.float64)
    if waveform.size == 0:
        raise InputError("cannot pad an empty waveform")
    if target_samples < 1:
        raise InputError("target length must be positive")
    if len(waveform) >= target_samples:
        return waveform[:target_samples]
    reps = -(-target_samples // len(waveform))
    return np.tile(waveform, reps)[:target_samples]


def save_corpus(corpus: Corpus, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = {"seed": corpus.seed, "spec": asdict(corpus.spec), "splits": list(corpus.splits)}
    (out / "corpus.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    for split, trials in corpus.splits.items():
        lengths = np.array([len(t.waveform) for t in trials], dtype=np.int64)
        np.savez(
            out / f"{split}.npz",
            ids=np.array([t.trial_id for t in trials]),
            labels=np.array([t.label for t in trials]),
            artifacts=np.array([t.artifact for t in trials]),
            offsets=np.concatenate([[0], np.cumsum(lengths)]),
            samples=np.concatenate([t.waveform for t in trials]) if trials else np.zeros(0),
        )
        write_labels(out / f"{split}.labels", [t.trial_id for t in trials], [t.label for t in trials])
    return out


def load_corpus(data_dir, splits=None):
    data = Path(data_dir)
    meta_path = data / "corpus.json"
    if not meta_path.exists():
        raise InputError(f"{data} does not contain corpus.json")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    corpus = Corpus(CorpusSpec(**meta["spec"]), int(meta["seed"]))
    for split in splits or meta["splits"]:
        path = data / f"{split}.npz"
        if not path.exists():
            raise InputError(f"missing split file {path}")
        with np.load(path) as z:
            offsets, samples = z["offsets"], z["samples"]
            corpus.splits[split] = [
                Trial(str(tid), samples[offsets[i] : offsets[i + 1]].copy(), str(label), str(art))
                for i, (tid, label, art) in enumerate(zip(z["ids"], z["labels"], z["artifacts"]))
            ]
    return corpus
