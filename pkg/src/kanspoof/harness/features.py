"""Deterministic feature stub in place of a pretrained speech encoder.

25 ms Hann frames every 10 ms, mel-spaced triangular filterbank log
energies, utterance-level scalar normalization, then a fixed seeded random
projection to the requested width.
"""

from __future__ import annotations

import functools

import numpy as np

from ..errors import InputError

SAMPLE_RATE = 16000
FRAME = 400
HOP = 160
N_FFT = 512
N_BANDS = 40


def frame_count(n_samples, frame=FRAME, hop=HOP):
    return 0 if n_samples < frame else 1 + (n_samples - frame) // hop


def _mel(hz):
    return 2595.0 * np.log10(1.0 + hz / 700.0)


def _mel_inv(mel):
    return 700.0 * (10.0 ** (mel / 2595.0) - 1.0)


@functools.lru_cache(maxsize=None)
def mel_filterbank(n_bands=N_BANDS, n_fft=N_FFT, sample_rate=SAMPLE_RATE):
    edges = _mel_inv(np.linspace(_mel(0.0), _mel(sample_rate / 2), n_bands + 2))
    bins = np.fft.rfftfreq(n_fft, 1.0 / sample_rate)
    bank = np.zeros((n_bands, len(bins)))
    for b in range(n_bands):
        lo, mid, hi = edges[b : b + 3]
        rising = (bins - lo) / (mid - lo)
        falling = (hi - bins) / (hi - mid)
        bank[b] = np.clip(np.minimum(rising, falling), 0.0, None)
    bank.setflags(write=False)
    return bank


@functools.lru_cache(maxsize=None)
def projection(width, seed=0, n_bands=N_BANDS):
    matrix = np.random.default_rng(seed).normal(0.0, 1.0 / np.sqrt(n_bands), size=(n_bands, width))
    matrix.setflags(write=False)
    return matrix


def log_filterbank(waveform):
    waveform = np.asarray(waveform, dtype=np.float64)
    n_frames = frame_count(len(waveform))
    if n_frames == 0:
        raise InputError(f"waveform of {len(waveform)} samples is shorter than one {FRAME}-sample frame")
    idx = np.arange(FRAME)[None, :] + HOP * np.arange(n_frames)[:, None]
    frames = waveform[idx] * np.hanning(FRAME)
    power = np.abs(np.fft.rfft(frames, n=N_FFT)) ** 2
    return np.log(power @ mel_filterbank().T + 1e-10)


def extract_features(waveform, width=128, seed=0):
    """Features of shape [frame_count(len(waveform)), width]."""
    logfb = log_filterbank(waveform)
    logfb = (logfb - logfb.mean()) / (logfb.std() + 1e-8)
    return logfb @ projection(width, seed)
