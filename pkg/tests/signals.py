"""Deterministic test signals."""

from __future__ import annotations

import numpy as np

from mania_pipe.audio import AudioBuffer


def sine(freq, dur_s=1.0, sr=16000, amp=0.5, phase=0.0):
    t = np.arange(int(round(dur_s * sr))) / sr
    return AudioBuffer(amp * np.sin(2 * np.pi * freq * t + phase), sr)


def pulse_vowel(f0=220.0, dur_s=1.0, sr=16000, formants=((700, 80), (1200, 100))):
    """Impulse train at f0 through two second-order resonators."""
    from scipy.signal import lfilter

    n = int(round(dur_s * sr))
    x = np.zeros(n)
    period = sr / f0
    k = 0.0
    while k < n:
        x[int(k)] = 1.0
        k += period
    for fc, bw in formants:
        r = np.exp(-np.pi * bw / sr)
        a = [1.0, -2 * r * np.cos(2 * np.pi * fc / sr), r * r]
        x = lfilter([1.0 - r], a, x)
    return AudioBuffer(0.5 * x / np.max(np.abs(x)), sr)
