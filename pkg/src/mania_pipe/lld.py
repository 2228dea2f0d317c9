"""Frame-level low-level descriptors (LLDs).

The inventory spans the families of the INTERSPEECH 2010 paralinguistic set
(cepstral, mel-band, energy/loudness, spectral shape, pitch, voice quality)
but is not numerically identical to openSMILE's implementation:

* MFCC 0-14 from a 26-filter HTK-mel bank, log floor 1e-10, orthonormal DCT-II.
* log_mel0-7 from a separate 8-band mel bank over 20-6500 Hz.
* loudness is the 0.3 power of the summed mel energy (no psychoacoustic model).
* F0 from window-compensated autocorrelation on a longer pitch frame; voicing
  is the normalized peak height, thresholded at 0.35.
* jitter/shimmer compare frame-level period/amplitude estimates over the
  current and two preceding frames, and are 0 unless all three are voiced.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dct

from .audio import AudioBuffer
from .errors import EmptyLldSet, InvalidConfig, NumericFailure, TooShort

MFCC_NAMES = tuple(f"mfcc{i}" for i in range(15))
LOG_MEL_NAMES = tuple(f"log_mel{i}" for i in range(8))
ALL_LLDS = MFCC_NAMES + LOG_MEL_NAMES + (
    "rms_energy", "loudness", "zcr", "spectral_centroid", "spectral_flux",
    "f0", "f0_envelope", "voicing_prob", "jitter_local", "jitter_ddp", "shimmer_local",
)

ENERGY_FLOOR = 1e-10


@dataclass(frozen=True)
class FrameConfig:
    frame_len_s: float = 0.025
    hop_s: float = 0.010
    window: str = "hamming"
    preemphasis: float = 0.97

    def __post_init__(self):
        if self.hop_s <= 0 or self.hop_s > self.frame_len_s:
            raise InvalidConfig("need 0 < hop_s <= frame_len_s")
        if self.window not in ("hamming", "hann"):
            raise InvalidConfig(f"unknown window {self.window!r}")
        if not 0.0 <= self.preemphasis < 1.0:
            raise InvalidConfig("preemphasis must lie in [0, 1)")


@dataclass(frozen=True)
class LldSet:
    enabled: tuple = ALL_LLDS
    mel_filters: int = 26
    fft_size: int | None = None  # None: next power of two >= frame length
    f0_min_hz: float = 60.0
    f0_max_hz: float = 400.0
    voicing_threshold: float = 0.35
    pitch_frame_s: float = 0.05
    log_floor: float = 1e-10

    def __post_init__(self):
        object.__setattr__(self, "enabled", tuple(self.enabled))
        if not self.enabled:
            raise EmptyLldSet("LLD set must enable at least one descriptor")
        unknown = [n for n in self.enabled if n not in ALL_LLDS]
        if unknown:
            raise InvalidConfig(f"unknown descriptors: {unknown}")
        if len(set(self.enabled)) != len(self.enabled):
            raise InvalidConfig("duplicate descriptors in LLD set")
        if self.fft_size is not None and self.fft_size & (self.fft_size - 1):
            raise InvalidConfig("fft_size must be a power of two")


@dataclass
class LldMatrix:
    values: np.ndarray
    names: list = field(default_factory=list)
    hop_s: float = 0.010

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[1] != len(self.names):
            raise ValueError("LldMatrix: names must match column count")
        if len(set(self.names)) != len(self.names):
            raise ValueError("LldMatrix: duplicate descriptor names")
        if not np.all(np.isfinite(self.values)):
            raise NumericFailure("LldMatrix contains NaN/Inf")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.names)
            for row in self.values:
                w.writerow([format(v, ".17g") for v in row])


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, nfft: int, sr: int, f_lo: float = 0.0,
                   f_hi: float | None = None) -> np.ndarray:
    """Triangular HTK-mel filters, shape (n_filters, nfft//2 + 1), peak gain 1."""
    f_hi = sr / 2 if f_hi is None else f_hi
    edges = mel_to_hz(np.linspace(hz_to_mel(f_lo), hz_to_mel(f_hi), n_filters + 2))
    freqs = np.arange(nfft // 2 + 1) * sr / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def _window(name: str, n: int) -> np.ndarray:
    # periodic=False variants, matching numpy's definitions
    return np.hamming(n) if name == "hamming" else np.hanning(n)


def _frame_params(sr: int, cfg: FrameConfig):
    return int(round(cfg.frame_len_s * sr)), int(round(cfg.hop_s * sr))


def _raw_frames(x: np.ndarray, length: int, hop: int, n_frames: int) -> np.ndarray:
    need = (n_frames - 1) * hop + length
    if len(x) < need:
        x = np.pad(x, (0, need - len(x)))
    return sliding_window_view(x[:need], length)[::hop][:n_frames]


def n_frames_for(n_samples: int, sr: int, cfg: FrameConfig) -> int:
    length, hop = _frame_params(sr, cfg)
    if n_samples < length:
        return 0
    return 1 + (n_samples - length) // hop


def frame_signal(buf: AudioBuffer, cfg: FrameConfig = FrameConfig()) -> np.ndarray:
    """Cut into frames, then per-frame pre-emphasis and windowing.

    Pre-emphasis is y[0] = (1 - a) x[0], y[n] = x[n] - a x[n-1] inside each frame.
    """
    length, hop = _frame_params(buf.sample_rate, cfg)
    n = n_frames_for(len(buf.samples), buf.sample_rate, cfg)
    if n < 1:
        raise TooShort(f"{len(buf.samples)} samples is shorter than one {length}-sample frame")
    raw = _raw_frames(buf.samples, length, hop, n)
    return _preemph_window(raw, cfg)


def _preemph_window(raw: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    a = cfg.preemphasis
    out = np.empty_like(raw)
    out[:, 1:] = raw[:, 1:] - a * raw[:, :-1]
    out[:, 0] = (1.0 - a) * raw[:, 0]
    return out * _window(cfg.window, raw.shape[1])


def _pitch_track(x: np.ndarray, sr: int, length: int, hop: int, n_frames: int, lset: LldSet):
    """Per-frame (f0, voicing_prob) by window-compensated normalized autocorrelation.

    Pitch frames are longer than analysis frames and share their centres.
    """
    plen = max(int(round(lset.pitch_frame_s * sr)), length)
    x = np.pad(x, ((plen - length) // 2, 0))
    lag_min = max(int(np.floor(sr / lset.f0_max_hz)), 2)
    lag_max = min(int(np.ceil(sr / lset.f0_min_hz)), plen // 2)
    nfft = 1 << int(np.ceil(np.log2(2 * plen)))
    win = np.hanning(plen + 2)[1:-1]
    rw = np.fft.irfft(np.abs(np.fft.rfft(win, nfft)) ** 2, nfft)[:lag_max + 2]
    rw = rw / rw[0]

    f0 = np.zeros(n_frames)
    vprob = np.zeros(n_frames)
    chunk = 512
    for s in range(0, n_frames, chunk):
        e = min(n_frames, s + chunk)
        frames = _raw_frames(x[s * hop:], plen, hop, e - s)
        frames = frames - frames.mean(axis=1, keepdims=True)
        r = np.fft.irfft(np.abs(np.fft.rfft(frames * win, nfft, axis=1)) ** 2, nfft, axis=1)
        r = r[:, :lag_max + 2]
        r0 = r[:, :1]
        ok = r0[:, 0] > 1e-20
        acf = np.where(ok[:, None], r / np.where(r0 > 0, r0, 1.0), 0.0) / rw
        seg = acf[:, lag_min - 1:lag_max + 2]
        centre = seg[:, 1:-1]
        peak = (centre > seg[:, :-2]) & (centre >= seg[:, 2:])
        vals = np.where(peak, centre, -np.inf)
        vmax = vals.max(axis=1)
        has = np.isfinite(vmax) & ok & (vmax > 0)
        # earliest peak close to the best one guards against octave-down errors
        cand = peak & (centre >= 0.9 * vmax[:, None])
        first = np.argmax(cand, axis=1)
        rows = np.arange(e - s)
        y0 = seg[rows, first]
        y1 = seg[rows, first + 1]
        y2 = seg[rows, first + 2]
        denom = y0 - 2 * y1 + y2
        shift = np.where(np.abs(denom) > 1e-12, 0.5 * (y0 - y2) / np.where(denom == 0, 1, denom), 0.0)
        shift = np.clip(shift, -0.5, 0.5)
        lag = lag_min + first + shift
        height = np.clip(y1 - 0.25 * (y0 - y2) * shift, 0.0, 1.0)
        prob = np.where(has, height, 0.0)
        voiced = has & (prob > lset.voicing_threshold)
        f0[s:e] = np.where(voiced, sr / lag, 0.0)
        vprob[s:e] = prob
    return f0, vprob


def _hold(f0: np.ndarray) -> np.ndarray:
    out = np.empty_like(f0)
    last = 0.0
    for i, v in enumerate(f0):
        if v > 0:
            last = v
        out[i] = last
    return out


def _perturbation(values: np.ndarray, voiced: np.ndarray):
    """Local and difference-of-differences relative perturbation over frames t-2..t."""
    n = len(values)
    local = np.zeros(n)
    ddp = np.zeros(n)
    if n < 3:
        return local, ddp
    a, b, c = values[:-2], values[1:-1], values[2:]
    ok = voiced[:-2] & voiced[1:-1] & voiced[2:]
    mean = (a + b + c) / 3.0
    safe = np.where(ok & (mean > 0), mean, 1.0)
    local[2:] = np.where(ok, 0.5 * (np.abs(c - b) + np.abs(b - a)) / safe, 0.0)
    ddp[2:] = np.where(ok, np.abs(c - 2 * b + a) / safe, 0.0)
    return local, ddp


def extract_lld(buf: AudioBuffer, lset: LldSet = LldSet(), cfg: FrameConfig = FrameConfig()) -> LldMatrix:
    if not lset.enabled:
        raise EmptyLldSet("LLD set must enable at least one descriptor")
    sr = buf.sample_rate
    length, hop = _frame_params(sr, cfg)
    n = n_frames_for(len(buf.samples), sr, cfg)
    if n < 1:
        raise TooShort(f"{len(buf.samples)} samples is shorter than one {length}-sample frame")
    x = buf.samples
    raw = _raw_frames(x, length, hop, n)
    proc = _preemph_window(raw, cfg)
    nfft = lset.fft_size or 1 << int(np.ceil(np.log2(length)))
    if nfft < length:
        raise InvalidConfig(f"fft_size {nfft} shorter than frame ({length} samples)")
    spec = np.fft.rfft(proc, nfft, axis=1)
    mag = np.abs(spec)
    power = mag ** 2 / nfft
    freqs = np.arange(nfft // 2 + 1) * sr / nfft
    want = set(lset.enabled)
    cols: dict[str, np.ndarray] = {}

    mel_e = power @ mel_filterbank(lset.mel_filters, nfft, sr).T
    if want & set(MFCC_NAMES):
        log_mel = np.log(np.maximum(mel_e, lset.log_floor))
        cep = dct(log_mel, type=2, norm="ortho", axis=1)
        for i, name in enumerate(MFCC_NAMES):
            cols[name] = cep[:, i]
    if want & set(LOG_MEL_NAMES):
        bands = power @ mel_filterbank(8, nfft, sr, 20.0, min(6500.0, sr / 2)).T
        lb = np.log(np.maximum(bands, lset.log_floor))
        for i, name in enumerate(LOG_MEL_NAMES):
            cols[name] = lb[:, i]

    cols["rms_energy"] = 10.0 * np.log10(np.maximum(np.mean(raw ** 2, axis=1), ENERGY_FLOOR))
    cols["loudness"] = np.sum(mel_e, axis=1) ** 0.3
    sb = np.signbit(raw)
    cols["zcr"] = np.count_nonzero(sb[:, 1:] != sb[:, :-1], axis=1) / (length - 1)
    total = power.sum(axis=1)
    cols["spectral_centroid"] = np.where(
        total > 1e-30, (power @ freqs) / np.where(total > 1e-30, total, 1.0), 0.0)
    msum = mag.sum(axis=1, keepdims=True)
    norm_mag = mag / np.where(msum > 1e-30, msum, 1.0)
    flux = np.zeros(n)
    flux[1:] = np.sum(np.diff(norm_mag, axis=0) ** 2, axis=1)
    cols["spectral_flux"] = flux

    if want & {"f0", "f0_envelope", "voicing_prob", "jitter_local", "jitter_ddp", "shimmer_local"}:
        f0, vprob = _pitch_track(x, sr, length, hop, n, lset)
        voiced = f0 > 0
        cols["f0"] = f0
        cols["f0_envelope"] = _hold(f0)
        cols["voicing_prob"] = vprob
        periods = np.where(voiced, 1.0 / np.where(voiced, f0, 1.0), 0.0)
        cols["jitter_local"], cols["jitter_ddp"] = _perturbation(periods, voiced)
        amp = np.sqrt(np.mean(raw ** 2, axis=1))
        cols["shimmer_local"], _ = _perturbation(amp, voiced)

    names = list(lset.enabled)
    return LldMatrix(np.column_stack([cols[k] for k in names]), names, cfg.hop_s)


def append_deltas(m: LldMatrix, window: int = 2) -> LldMatrix:
    """Append regression deltas over +-``window`` frames, edges replicated; names get ``_de``."""
    if window < 1:
        raise InvalidConfig("delta window must be >= 1")
    n = m.n_frames
    if n < 2 * window + 1:
        raise TooShort(f"{n} frames < {2 * window + 1} needed for delta window {window}")
    padded = np.pad(m.values, ((window, window), (0, 0)), mode="edge")
    denom = 2.0 * sum(w * w for w in range(1, window + 1))
    delta = np.zeros_like(m.values)
    for w in range(1, window + 1):
        delta += w * (padded[window + w:window + w + n] - padded[window - w:window - w + n])
    delta /= denom
    return LldMatrix(np.hstack([m.values, delta]), list(m.names) + [f"{k}_de" for k in m.names],
                     m.hop_s)
