"""WAV I/O, resampling, segment cutting and marker-tone detection."""

from __future__ import annotations

import json
import math
import struct
import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.signal import resample_poly

from .errors import (
    CorruptHeader,
    InvalidFrequency,
    InvalidRate,
    MissingFile,
    OutOfRange,
    UnsupportedFormat,
)

CANONICAL_RATE = 16000

_FMT_PCM = 0x0001
_FMT_FLOAT = 0x0003
_FMT_EXTENSIBLE = 0xFFFE


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioBuffer holds mono samples only")
        if int(self.sample_rate) <= 0:
            raise InvalidRate(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class ToneEvent:
    start_s: float
    end_s: float
    mean_power_db: float


def _iter_chunks(data: bytes, path):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack("<4sI", data[pos:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size and cid != b"data":
            raise CorruptHeader(f"{path}: chunk {cid!r} truncated")
        yield cid, body
        pos += 8 + size + (size & 1)


def read_wav(path) -> AudioBuffer:
    """Decode a RIFF/WAVE file (PCM16 or float32, mono or stereo) to mono floats.

    Stereo is downmixed by channel mean; 16-bit samples are scaled by 1/32768.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"no such WAV file: {path}")
    data = path.read_bytes()
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptHeader(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    for cid, body in _iter_chunks(data, path):
        if cid == b"fmt ":
            if len(body) < 16:
                raise CorruptHeader(f"{path}: fmt chunk too short ({len(body)} bytes)")
            fmt = struct.unpack("<HHIIHH", body[:16])
            if fmt[0] == _FMT_EXTENSIBLE:
                if len(body) < 26:
                    raise CorruptHeader(f"{path}: WAVE_FORMAT_EXTENSIBLE without subformat")
                sub = struct.unpack("<H", body[24:26])[0]
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            payload = body
    if fmt is None:
        raise CorruptHeader(f"{path}: missing fmt chunk")
    if payload is None:
        raise CorruptHeader(f"{path}: missing data chunk")

    code, channels, rate, _, block_align, bits = fmt
    if channels not in (1, 2):
        raise UnsupportedFormat(f"{path}: fmt chunk declares {channels} channels")
    if code == _FMT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif code == _FMT_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedFormat(f"{path}: fmt chunk format code 0x{code:04x} with {bits} bits")
    if rate <= 0 or block_align != channels * dtype.itemsize:
        raise CorruptHeader(f"{path}: inconsistent fmt chunk (rate={rate}, block_align={block_align})")

    n_frames = len(payload) // block_align
    raw = np.frombuffer(payload[:n_frames * block_align], dtype=dtype).astype(np.float64) * scale
    raw = raw.reshape(n_frames, channels).mean(axis=1)
    if not np.all(np.isfinite(raw)):
        raise CorruptHeader(f"{path}: non-finite float samples")
    return AudioBuffer(np.clip(raw, -1.0, 1.0), rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    return np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767).astype("<i2")


def write_wav(path, buf: AudioBuffer) -> None:
    """Write 16-bit little-endian mono PCM."""
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(buf.sample_rate)
        w.writeframes(to_pcm16(buf.samples).tobytes())


def resample(buf: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Band-limited polyphase resampling; output length is round(n * target / source)."""
    if target_rate is None or int(target_rate) <= 0:
        raise InvalidRate(f"target rate must be positive, got {target_rate}")
    target_rate = int(target_rate)
    if target_rate == buf.sample_rate:
        return buf
    g = math.gcd(target_rate, buf.sample_rate)
    up, down = target_rate // g, buf.sample_rate // g
    out = resample_poly(buf.samples, up, down, window=("kaiser", 8.0))
    n_out = int(round(len(buf.samples) * target_rate / buf.sample_rate))
    if len(out) < n_out:
        out = np.pad(out, (0, n_out - len(out)))
    return AudioBuffer(np.clip(out[:n_out], -1.0, 1.0), target_rate)


def load_canonical(path) -> AudioBuffer:
    """read_wav followed by resampling to the 16 kHz processing rate."""
    return resample(read_wav(path), CANONICAL_RATE)


def cut_segment(buf: AudioBuffer, seg) -> AudioBuffer:
    """Slice ``[floor(start*sr), floor(end*sr))`` out of ``buf``."""
    if seg.start_s < 0 or seg.end_s <= seg.start_s:
        raise OutOfRange(f"invalid segment span [{seg.start_s}, {seg.end_s})")
    sr = buf.sample_rate
    start = int(math.floor(seg.start_s * sr))
    end = int(math.floor(seg.end_s * sr))
    if end > len(buf.samples):
        raise OutOfRange(
            f"segment ends at {seg.end_s:.3f}s but buffer lasts {buf.duration_s:.3f}s")
    return AudioBuffer(buf.samples[start:end].copy(), sr)


def goertzel_power(frames: np.ndarray, tone_hz: float, sample_rate: int) -> np.ndarray:
    """Goertzel amplitude estimate at ``tone_hz`` for each row of ``frames``, in dBFS.

    Rows are Hann-weighted first; a full-scale sinusoid at ``tone_hz`` reads ~0 dB.
    """
    frames = np.atleast_2d(frames)
    n = frames.shape[1]
    win = np.hanning(n + 2)[1:-1]
    x = frames * win
    w = 2.0 * np.pi * tone_hz / sample_rate
    coeff = 2.0 * np.cos(w)
    s1 = np.zeros(frames.shape[0])
    s2 = np.zeros(frames.shape[0])
    for i in range(n):
        s0 = x[:, i] + coeff * s1 - s2
        s2 = s1
        s1 = s0
    power = s1 * s1 + s2 * s2 - coeff * s1 * s2
    amp = 2.0 * np.sqrt(np.maximum(power, 0.0)) / win.sum()
    return 20.0 * np.log10(np.maximum(amp, 1e-10))


def detect_marker_tones(buf: AudioBuffer, tone_hz: float = 3000.0, min_dur_s: float = 0.15,
                        threshold_db: float = -35.0, hop_s: float = 0.025) -> list[ToneEvent]:
    """Find runs of 25 ms hops whose band power at ``tone_hz`` exceeds ``threshold_db``."""
    sr = buf.sample_rate
    if not 0 < tone_hz < sr / 2:
        raise InvalidFrequency(f"tone at {tone_hz} Hz is outside (0, {sr / 2}) Hz")
    hop = int(round(hop_s * sr))
    n_frames = len(buf.samples) // hop
    if n_frames == 0:
        return []
    frames = buf.samples[:n_frames * hop].reshape(n_frames, hop)
    db = goertzel_power(frames, tone_hz, sr)
    above = db > threshold_db

    events = []
    i = 0
    while i < n_frames:
        if not above[i]:
            i += 1
            continue
        j = i
        while j < n_frames and above[j]:
            j += 1
        start, end = i * hop / sr, j * hop / sr
        if end - start >= min_dur_s - 1e-9:
            events.append(ToneEvent(start, end, float(np.mean(db[i:j]))))
        i = j
    return events


def propose_segments(events: Iterable[ToneEvent], duration_s: float,
                     recording_id: str = "") -> list[dict]:
    """Turn tone events into task-span proposals: each task runs from one tone's end to the next tone's start."""
    events = sorted(events, key=lambda e: e.start_s)
    out = []
    for k, ev in enumerate(events):
        end = events[k + 1].start_s if k + 1 < len(events) else duration_s
        if end > ev.end_s:
            out.append({"recording_id": recording_id, "task_index": k + 1,
                        "start_s": round(ev.end_s, 6), "end_s": round(end, 6)})
    return out


def write_proposals_jsonl(path, proposals: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for p in proposals:
            fh.write(json.dumps({"recording_id": p["recording_id"], "start_s": p["start_s"],
                                 "end_s": p["end_s"]}, sort_keys=True) + "\n")
