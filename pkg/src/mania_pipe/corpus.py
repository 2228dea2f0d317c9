"""Recordings, labels, splits and task segments; manifest I/O; synthetic corpus generator.

The synthetic generator stands in for the license-restricted clinical corpus.
Each recording is seven task segments, every one preceded by a marker tone.
Voiced speech is a jittered pulse train pushed through a spectral-tilt filter
and two formant resonators; class profiles differ in pitch, jitter, speaking
rate, loudness and tilt.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio import AudioBuffer, write_wav
from .errors import DanglingSegment, InvalidConfig, IoError, MissingFile, SchemaViolation

SCHEMA_VERSION = 1
N_TASKS = 7


class Label(str, Enum):
    REMISSION = "Remission"
    HYPOMANIA = "Hypomania"
    MANIA = "Mania"

    @property
    def index(self) -> int:
        return LABELS.index(self)


LABELS = (Label.REMISSION, Label.HYPOMANIA, Label.MANIA)


class Split(str, Enum):
    TRAIN = "Train"
    DEV = "Dev"
    TEST = "Test"


SPLITS = (Split.TRAIN, Split.DEV, Split.TEST)
GENDERS = ("female", "male")
SESSION_TAGS = ("day-0", "day-3", "day-7", "day-28", "month-3")


@dataclass(frozen=True)
class Recording:
    id: str
    subject_id: str
    session_tag: str
    audio_path: str
    label: Label
    split: Split
    age: int | None = None
    gender: str | None = None
    ymrs_total: int | None = None


@dataclass(frozen=True)
class TaskSegment:
    recording_id: str
    task_index: int
    start_s: float
    end_s: float

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


@dataclass
class CorpusManifest:
    recordings: list[Recording]
    segments: list[TaskSegment]
    schema_version: int = SCHEMA_VERSION
    root: Path | None = field(default=None, compare=False, repr=False)

    def recording(self, rec_id: str) -> Recording:
        for r in self.recordings:
            if r.id == rec_id:
                return r
        raise KeyError(rec_id)

    def audio_file(self, rec: Recording) -> Path:
        p = Path(rec.audio_path)
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p

    def segments_for(self, rec_id: str) -> list[TaskSegment]:
        return [s for s in self.segments if s.recording_id == rec_id]

    def by_split(self, split: Split) -> list[Recording]:
        return [r for r in self.recordings if r.split == split]

    def to_dict(self) -> dict:
        recs = []
        for r in self.recordings:
            d = asdict(r)
            d["label"] = r.label.value
            d["split"] = r.split.value
            recs.append(d)
        return {
            "schema_version": self.schema_version,
            "recordings": recs,
            "segments": [asdict(s) for s in self.segments],
        }


@dataclass(frozen=True)
class SplitSummary:
    per_split: dict[str, int]
    per_label: dict[str, int]
    per_split_label: dict[str, dict[str, int]]
    total: int


# ---------------------------------------------------------------------------
# manifest I/O


def _require(obj: dict, key: str, where: str):
    if key not in obj:
        raise SchemaViolation(f"{where}: missing field '{key}'")
    return obj[key]


def _opt_int(value, where: str, name: str, nonneg: bool = False):
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaViolation(f"{where}: field '{name}' must be an integer, got {value!r}")
    if nonneg and value < 0:
        raise SchemaViolation(f"{where}: field '{name}' must be non-negative, got {value}")
    return value


def _parse_recording(d: dict, i: int) -> Recording:
    where = f"recordings[{i}]"
    if not isinstance(d, dict):
        raise SchemaViolation(f"{where}: expected an object")
    rec_id = _require(d, "id", where)
    where = f"recording '{rec_id}'"
    label = _require(d, "label", where)
    split = _require(d, "split", where)
    try:
        label = Label(label)
    except ValueError:
        raise SchemaViolation(f"{where}: field 'label' has unknown value {label!r}") from None
    try:
        split = Split(split)
    except ValueError:
        raise SchemaViolation(f"{where}: field 'split' has unknown value {split!r}") from None
    gender = d.get("gender")
    if gender is not None and not isinstance(gender, str):
        raise SchemaViolation(f"{where}: field 'gender' must be a string")
    for key in ("id", "subject_id", "session_tag", "audio_path"):
        if not isinstance(_require(d, key, where), str):
            raise SchemaViolation(f"{where}: field '{key}' must be a string")
    return Recording(
        id=rec_id,
        subject_id=d["subject_id"],
        session_tag=d["session_tag"],
        audio_path=d["audio_path"],
        label=label,
        split=split,
        age=_opt_int(d.get("age"), where, "age", nonneg=True),
        gender=gender,
        ymrs_total=_opt_int(d.get("ymrs_total"), where, "ymrs_total", nonneg=True),
    )


def _parse_segment(d: dict, i: int) -> TaskSegment:
    where = f"segments[{i}]"
    if not isinstance(d, dict):
        raise SchemaViolation(f"{where}: expected an object")
    rid = _require(d, "recording_id", where)
    task = _require(d, "task_index", where)
    start = _require(d, "start_s", where)
    end = _require(d, "end_s", where)
    if isinstance(task, bool) or not isinstance(task, int) or not 1 <= task <= N_TASKS:
        raise SchemaViolation(f"{where}: field 'task_index' must be an integer in 1..7, got {task!r}")
    for name, v in (("start_s", start), ("end_s", end)):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaViolation(f"{where}: field '{name}' must be a number")
    if start < 0:
        raise SchemaViolation(f"{where}: field 'start_s' must be >= 0, got {start}")
    if end <= start:
        raise SchemaViolation(f"{where}: field 'end_s' ({end}) must exceed start_s ({start})")
    return TaskSegment(str(rid), task, float(start), float(end))


def validate_manifest(m: CorpusManifest, check_audio: bool = True) -> CorpusManifest:
    seen = set()
    for r in m.recordings:
        if r.id in seen:
            raise SchemaViolation(f"recording '{r.id}': duplicate id")
        seen.add(r.id)
        if check_audio and not m.audio_file(r).is_file():
            raise MissingFile(f"recording '{r.id}': audio_path {m.audio_file(r)} not found")
    per_rec: dict[str, list[TaskSegment]] = {}
    for s in m.segments:
        if s.recording_id not in seen:
            raise DanglingSegment(
                f"segment task {s.task_index} references unknown recording '{s.recording_id}'")
        per_rec.setdefault(s.recording_id, []).append(s)
    for rid, segs in per_rec.items():
        for a, b in zip(segs, segs[1:]):
            if b.task_index <= a.task_index:
                raise SchemaViolation(
                    f"recording '{rid}': segments not ordered by task_index ({a.task_index}, {b.task_index})")
            if b.start_s < a.end_s:
                raise SchemaViolation(
                    f"recording '{rid}': tasks {a.task_index} and {b.task_index} overlap")
    return m


def manifest_from_dict(doc: dict, root: Path | None = None, check_audio: bool = True) -> CorpusManifest:
    if not isinstance(doc, dict):
        raise SchemaViolation("manifest: top level must be an object")
    version = _require(doc, "schema_version", "manifest")
    if version != SCHEMA_VERSION:
        raise SchemaViolation(f"manifest: unsupported schema_version {version!r}")
    recs = _require(doc, "recordings", "manifest")
    segs = _require(doc, "segments", "manifest")
    if not isinstance(recs, list) or not isinstance(segs, list):
        raise SchemaViolation("manifest: 'recordings' and 'segments' must be arrays")
    m = CorpusManifest(
        recordings=[_parse_recording(d, i) for i, d in enumerate(recs)],
        segments=[_parse_segment(d, i) for i, d in enumerate(segs)],
        schema_version=version,
        root=root,
    )
    return validate_manifest(m, check_audio=check_audio)


def load_manifest(path, check_audio: bool = True) -> CorpusManifest:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{path}: invalid JSON ({exc})") from None
    return manifest_from_dict(doc, root=path.parent, check_audio=check_audio)


def save_manifest(m: CorpusManifest, path) -> None:
    try:
        Path(path).write_text(json.dumps(m.to_dict(), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write manifest {path}: {exc}") from exc


def split_summary(m: CorpusManifest) -> SplitSummary:
    per_split = {s.value: 0 for s in SPLITS}
    per_label = {lab.value: 0 for lab in LABELS}
    cross = {s.value: {lab.value: 0 for lab in LABELS} for s in SPLITS}
    for r in m.recordings:
        per_split[r.split.value] += 1
        per_label[r.label.value] += 1
        cross[r.split.value][r.label.value] += 1
    return SplitSummary(per_split, per_label, cross, len(m.recordings))


# ---------------------------------------------------------------------------
# synthetic corpus


@dataclass(frozen=True)
class ClassProfile:
    base_pitch_hz: float
    jitter_pct: float
    speaking_rate: float  # voiced syllables per second
    loudness_db: float
    tilt: float  # one-pole lowpass coefficient; larger = steeper spectral tilt


DEFAULT_PROFILES = {
    Label.REMISSION.value: ClassProfile(110.0, 0.5, 2.5, 0.0, 0.90),
    Label.HYPOMANIA.value: ClassProfile(160.0, 1.0, 3.5, 3.0, 0.80),
    Label.MANIA.value: ClassProfile(220.0, 2.0, 4.5, 6.0, 0.70),
}


@dataclass
class SynthConfig:
    n_per_class_per_split: dict = field(
        default_factory=lambda: {s.value: 5 for s in SPLITS})
    sample_rate: int = 16000
    task_durations_s: list = field(default_factory=lambda: [3.0] * N_TASKS)
    class_profiles: dict = field(default_factory=lambda: dict(DEFAULT_PROFILES))
    marker_tone_hz: float = 3000.0
    marker_tone_dur_s: float = 0.4
    marker_tone_amp: float = 0.05
    seed: int = 0
    # counting tasks are spoken faster regardless of mood
    task_rate_factors: list = field(default_factory=lambda: [1.0, 1.0, 1.0, 1.2, 1.6, 1.0, 1.0])
    lead_in_s: float = 0.25

    def validate(self) -> "SynthConfig":
        if len(self.task_durations_s) != N_TASKS or len(self.task_rate_factors) != N_TASKS:
            raise InvalidConfig("task_durations_s and task_rate_factors need 7 entries")
        if any(d <= self.marker_tone_dur_s for d in self.task_durations_s):
            raise InvalidConfig("every task duration must exceed marker_tone_dur_s")
        if not 0 < self.marker_tone_hz < self.sample_rate / 2:
            raise InvalidConfig(f"marker tone {self.marker_tone_hz} Hz above Nyquist")
        if set(self.class_profiles) != {lab.value for lab in LABELS}:
            raise InvalidConfig("class_profiles must cover Remission, Hypomania and Mania")
        profiles = [tuple(asdict(_profile(p)).values()) for p in self.class_profiles.values()]
        if len(set(profiles)) != len(profiles):
            raise InvalidConfig("class profiles must differ pairwise")
        for split, n in self.n_per_class_per_split.items():
            Split(split)
            if n < 0:
                raise InvalidConfig(f"negative count for split {split}")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["class_profiles"] = {k: asdict(_profile(v)) for k, v in self.class_profiles.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        d = dict(d)
        if "class_profiles" in d:
            d["class_profiles"] = {k: _profile(v) for k, v in d["class_profiles"].items()}
        return cls(**d)


def _profile(p) -> ClassProfile:
    return p if isinstance(p, ClassProfile) else ClassProfile(**p)


def _resonator(x: np.ndarray, freq: float, bw: float, sr: int) -> np.ndarray:
    r = np.exp(-np.pi * bw / sr)
    a = [1.0, -2.0 * r * np.cos(2 * np.pi * freq / sr), r * r]
    return lfilter([1.0 - r], a, x)


def _syllable(rng: np.random.Generator, n: int, f0: float, prof: ClassProfile, amp: float,
              sr: int) -> np.ndarray:
    excitation = np.zeros(n)
    t = rng.uniform(0, sr / f0)
    # slight declination across the syllable
    while t < n:
        excitation[int(t)] = 1.0
        frac = t / n
        period = sr / (f0 * (1.02 - 0.04 * frac))
        t += period * (1.0 + prof.jitter_pct / 100.0 * rng.standard_normal())
    y = lfilter([1.0], [1.0, -prof.tilt], excitation)
    y = _resonator(y, rng.uniform(500, 800), 80.0, sr)
    y = _resonator(y, rng.uniform(1200, 2000), 120.0, sr)
    y *= np.hanning(n)
    peak = np.max(np.abs(y))
    return y * (amp / peak) if peak > 0 else y


def _task_audio(rng: np.random.Generator, n: int, prof: ClassProfile, pitch: float, rate: float,
                loud_db: float, sr: int) -> np.ndarray:
    out = np.zeros(n)
    amp = 0.1 * 10 ** (loud_db / 20.0)
    pos = int(rng.uniform(0.05, 0.15) * sr)
    while pos < n:
        syl = int(0.6 / rate * rng.uniform(0.8, 1.2) * sr)
        syl = min(syl, n - pos)
        if syl > int(0.03 * sr):
            f0 = pitch * (1.0 + 0.05 * rng.standard_normal())
            out[pos:pos + syl] = _syllable(rng, syl, f0, prof, amp * rng.uniform(0.8, 1.0), sr)
            # unvoiced onset: high-passed noise burst just before the vowel
            n_fric = min(int(rng.uniform(0.03, 0.07) * sr), pos)
            if n_fric > 1:
                burst = np.diff(rng.standard_normal(n_fric + 1)) * np.hanning(n_fric)
                out[pos - n_fric:pos] += 0.15 * amp * burst
        pos += syl + int(0.4 / rate * rng.uniform(0.5, 1.5) * sr)
    return out


def _marker_tone(n: int, hz: float, amp: float, sr: int) -> np.ndarray:
    t = np.arange(n) / sr
    tone = amp * np.sin(2 * np.pi * hz * t)
    ramp = min(int(0.005 * sr), n // 2)
    if ramp:
        env = 0.5 - 0.5 * np.cos(np.pi * np.arange(ramp) / ramp)
        tone[:ramp] *= env
        tone[-ramp:] *= env[::-1]
    return tone


def synthesize_recording(cfg: SynthConfig, label: Label, index: int):
    """Return (int16 samples, task spans) for one synthetic recording."""
    sr = cfg.sample_rate
    prof = _profile(cfg.class_profiles[label.value])
    rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed) & (2**64 - 1), index]))
    pitch = prof.base_pitch_hz * (1.0 + rng.uniform(-0.06, 0.06))
    rate = prof.speaking_rate * (1.0 + rng.uniform(-0.1, 0.1))
    loud = prof.loudness_db + rng.uniform(-1.5, 1.5)

    pieces = [np.zeros(int(round(cfg.lead_in_s * sr)))]
    spans = []
    cursor = len(pieces[0])
    n_tone = int(round(cfg.marker_tone_dur_s * sr))
    for k in range(N_TASKS):
        pieces.append(_marker_tone(n_tone, cfg.marker_tone_hz, cfg.marker_tone_amp, sr))
        cursor += n_tone
        n_task = int(round(cfg.task_durations_s[k] * sr))
        pieces.append(_task_audio(rng, n_task, prof, pitch, rate * cfg.task_rate_factors[k], loud, sr))
        spans.append((k + 1, cursor, cursor + n_task))
        cursor += n_task
    x = np.concatenate(pieces)
    x = x + 1e-4 * rng.standard_normal(len(x))
    pcm = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2")
    return pcm, spans


def _ymrs_for(label: Label, rng: np.random.Generator) -> int:
    lo, hi = {Label.REMISSION: (0, 7), Label.HYPOMANIA: (8, 19), Label.MANIA: (20, 40)}[label]
    return int(rng.integers(lo, hi + 1))


def generate_synthetic_corpus(cfg: SynthConfig, out_dir) -> CorpusManifest:
    """Write one WAV per recording plus ``manifest.json`` into ``out_dir``.

    Output is a pure function of ``cfg``: same config and seed give identical bytes.
    """
    cfg.validate()
    out_dir = Path(out_dir)
    try:
        (out_dir / "wavs").mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc
    sr = cfg.sample_rate
    recordings, segments = [], []
    index = 0
    for split in SPLITS:
        n = int(cfg.n_per_class_per_split.get(split.value, 0))
        for label in LABELS:
            for i in range(n):
                rec_id = f"{split.value.lower()}_{label.value.lower()}_{i:02d}"
                pcm, spans = synthesize_recording(cfg, label, index)
                meta_rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), index, 1]))
                rel = f"wavs/{rec_id}.wav"
                try:
                    write_wav(out_dir / rel, AudioBuffer(pcm.astype(np.float64) / 32768.0, sr))
                except OSError as exc:
                    raise IoError(f"cannot write {out_dir / rel}: {exc}") from exc
                recordings.append(Recording(
                    id=rec_id,
                    subject_id=f"subj{index:03d}",
                    session_tag=SESSION_TAGS[i % len(SESSION_TAGS)],
                    audio_path=rel,
                    label=label,
                    split=split,
                    age=int(meta_rng.integers(20, 61)),
                    gender=GENDERS[int(meta_rng.integers(0, 2))],
                    ymrs_total=_ymrs_for(label, meta_rng),
                ))
                for task, a, b in spans:
                    segments.append(TaskSegment(rec_id, task, a / sr, b / sr))
                index += 1
    m = CorpusManifest(recordings, segments, SCHEMA_VERSION, root=out_dir)
    save_manifest(m, out_dir / "manifest.json")
    return m


def label_counts(labels) -> dict[str, int]:
    c = Counter(Label(x).value for x in labels)
    return {lab.value: c.get(lab.value, 0) for lab in LABELS}
