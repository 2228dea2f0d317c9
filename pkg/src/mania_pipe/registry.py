"""Published reference numbers, kept for display next to synthetic-corpus results.

None of these are reproduction targets: the clinical recordings behind them
are not distributed with this package.
"""

from __future__ import annotations

from dataclasses import dataclass
from types import MappingProxyType


@dataclass(frozen=True)
class ReferenceResult:
    name: str
    values: MappingProxyType
    provenance: str


def _ref(name, provenance, **values):
    return ReferenceResult(name, MappingProxyType(values), provenance)


_PER_TASK = "dev UAR of the CNN trained and evaluated on a single task"
_PER_TASK_UNPRINTED = _PER_TASK + "; shown only as a bar chart, value not published"
_GROUPS = "dev UAR per task group: 'same' evaluates on the grouped tasks, 'whole' on full recordings"
_RELATED = "best dev/test UAR reported by earlier systems on the same corpus"

_ENTRIES = (
    _ref("task:1", _PER_TASK_UNPRINTED, same=None),
    _ref("task:2", _PER_TASK_UNPRINTED, same=None),
    _ref("task:3", _PER_TASK_UNPRINTED, same=None),
    _ref("task:4", _PER_TASK_UNPRINTED, same=None),
    _ref("task:5", _PER_TASK_UNPRINTED, same=None),
    _ref("task:6", _PER_TASK_UNPRINTED, same=None),
    _ref("task:7", _PER_TASK, same=0.53),
    _ref("cross:task7-whole",
         "model trained on task 7 only, evaluated on full dev recordings", whole=0.51),
    _ref("group:1-2-3", _GROUPS, same=0.46, whole=0.47),
    _ref("group:4-5", _GROUPS, same=0.34, whole=0.36),
    _ref("group:6-7", _GROUPS, same=0.46, whole=0.53),
    _ref("headline", "best speech-only result: tasks 6-7, full-recording dev set", uar=0.53),
    _ref("chance", "three balanced classes", uar=1.0 / 3.0),
    _ref("related:avec2018-baseline", _RELATED + " (eGEMAPS+FAUs, SVM)", dev=0.550, test=0.500),
    _ref("related:multistream", _RELATED + " (arousal + upper-body posture, multistream)", dev=0.783, test=0.407),
    _ref("related:inceplstm", _RELATED + " (MFCC, IncepLSTM)", dev=0.651, test=None),
    _ref("related:hierarchical-recall", _RELATED + " (eGEMAPS+MFCC+AUs+eyesight, hierarchical recall)", dev=0.867, test=0.574),
    _ref("related:gewelm", _RELATED + " (AUs+gaze+pose, GEWELM)", dev=0.550, test=0.482),
    _ref("related:bilstm", _RELATED + " (MFCC+eGEMAPS+BoAW+DeepSpectrum+FAUs+BoVW, Bi-LSTM)", dev=0.592, test=0.444),
    _ref("related:capsnet", _RELATED + " (mel spectrogram, CapsNet)", dev=0.462, test=0.455),
    _ref("related:multi-instance", _RELATED + " (MFCC, multi-instance learning)", dev=0.616, test=0.574),
)


class ReferenceRegistry:
    """Read-only lookup of published numbers by name."""

    def __init__(self, entries=_ENTRIES):
        self._entries = {e.name: e for e in entries}

    def __getitem__(self, name: str) -> ReferenceResult:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __iter__(self):
        return iter(self._entries.values())

    def names(self) -> list[str]:
        return list(self._entries)

    def reference_for(self, condition: str, eval_condition: str) -> float | None:
        """Published UAR for a matrix row label such as ``"7"`` or ``"6-7"``."""
        key = f"task:{condition}" if "-" not in condition else f"group:{condition}"
        if eval_condition == "whole" and condition == "7":
            key = "cross:task7-whole"
        entry = self._entries.get(key)
        return None if entry is None else entry.values.get(eval_condition)


REGISTRY = ReferenceRegistry()
