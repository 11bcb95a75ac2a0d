"""Knowledge store: sample features, teacher soft labels, per-sample value state.

The store is the immutable record of what the teacher says about each training
sample, plus the mutable bookkeeping (running value estimate plus training
frequency) that the condensation loop maintains. Features and teacher soft
labels never change after construction; augmented soft labels live in
CondensedSet and never overwrite the store.

Single-writer model: value-state updates are expected to come from one training
loop at a time. Read-only access to features and soft labels is safe to share.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

SIMPLEX_ATOL = 1e-6

PROV_HIGH = "HIGH"
PROV_AUGMENTED = "AUGMENTED"

LABEL_MAGIC = b"KCL1"
LABEL_VERSION = 1
_LABEL_HEADER = struct.Struct("<4sIQ")
_LABEL_RECORD = struct.Struct("<IIB")


class LabelStreamError(ValueError):
    """A serialized label stream could not be parsed."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def check_simplex(probs: np.ndarray, *, context: str = "probability vector") -> None:
    """Reject vectors that are not on the probability simplex (within 1e-6)."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"{context} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(p)):
        raise ValueError(f"{context} is not a probability simplex: non-finite entry")
    if np.any(p < 0.0):
        raise ValueError(f"{context} is not a probability simplex: negative entry")
    total = float(p.sum())
    if abs(total - 1.0) > SIMPLEX_ATOL:
        raise ValueError(
            f"{context} is not a probability simplex (sum={total:.8f})"
        )


@dataclass(frozen=True)
class KnowledgePoint:
    """One unit of transferable knowledge: a sample and the teacher's soft label."""

    sample_id: int
    features: np.ndarray
    teacher_probs: np.ndarray
    hard_label: int | None = None


@dataclass(frozen=True)
class ValueRecord:
    """Running value estimate for one sample.

    frequency counts training passes that fed the sample forward; value is the
    running mean of the prediction entropies observed on those passes (nats).
    frequency == 0 means the sample has never been trained on and value is the
    NaN sentinel.
    """

    value: float = float("nan")
    frequency: int = 0

    @property
    def observed(self) -> bool:
        return self.frequency > 0


@dataclass
class ValueLabeling:
    """Global value labeling: rank position, rank probability, binary keep label.

    ranks is a permutation of 0..N-1 with 0 the highest-scored sample;
    probs[i] = 1 - ranks[i]/N; labels[i] is 1 for samples kept at the current
    stage threshold.
    """

    ranks: np.ndarray
    probs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.ranks = np.asarray(self.ranks, dtype=np.int64)
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        n = self.ranks.size
        if self.probs.size != n or self.labels.size != n:
            raise ValueError(
                f"labeling arrays disagree in length: {n}, {self.probs.size}, {self.labels.size}"
            )
        if n == 0:
            raise ValueError("empty labeling")
        sorted_ranks = np.sort(self.ranks)
        if not np.array_equal(sorted_ranks, np.arange(n)):
            raise ValueError("ranks are not a permutation of 0..N-1")
        expected = 1.0 - self.ranks / float(n)
        if not np.array_equal(self.probs, expected):
            raise ValueError("probs do not equal 1 - rank/N")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise ValueError("labels must be binary")

    @property
    def n(self) -> int:
        return int(self.ranks.size)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ValueLabeling):
            return NotImplemented
        return (
            np.array_equal(self.ranks, other.ranks)
            and np.array_equal(self.probs, other.probs)
            and np.array_equal(self.labels, other.labels)
        )


@dataclass
class CondensedSet:
    """The active knowledge encoding for one stage.

    member_ids lists the kept sample ids; members tagged AUGMENTED carry a
    replacement soft label in aug_probs, members tagged HIGH distill against
    the store's original teacher probs.
    """

    member_ids: np.ndarray
    aug_probs: dict[int, np.ndarray] = field(default_factory=dict)
    provenance: np.ndarray = None

    def __post_init__(self):
        self.member_ids = np.asarray(self.member_ids, dtype=np.int64)
        if self.provenance is None:
            self.provenance = np.array(
                [PROV_AUGMENTED if int(i) in self.aug_probs else PROV_HIGH for i in self.member_ids],
                dtype="<U9",
            )
        self.provenance = np.asarray(self.provenance, dtype="<U9")
        if self.provenance.size != self.member_ids.size:
            raise ValueError("provenance length does not match member_ids")
        if np.unique(self.member_ids).size != self.member_ids.size:
            raise ValueError("condensed set has duplicate member ids")
        valid = {PROV_HIGH, PROV_AUGMENTED}
        if not set(self.provenance.tolist()) <= valid:
            raise ValueError(f"provenance tags must be in {valid}")
        tagged_aug = {int(i) for i, tag in zip(self.member_ids, self.provenance) if tag == PROV_AUGMENTED}
        if tagged_aug != set(self.aug_probs):
            raise ValueError("aug_probs keys do not match AUGMENTED members")
        for sid, row in self.aug_probs.items():
            check_simplex(row, context=f"aug_probs for sample {sid}")

    @property
    def size(self) -> int:
        return int(self.member_ids.size)


class KnowledgeStore:
    """All knowledge points of a run plus their mutable value state."""

    def __init__(self, features: np.ndarray, teacher_probs: np.ndarray,
                 hard_labels: np.ndarray | None = None):
        features = np.array(features, dtype=np.float64)
        teacher_probs = np.array(teacher_probs, dtype=np.float64)
        if features.ndim != 2:
            raise ValueError("features must be a 2-d array (N x D)")
        if teacher_probs.ndim != 2:
            raise ValueError("teacher_probs must be a 2-d array (N x C)")
        if features.shape[0] == 0:
            raise ValueError("empty knowledge set")
        if features.shape[0] != teacher_probs.shape[0]:
            raise ValueError(
                f"dataset and teacher_probs lengths differ: "
                f"{features.shape[0]} vs {teacher_probs.shape[0]}"
            )
        for i in range(teacher_probs.shape[0]):
            try:
                check_simplex(teacher_probs[i], context="teacher_probs")
            except ValueError as exc:
                raise ValueError(f"sample {i}: {exc}") from None
        if hard_labels is not None:
            hard_labels = np.array(hard_labels, dtype=np.int64)
            if hard_labels.shape != (features.shape[0],):
                raise ValueError("hard_labels length does not match features")
        features.setflags(write=False)
        teacher_probs.setflags(write=False)
        if hard_labels is not None:
            hard_labels.setflags(write=False)

        self.features = features
        self.teacher_probs = teacher_probs
        self.hard_labels = hard_labels
        n = features.shape[0]
        # running mean of observed values; NaN marks the unobserved state
        self.values = np.full(n, np.nan, dtype=np.float64)
        # most recent observation, kept for the no-moving-average ablation
        self.last_values = np.full(n, np.nan, dtype=np.float64)
        self.frequencies = np.zeros(n, dtype=np.int64)

    @property
    def n(self) -> int:
        return int(self.features.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def num_classes(self) -> int:
        return int(self.teacher_probs.shape[1])

    def point(self, sample_id: int) -> KnowledgePoint:
        i = int(sample_id)
        hard = None if self.hard_labels is None else int(self.hard_labels[i])
        return KnowledgePoint(i, self.features[i], self.teacher_probs[i], hard)

    def record(self, sample_id: int) -> ValueRecord:
        i = int(sample_id)
        return ValueRecord(value=float(self.values[i]), frequency=int(self.frequencies[i]))

    def reset_value_state(self) -> None:
        """Forget all observations; every sample returns to the unobserved state."""
        self.values.fill(np.nan)
        self.last_values.fill(np.nan)
        self.frequencies.fill(0)


def build_store(dataset, teacher_probs, hard_labels=None) -> KnowledgeStore:
    """Materialize the knowledge set from features and cached teacher outputs.

    dataset may be an (N, D) array or a list of (features, hard_label) pairs;
    in the latter case hard labels are taken from the pairs.
    """
    if isinstance(dataset, (list, tuple)) and dataset and isinstance(dataset[0], (list, tuple)) \
            and len(dataset[0]) == 2 and np.ndim(dataset[0][0]) == 1:
        features = np.array([np.asarray(f, dtype=np.float64) for f, _ in dataset])
        hard_labels = np.array([lab for _, lab in dataset], dtype=np.int64)
    else:
        features = np.asarray(dataset, dtype=np.float64)
    if features.size == 0:
        raise ValueError("empty knowledge set")
    return KnowledgeStore(features, np.asarray(teacher_probs, dtype=np.float64), hard_labels)


def export_labels(labeling: ValueLabeling) -> bytes:
    """Serialize a labeling to bytes: header (magic, version, N) then one
    (sample_id, rank, label) record per sample in sample-id order."""
    out = bytearray()
    out += _LABEL_HEADER.pack(LABEL_MAGIC, LABEL_VERSION, labeling.n)
    for i in range(labeling.n):
        out += _LABEL_RECORD.pack(i, int(labeling.ranks[i]), int(labeling.labels[i]))
    return bytes(out)


def import_labels(stream: bytes) -> ValueLabeling:
    """Parse a label stream produced by export_labels; round-trips bit-exactly."""
    data = bytes(stream)
    if len(data) < _LABEL_HEADER.size:
        raise LabelStreamError(
            f"truncated header: got {len(data)} bytes, need {_LABEL_HEADER.size}", len(data)
        )
    magic, version, n = _LABEL_HEADER.unpack_from(data, 0)
    if magic != LABEL_MAGIC:
        raise LabelStreamError(f"bad magic {magic!r}", 0)
    if version != LABEL_VERSION:
        raise LabelStreamError(f"unsupported version {version}", 4)
    expected = _LABEL_HEADER.size + n * _LABEL_RECORD.size
    if len(data) != expected:
        raise LabelStreamError(
            f"stream length {len(data)} does not match header (expected {expected})",
            min(len(data), expected),
        )
    ranks = np.empty(n, dtype=np.int64)
    labels = np.empty(n, dtype=np.uint8)
    offset = _LABEL_HEADER.size
    for i in range(n):
        sid, rank, label = _LABEL_RECORD.unpack_from(data, offset)
        if sid != i:
            raise LabelStreamError(f"record {i} has out-of-order sample_id {sid}", offset)
        if label > 1:
            raise LabelStreamError(f"record {i} has non-binary label {label}", offset)
        ranks[i] = rank
        labels[i] = label
        offset += _LABEL_RECORD.size
    probs = 1.0 - ranks / float(n)
    try:
        return ValueLabeling(ranks=ranks, probs=probs, labels=labels)
    except ValueError as exc:
        raise LabelStreamError(f"invalid labeling content: {exc}", _LABEL_HEADER.size) from None


def save_labels(path, labeling: ValueLabeling) -> None:
    with open(path, "wb") as fh:
        fh.write(export_labels(labeling))


def load_labels(path) -> ValueLabeling:
    with open(path, "rb") as fh:
        return import_labels(fh.read())
