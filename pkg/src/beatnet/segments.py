"""Fixed-length labeled ECG segments and dataset assembly.

Records are cut into non-overlapping 0.25 s windows starting at t = 0.
A window starting at t0 is labeled BEAT when some annotated beat lies in
[t0 + 0.10 s, t0 + 0.15 s), half-open so a beat on a boundary matches a
single window. Each window is resampled to 250 samples on a 1000 Hz grid
with linear interpolation. Only the first 3600 s of a record are used and
a trailing partial window is dropped.

Subjects are partitioned before segments are pooled, so no subject
contributes windows to both Train and Test of the same subset.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    CorruptCache,
    DataError,
    SegmentTooShort,
    TooFewSubjects,
)
from .records import EcgRecord

NO_BEAT = 0
BEAT = 1

WINDOW_SECONDS = 0.25
RESAMPLE_HZ = 1000
SEGMENT_LENGTH = 250
MAX_RECORD_SECONDS = 3600.0
BEAT_WINDOW_LOW = 0.10   # seconds after window start
BEAT_WINDOW_HIGH = 0.15  # exclusive

TRAIN, TEST = "Train", "Test"
PARTITIONS = (TRAIN, TEST)

# Subset each record tag contributes to; two tags pool into one subset.
SUBSET_OF_TAG = {
    "NormalSinus": "NormalSinus+LongTerm",
    "LongTerm": "NormalSinus+LongTerm",
    "Arrhythmia": "Arrhythmia",
    "BaselineFlexComp": "BaselineFlexComp",
    "BaselineComfTech": "BaselineComfTech",
    "MovementComfTech": "MovementComfTech",
}
SUBSET_NAMES = ("NormalSinus+LongTerm", "Arrhythmia", "BaselineFlexComp",
                "BaselineComfTech", "MovementComfTech")

_CACHE_MAGIC = b"HBDS"
_CACHE_VERSION = 1


@dataclass(frozen=True)
class Segment:
    """One 0.25 s window: 250 resampled samples plus its label."""

    samples: np.ndarray  # float32, length 250
    label: int           # BEAT or NO_BEAT
    record_id: str
    start_time: float    # seconds from record start, multiple of 0.25


def label_window(t0: float, beats: np.ndarray) -> int:
    """BEAT when a beat time falls in [t0+0.10, t0+0.15), else NO_BEAT.

    ``beats`` holds beat times in seconds, sorted ascending.
    """
    lo = np.searchsorted(beats, t0 + BEAT_WINDOW_LOW, side="left")
    hi = np.searchsorted(beats, t0 + BEAT_WINDOW_HIGH, side="left")
    return BEAT if hi > lo else NO_BEAT


def resample_linear(samples: np.ndarray, fs_in: float,
                    n_out: int = SEGMENT_LENGTH) -> np.ndarray:
    """Resample onto a 1000 Hz grid by linear interpolation.

    Output k is the input evaluated at k/1000 s from the first sample;
    queries past the last sample clamp to its value.
    """
    samples = np.asarray(samples)
    if samples.size < 2:
        raise SegmentTooShort(
            f"need at least 2 samples to interpolate, got {samples.size}")
    if fs_in <= 0:
        raise SegmentTooShort(f"fs must be > 0, got {fs_in}")
    xp = np.arange(samples.size, dtype=np.float64) / fs_in
    x = np.arange(n_out, dtype=np.float64) / RESAMPLE_HZ
    return np.interp(x, xp, samples.astype(np.float64)).astype(np.float32)


def window_count(duration: float, max_duration: float = MAX_RECORD_SECONDS) -> int:
    """Number of whole 0.25 s windows in min(duration, max_duration)."""
    usable = min(duration, max_duration)
    # tiny epsilon so durations that are exact multiples of 0.25 in real
    # arithmetic are not undercounted through float representation
    return int(usable / WINDOW_SECONDS + 1e-9)


def segment_arrays(record: EcgRecord, beats: np.ndarray | None = None,
                   max_duration: float = MAX_RECORD_SECONDS,
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Window, label and resample one record.

    Returns (X, y): X is (n_windows, 250) float32, y is (n_windows,)
    uint8 of BEAT/NO_BEAT labels. ``beats`` defaults to the record's own
    beat times (seconds).
    """
    if beats is None:
        beats = record.beat_times
    beats = np.asarray(beats, dtype=np.float64)
    n_windows = window_count(record.duration, max_duration)
    n = record.samples.size
    fs = record.fs
    span = math.ceil(WINDOW_SECONDS * fs) + 1

    X = np.empty((n_windows, SEGMENT_LENGTH), dtype=np.float32)
    y = np.empty(n_windows, dtype=np.uint8)
    for i in range(n_windows):
        t0 = i * WINDOW_SECONDS
        i0 = int(math.floor(t0 * fs + 0.5))
        i1 = min(n, i0 + span)
        X[i] = resample_linear(record.samples[i0:i1], fs)
        y[i] = label_window(t0, beats)
    return X, y


def segment_record(record: EcgRecord, beats: np.ndarray | None = None,
                   max_duration: float = MAX_RECORD_SECONDS) -> list[Segment]:
    """Cut one record into labeled :class:`Segment` objects."""
    X, y = segment_arrays(record, beats, max_duration)
    return [Segment(X[i], int(y[i]), record.record_id, i * WINDOW_SECONDS)
            for i in range(len(y))]


def split_subjects(subject_ids, train_fraction: float = 2 / 3,
                   seed: int = 0) -> tuple[frozenset, frozenset]:
    """Deterministic subject-level train/test split.

    Subject ids are sorted, shuffled with a seeded generator, and the
    first round(train_fraction * n) go to train (half rounds up), the
    rest to test.
    """
    ids = sorted(set(subject_ids))
    n = len(ids)
    if n < 2:
        raise TooFewSubjects(f"need at least 2 subjects to split, got {n}")
    if not 0 < train_fraction < 1:
        raise DataError(f"train_fraction must be in (0, 1), "
                        f"got {train_fraction}")
    n_train = int(math.floor(train_fraction * n + 0.5))
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    shuffled = [ids[k] for k in order]
    return frozenset(shuffled[:n_train]), frozenset(shuffled[n_train:])


@dataclass(frozen=True)
class LabeledDataset:
    """Segments of one subset partition, stored columnwise.

    ``record_table`` maps the per-segment ``record_index`` to
    (record_id, subject_id); ``window_index`` recovers each segment's
    start time as index * 0.25 s.
    """

    subset_name: str
    partition: str
    X: np.ndarray             # (n, 250) float32
    y: np.ndarray             # (n,) uint8, values BEAT/NO_BEAT
    record_index: np.ndarray  # (n,) uint32 into record_table
    window_index: np.ndarray  # (n,) uint32
    record_table: tuple       # ((record_id, subject_id), ...)
    subject_ids: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        n = self.y.size
        if self.partition not in PARTITIONS:
            raise DataError(f"partition must be one of {PARTITIONS}, "
                            f"got {self.partition!r}")
        if self.X.shape != (n, SEGMENT_LENGTH):
            raise DataError(f"X shape {self.X.shape} does not match "
                            f"{n} labels x {SEGMENT_LENGTH} samples")
        if self.record_index.shape != (n,) or self.window_index.shape != (n,):
            raise DataError("index arrays must parallel labels")
        if n and not np.all(np.isfinite(self.X)):
            raise DataError("dataset contains non-finite sample values")
        if n and not np.all((self.y == NO_BEAT) | (self.y == BEAT)):
            raise DataError("labels must be BEAT or NO_BEAT")
        if n and self.record_index.max() >= len(self.record_table):
            raise DataError("record_index points past record_table")
        table_subjects = {subj for _, subj in self.record_table}
        if not table_subjects <= set(self.subject_ids):
            raise DataError("record_table references subjects outside "
                            "subject_ids")

    def __len__(self) -> int:
        return int(self.y.size)

    def __getitem__(self, i: int) -> Segment:
        rec_id, _ = self.record_table[self.record_index[i]]
        return Segment(self.X[i], int(self.y[i]), rec_id,
                       float(self.window_index[i]) * WINDOW_SECONDS)

    @property
    def segments(self) -> list[Segment]:
        return [self[i] for i in range(len(self))]


def class_stats(dataset: LabeledDataset) -> tuple[int, int, float]:
    """(n_segments, n_beat, percent_beat); an empty dataset reports 0.0%."""
    n = len(dataset)
    n_beat = int(np.count_nonzero(dataset.y == BEAT))
    pct = 100.0 * n_beat / n if n else 0.0
    return n, n_beat, pct


def build_labeled_dataset(records: list[EcgRecord], subset_name: str,
                          partition: str, subjects,
                          max_duration: float = MAX_RECORD_SECONDS,
                          ) -> LabeledDataset:
    """Pool segments of the records whose subject is in ``subjects``.

    Records are processed in their given (manifest) order so the result
    does not depend on how per-record work is scheduled.
    """
    subjects = frozenset(subjects)
    chosen = [r for r in records if r.subject_id in subjects]
    table = tuple((r.record_id, r.subject_id) for r in chosen)
    xs, ys, recs, wins = [], [], [], []
    for k, rec in enumerate(chosen):
        X, y = segment_arrays(rec, max_duration=max_duration)
        xs.append(X)
        ys.append(y)
        recs.append(np.full(y.size, k, dtype=np.uint32))
        wins.append(np.arange(y.size, dtype=np.uint32))
    if xs:
        X = np.concatenate(xs)
        y = np.concatenate(ys)
        record_index = np.concatenate(recs)
        window_index = np.concatenate(wins)
    else:
        X = np.empty((0, SEGMENT_LENGTH), dtype=np.float32)
        y = np.empty(0, dtype=np.uint8)
        record_index = np.empty(0, dtype=np.uint32)
        window_index = np.empty(0, dtype=np.uint32)
    return LabeledDataset(subset_name, partition, X, y, record_index,
                          window_index, table, subjects)


def build_subsets(records: list[EcgRecord], train_fraction: float = 2 / 3,
                  seed: int = 0, max_duration: float = MAX_RECORD_SECONDS,
                  ) -> dict[tuple[str, str], LabeledDataset]:
    """Assemble every subset present in ``records`` with its Train/Test split.

    Returns a mapping keyed by (subset_name, partition). Subsets are
    split independently; a subset with fewer than 2 subjects is an error.
    """
    by_subset: dict[str, list[EcgRecord]] = {}
    for rec in records:
        subset = SUBSET_OF_TAG[rec.dataset_tag]
        by_subset.setdefault(subset, []).append(rec)

    out: dict[tuple[str, str], LabeledDataset] = {}
    for subset in SUBSET_NAMES:
        if subset not in by_subset:
            continue
        recs = by_subset[subset]
        train_ids, test_ids = split_subjects(
            {r.subject_id for r in recs}, train_fraction, seed)
        out[(subset, TRAIN)] = build_labeled_dataset(
            recs, subset, TRAIN, train_ids, max_duration)
        out[(subset, TEST)] = build_labeled_dataset(
            recs, subset, TEST, test_ids, max_duration)
    return out


def stats_csv(datasets) -> str:
    """Render per-partition class statistics as CSV text.

    One row per dataset: subset, partition, n_subjects, n_segments,
    percent_beat (4 decimal places). Input order is preserved.
    """
    lines = ["subset,partition,n_subjects,n_segments,percent_beat"]
    for ds in datasets:
        n, _, pct = class_stats(ds)
        lines.append(f"{ds.subset_name},{ds.partition},"
                     f"{len(ds.subject_ids)},{n},{pct:.4f}")
    return "\n".join(lines) + "\n"


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise DataError(f"string too long for cache: {len(raw)} bytes")
    return struct.pack("<H", len(raw)) + raw


class _Reader:
    """Cursor over cache bytes that fails loudly on truncation."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCache("cache file truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def take_str(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")


def _checksum(payload: bytes) -> bytes:
    return hashlib.blake2b(payload, digest_size=8).digest()


def save_cache(dataset: LabeledDataset, path) -> None:
    """Write a dataset to a binary cache file.

    Layout (all little-endian): magic "HBDS", u16 version, u16 segment
    length, u8 partition (0=Train, 1=Test), subset name, subject ids,
    record table, u32 segment count, then the column arrays (record
    index u32, window index u32, labels u8, samples f32), and finally an
    8-byte keyed-hash checksum of everything before it.
    """
    parts = [_CACHE_MAGIC,
             struct.pack("<HHB", _CACHE_VERSION, SEGMENT_LENGTH,
                         PARTITIONS.index(dataset.partition)),
             _pack_str(dataset.subset_name)]
    subjects = sorted(dataset.subject_ids)
    parts.append(struct.pack("<H", len(subjects)))
    parts.extend(_pack_str(s) for s in subjects)
    parts.append(struct.pack("<I", len(dataset.record_table)))
    for rec_id, subj in dataset.record_table:
        parts.append(_pack_str(rec_id))
        parts.append(_pack_str(subj))
    n = len(dataset)
    parts.append(struct.pack("<I", n))
    parts.append(dataset.record_index.astype("<u4").tobytes())
    parts.append(dataset.window_index.astype("<u4").tobytes())
    parts.append(dataset.y.astype(np.uint8).tobytes())
    parts.append(dataset.X.astype("<f4").tobytes())
    payload = b"".join(parts)
    with open(path, "wb") as fh:
        fh.write(payload)
        fh.write(_checksum(payload))


def load_cache(path) -> LabeledDataset:
    """Read a cache file back; any structural damage raises CorruptCache."""
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise CorruptCache(f"cannot read cache {path}: {exc}") from exc
    if len(data) < len(_CACHE_MAGIC) + 8:
        raise CorruptCache("cache file too small")
    payload, stored = data[:-8], data[-8:]
    if _checksum(payload) != stored:
        raise CorruptCache("cache checksum mismatch")

    rd = _Reader(payload)
    if rd.take(4) != _CACHE_MAGIC:
        raise CorruptCache("bad cache magic")
    version, seg_len, part_code = rd.unpack("<HHB")
    if version != _CACHE_VERSION:
        raise CorruptCache(f"unsupported cache version {version}")
    if seg_len != SEGMENT_LENGTH:
        raise CorruptCache(f"cache segment length {seg_len} != "
                           f"{SEGMENT_LENGTH}")
    if part_code >= len(PARTITIONS):
        raise CorruptCache(f"bad partition code {part_code}")
    subset_name = rd.take_str()
    (n_subjects,) = rd.unpack("<H")
    subjects = frozenset(rd.take_str() for _ in range(n_subjects))
    (n_records,) = rd.unpack("<I")
    table = tuple((rd.take_str(), rd.take_str()) for _ in range(n_records))
    (n,) = rd.unpack("<I")
    record_index = np.frombuffer(rd.take(4 * n), dtype="<u4").copy()
    window_index = np.frombuffer(rd.take(4 * n), dtype="<u4").copy()
    y = np.frombuffer(rd.take(n), dtype=np.uint8).copy()
    X = np.frombuffer(rd.take(4 * n * SEGMENT_LENGTH), dtype="<f4")
    X = X.reshape(n, SEGMENT_LENGTH).copy()
    if rd.pos != len(payload):
        raise CorruptCache(f"{len(payload) - rd.pos} trailing bytes in cache")
    try:
        return LabeledDataset(subset_name, PARTITIONS[part_code], X, y,
                              record_index, window_index, table, subjects)
    except DataError as exc:
        raise CorruptCache(f"cache content inconsistent: {exc}") from exc
