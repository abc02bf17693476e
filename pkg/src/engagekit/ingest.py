"""Dataset ingestion: ratings, embeddings, manifests, labeled sequences.

Two human raters score each student-second on a continuous engagement scale
in [-2, 2].  The per-second label is the mean of the two ratings, discretized
into three levels.  Feature vectors arrive as CSV tables of per-frame
embeddings (identity already assigned) or of raw detections (see
:mod:`engagekit.tracklets`); a JSON manifest ties the files together.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    AlignmentError,
    DataError,
    DegenerateInputError,
    ParseError,
    ValueRangeError,
)
from .tracklets import FPS, Detection, GalleryEntry, Sequence, Tracklet, sequences_from_tracklets

ENGAGEMENT_MIN = -2.0
ENGAGEMENT_MAX = 2.0

DEFAULT_THRESHOLDS = (0.35, 0.65)


class EngagementLevel(IntEnum):
    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "EngagementLevel":
        try:
            return cls[label.upper()]
        except KeyError:
            raise ValueRangeError(f"unknown engagement level {label!r}") from None


LEVEL_LABELS = tuple(level.label for level in EngagementLevel)


def _check_rating_value(value: float, context: str) -> float:
    value = float(value)
    if not np.isfinite(value) or not ENGAGEMENT_MIN <= value <= ENGAGEMENT_MAX:
        raise ValueRangeError(
            f"{context}: rating {value} outside [{ENGAGEMENT_MIN}, {ENGAGEMENT_MAX}]"
        )
    return value


@dataclass
class RaterSeries:
    """One rater's per-second continuous scores for one student."""

    rater_id: str
    values: dict[int, float]

    def __post_init__(self):
        for second, value in self.values.items():
            if second < 0:
                raise DataError(f"rater {self.rater_id!r}: negative second {second}")
            self.values[second] = _check_rating_value(
                value, f"rater {self.rater_id!r} second {second}"
            )


@dataclass
class ContinuousEngagementSeries:
    """Per-second rater-mean engagement for one student in one session."""

    values: dict[int, float]


def average_raters(a: RaterSeries, b: RaterSeries) -> ContinuousEngagementSeries:
    """Mean of two rater series, second by second.

    Both series must cover exactly the same seconds; the error message lists
    the seconds present on one side only.
    """
    keys_a, keys_b = set(a.values), set(b.values)
    if keys_a != keys_b:
        only_a = sorted(keys_a - keys_b)[:10]
        only_b = sorted(keys_b - keys_a)[:10]
        raise AlignmentError(
            f"rater series cover different seconds: only {a.rater_id!r} has "
            f"{only_a}, only {b.rater_id!r} has {only_b}"
        )
    merged = {s: (a.values[s] + b.values[s]) / 2.0 for s in keys_a}
    return ContinuousEngagementSeries(values=merged)


def icc_absolute_agreement(a: RaterSeries, b: RaterSeries) -> float:
    """Two-way random-effects intraclass correlation, ICC(2,2).

    Measures absolute agreement of the two raters over their shared seconds
    using the average-measures form

        (MS_R - MS_E) / (MS_R + (MS_C - MS_E) / n)

    where MS_R, MS_C, MS_E are the rows (seconds), columns (raters) and
    residual mean squares of the two-way ANOVA and n is the number of shared
    seconds.  The estimate is clipped to [-1, 1].
    """
    shared = sorted(set(a.values) & set(b.values))
    n = len(shared)
    if n < 2:
        raise DegenerateInputError(
            f"ICC needs at least 2 shared seconds, got {n}"
        )
    x = np.array([[a.values[s], b.values[s]] for s in shared], dtype=np.float64)
    k = 2
    grand = x.mean()
    ss_total = float(((x - grand) ** 2).sum())
    if ss_total == 0.0:
        raise DegenerateInputError("ICC undefined: all ratings identical")
    row_means = x.mean(axis=1)
    col_means = x.mean(axis=0)
    ss_rows = k * float(((row_means - grand) ** 2).sum())
    ss_cols = n * float(((col_means - grand) ** 2).sum())
    ss_err = ss_total - ss_rows - ss_cols
    ms_r = ss_rows / (n - 1)
    ms_c = ss_cols / (k - 1)
    ms_e = ss_err / ((n - 1) * (k - 1))
    denom = ms_r + (ms_c - ms_e) / n
    if denom == 0.0:
        raise DegenerateInputError("ICC undefined: zero denominator")
    return float(np.clip((ms_r - ms_e) / denom, -1.0, 1.0))


def discretize_engagement(
    value: float, thresholds: tuple[float, float] = DEFAULT_THRESHOLDS
) -> EngagementLevel:
    """Map a continuous engagement value to a level.

    Bands: low = [-2, t_low], medium = (t_low, t_high], high = (t_high, 2].
    """
    t_low, t_high = thresholds
    if not t_low < t_high:
        raise DataError(f"thresholds must increase, got {thresholds}")
    value = float(value)
    if not np.isfinite(value) or not ENGAGEMENT_MIN <= value <= ENGAGEMENT_MAX:
        raise ValueRangeError(
            f"engagement value {value} outside [{ENGAGEMENT_MIN}, {ENGAGEMENT_MAX}]"
        )
    if value <= t_low:
        return EngagementLevel.LOW
    if value <= t_high:
        return EngagementLevel.MEDIUM
    return EngagementLevel.HIGH


# ---------------------------------------------------------------------------
# Manifest


@dataclass
class SessionFiles:
    """File locations for one recorded session."""

    session_id: str
    embeddings: dict[str, Path]  # camera_id -> csv path
    ratings: dict[str, Path]  # rater_id -> csv path
    detections: dict[str, Path] = field(default_factory=dict)  # camera_id -> csv


@dataclass
class DatasetManifest:
    """Parsed dataset manifest.

    ``modality_dims`` fixes the embedding width per modality;
    ``thresholds`` are the discretization cut points; ``identity_dim`` is the
    width of the face-identity embedding used in detection tables.
    """

    modality_dims: dict[str, int]
    sessions: list[SessionFiles]
    gallery_path: Path | None = None
    thresholds: tuple[float, float] = DEFAULT_THRESHOLDS
    fps: int = FPS
    identity_dim: int | None = None
    identity_threshold: float = 0.3

    def __post_init__(self):
        if not self.modality_dims:
            raise DataError("manifest declares no modalities")
        for name, dim in self.modality_dims.items():
            if int(dim) < 1:
                raise DataError(f"modality {name!r} has non-positive dim {dim}")
        t_low, t_high = self.thresholds
        if not ENGAGEMENT_MIN < t_low < t_high < ENGAGEMENT_MAX:
            raise DataError(f"bad thresholds {self.thresholds}")
        if self.fps != FPS:
            raise DataError(f"unsupported fps {self.fps}, expected {FPS}")


def _reject_unknown_keys(obj: Mapping, allowed: set[str], context: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ParseError(f"{context}: unknown keys {sorted(unknown)}")


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse a JSON dataset manifest.

    Unknown keys are rejected rather than ignored so that typos surface as
    errors.  Relative file paths are resolved against the manifest location.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: manifest must be a JSON object")
    _reject_unknown_keys(
        raw,
        {
            "modality_dims",
            "sessions",
            "gallery",
            "thresholds",
            "fps",
            "identity_dim",
            "identity_threshold",
        },
        str(path),
    )
    for key in ("modality_dims", "sessions"):
        if key not in raw:
            raise ParseError(f"{path}: missing required key {key!r}")
    base = path.parent

    sessions = []
    for i, entry in enumerate(raw["sessions"]):
        if not isinstance(entry, dict):
            raise ParseError(f"{path}: sessions[{i}] is not an object")
        _reject_unknown_keys(
            entry,
            {"session_id", "embeddings", "ratings", "detections"},
            f"{path}: sessions[{i}]",
        )
        if "session_id" not in entry:
            raise ParseError(f"{path}: sessions[{i}] missing session_id")
        ratings = {
            rater: base / p for rater, p in entry.get("ratings", {}).items()
        }
        if ratings and len(ratings) != 2:
            raise ParseError(
                f"{path}: sessions[{i}] declares {len(ratings)} raters; "
                "exactly two are supported"
            )
        sessions.append(
            SessionFiles(
                session_id=str(entry["session_id"]),
                embeddings={
                    cam: base / p
                    for cam, p in entry.get("embeddings", {}).items()
                },
                ratings=ratings,
                detections={
                    cam: base / p
                    for cam, p in entry.get("detections", {}).items()
                },
            )
        )

    try:
        return DatasetManifest(
            modality_dims={
                str(k): int(v) for k, v in raw["modality_dims"].items()
            },
            sessions=sessions,
            gallery_path=(base / raw["gallery"]) if "gallery" in raw else None,
            thresholds=tuple(raw.get("thresholds", DEFAULT_THRESHOLDS)),
            fps=int(raw.get("fps", FPS)),
            identity_dim=(
                int(raw["identity_dim"]) if "identity_dim" in raw else None
            ),
            identity_threshold=float(raw.get("identity_threshold", 0.3)),
        )
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc


def load_gallery(path: str | Path, identity_dim: int) -> list[GalleryEntry]:
    """Parse a JSON gallery: {student_id: [[...], ...]}."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise DataError(f"cannot read gallery {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: gallery must be a JSON object")
    entries = []
    for student_id in sorted(raw):
        vectors = []
        for j, vec in enumerate(raw[student_id]):
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (identity_dim,):
                raise ParseError(
                    f"{path}: gallery vector {j} of {student_id!r} has "
                    f"length {arr.shape}, expected {identity_dim}"
                )
            vectors.append(arr)
        entries.append(
            GalleryEntry(student_id=str(student_id), query_vectors=tuple(vectors))
        )
    return entries


# ---------------------------------------------------------------------------
# CSV tables


@dataclass(frozen=True)
class FrameEmbedding:
    """One identity-assigned embedding row."""

    session_id: str
    student_id: str
    camera_id: str
    frame_index: int
    modality: str
    vector: np.ndarray


_ID_COLUMNS = ("session_id", "student_id", "camera_id", "frame_index", "modality")


def _feature_columns(header: list[str], prefix: str, path: Path) -> list[str]:
    """Contiguous prefix0..prefixN-1 columns present in the header."""
    cols = []
    while f"{prefix}{len(cols)}" in header:
        cols.append(f"{prefix}{len(cols)}")
    stray = [
        c
        for c in header
        if c.startswith(prefix)
        and c[len(prefix):].isdigit()
        and c not in cols
    ]
    if stray:
        raise ParseError(
            f"{path}: non-contiguous {prefix}* columns (missing index before "
            f"{sorted(stray)[0]})"
        )
    return cols


def _parse_vector(
    row: dict[str, str],
    cols: list[str],
    width: int,
    path: Path,
    rownum: int,
    what: str,
) -> np.ndarray:
    if width > len(cols):
        raise ParseError(
            f"{path}: row {rownum}: {what} needs {width} columns, "
            f"file has {len(cols)}"
        )
    values = np.empty(width, dtype=np.float64)
    for j in range(width):
        cell = row[cols[j]]
        try:
            values[j] = float(cell)
        except (TypeError, ValueError):
            raise ParseError(
                f"{path}: row {rownum}: bad {what} cell {cols[j]}={cell!r}"
            ) from None
    if not np.all(np.isfinite(values)):
        raise ParseError(f"{path}: row {rownum}: non-finite {what} value")
    for j in range(width, len(cols)):
        if (row[cols[j]] or "") != "":
            raise ParseError(
                f"{path}: row {rownum}: cell {cols[j]} must be empty "
                f"({what} width is {width})"
            )
    return values


def _open_table(
    path: Path, manifest: DatasetManifest, with_identity: bool
) -> tuple[csv.DictReader, list[str], list[str]]:
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot read table {path}: {exc}") from exc
    reader = csv.DictReader(handle)
    header = reader.fieldnames
    if header is None:
        raise ParseError(f"{path}: empty file")
    for col in _ID_COLUMNS:
        if col not in header:
            raise ParseError(f"{path}: header missing column {col!r}")
    d_cols = _feature_columns(list(header), "d", path)
    max_dim = max(manifest.modality_dims.values())
    if len(d_cols) < max_dim:
        raise ParseError(
            f"{path}: header has {len(d_cols)} d* columns, manifest needs "
            f"{max_dim}"
        )
    id_cols = _feature_columns(list(header), "id_d", path)
    if with_identity:
        if manifest.identity_dim is None:
            raise ParseError(
                f"{path}: detection table requires identity_dim in the manifest"
            )
        if len(id_cols) < manifest.identity_dim:
            raise ParseError(
                f"{path}: header has {len(id_cols)} id_d* columns, manifest "
                f"needs {manifest.identity_dim}"
            )
    elif id_cols:
        raise ParseError(f"{path}: unexpected id_d* columns in embedding table")
    known = set(_ID_COLUMNS) | set(d_cols) | set(id_cols)
    extra = [c for c in header if c not in known]
    if extra:
        raise ParseError(f"{path}: unknown columns {extra}")
    return reader, d_cols, id_cols


def _parse_common(
    row: dict[str, str], manifest: DatasetManifest, path: Path, rownum: int
) -> tuple[str, str, str, int, str]:
    for col in _ID_COLUMNS:
        if row.get(col) in (None, ""):
            raise ParseError(f"{path}: row {rownum}: empty {col}")
    modality = row["modality"]
    if modality not in manifest.modality_dims:
        raise ParseError(
            f"{path}: row {rownum}: unknown modality {modality!r}"
        )
    try:
        frame_index = int(row["frame_index"])
    except ValueError:
        raise ParseError(
            f"{path}: row {rownum}: bad frame_index {row['frame_index']!r}"
        ) from None
    if frame_index < 0:
        raise ParseError(f"{path}: row {rownum}: negative frame_index")
    return (
        row["session_id"],
        row["student_id"],
        row["camera_id"],
        frame_index,
        modality,
    )


def load_embedding_table(
    path: str | Path, manifest: DatasetManifest
) -> list[FrameEmbedding]:
    """Parse an identity-assigned per-frame embedding CSV.

    Columns are matched by header name, never by position.  Each row's
    vector occupies d0..d{D-1} where D is the manifest dim of the row's
    modality; wider files must leave the surplus cells empty.
    """
    path = Path(path)
    reader, d_cols, _ = _open_table(path, manifest, with_identity=False)
    rows = []
    for rownum, row in enumerate(reader, start=2):
        session_id, student_id, camera_id, frame_index, modality = _parse_common(
            row, manifest, path, rownum
        )
        vector = _parse_vector(
            row,
            d_cols,
            manifest.modality_dims[modality],
            path,
            rownum,
            "embedding",
        )
        rows.append(
            FrameEmbedding(
                session_id=session_id,
                student_id=student_id,
                camera_id=camera_id,
                frame_index=frame_index,
                modality=modality,
                vector=vector,
            )
        )
    return rows


def load_detection_table(
    path: str | Path, manifest: DatasetManifest
) -> list[Detection]:
    """Parse a raw detection CSV (embedding columns plus id_d* identity).

    The ``student_id`` column of a detection table holds a detector-local
    face key, not a real student: the per-modality rows of one face share
    the key and are merged into a single :class:`Detection`.
    """
    path = Path(path)
    reader, d_cols, id_cols = _open_table(path, manifest, with_identity=True)
    assert manifest.identity_dim is not None
    grouped: dict[tuple[str, int, str], dict] = {}
    order: list[tuple[str, int, str]] = []
    for rownum, row in enumerate(reader, start=2):
        _, face_key, camera_id, frame_index, modality = _parse_common(
            row, manifest, path, rownum
        )
        vector = _parse_vector(
            row,
            d_cols,
            manifest.modality_dims[modality],
            path,
            rownum,
            "embedding",
        )
        identity = _parse_vector(
            row, id_cols, manifest.identity_dim, path, rownum, "identity"
        )
        key = (camera_id, frame_index, face_key)
        slot = grouped.get(key)
        if slot is None:
            slot = {"identity": identity, "modalities": {}}
            grouped[key] = slot
            order.append(key)
        if modality in slot["modalities"]:
            raise ParseError(
                f"{path}: row {rownum}: duplicate modality {modality!r} for "
                f"face {face_key!r} at frame {frame_index}"
            )
        slot["modalities"][modality] = vector
    return [
        Detection(
            camera_id=cam,
            frame_index=idx,
            identity_vector=grouped[(cam, idx, fk)]["identity"],
            modality_vectors=grouped[(cam, idx, fk)]["modalities"],
            face_key=fk,
        )
        for cam, idx, fk in order
    ]


def load_rating_table(
    path: str | Path,
) -> dict[tuple[str, str], dict[str, RaterSeries]]:
    """Parse a ratings CSV into {(session, student): {rater: series}}."""
    path = Path(path)
    try:
        handle = path.open(newline="")
    except OSError as exc:
        raise DataError(f"cannot read ratings {path}: {exc}") from exc
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames
        expected = ["session_id", "student_id", "rater_id", "second", "value"]
        if header is None or sorted(header) != sorted(expected):
            raise ParseError(
                f"{path}: ratings header must be {expected}, got {header}"
            )
        collected: dict[tuple[str, str], dict[str, dict[int, float]]] = {}
        for rownum, row in enumerate(reader, start=2):
            for col in expected:
                if row.get(col) in (None, ""):
                    raise ParseError(f"{path}: row {rownum}: empty {col}")
            try:
                second = int(row["second"])
                value = float(row["value"])
            except ValueError:
                raise ParseError(
                    f"{path}: row {rownum}: bad second/value"
                ) from None
            if second < 0:
                raise ParseError(f"{path}: row {rownum}: negative second")
            if not np.isfinite(value) or not (
                ENGAGEMENT_MIN <= value <= ENGAGEMENT_MAX
            ):
                raise ParseError(
                    f"{path}: row {rownum}: value {value} outside "
                    f"[{ENGAGEMENT_MIN}, {ENGAGEMENT_MAX}]"
                )
            key = (row["session_id"], row["student_id"])
            series = collected.setdefault(key, {}).setdefault(
                row["rater_id"], {}
            )
            if second in series:
                raise ParseError(
                    f"{path}: row {rownum}: duplicate rating for second "
                    f"{second} of {key} by {row['rater_id']!r}"
                )
            series[second] = value
    return {
        key: {
            rater: RaterSeries(rater_id=rater, values=vals)
            for rater, vals in raters.items()
        }
        for key, raters in collected.items()
    }


def merge_session_ratings(
    tables: Iterable[dict[tuple[str, str], dict[str, RaterSeries]]],
) -> dict[str, dict[str, ContinuousEngagementSeries]]:
    """Combine rating tables into {student: {session: rater-mean series}}.

    Every (session, student) must be covered by exactly two raters.
    """
    merged: dict[tuple[str, str], dict[str, RaterSeries]] = {}
    for table in tables:
        for key, raters in table.items():
            slot = merged.setdefault(key, {})
            for rater_id, series in raters.items():
                if rater_id in slot:
                    raise ParseError(
                        f"rater {rater_id!r} appears twice for {key}"
                    )
                slot[rater_id] = series
    out: dict[str, dict[str, ContinuousEngagementSeries]] = {}
    for (session_id, student_id), raters in merged.items():
        if len(raters) != 2:
            raise DataError(
                f"{(session_id, student_id)} has {len(raters)} raters; "
                "exactly two are required"
            )
        a, b = (raters[r] for r in sorted(raters))
        out.setdefault(student_id, {})[session_id] = average_raters(a, b)
    return out


# ---------------------------------------------------------------------------
# Labeled sequences


@dataclass(frozen=True)
class LabeledSequence:
    sequence: Sequence
    level: EngagementLevel

    @property
    def student_id(self) -> str:
        return self.sequence.student_id

    @property
    def session_id(self) -> str:
        return self.sequence.session_id

    @property
    def second_index(self) -> int:
        return self.sequence.second_index

    @property
    def modality(self) -> str:
        return self.sequence.modality

    @property
    def key(self) -> tuple[str, str, int, str]:
        return (
            self.student_id,
            self.session_id,
            self.second_index,
            self.modality,
        )


@dataclass
class LabeledSequenceSet:
    """A deduplicated collection of labeled one-second sequences."""

    entries: list[LabeledSequence]

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.key in seen:
                raise DataError(f"duplicate labeled sequence {e.key}")
            seen.add(e.key)

    def __len__(self) -> int:
        return len(self.entries)

    def modalities(self) -> list[str]:
        return sorted({e.modality for e in self.entries})

    def students(self) -> list[str]:
        return sorted({e.student_id for e in self.entries})

    def filter(
        self,
        modality: str | None = None,
        students: Iterable[str] | None = None,
    ) -> "LabeledSequenceSet":
        keep = self.entries
        if modality is not None:
            keep = [e for e in keep if e.modality == modality]
        if students is not None:
            wanted = set(students)
            keep = [e for e in keep if e.student_id in wanted]
        return LabeledSequenceSet(entries=list(keep))

    def _single_modality(self) -> None:
        mods = self.modalities()
        if len(mods) != 1:
            raise DataError(
                f"operation needs a single modality, set holds {mods}"
            )

    def frames_tensor(self) -> np.ndarray:
        """Stack sequences as (n, 24, d); requires one modality."""
        self._single_modality()
        return np.stack([e.sequence.frames for e in self.entries])

    def labels(self) -> np.ndarray:
        return np.array([int(e.level) for e in self.entries], dtype=np.int64)


@dataclass
class IngestReport:
    """Bookkeeping from build_labeled_dataset."""

    total: int
    kept: int
    dropped: int
    dropped_keys: list[tuple[str, str, int, str]]


def build_labeled_dataset(
    manifest: DatasetManifest,
    sequences: Iterable[Sequence],
    labels: Mapping[str, Mapping[str, ContinuousEngagementSeries]],
) -> tuple[LabeledSequenceSet, IngestReport]:
    """Join sequences with rater-mean labels.

    ``labels`` maps student -> session -> continuous series.  Sequences with
    no label for their second are dropped and counted in the report.
    """
    entries: list[LabeledSequence] = []
    dropped: list[tuple[str, str, int, str]] = []
    total = 0
    for seq in sequences:
        total += 1
        series = labels.get(seq.student_id, {}).get(seq.session_id)
        value = None if series is None else series.values.get(seq.second_index)
        if value is None:
            dropped.append(
                (seq.student_id, seq.session_id, seq.second_index, seq.modality)
            )
            continue
        entries.append(
            LabeledSequence(
                sequence=seq,
                level=discretize_engagement(value, manifest.thresholds),
            )
        )
    report = IngestReport(
        total=total, kept=len(entries), dropped=len(dropped), dropped_keys=dropped
    )
    return LabeledSequenceSet(entries=entries), report


def level_fractions(dataset: LabeledSequenceSet) -> np.ndarray:
    """Fraction of sequences per level; sums to 1."""
    if not dataset.entries:
        raise DegenerateInputError("level fractions of an empty dataset")
    counts = np.bincount(dataset.labels(), minlength=3).astype(np.float64)
    return counts / counts.sum()


# ---------------------------------------------------------------------------
# Whole-pipeline helpers and dataset files


def sequences_from_embeddings(
    rows: Iterable[FrameEmbedding], session_id: str
) -> list[Sequence]:
    """Cut identity-assigned embedding rows into sequences.

    Rows already carry a student and camera; gallery similarity is defined
    as 1.0, so camera choice falls back to frame count and camera id.
    """
    tracks: dict[tuple[str, str], Tracklet] = {}
    for row in rows:
        if row.session_id != session_id:
            raise DataError(
                f"embedding row for session {row.session_id!r} while "
                f"ingesting {session_id!r}"
            )
        key = (row.student_id, row.camera_id)
        track = tracks.get(key)
        if track is None:
            track = Tracklet(student_id=row.student_id, camera_id=row.camera_id)
            tracks[key] = track
        track.frames.setdefault(row.frame_index, {})[row.modality] = row.vector
        track.similarity[row.frame_index] = 1.0
    return sequences_from_tracklets(tracks, session_id)


def ingest_dataset(
    manifest: DatasetManifest,
) -> tuple[LabeledSequenceSet, IngestReport]:
    """Load every session of a manifest into one labeled dataset.

    Sessions with embedding tables use them directly; sessions with only
    detection tables go through gallery matching first.
    """
    gallery = None
    if manifest.gallery_path is not None:
        if manifest.identity_dim is None:
            raise DataError("manifest has a gallery but no identity_dim")
        gallery = load_gallery(manifest.gallery_path, manifest.identity_dim)

    all_sequences: list[Sequence] = []
    tables = []
    for session in manifest.sessions:
        for path in session.ratings.values():
            tables.append(load_rating_table(path))
        if session.embeddings:
            rows: list[FrameEmbedding] = []
            for path in session.embeddings.values():
                rows.extend(load_embedding_table(path, manifest))
            all_sequences.extend(
                sequences_from_embeddings(rows, session.session_id)
            )
        elif session.detections:
            if gallery is None:
                raise DataError(
                    f"session {session.session_id!r} has detections but the "
                    "manifest has no gallery"
                )
            detections: list[Detection] = []
            for path in session.detections.values():
                detections.extend(load_detection_table(path, manifest))
            from .tracklets import sequences_from_detections

            all_sequences.extend(
                sequences_from_detections(
                    detections,
                    gallery,
                    session.session_id,
                    manifest.identity_threshold,
                )
            )
        else:
            raise DataError(
                f"session {session.session_id!r} has neither embeddings nor "
                "detections"
            )
    labels = merge_session_ratings(tables)
    return build_labeled_dataset(manifest, all_sequences, labels)


def save_sequences(path: str | Path, sequences: list[Sequence]) -> None:
    """Write unlabeled sequences (tracklet output) as one .npz archive."""
    meta = [
        {
            "student_id": s.student_id,
            "session_id": s.session_id,
            "second_index": s.second_index,
            "modality": s.modality,
        }
        for s in sequences
    ]
    arrays = {f"frames_{i}": s.frames for i, s in enumerate(sequences)}
    np.savez_compressed(Path(path), meta=np.array(json.dumps(meta)), **arrays)


def load_sequences(path: str | Path) -> list[Sequence]:
    """Read sequences written by :func:`save_sequences`."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(str(archive["meta"]))
            return [
                Sequence(
                    student_id=m["student_id"],
                    session_id=m["session_id"],
                    second_index=int(m["second_index"]),
                    modality=m["modality"],
                    frames=np.asarray(archive[f"frames_{i}"], dtype=np.float64),
                )
                for i, m in enumerate(meta)
            ]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: not a sequence archive ({exc})") from exc


def save_dataset(path: str | Path, dataset: LabeledSequenceSet) -> None:
    """Write a labeled dataset as a single .npz archive."""
    path = Path(path)
    meta = [
        {
            "student_id": e.student_id,
            "session_id": e.session_id,
            "second_index": e.second_index,
            "modality": e.modality,
            "level": int(e.level),
        }
        for e in dataset.entries
    ]
    arrays = {
        f"frames_{i}": e.sequence.frames for i, e in enumerate(dataset.entries)
    }
    np.savez_compressed(
        path, meta=np.array(json.dumps(meta)), **arrays
    )


def load_dataset(path: str | Path) -> LabeledSequenceSet:
    """Read a labeled dataset written by :func:`save_dataset`."""
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            meta = json.loads(str(archive["meta"]))
            entries = []
            for i, m in enumerate(meta):
                entries.append(
                    LabeledSequence(
                        sequence=Sequence(
                            student_id=m["student_id"],
                            session_id=m["session_id"],
                            second_index=int(m["second_index"]),
                            modality=m["modality"],
                            frames=np.asarray(
                                archive[f"frames_{i}"], dtype=np.float64
                            ),
                        ),
                        level=EngagementLevel(int(m["level"])),
                    )
                )
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except (KeyError, ValueError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: not a dataset archive ({exc})") from exc
    return LabeledSequenceSet(entries=entries)
