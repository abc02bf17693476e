"""Identity assignment, camera selection, and per-second sequence cutting.

Detected faces arrive with an identity embedding and one feature vector per
modality.  Each detection is matched against a small per-student gallery by
cosine similarity, matched detections are grouped into per-camera tracklets,
and for every student-second the better camera is chosen before cutting the
track into 24-frame (one second) sequences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence as TSequence

import numpy as np

from .errors import (
    DataError,
    DegenerateInputError,
    DimensionMismatchError,
    ShapeError,
)

FPS = 24

DEFAULT_SIMILARITY_THRESHOLD = 0.3


@dataclass(frozen=True)
class GalleryEntry:
    """Reference identity vectors for one student."""

    student_id: str
    query_vectors: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.student_id:
            raise DataError("gallery entry has an empty student_id")
        if not self.query_vectors:
            raise DataError(
                f"gallery entry for {self.student_id!r} has no query vectors"
            )
        for q in self.query_vectors:
            if q.ndim != 1:
                raise ShapeError(
                    f"gallery vector for {self.student_id!r} is not 1-D"
                )
            if not np.all(np.isfinite(q)):
                raise DataError(
                    f"gallery vector for {self.student_id!r} has non-finite entries"
                )
            if float(np.linalg.norm(q)) == 0.0:
                raise DegenerateInputError(
                    f"gallery vector for {self.student_id!r} has zero norm"
                )


@dataclass(frozen=True)
class Detection:
    """One detected face in one frame of one camera stream.

    ``face_key`` is the detector-local key tying together the per-modality
    rows of the same face; it carries no identity information.
    """

    camera_id: str
    frame_index: int
    identity_vector: np.ndarray
    modality_vectors: dict[str, np.ndarray]
    face_key: str = ""

    def __post_init__(self):
        if self.frame_index < 0:
            raise DataError(f"negative frame_index {self.frame_index}")
        if not np.all(np.isfinite(self.identity_vector)):
            raise DataError("identity vector has non-finite entries")


@dataclass
class Tracklet:
    """Frames of one student on one camera, in increasing frame order.

    ``frames`` maps frame_index -> {modality: vector}; ``similarity`` holds
    the gallery match score per frame (1.0 for pre-assigned embeddings).
    """

    student_id: str
    camera_id: str
    frames: dict[int, dict[str, np.ndarray]] = field(default_factory=dict)
    similarity: dict[int, float] = field(default_factory=dict)


@dataclass(frozen=True)
class Sequence:
    """Exactly one second (24 consecutive frames) of one modality."""

    student_id: str
    session_id: str
    second_index: int
    modality: str
    frames: np.ndarray  # shape (24, d), frame order

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[0] != FPS:
            raise ShapeError(
                f"sequence must hold exactly {FPS} frame vectors, "
                f"got shape {self.frames.shape}"
            )
        if self.second_index < 0:
            raise DataError(f"negative second_index {self.second_index}")
        if not np.all(np.isfinite(self.frames)):
            raise DataError("sequence frames contain non-finite values")


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, in [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 1 or b.ndim != 1:
        raise ShapeError("cosine_similarity expects 1-D vectors")
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatchError(
            f"vector lengths differ: {a.shape[0]} vs {b.shape[0]}"
        )
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity of a zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def assign_identity(
    detection: Detection,
    gallery: TSequence[GalleryEntry],
    threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
) -> tuple[str | None, float]:
    """Match a detection against the gallery.

    Scores each student by the best cosine similarity over their query
    vectors and returns ``(student_id, score)`` for the best-scoring student,
    or ``(None, score)`` when the best score is below ``threshold``.  Ties go
    to the lexicographically smaller student_id.
    """
    if not gallery:
        raise DataError("assign_identity called with an empty gallery")
    best_id: str | None = None
    best_score = -np.inf
    for entry in sorted(gallery, key=lambda e: e.student_id):
        score = max(
            cosine_similarity(detection.identity_vector, q)
            for q in entry.query_vectors
        )
        if score > best_score:
            best_score = score
            best_id = entry.student_id
    if best_score < threshold:
        return None, float(best_score)
    return best_id, float(best_score)


def select_camera(candidates: Mapping[str, TSequence[float]]) -> str:
    """Pick the camera where a student was most visible during one second.

    ``candidates`` maps camera_id to the per-frame gallery similarities of
    that student-second.  Preference order: more frames present, then higher
    mean similarity, then lexicographically smaller camera_id.
    """
    best_id: str | None = None
    best_count = -1
    best_mean = -np.inf
    for camera_id in sorted(candidates):
        sims = candidates[camera_id]
        count = len(sims)
        if count == 0:
            continue
        mean = float(np.mean(sims))
        if count > best_count or (count == best_count and mean > best_mean):
            best_id, best_count, best_mean = camera_id, count, mean
    if best_id is None:
        raise DataError("no camera holds any frame for this student-second")
    return best_id


def build_tracklets(
    detections: Iterable[Detection],
    gallery: TSequence[GalleryEntry],
    threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
) -> dict[tuple[str, str], Tracklet]:
    """Assign detections to students and group them into per-camera tracklets.

    Detections whose best gallery score falls below ``threshold`` are
    dropped.  If two detections of the same student land on the same
    (camera, frame), the higher-similarity one wins.
    """
    tracks: dict[tuple[str, str], Tracklet] = {}
    for det in detections:
        student_id, score = assign_identity(det, gallery, threshold)
        if student_id is None:
            continue
        key = (student_id, det.camera_id)
        track = tracks.get(key)
        if track is None:
            track = Tracklet(student_id=student_id, camera_id=det.camera_id)
            tracks[key] = track
        prev = track.similarity.get(det.frame_index)
        if prev is not None and prev >= score:
            continue
        track.frames[det.frame_index] = dict(det.modality_vectors)
        track.similarity[det.frame_index] = score
    return tracks


def extract_sequences(track: Tracklet, session_id: str) -> list[Sequence]:
    """Cut a tracklet into one-second sequences.

    A second k is emitted for a modality only when all 24 frame indices
    24k .. 24k+23 are present in the tracklet and each of them carries that
    modality's vector.  Partial seconds produce nothing.
    """
    out: list[Sequence] = []
    seconds = sorted({idx // FPS for idx in track.frames})
    for sec in seconds:
        idxs = [sec * FPS + j for j in range(FPS)]
        if not all(i in track.frames for i in idxs):
            continue
        modalities = set(track.frames[idxs[0]])
        for i in idxs[1:]:
            modalities &= set(track.frames[i])
        for modality in sorted(modalities):
            frames = np.stack([track.frames[i][modality] for i in idxs])
            out.append(
                Sequence(
                    student_id=track.student_id,
                    session_id=session_id,
                    second_index=sec,
                    modality=modality,
                    frames=frames.astype(np.float64),
                )
            )
    return out


def _second_slices(track: Tracklet) -> dict[int, list[float]]:
    """Per-second similarity lists for one tracklet."""
    out: dict[int, list[float]] = {}
    for idx, sim in track.similarity.items():
        out.setdefault(idx // FPS, []).append(sim)
    return out


def sequences_from_tracklets(
    tracks: Mapping[tuple[str, str], Tracklet], session_id: str
) -> list[Sequence]:
    """Choose one camera per student-second and cut sequences.

    For every student and second, the camera is picked by
    :func:`select_camera` over the cameras holding frames of that second,
    then sequences are cut from the winning camera only.
    """
    by_student: dict[str, dict[str, Tracklet]] = {}
    for (student_id, camera_id), track in tracks.items():
        by_student.setdefault(student_id, {})[camera_id] = track

    out: list[Sequence] = []
    for student_id in sorted(by_student):
        cameras = by_student[student_id]
        slices = {cam: _second_slices(t) for cam, t in cameras.items()}
        seconds = sorted({s for sl in slices.values() for s in sl})
        for sec in seconds:
            candidates = {
                cam: sl[sec] for cam, sl in slices.items() if sec in sl
            }
            winner = select_camera(candidates)
            track = cameras[winner]
            sub = Tracklet(
                student_id=student_id,
                camera_id=winner,
                frames={
                    i: track.frames[i]
                    for i in range(sec * FPS, (sec + 1) * FPS)
                    if i in track.frames
                },
                similarity={
                    i: track.similarity[i]
                    for i in range(sec * FPS, (sec + 1) * FPS)
                    if i in track.similarity
                },
            )
            out.extend(extract_sequences(sub, session_id))
    return out


def sequences_from_detections(
    detections: Iterable[Detection],
    gallery: TSequence[GalleryEntry],
    session_id: str,
    threshold: float = DEFAULT_SIMILARITY_THRESHOLD,
) -> list[Sequence]:
    """Full pipeline: assign identities, pick cameras, cut sequences."""
    tracks = build_tracklets(detections, gallery, threshold)
    return sequences_from_tracklets(tracks, session_id)
