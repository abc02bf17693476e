"""Synthetic corpus generator with controllable difficulty.

Builds per-level Gaussian clusters in embedding space.  The three level
centers sit at the corners of an equilateral triangle of side ``separation``
embedded in a random 2-D plane; each student carries a fixed offset of norm
``subject_shift`` drawn inside that plane, so person-independent classifiers
degrade as the shift grows while personalized ones can recover.  Every
student-second yields 24 noisy frames per modality and a continuous label
placed strictly inside the correct band.

Frame noise is temporally correlated the way consecutive video frames are:
each second draws one core displacement of scale ``noise`` shared by its 24
frames, plus small per-frame jitter.  Averaging over a second therefore
keeps roughly the full ``noise`` scale instead of shrinking it by sqrt(24),
which is what makes the separation and shift scales meaningful for
per-second classification.

Like real face embeddings, every vector also carries the student's identity:
a fixed per-student displacement orthogonal to the level plane.  Identity
does not interfere with level separation, but it lets a model trained on a
student's own labels claim that student's region of feature space, which is
what makes personalization work on this corpus.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .ingest import (
    DEFAULT_THRESHOLDS,
    ENGAGEMENT_MAX,
    ENGAGEMENT_MIN,
    EngagementLevel,
    LabeledSequence,
    LabeledSequenceSet,
)
from .tracklets import FPS, GalleryEntry, Sequence

MODALITIES = ("attention", "affect")


@dataclass
class SyntheticDataset:
    """Generated corpus plus the machinery needed to export or replay it."""

    dataset: LabeledSequenceSet
    continuous: dict[tuple[str, int], float]  # (student, second) -> value
    gallery: list[GalleryEntry]
    identity_by_student: dict[str, np.ndarray]
    session_id: str
    seconds_per_student: int
    cameras: tuple[str, str]
    noise: float
    dim: int
    identity_dim: int


def _triangle_centers(
    separation: float, dim: int, rng: np.random.Generator
) -> np.ndarray:
    """Three cluster centers, pairwise ``separation`` apart, in a random plane."""
    # Equilateral triangle in 2-D, centered at the origin.
    height = separation * np.sqrt(3.0) / 2.0
    flat = np.array(
        [
            [-separation / 2.0, -height / 3.0],
            [separation / 2.0, -height / 3.0],
            [0.0, 2.0 * height / 3.0],
        ]
    )
    basis = _orthonormal_pair(rng.standard_normal((dim, 2)))
    return flat @ basis.T


def _orthonormal_pair(cols: np.ndarray) -> np.ndarray:
    """Gram-Schmidt on two column vectors, result (dim, 2)."""
    q0 = cols[:, 0] / np.linalg.norm(cols[:, 0])
    v1 = cols[:, 1] - (cols[:, 1] @ q0) * q0
    q1 = v1 / np.linalg.norm(v1)
    return np.stack([q0, q1], axis=1)


def _band_interior(
    level: EngagementLevel,
    rng: np.random.Generator,
    thresholds: tuple[float, float] = DEFAULT_THRESHOLDS,
) -> float:
    t_low, t_high = thresholds
    margin = 1e-3
    bands = {
        EngagementLevel.LOW: (ENGAGEMENT_MIN + margin, t_low - margin),
        EngagementLevel.MEDIUM: (t_low + margin, t_high - margin),
        EngagementLevel.HIGH: (t_high + margin, ENGAGEMENT_MAX - margin),
    }
    lo, hi = bands[level]
    return float(rng.uniform(lo, hi))


def generate_synthetic_dataset(
    students: int = 8,
    seconds_per_student: int = 400,
    separation: float = 3.0,
    subject_shift: float = 0.0,
    noise: float = 1.0,
    dim: int = 8,
    seed: int = 0,
    identity_dim: int = 4,
    session_id: str = "synthetic",
    frame_jitter: float = 0.3,
    identity_strength: float = 4.0,
) -> SyntheticDataset:
    """Generate a two-modality labeled corpus.

    Per-student offsets live in the plane spanned by the level-center
    differences, so a nonzero ``subject_shift`` moves a student's clusters
    toward the neighbouring levels rather than into irrelevant dimensions.
    ``frame_jitter`` scales the independent per-frame noise relative to the
    shared per-second core displacement.  ``identity_strength`` sets the
    norm, in units of ``noise``, of the per-student displacement orthogonal
    to the level plane that stands in for the identity information a face
    encoder leaks into its features.
    """
    if students < 1 or seconds_per_student < 1:
        raise DataError("students and seconds_per_student must be positive")
    if separation < 0 or subject_shift < 0 or noise <= 0:
        raise DataError("separation/subject_shift must be >= 0 and noise > 0")
    if frame_jitter < 0:
        raise DataError(f"frame_jitter must be >= 0, got {frame_jitter}")
    if identity_strength < 0:
        raise DataError(
            f"identity_strength must be >= 0, got {identity_strength}"
        )
    if dim < 2:
        raise DataError(f"dim must be at least 2, got {dim}")
    rng = np.random.default_rng(seed)
    student_ids = [f"s{i + 1:02d}" for i in range(students)]

    centers = {m: _triangle_centers(separation, dim, rng) for m in MODALITIES}
    # One offset per (modality, student, level): engagement manifests
    # differently per person, so every cluster center moves independently.
    offsets: dict[str, dict[str, np.ndarray]] = {m: {} for m in MODALITIES}
    # And one identity displacement per (modality, student), orthogonal to
    # the level plane so who the student is never masquerades as how engaged
    # they are.
    identity: dict[str, dict[str, np.ndarray]] = {m: {} for m in MODALITIES}
    for m in MODALITIES:
        c = centers[m]
        plane = _orthonormal_pair(
            np.stack([c[1] - c[0], c[2] - c[0]], axis=1)
        )
        for sid in student_ids:
            directions = rng.standard_normal((3, 2))
            directions /= np.linalg.norm(directions, axis=1, keepdims=True)
            offsets[m][sid] = subject_shift * (directions @ plane.T)
            residual = rng.standard_normal(dim)
            residual -= plane @ (plane.T @ residual)
            length = np.linalg.norm(residual)
            if length < 1e-9:
                # dim == 2 leaves no room outside the plane.
                identity[m][sid] = np.zeros(dim)
            else:
                identity[m][sid] = (
                    identity_strength * noise / length
                ) * residual

    entries: list[LabeledSequence] = []
    continuous: dict[tuple[str, int], float] = {}
    for sid in student_ids:
        levels = rng.integers(0, 3, size=seconds_per_student)
        for sec in range(seconds_per_student):
            level = EngagementLevel(int(levels[sec]))
            continuous[(sid, sec)] = _band_interior(level, rng)
            for m in MODALITIES:
                mean = (
                    centers[m][int(level)]
                    + offsets[m][sid][int(level)]
                    + identity[m][sid]
                    + noise * rng.standard_normal(dim)
                )
                frames = mean + frame_jitter * noise * rng.standard_normal(
                    (FPS, dim)
                )
                entries.append(
                    LabeledSequence(
                        sequence=Sequence(
                            student_id=sid,
                            session_id=session_id,
                            second_index=sec,
                            modality=m,
                            frames=frames,
                        ),
                        level=level,
                    )
                )

    identity_by_student: dict[str, np.ndarray] = {}
    gallery: list[GalleryEntry] = []
    for sid in student_ids:
        base = rng.standard_normal(identity_dim)
        base /= np.linalg.norm(base)
        identity_by_student[sid] = base
        queries = []
        for _ in range(2):
            q = base + 0.05 * rng.standard_normal(identity_dim)
            queries.append(q / np.linalg.norm(q))
        gallery.append(GalleryEntry(student_id=sid, query_vectors=tuple(queries)))

    return SyntheticDataset(
        dataset=LabeledSequenceSet(entries=entries),
        continuous=continuous,
        gallery=gallery,
        identity_by_student=identity_by_student,
        session_id=session_id,
        seconds_per_student=seconds_per_student,
        cameras=("cam_a", "cam_b"),
        noise=noise,
        dim=dim,
        identity_dim=identity_dim,
    )


def _rating_pair(value: float) -> tuple[float, float]:
    """Two rater values straddling ``value`` whose mean is exactly it."""
    delta = min(0.01, ENGAGEMENT_MAX - value, value - ENGAGEMENT_MIN)
    return value + delta, value - delta


def export_corpus(directory: str | Path, synthetic: SyntheticDataset) -> Path:
    """Write a loadable corpus: manifest, gallery, CSV tables.

    Produces both an identity-assigned embeddings table (used by the
    manifest) and a raw detections table with identity columns for
    exercising gallery matching; camera B deliberately misses a slice of
    frames so camera selection has something to choose between.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ds = synthetic.dataset
    cam_a, cam_b = synthetic.cameras
    rng = np.random.default_rng(12345)

    by_second: dict[tuple[str, int], dict[str, np.ndarray]] = {}
    for e in ds.entries:
        by_second.setdefault((e.student_id, e.second_index), {})[
            e.modality
        ] = e.sequence.frames

    dims = {m: synthetic.dim for m in MODALITIES}
    width = max(dims.values())
    d_cols = [f"d{j}" for j in range(width)]
    id_cols = [f"id_d{j}" for j in range(synthetic.identity_dim)]

    header = [
        "session_id",
        "student_id",
        "camera_id",
        "frame_index",
        "modality",
        *d_cols,
    ]
    emb_a = directory / "embeddings_cam_a.csv"
    emb_b = directory / "embeddings_cam_b.csv"
    det_path = directory / "detections_cam_a.csv"
    with emb_a.open("w", newline="") as ha, emb_b.open(
        "w", newline=""
    ) as hb, det_path.open("w", newline="") as hd:
        wa, wb, wd = csv.writer(ha), csv.writer(hb), csv.writer(hd)
        wa.writerow(header)
        wb.writerow(header)
        wd.writerow(header + id_cols)
        for (sid, sec), per_modality in sorted(by_second.items()):
            # Camera B drops a contiguous run of frames this second.
            dropped = set(
                range(
                    int(rng.integers(0, FPS // 2)),
                    int(rng.integers(FPS // 2, FPS)) + 1,
                )
            )
            noisy_id = synthetic.identity_by_student[
                sid
            ] + 0.05 * rng.standard_normal(synthetic.identity_dim)
            id_cells = [repr(float(v)) for v in noisy_id]
            for j in range(FPS):
                frame_index = sec * FPS + j
                face_key = f"face-{sid}-{frame_index}"
                for m in MODALITIES:
                    cells = [repr(float(v)) for v in per_modality[m][j]]
                    cells += [""] * (width - dims[m])
                    wa.writerow(
                        [synthetic.session_id, sid, cam_a, frame_index, m, *cells]
                    )
                    wd.writerow(
                        [synthetic.session_id, face_key, cam_a, frame_index, m, *cells]
                        + id_cells
                    )
                    if j not in dropped:
                        wb.writerow(
                            [synthetic.session_id, sid, cam_b, frame_index, m, *cells]
                        )

    for rater, pick in (("rater_a", 0), ("rater_b", 1)):
        with (directory / f"ratings_{rater}.csv").open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(
                ["session_id", "student_id", "rater_id", "second", "value"]
            )
            for (sid, sec), value in sorted(synthetic.continuous.items()):
                pair = _rating_pair(value)
                writer.writerow(
                    [synthetic.session_id, sid, rater, sec, repr(pair[pick])]
                )

    gallery_path = directory / "gallery.json"
    gallery_path.write_text(
        json.dumps(
            {
                entry.student_id: [q.tolist() for q in entry.query_vectors]
                for entry in synthetic.gallery
            }
        )
    )

    manifest_path = directory / "manifest.json"
    manifest_path.write_text(
        json.dumps(
            {
                "modality_dims": dims,
                "thresholds": list(DEFAULT_THRESHOLDS),
                "fps": FPS,
                "identity_dim": synthetic.identity_dim,
                "identity_threshold": 0.3,
                "gallery": "gallery.json",
                "sessions": [
                    {
                        "session_id": synthetic.session_id,
                        "embeddings": {
                            cam_a: "embeddings_cam_a.csv",
                            cam_b: "embeddings_cam_b.csv",
                        },
                        "detections": {cam_a: "detections_cam_a.csv"},
                        "ratings": {
                            "rater_a": "ratings_rater_a.csv",
                            "rater_b": "ratings_rater_b.csv",
                        },
                    }
                ],
            },
            indent=2,
        )
    )
    return manifest_path
