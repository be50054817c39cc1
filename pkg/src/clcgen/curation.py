"""Dataset curation: identity de-duplication, crop checks, clip segmentation, splits.

Face detection, embedding and attribute models are adapters. The synthetic
fixtures at the bottom of this module stand in for them in tests and in the
``curate`` command.
"""
from __future__ import annotations

import json
import zlib
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import EmptyReportError, ParameterError, SplitError, ValidationError

DEFAULT_THRESHOLD = 0.4
DEFAULT_CLIP_LEN = 50
DEFAULT_CROP = 512


@dataclass
class IdentityRecord:
    video_id: str
    embedding: np.ndarray
    cluster_id: int | None = None

    def __post_init__(self):
        self.embedding = np.asarray(self.embedding, dtype=np.float64)
        norm = np.linalg.norm(self.embedding)
        if self.embedding.ndim != 1 or abs(norm - 1.0) > 1e-6:
            raise ValidationError(f"{self.video_id}: embedding must be a unit vector (norm {norm:.6g})")


@dataclass
class ClipRecord:
    video_id: str
    start_frame: int
    length: int = DEFAULT_CLIP_LEN
    valid: bool = True

    def __post_init__(self):
        if self.length <= 0:
            raise ParameterError("clip length must be positive")

    @property
    def frames(self) -> range:
        return range(self.start_frame, self.start_frame + self.length)


@dataclass
class Clustering:
    assignment: dict[str, int]
    representatives: dict[int, str]

    @property
    def n_clusters(self) -> int:
        return len(self.representatives)

    def members(self, cluster_id: int) -> list[str]:
        return sorted(v for v, c in self.assignment.items() if c == cluster_id)


def _canonical_labels(video_ids: Sequence[str], labels: np.ndarray) -> Clustering:
    """Relabel clusters by the sorted smallest video id they contain."""
    groups: dict[int, list[str]] = {}
    for vid, lab in zip(video_ids, labels):
        groups.setdefault(int(lab), []).append(vid)
    ordered = sorted((min(members), members) for members in groups.values())
    assignment, reps = {}, {}
    for cid, (rep, members) in enumerate(ordered):
        reps[cid] = rep
        for vid in members:
            assignment[vid] = cid
    return Clustering(assignment, reps)


def _spectral_split(sim: np.ndarray, max_k: int = 8, seed: int = 0) -> np.ndarray:
    """Split one connected component with an eigengap-selected spectral clustering."""
    n = sim.shape[0]
    if n <= 2:
        return np.zeros(n, int)
    aff = np.clip(sim, 0.0, None)
    d = aff.sum(axis=1)
    lap = np.eye(n) - aff / np.sqrt(np.outer(d, d))
    vals, vecs = np.linalg.eigh(lap)
    kmax = min(max_k, n - 1)
    gaps = np.diff(vals[: kmax + 1])
    k = int(np.argmax(gaps)) + 1
    if k == 1:
        return np.zeros(n, int)
    emb = vecs[:, :k]
    emb = emb / np.linalg.norm(emb, axis=1, keepdims=True)
    _, labels = kmeans2(emb, k, minit="++", seed=seed)
    return labels


def cluster_identities(records: Sequence[IdentityRecord], threshold: float = DEFAULT_THRESHOLD,
                       spectral: bool = False) -> Clustering:
    """Group videos whose face embeddings have cosine similarity >= ``threshold``.

    Clusters are connected components of the thresholded similarity graph.
    With ``spectral=True`` each component is further split by spectral
    clustering. Cluster ids and representatives (smallest video id per
    cluster) do not depend on input order. Assigns ``cluster_id`` on the
    records in place.
    """
    if not 0 < threshold < 1:
        raise ParameterError(f"threshold must be in (0, 1), got {threshold}")
    if not records:
        return Clustering({}, {})
    order = sorted(range(len(records)), key=lambda i: records[i].video_id)
    ids = [records[i].video_id for i in order]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate video ids")
    emb = np.stack([records[i].embedding for i in order])
    sim = emb @ emb.T
    # round away float noise so duplicates (cosine 1) always connect
    adj = np.round(sim, 12) >= threshold
    _, labels = connected_components(csr_matrix(adj), directed=False)
    if spectral:
        refined = np.empty_like(labels)
        offset = 0
        for comp in np.unique(labels):
            idx = np.nonzero(labels == comp)[0]
            sub = _spectral_split(sim[np.ix_(idx, idx)])
            refined[idx] = sub + offset
            offset += int(sub.max()) + 1
        labels = refined
    result = _canonical_labels(ids, labels)
    for rec in records:
        rec.cluster_id = result.assignment[rec.video_id]
    return result


@dataclass
class CropDecision:
    accept: bool
    reason: str
    crop_box: tuple[int, int, int, int] | None = None


def validate_crop(frame_size: tuple[int, int], detected_box: tuple[float, float, float, float],
                  target: int = DEFAULT_CROP) -> CropDecision:
    """Check that a square ``target`` x ``target`` crop can be cut around ``detected_box``.

    ``frame_size`` is ``(width, height)``; the box is ``(x0, y0, x1, y1)``. The
    crop is the smallest square containing the box, shifted to stay inside the
    frame. Rejected when that square is smaller than ``target`` (upsampling
    would be needed) or cannot fit in the frame.
    """
    fw, fh = frame_size
    x0, y0, x1, y1 = detected_box
    if x0 < 0 or y0 < 0 or x1 > fw or y1 > fh:
        raise ValidationError(f"box {detected_box} exceeds frame {frame_size}")
    bw, bh = x1 - x0, y1 - y0
    if bw <= 0 or bh <= 0:
        return CropDecision(False, "degenerate_box")
    side = max(bw, bh)
    if side < target:
        return CropDecision(False, "insufficient_resolution")
    if side > min(fw, fh):
        return CropDecision(False, "crop_exceeds_frame")
    cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
    left = int(round(min(max(cx - side / 2, 0), fw - side)))
    top = int(round(min(max(cy - side / 2, 0), fh - side)))
    s = int(round(side))
    return CropDecision(True, "ok", (left, top, left + s, top + s))


def segment_clips(video_len: int, clip_len: int = DEFAULT_CLIP_LEN,
                  pose_valid: Sequence[bool] | None = None, video_id: str = "") -> list[ClipRecord]:
    """Cut maximal runs of pose-valid frames into non-overlapping ``clip_len`` clips.

    Remainders shorter than ``clip_len`` are dropped.
    """
    if clip_len < 1:
        raise ParameterError("clip_len must be >= 1")
    valid = np.ones(video_len, bool) if pose_valid is None else np.asarray(pose_valid, dtype=bool)
    if valid.shape != (video_len,):
        raise ParameterError(f"pose_valid must have {video_len} entries")
    clips = []
    start = None
    for i, ok in enumerate(np.append(valid, False)):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            for s in range(start, i - clip_len + 1, clip_len):
                clips.append(ClipRecord(video_id, s, clip_len))
            start = None
    return clips


@dataclass
class IdentitySplit:
    train: list[int]
    test: list[int]

    def side(self, cluster_id: int) -> str:
        return "train" if cluster_id in self.train else "test"


def split_identities(cluster_ids: Iterable[int], train_frac: float = 0.9, seed: int = 0) -> IdentitySplit:
    """Cluster-level train/test split; every identity lands on exactly one side."""
    ids = sorted(set(int(c) for c in cluster_ids))
    if len(ids) < 2:
        raise SplitError(f"need at least 2 identity clusters, got {len(ids)}")
    if not 0 < train_frac < 1:
        raise ParameterError("train_frac must be in (0, 1)")
    n_train = int(round(len(ids) * train_frac))
    n_train = min(max(n_train, 1), len(ids) - 1)
    perm = np.random.default_rng(seed).permutation(len(ids))
    train = sorted(ids[i] for i in perm[:n_train])
    test = sorted(ids[i] for i in perm[n_train:])
    return IdentitySplit(train, test)


def assign_clips(clips: Iterable[ClipRecord], clustering: Clustering,
                 split: IdentitySplit) -> tuple[list[ClipRecord], list[ClipRecord]]:
    train, test = [], []
    for clip in clips:
        side = split.side(clustering.assignment[clip.video_id])
        (train if side == "train" else test).append(clip)
    return train, test


def demographic_report(labels: Iterable[str], vocabulary: Sequence[str] | None = None) -> dict[str, float]:
    """Normalized histogram of category labels.

    Labels outside ``vocabulary`` (when given) are counted under ``"other"``.
    """
    counts: Counter = Counter()
    for lab in labels:
        if vocabulary is not None and lab not in vocabulary:
            lab = "other"
        counts[lab] += 1
    total = sum(counts.values())
    if total == 0:
        raise EmptyReportError("no attribute records")
    return {k: counts[k] / total for k in sorted(counts)}


# --------------------------------------------------------------------------- adapters

class FaceEmbedder(Protocol):
    def embed(self, video_id: str) -> np.ndarray: ...


class FaceDetector(Protocol):
    def front_facing(self, video_id: str) -> bool: ...


@dataclass
class SyntheticVideo:
    """Fixture record describing one raw video in a synthetic corpus."""

    video_id: str
    identity: int
    n_frames: int
    yaw_deg: float = 0.0
    frame_size: tuple[int, int] = (1920, 1080)
    body_box: tuple[float, float, float, float] = (600.0, 100.0, 1300.0, 800.0)
    pose_fail: list[int] = field(default_factory=list)
    gender: str = "female"
    age: str = "25-34"
    expression: str = "neutral"

    def pose_valid(self) -> np.ndarray:
        mask = np.ones(self.n_frames, bool)
        mask[[i for i in self.pose_fail if 0 <= i < self.n_frames]] = False
        return mask


@dataclass
class SyntheticEmbedder:
    """Unit embeddings near a per-identity anchor; ``spread`` controls within-identity noise."""

    dim: int = 64
    spread: float = 0.1
    seed: int = 0

    def anchor(self, identity: int) -> np.ndarray:
        v = np.random.default_rng([self.seed, identity]).standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def embed_video(self, video: SyntheticVideo) -> np.ndarray:
        noise = np.random.default_rng([self.seed, video.identity, zlib.crc32(video.video_id.encode())]).standard_normal(self.dim)
        v = self.anchor(video.identity) + self.spread * noise / np.sqrt(self.dim)
        return v / np.linalg.norm(v)


@dataclass
class YawFilter:
    """Front-facing check with a configurable yaw threshold (degrees)."""

    max_yaw: float = 30.0

    def front_facing(self, video: SyntheticVideo) -> bool:
        return abs(video.yaw_deg) <= self.max_yaw


def write_jsonl(path: str | Path, records: Iterable) -> Path:
    path = Path(path)
    with open(path, "w") as fh:
        for rec in records:
            row = asdict(rec) if hasattr(rec, "__dataclass_fields__") else dict(rec)
            row = {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in row.items()}
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return path


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
