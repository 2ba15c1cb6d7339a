"""Actor-derived complexity measures for one snippet.

Detections are gated per frame by distance to that frame's ego position; a
track takes part in path and speed terms when at least one of its
observations is inside the gate. Motion class (static vs dynamic) uses the
mean of the reported speed field over the whole snippet with a 0.5 m/s
threshold. All variances are population variances.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry
from .scene import Snippet

STATIC_SPEED = 0.5


@dataclass(frozen=True, slots=True)
class TrackPath:
    track_id: str
    label: str
    frames: np.ndarray  # (n,) frame offsets within the snippet
    positions: np.ndarray  # (n, 2)
    speeds: np.ndarray  # (n,)
    in_roi: np.ndarray  # (n,) bool

    @property
    def mean_speed(self) -> float:
        return float(np.mean(self.speeds))

    def is_static(self, threshold: float = STATIC_SPEED) -> bool:
        return self.mean_speed < threshold


@dataclass(frozen=True, slots=True)
class TrafficFeatures:
    crowd_static: float
    crowd_dynamic: float
    class_div: float
    dist_var: float
    actor_path_mean: float
    actor_path_max: float
    speed_div: float


def build_track_paths(s: Snippet, roi_radius: float | None = None) -> list:
    """Group detections by track, ordered by track_id."""
    ego = s.ego_xy()
    obs: dict[str, list] = {}
    for k, frame in enumerate(s.frames):
        for det in frame.detections:
            inside = True
            if roi_radius is not None:
                dx = det.center[0] - ego[k, 0]
                dy = det.center[1] - ego[k, 1]
                inside = dx * dx + dy * dy <= roi_radius * roi_radius
            obs.setdefault(det.track_id, []).append((k, det.center, det.speed, det.label, inside))
    tracks = []
    for tid in sorted(obs):
        rows = obs[tid]
        tracks.append(
            TrackPath(
                track_id=tid,
                label=rows[0][3],
                frames=np.array([r[0] for r in rows], dtype=int),
                positions=np.array([r[1] for r in rows], dtype=float),
                speeds=np.array([r[2] for r in rows], dtype=float),
                in_roi=np.array([r[4] for r in rows], dtype=bool),
            )
        )
    return tracks


def _roi_tracks(tracks: list) -> list:
    return [t for t in tracks if bool(np.any(t.in_roi))]


def crowdedness(
    s: Snippet, roi_radius: float | None = None, static_speed: float = STATIC_SPEED
) -> tuple:
    """Mean per-frame count of in-gate actors, split (static, dynamic)."""
    tracks = build_track_paths(s, roi_radius)
    static = {t.track_id for t in tracks if t.is_static(static_speed)}
    n = s.num_frames
    static_counts = np.zeros(n)
    dynamic_counts = np.zeros(n)
    for t in tracks:
        for k, inside in zip(t.frames, t.in_roi):
            if not inside:
                continue
            if t.track_id in static:
                static_counts[k] += 1
            else:
                dynamic_counts[k] += 1
    return float(np.mean(static_counts)), float(np.mean(dynamic_counts))


def class_diversity(s: Snippet, roi_radius: float | None = None) -> float:
    """Per-frame product of (1 + per-class count) scaled by 1/|detections|,
    averaged over frames; frames with no in-gate detections contribute 0."""
    ego = s.ego_xy()
    r2 = None if roi_radius is None else roi_radius * roi_radius
    total = 0.0
    for k, frame in enumerate(s.frames):
        counts: dict[str, int] = {}
        n_in = 0
        for det in frame.detections:
            if r2 is not None:
                dx = det.center[0] - ego[k, 0]
                dy = det.center[1] - ego[k, 1]
                if dx * dx + dy * dy > r2:
                    continue
            n_in += 1
            counts[det.label] = counts.get(det.label, 0) + 1
        if n_in == 0:
            continue
        term = 1.0
        for c in counts.values():
            term *= 1.0 + c
        total += term / n_in
    return total / s.num_frames if s.num_frames else 0.0


def spatial_variance(s: Snippet, roi_radius: float | None = None) -> float:
    """Population variance of ego-to-actor distances, pooled over all
    (frame, detection) pairs in gate; fewer than 2 samples score 0."""
    ego = s.ego_xy()
    r2 = None if roi_radius is None else roi_radius * roi_radius
    dists = []
    for k, frame in enumerate(s.frames):
        for det in frame.detections:
            dx = det.center[0] - ego[k, 0]
            dy = det.center[1] - ego[k, 1]
            d2 = dx * dx + dy * dy
            if r2 is not None and d2 > r2:
                continue
            dists.append(np.sqrt(d2))
    if len(dists) < 2:
        return 0.0
    return float(np.var(dists))


def actor_path_complexity(tracks: list, K: int = 100) -> tuple:
    """(mean, max) curve complexity over tracks with >= 3 distinct positions."""
    values = []
    for t in tracks:
        if len(np.unique(t.positions, axis=0)) < 3:
            continue
        values.append(geometry.curve_complexity(t.positions, K))
    if not values:
        return 0.0, 0.0
    return float(np.mean(values)), float(np.max(values))


def speed_diversity(s: Snippet, roi_radius: float | None = None) -> float:
    """Variance of per-track mean speeds plus the sum of within-track
    speed variances."""
    tracks = _roi_tracks(build_track_paths(s, roi_radius))
    if not tracks:
        return 0.0
    means = np.array([t.mean_speed for t in tracks])
    inner = sum(float(np.var(t.speeds)) for t in tracks)
    return float(np.var(means)) + inner


def traffic_features(
    s: Snippet,
    roi_radius: float = 75.0,
    K: int = 100,
    static_speed: float = STATIC_SPEED,
) -> TrafficFeatures:
    tracks = build_track_paths(s, roi_radius)
    in_roi = _roi_tracks(tracks)
    static_mean, dynamic_mean = crowdedness(s, roi_radius, static_speed)
    path_mean, path_max = actor_path_complexity(in_roi, K)
    means = np.array([t.mean_speed for t in in_roi]) if in_roi else np.zeros(0)
    inner = sum(float(np.var(t.speeds)) for t in in_roi)
    speed_div = (float(np.var(means)) + inner) if in_roi else 0.0
    return TrafficFeatures(
        crowd_static=static_mean,
        crowd_dynamic=dynamic_mean,
        class_div=class_diversity(s, roi_radius),
        dist_var=spatial_variance(s, roi_radius),
        actor_path_mean=path_mean,
        actor_path_max=path_max,
        speed_div=speed_div,
    )
