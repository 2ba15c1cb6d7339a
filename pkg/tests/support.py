"""Hand-built snippets, maps, and pools shared across the test modules."""

import numpy as np

from logcurator.scene import (
    Detection,
    Frame,
    Intersection,
    Lane,
    SceneMap,
    Snippet,
    SnippetPool,
    TrafficControl,
)

DT = 0.1
GEO = (37.0, -122.0)


def make_detection(
    track_id="t0",
    label="vehicle",
    center=(0.0, 0.0),
    speed=0.0,
    yaw=0.0,
    size=(4.0, 2.0),
):
    return Detection(
        track_id=track_id,
        label=label,
        center=(float(center[0]), float(center[1])),
        yaw=float(yaw),
        size=(float(size[0]), float(size[1])),
        speed=float(speed),
    )


def make_frame(index, ego=(0.0, 0.0, 0.0), detections=(), geo=GEO, dt=DT):
    return Frame(
        index=index,
        timestamp=index * dt,
        ego_pose=(float(ego[0]), float(ego[1]), float(ego[2])),
        geo=(float(geo[0]), float(geo[1])),
        detections=tuple(detections),
    )


def make_snippet(frames, snippet_id="s0", log_id="log0"):
    frames = tuple(frames)
    return Snippet(
        snippet_id=snippet_id,
        log_id=log_id,
        frame_range=(frames[0].index, frames[-1].index),
        frames=frames,
    )


def drive(
    positions,
    snippet_id="s0",
    log_id="log0",
    detections=None,
    headings=None,
    first=0,
    geo=None,
    dt=DT,
):
    """Snippet whose ego follows the given (x, y) positions.

    Headings default to the displacement direction (last one repeated); a
    single-point drive faces +x. Per-frame detection lists and geo pairs are
    optional and positional.
    """
    pts = np.asarray(positions, dtype=float)
    n = len(pts)
    if headings is None:
        if n >= 2:
            d = np.diff(pts, axis=0)
            h = np.arctan2(d[:, 1], d[:, 0])
            headings = np.append(h, h[-1])
        else:
            headings = np.zeros(n)
    headings = (np.asarray(headings, dtype=float) + np.pi) % (2 * np.pi) - np.pi
    frames = []
    for k in range(n):
        dets = () if detections is None else tuple(detections[k])
        g = GEO if geo is None else geo[k]
        frames.append(
            Frame(
                index=first + k,
                timestamp=(first + k) * dt,
                ego_pose=(float(pts[k, 0]), float(pts[k, 1]), float(headings[k])),
                geo=(float(g[0]), float(g[1])),
                detections=dets,
            )
        )
    return make_snippet(frames, snippet_id, log_id)


def constant_detections(dets, n):
    """The same detection tuple repeated for n frames."""
    return [tuple(dets)] * n


def circle_points(r, n, center=(0.0, 0.0), closed=True):
    """n distinct samples around a circle; closed repeats the first at the end."""
    th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    pts = np.column_stack([center[0] + r * np.cos(th), center[1] + r * np.sin(th)])
    if closed:
        pts = np.vstack([pts, pts[:1]])
    return pts


def arc_points(r, n, center=(0.0, 0.0), start=0.0, sweep=np.pi / 2):
    th = np.linspace(start, start + sweep, n)
    return np.column_stack(
        [center[0] + r * np.cos(th), center[1] + r * np.sin(th)]
    )


def straight_lane(lane_id="lane0", y=0.0, x0=-100.0, x1=100.0, n=2, **kw):
    xs = np.linspace(x0, x1, n)
    return Lane(
        lane_id=lane_id, centerline=tuple((float(x), float(y)) for x in xs), **kw
    )


def vertical_lane(lane_id="lane_v", x=0.0, y0=-100.0, y1=100.0, n=2, **kw):
    ys = np.linspace(y0, y1, n)
    return Lane(
        lane_id=lane_id, centerline=tuple((float(x), float(y)) for y in ys), **kw
    )


def empty_map():
    return SceneMap()


def cross_map(sign=False, light=False):
    """Two perpendicular lanes meeting at the origin, optional controls."""
    lanes = (straight_lane("ew"), vertical_lane("ns"))
    controls = []
    if sign:
        controls.append(TrafficControl("stop_sign", (5.0, 5.0), ("ew",)))
    if light:
        controls.append(TrafficControl("traffic_light", (-5.0, 5.0), ("ns",)))
    return SceneMap(lanes=lanes, traffic_controls=tuple(controls))


def square_intersection(half=10.0, incoming=4, lanes_per_road=(1, 1, 1, 1)):
    poly = ((-half, -half), (half, -half), (half, half), (-half, half))
    return Intersection(
        polygon=poly, incoming_roads=incoming, lanes_per_road=tuple(lanes_per_road)
    )


def pool_of(snippets, scene_map=None, snippet_length=None):
    snippets = tuple(snippets)
    if snippet_length is None:
        snippet_length = snippets[0].num_frames if snippets else 0
    return SnippetPool(
        snippets=snippets,
        scene_map=scene_map if scene_map is not None else SceneMap(),
        snippet_length=snippet_length,
    )
