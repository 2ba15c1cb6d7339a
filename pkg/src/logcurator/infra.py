"""Map-derived complexity measures for one snippet.

The region of interest is the union of disks of a fixed radius around every
ego position in the snippet; a map element contributes when any part of its
geometry falls inside that union. Crossing terms sum, per included lane, the
number of other included lanes crossing it, so one crossing pair contributes
twice; enlarging the ROI can only add lanes and therefore never lowers a
count.
"""

from dataclasses import dataclass

import numpy as np

from . import geometry
from .scene import MapIndex, SceneMap, Snippet


@dataclass(frozen=True, slots=True)
class InfraFeatures:
    curve_mean: float
    crossing_total: float
    at_intersection: float
    intersection_roads: float
    intersection_lanes: float
    traffic_lights: float
    signs: float
    bike_curve: float
    bike_crossing: float
    crosswalk_lane_overlaps: float
    height_var: float


def _included_lanes(index: MapIndex, ego: np.ndarray, radius: float) -> np.ndarray:
    mask = np.zeros(len(index.lane_pts), dtype=bool)
    for i, pts in enumerate(index.lane_pts):
        if len(pts) == 0:
            continue
        dist, _ = geometry.project_points_to_polyline(ego, pts, index.lane_cumlen[i])
        mask[i] = bool(np.min(dist) <= radius)
    return mask


def _polygon_in_roi(poly: np.ndarray, ego: np.ndarray, radius: float) -> bool:
    if np.any(geometry.points_in_polygon(ego, poly)):
        return True
    ring = np.vstack([poly, poly[:1]])
    dist, _ = geometry.project_points_to_polyline(ego, ring)
    return bool(np.min(dist) <= radius)


def infra_features(
    s: Snippet,
    m: SceneMap,
    roi_radius: float = 75.0,
    K: int = 100,
    index: MapIndex | None = None,
) -> InfraFeatures:
    if index is None:
        index = MapIndex(m)
    ego = s.ego_xy()
    lane_in = _included_lanes(index, ego, roi_radius)
    vehicle_in = lane_in & ~index.lane_is_bike
    bike_in = lane_in & index.lane_is_bike
    curves = index.lane_curve_complexity(K)

    curve_mean = float(np.mean(curves[vehicle_in])) if np.any(vehicle_in) else 0.0
    bike_curve = float(np.mean(curves[bike_in])) if np.any(bike_in) else 0.0

    cm = index.crossing_matrix
    crossing_total = float(cm[np.ix_(vehicle_in, vehicle_in)].sum())
    bike_crossing = float(cm[np.ix_(bike_in, lane_in)].sum())

    at_intersection = 0.0
    roads = 0
    inter_lanes = 0
    for inter, poly in zip(m.intersections, index.intersection_polys):
        if np.any(geometry.points_in_polygon(ego, poly)):
            at_intersection = 1.0
        if _polygon_in_roi(poly, ego, roi_radius):
            roads += inter.incoming_roads
            inter_lanes += sum(inter.lanes_per_road)

    lights = 0
    signs = 0
    for control, pos in zip(m.traffic_controls, index.control_positions):
        if np.min(np.linalg.norm(ego - pos, axis=1)) <= roi_radius:
            if control.kind == "traffic_light":
                lights += 1
            else:
                signs += 1

    overlaps = 0
    vehicle_cols = np.flatnonzero(vehicle_in)
    for ci, poly in enumerate(index.crosswalk_polys):
        if len(vehicle_cols) and _polygon_in_roi(poly, ego, roi_radius):
            overlaps += int(index.crosswalk_lane_hits[ci, vehicle_cols].sum())

    height_var = 0.0
    if len(index.height_xy):
        d2 = (
            (index.height_xy[:, None, 0] - ego[None, :, 0]) ** 2
            + (index.height_xy[:, None, 1] - ego[None, :, 1]) ** 2
        )
        in_roi = np.min(d2, axis=1) <= roi_radius * roi_radius
        if np.any(in_roi):
            height_var = float(np.var(index.height_z[in_roi]))

    return InfraFeatures(
        curve_mean=curve_mean,
        crossing_total=crossing_total,
        at_intersection=at_intersection,
        intersection_roads=float(roads),
        intersection_lanes=float(inter_lanes),
        traffic_lights=float(lights),
        signs=float(signs),
        bike_curve=bike_curve,
        bike_crossing=bike_crossing,
        crosswalk_lane_overlaps=float(overlaps),
        height_var=height_var,
    )
