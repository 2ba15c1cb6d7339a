"""Two-phase labeling-set selection: challenging picks, then diverse picks.

Phase one round-robins over the configured tasks in order, each task
greedily taking the feasible snippet with the highest weighted score. Phase
two grows the set farthest-point style, maximizing each candidate's minimum
directed frame-set dissimilarity to everything already selected. Feasible
always means: rankable, not selected, and not overlapping (same log, shared
frames) anything selected. Every argmax breaks ties by ascending snippet_id.
"""

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .features import SNIPPET_DIM, SNIPPET_FEATURE_NAMES, FeatureBundle
from .scene import SnippetPool, snippets_overlap

NORMALIZATION_MODES = ("zscore", "none")
DISSIMILARITY_MODES = ("directed", "symmetric")


class ConfigError(ValueError):
    """Raised for malformed or inconsistent curation configs."""


@dataclass(frozen=True, slots=True)
class TaskConfig:
    name: str
    weights: np.ndarray  # (SNIPPET_DIM,)
    budget: int


@dataclass(frozen=True, slots=True)
class CurationConfig:
    tasks: tuple = ()
    k_div: int = 0
    seed: int = 0
    roi_radius: float = 75.0
    near_dist: float = 10.0
    horizon: float = 5.0
    resample_points: int = 100
    static_speed: float = 0.5
    map_match_gate: float = 3.0
    map_match_min_frac: float = 0.9
    lane_change_min_frames: int = 10
    ego_width: float = 2.0
    lane_width_fallback: float = 3.6
    nudge_object_dist: float = 5.0
    nudge_min_bound_frames: int = 10
    normalization: str = "zscore"
    dissimilarity: str = "directed"


def resolve_weights(spec) -> np.ndarray:
    """Accept either a full-length list or a {feature_name: weight} map."""
    if isinstance(spec, dict):
        w = np.zeros(SNIPPET_DIM)
        for name, value in spec.items():
            if name not in SNIPPET_FEATURE_NAMES:
                raise ConfigError(f"unknown feature name in weights: {name!r}")
            w[SNIPPET_FEATURE_NAMES.index(name)] = float(value)
    else:
        w = np.asarray(spec, dtype=float)
        if w.shape != (SNIPPET_DIM,):
            raise ConfigError(f"weights must have {SNIPPET_DIM} entries, got {w.shape}")
    if not np.all(np.isfinite(w)):
        raise ConfigError("weights must be finite")
    return w


def config_from_obj(obj) -> CurationConfig:
    if not isinstance(obj, dict):
        raise ConfigError("config must be a JSON object")
    tasks = []
    names = set()
    for t in obj.get("tasks", []):
        try:
            name = str(t["name"])
            budget = t["budget"]
            weights = resolve_weights(t["weights"])
        except KeyError as exc:
            raise ConfigError(f"task missing field {exc}") from exc
        if name in names:
            raise ConfigError(f"duplicate task name {name!r}")
        names.add(name)
        if not isinstance(budget, int) or budget < 0:
            raise ConfigError(f"task {name!r} budget must be a non-negative integer")
        tasks.append(TaskConfig(name, weights, budget))
    cfg = CurationConfig(tasks=tuple(tasks))
    scalars = {
        "k_div": int,
        "seed": int,
        "roi_radius": float,
        "near_dist": float,
        "horizon": float,
        "resample_points": int,
        "static_speed": float,
        "map_match_gate": float,
        "map_match_min_frac": float,
        "lane_change_min_frames": int,
        "ego_width": float,
        "lane_width_fallback": float,
        "nudge_object_dist": float,
        "nudge_min_bound_frames": int,
        "normalization": str,
        "dissimilarity": str,
    }
    updates = {}
    for key, cast in scalars.items():
        if key in obj:
            try:
                updates[key] = cast(obj[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"config field {key!r}: {exc}") from exc
    cfg = replace(cfg, **updates)
    if cfg.k_div < 0:
        raise ConfigError("k_div must be >= 0")
    if cfg.seed < 0:
        raise ConfigError("seed must be >= 0")
    if not cfg.roi_radius > 0:
        raise ConfigError("roi_radius must be positive")
    if cfg.resample_points < 3:
        raise ConfigError("resample_points must be >= 3")
    if cfg.normalization not in NORMALIZATION_MODES:
        raise ConfigError(f"normalization must be one of {NORMALIZATION_MODES}")
    if cfg.dissimilarity not in DISSIMILARITY_MODES:
        raise ConfigError(f"dissimilarity must be one of {DISSIMILARITY_MODES}")
    return cfg


def load_config(path: str) -> CurationConfig:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return config_from_obj(obj)


def config_to_obj(cfg: CurationConfig):
    return {
        "tasks": [
            {"name": t.name, "weights": [float(v) for v in t.weights], "budget": t.budget}
            for t in cfg.tasks
        ],
        "k_div": cfg.k_div,
        "seed": cfg.seed,
        "roi_radius": cfg.roi_radius,
        "near_dist": cfg.near_dist,
        "horizon": cfg.horizon,
        "resample_points": cfg.resample_points,
        "static_speed": cfg.static_speed,
        "map_match_gate": cfg.map_match_gate,
        "map_match_min_frac": cfg.map_match_min_frac,
        "lane_change_min_frames": cfg.lane_change_min_frames,
        "ego_width": cfg.ego_width,
        "lane_width_fallback": cfg.lane_width_fallback,
        "nudge_object_dist": cfg.nudge_object_dist,
        "nudge_min_bound_frames": cfg.nudge_min_bound_frames,
        "normalization": cfg.normalization,
        "dissimilarity": cfg.dissimilarity,
    }


def score(values: np.ndarray, weights: np.ndarray) -> float:
    """Weighted sum of raw (unnormalized) snippet features."""
    v = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if v.shape != w.shape:
        raise ValueError(f"shape mismatch: values {v.shape} vs weights {w.shape}")
    return float(v @ w)


def _directed_distance(a: np.ndarray, b: np.ndarray) -> float:
    a2 = np.einsum("ij,ij->i", a, a)
    b2 = np.einsum("ij,ij->i", b, b)
    sq = a2[:, None] + b2[None, :] - 2.0 * (a @ b.T)
    np.maximum(sq, 0.0, out=sq)
    return float(np.sqrt(np.max(np.min(sq, axis=1))))


def dissimilarity(a: np.ndarray, b: np.ndarray, directed: bool = True) -> float:
    """Directed frame-set dissimilarity: the worst-covered frame of `a`.

    max over frames of `a` of the distance to the closest frame of `b`; zero
    when every frame of `a` is matched exactly. Not symmetric: a superset is
    fully covered by its subset's frames only in one direction. Bitwise-equal
    inputs short-circuit to exactly 0.0.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"frame dims differ: {a.shape[1]} vs {b.shape[1]}")
    if len(a) == 0 or len(b) == 0:
        raise ValueError("dissimilarity needs nonempty frame sets")
    if a.shape == b.shape and np.array_equal(a, b):
        return 0.0
    d = _directed_distance(a, b)
    if directed:
        return d
    return max(d, _directed_distance(b, a))


@dataclass(frozen=True, slots=True)
class AuditEntry:
    phase: str  # "challenging" | "diverse" | "baseline"
    iteration: int
    task: str | None
    snippet_id: str
    value: float | None  # task score, min-distance, or baseline figure
    eliminated: tuple  # ids newly infeasible due to overlap with this pick
    seed: bool = False


@dataclass
class CurationResult:
    method: str
    seed: int
    tasks: list  # [{"name", "budget", "snippet_ids"}]
    diverse: dict  # {"budget", "snippet_ids"}
    audit: list  # [AuditEntry]
    warnings: list


def result_to_obj(res: CurationResult):
    selected = [sid for t in res.tasks for sid in t["snippet_ids"]]
    selected += list(res.diverse["snippet_ids"])
    return {
        "kind": "curation_result",
        "schema_version": 1,
        "method": res.method,
        "seed": res.seed,
        "tasks": [
            {"name": t["name"], "budget": t["budget"], "snippet_ids": list(t["snippet_ids"])}
            for t in res.tasks
        ],
        "diverse": {
            "budget": res.diverse["budget"],
            "snippet_ids": list(res.diverse["snippet_ids"]),
        },
        "selected": selected,
        "audit": [
            {
                "phase": e.phase,
                "iteration": e.iteration,
                "task": e.task,
                "snippet_id": e.snippet_id,
                "value": None if e.value is None else float(e.value),
                "eliminated": list(e.eliminated),
                "seed": e.seed,
            }
            for e in res.audit
        ],
        "warnings": list(res.warnings),
    }


def validate_result_obj(obj) -> list:
    """Schema findings for a result object; empty when well-formed."""
    problems = []
    if not isinstance(obj, dict) or obj.get("kind") != "curation_result":
        return ["not a curation_result object"]
    for key in ("schema_version", "method", "seed", "tasks", "diverse", "selected", "audit", "warnings"):
        if key not in obj:
            problems.append(f"missing key {key!r}")
    if problems:
        return problems
    for t in obj["tasks"]:
        for key in ("name", "budget", "snippet_ids"):
            if key not in t:
                problems.append(f"task missing {key!r}")
    for key in ("budget", "snippet_ids"):
        if key not in obj["diverse"]:
            problems.append(f"diverse missing {key!r}")
    seen = set()
    for sid in obj["selected"]:
        if sid in seen:
            problems.append(f"duplicate selected id {sid!r}")
        seen.add(sid)
    for e in obj["audit"]:
        for key in ("phase", "iteration", "task", "snippet_id", "value", "eliminated", "seed"):
            if key not in e:
                problems.append(f"audit entry missing {key!r}")
    return problems


def overlap_adjacency(snippets) -> dict:
    """id -> set of other ids sharing frames of the same log."""
    adj = {s.snippet_id: set() for s in snippets}
    ordered = sorted(snippets, key=lambda s: s.snippet_id)
    for i, a in enumerate(ordered):
        for b in ordered[i + 1 :]:
            if snippets_overlap(a, b):
                adj[a.snippet_id].add(b.snippet_id)
                adj[b.snippet_id].add(a.snippet_id)
    return adj


def select_challenging(ids, matrix, valid, tasks, adjacency):
    """Greedy round-robin task picks; returns (per-task id lists, audit)."""
    alive = {sid for sid, ok in zip(ids, valid) if ok}
    index_of = {sid: i for i, sid in enumerate(ids)}
    picked = {t.name: [] for t in tasks}
    audit = []
    remaining = {t.name: t.budget for t in tasks}
    iteration = 0
    while any(remaining[t.name] > 0 for t in tasks) and alive:
        progressed = False
        for t in tasks:
            if remaining[t.name] <= 0 or not alive:
                continue
            cand = sorted(alive)
            scores = np.array([matrix[index_of[sid]] @ t.weights for sid in cand])
            best = int(np.argmax(scores))
            pick = cand[best]
            alive.discard(pick)
            eliminated = tuple(sorted(alive & adjacency[pick]))
            alive -= adjacency[pick]
            picked[t.name].append(pick)
            remaining[t.name] -= 1
            audit.append(
                AuditEntry("challenging", iteration, t.name, pick, float(scores[best]), eliminated)
            )
            progressed = True
        if not progressed:
            break
        iteration += 1
    return picked, audit


def select_diverse(ids, frame_mats, valid, selected, k_div, adjacency, directed, seed_norms):
    """Farthest-point growth of the diverse set; returns (ids, audit).

    Candidate min-distances to the selected set are cached and only updated
    against each new pick, which leaves the argmax unchanged relative to a
    full recomputation.
    """
    alive = {sid for sid, ok in zip(ids, valid) if ok} - set(selected)
    for sid in selected:
        alive -= adjacency.get(sid, set())
    anchor = list(selected)
    picked = []
    audit = []
    mindist = {}
    for i in range(k_div):
        if not alive:
            break
        cand = sorted(alive)
        if not anchor:
            norms = np.array([seed_norms[sid] for sid in cand])
            best = int(np.argmax(norms))
            pick = cand[best]
            value = float(norms[best])
            is_seed = True
        else:
            for sid in cand:
                if sid not in mindist:
                    mindist[sid] = min(
                        dissimilarity(frame_mats[sid], frame_mats[other], directed)
                        for other in anchor
                    )
            dists = np.array([mindist[sid] for sid in cand])
            best = int(np.argmax(dists))
            pick = cand[best]
            value = float(dists[best])
            is_seed = False
        alive.discard(pick)
        eliminated = tuple(sorted(alive & adjacency[pick]))
        alive -= adjacency[pick]
        mindist.pop(pick, None)
        for sid in list(mindist):
            if sid not in alive:
                mindist.pop(sid)
                continue
            d = dissimilarity(frame_mats[sid], frame_mats[pick], directed)
            if d < mindist[sid]:
                mindist[sid] = d
        anchor.append(pick)
        picked.append(pick)
        audit.append(AuditEntry("diverse", i, None, pick, value, eliminated, seed=is_seed))
    return picked, audit


def curate(pool: SnippetPool, bundle: FeatureBundle, config: CurationConfig) -> CurationResult:
    """Run both phases over a scored pool."""
    ids = bundle.ids
    adjacency = overlap_adjacency(pool.snippets)
    warnings = []
    invalid = sorted(sid for sid, ok in zip(ids, bundle.valid) if not ok)
    if invalid:
        warnings.append(f"excluded {len(invalid)} unrankable snippet(s): {', '.join(invalid)}")
    total_budget = sum(t.budget for t in config.tasks) + config.k_div
    if total_budget > len(ids):
        warnings.append(
            f"requested {total_budget} snippet(s) from a pool of {len(ids)}; selection may fall short"
        )
    picked, audit = select_challenging(ids, bundle.matrix, bundle.valid, config.tasks, adjacency)
    selected = [sid for t in config.tasks for sid in picked[t.name]]
    normalized = {sid: bundle.frame_stats.apply(bundle.frame_mats[sid]) for sid in ids}
    seed_norms = {
        sid: float(np.linalg.norm(bundle.snippet_stats.apply(bundle.matrix[i])))
        for i, sid in enumerate(ids)
    }
    directed = config.dissimilarity == "directed"
    div_ids, div_audit = select_diverse(
        ids, normalized, bundle.valid, selected, config.k_div, adjacency, directed, seed_norms
    )
    for t in config.tasks:
        if len(picked[t.name]) < t.budget:
            warnings.append(f"task {t.name}: selected {len(picked[t.name])} of {t.budget}")
    if len(div_ids) < config.k_div:
        warnings.append(f"diverse phase: selected {len(div_ids)} of {config.k_div}")
    return CurationResult(
        method="curate",
        seed=config.seed,
        tasks=[
            {"name": t.name, "budget": t.budget, "snippet_ids": picked[t.name]}
            for t in config.tasks
        ],
        diverse={"budget": config.k_div, "snippet_ids": div_ids},
        audit=audit + div_audit,
        warnings=warnings,
    )
