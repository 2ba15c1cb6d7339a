"""Command line front end.

Exit codes: 0 on success, 1 for usage problems (bad flags, missing
arguments), 2 for domain failures (unreadable or invalid files, infeasible
scenario specs). All file outputs are canonical JSON written atomically, so
reruns with identical inputs produce byte-identical artifacts.
"""

import csv
import json
import os
import sys

import click
import numpy as np

from . import baselines, features, selection, synthgen
from .scene import (
    MapIndex,
    PoolFormatError,
    PoolValidationError,
    canonical_dumps,
    load_pool,
    save_pool,
    write_atomic,
)
from .traffic import build_track_paths

DOMAIN_ERRORS = (
    PoolFormatError,
    PoolValidationError,
    selection.ConfigError,
    baselines.ForecastError,
    synthgen.ScenarioError,
)

HISTOGRAM_BINS = 32


def _resolve_jobs(jobs) -> int:
    if jobs is not None:
        return max(1, jobs)
    raw = os.environ.get("CURATOR_JOBS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        return 1


@click.group()
def cli():
    """Score driving-log snippets and curate labeling sets."""


@cli.command()
def schema():
    """Print the snippet and frame feature schema as JSON."""
    click.echo(canonical_dumps(features.schema_description()))


@cli.command()
@click.option("--template", type=click.Choice(synthgen.TEMPLATES), default="straight_road", show_default=True)
@click.option("--plan", type=click.Choice(synthgen.PLANS), default="cruise", show_default=True)
@click.option("--snippets", "n_snippets", type=int, default=1, show_default=True)
@click.option("--frames", type=int, default=250, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--jitter/--no-jitter", default=False, show_default=True)
@click.option("--overlap-every", type=int, default=0, show_default=True)
@click.option("--bicycle-every", type=int, default=0, show_default=True)
@click.option("--id-prefix", default="s", show_default=True)
@click.option("--out", required=True, type=click.Path(), help="Pool NDJSON path; the map sidecar lands next to it.")
@click.option("--cards", "cards_path", type=click.Path(), default=None, help="Also write expectation cards.")
@click.option("--forecasts", "forecasts_path", type=click.Path(), default=None, help="Also write synthetic forecasts.")
@click.option("--horizon", type=int, default=5, show_default=True)
def synth(template, plan, n_snippets, frames, seed, jitter, overlap_every, bicycle_every, id_prefix, out, cards_path, forecasts_path, horizon):
    """Generate a synthetic pool with known expected measure values."""
    spec = synthgen.default_spec(
        template,
        plan,
        seed=seed,
        n_snippets=n_snippets,
        num_frames=frames,
        jitter=jitter,
        overlap_every=overlap_every,
        bicycle_every=bicycle_every,
        id_prefix=id_prefix,
    )
    pool, cards = synthgen.generate_pool(spec)
    save_pool(pool, out)
    if cards_path:
        obj = {
            "kind": "expectation_cards",
            "cards": [c.to_obj() for c in cards.values() if c is not None],
        }
        write_atomic(cards_path, canonical_dumps(obj) + "\n")
    if forecasts_path:
        forecasts = synthgen.synth_forecasts(pool, horizon)
        baselines.write_forecasts(forecasts_path, forecasts, horizon)
    click.echo(f"wrote {len(pool.snippets)} snippet(s) to {out}")


@cli.command()
@click.argument("pool_path", type=click.Path())
@click.option("--out", "out_dir", required=True, type=click.Path(), help="Feature directory.")
@click.option("--config", "config_path", type=click.Path(), default=None)
@click.option("--jobs", type=int, default=None, help="Worker processes; defaults to CURATOR_JOBS or 1.")
def score(pool_path, out_dir, config_path, jobs):
    """Compute snippet and frame features for every snippet in a pool."""
    cfg = selection.load_config(config_path) if config_path else selection.CurationConfig()
    pool = load_pool(pool_path)
    bundle = features.score_pool(pool, cfg, _resolve_jobs(jobs))
    features.write_features(out_dir, bundle)
    n_valid = int(np.count_nonzero(bundle.valid))
    click.echo(f"scored {len(bundle.ids)} snippet(s) ({n_valid} rankable) into {out_dir}")


def _bundle_for(pool, cfg, features_dir, jobs):
    if features_dir is None:
        return features.score_pool(pool, cfg, _resolve_jobs(jobs))
    bundle = features.read_features(features_dir)
    pool_ids = sorted(s.snippet_id for s in pool.snippets)
    if bundle.ids != pool_ids:
        raise selection.ConfigError(
            f"feature directory {features_dir} does not cover the pool snippet ids"
        )
    return bundle


@cli.command(name="curate")
@click.argument("pool_path", type=click.Path())
@click.option("--config", "config_path", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--features", "features_dir", type=click.Path(), default=None, help="Reuse a feature directory written by score.")
@click.option("--jobs", type=int, default=None)
def curate_cmd(pool_path, config_path, out_path, features_dir, jobs):
    """Select challenging snippets per task, then grow a diverse remainder."""
    cfg = selection.load_config(config_path)
    pool = load_pool(pool_path)
    bundle = _bundle_for(pool, cfg, features_dir, jobs)
    result = selection.curate(pool, bundle, cfg)
    write_atomic(out_path, canonical_dumps(selection.result_to_obj(result)) + "\n")
    total = sum(len(t["snippet_ids"]) for t in result.tasks) + len(result.diverse["snippet_ids"])
    click.echo(f"selected {total} snippet(s) into {out_path}")
    for warning in result.warnings:
        click.echo(f"warning: {warning}", err=True)


@cli.command()
@click.argument("pool_path", type=click.Path())
@click.option("--method", type=click.Choice(["random", "entropy"]), required=True)
@click.option("-k", "--budget", "k", type=int, required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--forecasts", "forecasts_path", type=click.Path(), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
def baseline(pool_path, method, k, seed, forecasts_path, out_path):
    """Pick a labeling set by seeded randomness or forecast entropy."""
    if k < 0:
        raise click.UsageError("budget must be >= 0")
    if method == "entropy" and not forecasts_path:
        raise click.UsageError("--forecasts is required for the entropy method")
    pool = load_pool(pool_path)
    ids = sorted(s.snippet_id for s in pool.snippets)
    adjacency = selection.overlap_adjacency(pool.snippets)
    if method == "random":
        picked, audit = baselines.random_select(ids, adjacency, k, seed)
    else:
        forecasts = baselines.load_forecasts(forecasts_path)
        picked, audit = baselines.al_select(ids, forecasts, adjacency, k)
    result = baselines.baseline_result(method, k, picked, audit, seed)
    write_atomic(out_path, canonical_dumps(selection.result_to_obj(result)) + "\n")
    click.echo(f"selected {len(picked)} snippet(s) into {out_path}")
    for warning in result.warnings:
        click.echo(f"warning: {warning}", err=True)


def _label_stats(snippets, cfg):
    counts = {}
    total_frames = 0
    for s in snippets:
        total_frames += s.num_frames
        for t in build_track_paths(s, cfg.roi_radius):
            motion = "static" if t.is_static(cfg.static_speed) else "dynamic"
            n_in = int(np.count_nonzero(t.in_roi))
            key = (t.label, motion)
            counts[key] = counts.get(key, 0) + n_in
    stats = {}
    for (label, motion), n in sorted(counts.items()):
        stats.setdefault(label, {})[motion] = n / total_frames if total_frames else 0.0
    return stats


@cli.command()
@click.argument("pool_path", type=click.Path())
@click.argument("result_path", type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--config", "config_path", type=click.Path(), default=None)
def report(pool_path, result_path, out_dir, config_path):
    """Summarize a selection: features, label mix, and histograms."""
    cfg = selection.load_config(config_path) if config_path else selection.CurationConfig()
    pool = load_pool(pool_path)
    try:
        with open(result_path) as fh:
            obj = json.load(fh)
    except OSError as exc:
        raise PoolFormatError(f"cannot read result {result_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise PoolFormatError(f"result {result_path} is not valid JSON: {exc}") from exc
    problems = selection.validate_result_obj(obj)
    if problems:
        raise PoolFormatError(f"result {result_path}: " + "; ".join(problems))
    chosen = set(obj["selected"])
    by_id = {s.snippet_id: s for s in pool.snippets}
    missing = sorted(chosen - set(by_id))
    if missing:
        raise PoolFormatError(f"result references snippets not in the pool: {', '.join(missing)}")
    snippets = [by_id[sid] for sid in sorted(chosen)]

    index = MapIndex(pool.scene_map)
    rows = []
    for s in snippets:
        vec, _ = features.compute_snippet_features(s, pool.scene_map, cfg, index=index)
        rows.append(vec.values)
    matrix = np.stack(rows) if rows else np.zeros((0, features.SNIPPET_DIM))

    names = [name for name, _ in features.SNIPPET_FEATURES]
    units = [unit for _, unit in features.SNIPPET_FEATURES]
    summary = {
        "kind": "curation_report",
        "method": obj["method"],
        "selected": sorted(chosen),
        "label_stats": _label_stats(snippets, cfg),
        "features": [
            {
                "name": names[i],
                "unit": units[i],
                "mean": float(np.mean(matrix[:, i])) if len(matrix) else 0.0,
                "min": float(np.min(matrix[:, i])) if len(matrix) else 0.0,
                "max": float(np.max(matrix[:, i])) if len(matrix) else 0.0,
            }
            for i in range(features.SNIPPET_DIM)
        ],
    }
    os.makedirs(out_dir, exist_ok=True)
    write_atomic(os.path.join(out_dir, "summary.json"), canonical_dumps(summary) + "\n")

    with open(os.path.join(out_dir, "features.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["snippet_id"] + names)
        for s, row in zip(snippets, matrix):
            writer.writerow([s.snippet_id] + [repr(float(v)) for v in row])

    with open(os.path.join(out_dir, "histograms.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["feature", "bin", "lo", "hi", "count"])
        for i, name in enumerate(names):
            col = matrix[:, i] if len(matrix) else np.zeros(0)
            if len(col) == 0:
                continue
            lo, hi = float(np.min(col)), float(np.max(col))
            if hi <= lo:
                writer.writerow([name, 0, repr(lo), repr(hi), len(col)])
                continue
            counts, edges = np.histogram(col, bins=HISTOGRAM_BINS, range=(lo, hi))
            for b, c in enumerate(counts):
                writer.writerow([name, b, repr(float(edges[b])), repr(float(edges[b + 1])), int(c)])
    click.echo(f"report for {len(snippets)} snippet(s) written to {out_dir}")


def main(argv=None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.ClickException as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except DOMAIN_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        if isinstance(exc, PoolValidationError):
            for finding in exc.findings:
                click.echo(f"  {finding.snippet_id or '-'}: {finding.rule}: {finding.detail}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
