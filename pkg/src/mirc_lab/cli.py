"""mirc-lab command line: reduce, scramble, score, mirc-label, metrics,
features, summarize, and serve, sharing one config file and one root seed.

Every artifact records the seed that produced it; sub-seeds derive from the
root seed keyed by subcommand name, so re-running a single stage cannot
shift the randomness of any other stage.  Exit codes: 0 success, 1 data or
integrity error, 2 usage error.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import pipeline, rng
from .dataset import load_manifest, summarize as summarize_trees
from .features import (
    TemporalCategoryTable,
    TransitionDirection,
    attach_feature_deltas,
    correlation_matrix,
    detect_transitions,
    temporal_category_stats,
    transition_delta_stats,
    ALL_FEATURES,
)
from .metrics import (
    MeasureKind,
    PairKind,
    PairRecord,
    ai_recognition_gap,
    gap_statistics,
    human_recognition_gap,
    mirc_operating_points,
    reduction_rate,
)
from .reduction import ReductionConfig
from .scoring import ScoringConfig

PAIR_KINDS = {
    "all": PairKind.ANY_PARENT_CHILD,
    "mirc": PairKind.MIRC_SUB_MIRC,
    "st": PairKind.SPATIOTEMPORAL_MIRC_SUB_MIRC,
}


class RunContext:
    def __init__(self, config_path: Path | None, seed: int | None):
        self.settings: dict = {}
        if config_path is not None:
            self.settings = _load_config(config_path)
        if seed is not None:
            self.seed = seed
        elif "MIRC_LAB_SEED" in os.environ:
            self.seed = int(os.environ["MIRC_LAB_SEED"])
        else:
            self.seed = int(self.settings.get("seed", 0))

    def sub_seed(self, name: str) -> int:
        return rng.derive_seed(self.seed, name)

    def reduction_config(self, **overrides) -> ReductionConfig:
        merged = {**self.settings.get("reduction", {}), **overrides}
        return ReductionConfig(**merged)

    def scoring_config(self, path: Path | None = None) -> ScoringConfig:
        if path is not None:
            return ScoringConfig.from_dict(_load_config(path))
        return ScoringConfig.from_dict(self.settings.get("scoring", {}))


def _load_config(path: Path) -> dict:
    text = Path(path).read_text()
    if str(path).endswith(".toml"):
        try:
            import tomllib
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text)
    return json.loads(text)


def _fail(message: str) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


def run_data_step(fn):
    try:
        return fn()
    except (ValueError, KeyError, OSError) as exc:
        _fail(str(exc))


@click.group()
@click.option("--config", "config_path", type=click.Path(path_type=Path), default=None)
@click.option("--seed", type=int, default=None, help="root seed (overrides config and env)")
@click.pass_context
def main(ctx, config_path, seed):
    ctx.obj = RunContext(config_path, seed)


@main.command()
@click.option("--manifest", required=True, type=click.Path(path_type=Path))
@click.option("--scored", "scored_path", type=click.Path(path_type=Path), default=None,
              help="scored responses; without it trees stop at untested roots")
@click.option("--scale", type=float, default=None)
@click.option("--max-level", type=int, default=None)
@click.option("--threshold", type=float, default=None)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_obj
def reduce(run: RunContext, manifest, scored_path, scale, max_level, threshold, out):
    """Build reduction trees from a scored response table."""

    def step():
        overrides = {}
        if scale is not None:
            overrides["scale_factor"] = scale
        if max_level is not None:
            overrides["max_level"] = max_level
        if threshold is not None:
            overrides["recognition_threshold"] = threshold
        config = run.reduction_config(**overrides)
        m = load_manifest(manifest)
        accs = {}
        if scored_path is not None:
            accs = pipeline.node_accuracies_from_scored(pipeline.read_csv_artifact(scored_path))
        trees, untested = pipeline.build_trees(m, accs, config)
        pipeline.save_trees(out, trees, run.seed, extra={"untested_frontier": sorted(untested)})
        total = sum(len(t.nodes) for t in trees.values())
        click.echo(f"built {len(trees)} trees, {total} nodes; untested frontier: {len(untested)}")

    run_data_step(step)


@main.command("mirc-label")
@click.option("--trees", "trees_path", required=True, type=click.Path(path_type=Path))
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_obj
def mirc_label(run: RunContext, trees_path, threshold, out):
    """Assign MIRC and sub-MIRC roles from tested accuracies."""

    def step():
        trees = pipeline.load_trees(trees_path)
        report = pipeline.label_all(trees, threshold)
        pipeline.save_trees(out, trees, run.seed, extra={"labels": report})
        click.echo(
            f"{len(report['mircs'])} MIRCs, {len(report['sub_mircs'])} sub-MIRCs, "
            f"{len(report['unresolved_leaves'])} unresolved leaves"
        )

    run_data_step(step)


@main.command()
@click.option("--trees", "trees_path", required=True, type=click.Path(path_type=Path))
@click.option("--manifest", required=True, type=click.Path(path_type=Path))
@click.option("--scored", "scored_path", type=click.Path(path_type=Path), default=None)
@click.option("--only-mircs/--all-tested", default=True, show_default=True)
@click.option("--blocks", type=int, default=5, show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--trees-out", type=click.Path(path_type=Path), default=None)
@click.pass_obj
def scramble(run: RunContext, trees_path, manifest, scored_path, only_mircs, blocks, out, trees_out):
    """Attach temporally scrambled variants of labelled MIRCs."""

    def step():
        m = load_manifest(manifest)
        trees = pipeline.load_trees(trees_path)
        accs = {}
        if scored_path is not None:
            accs = pipeline.node_accuracies_from_scored(pipeline.read_csv_artifact(scored_path))
        plans = pipeline.attach_scrambles(
            trees, m, run.seed, accs, n_blocks=blocks, only_mircs=only_mircs
        )
        pipeline.write_json_artifact(out, {"plans": plans}, run.seed)
        if trees_out is not None:
            pipeline.save_trees(trees_out, trees, run.seed)
        click.echo(f"scrambled {len(plans)} nodes")

    run_data_step(step)


@main.command()
@click.option("--responses", "responses_path", type=click.Path(path_type=Path), default=None)
@click.option("--manifest", required=True, type=click.Path(path_type=Path))
@click.option("--scoring-config", type=click.Path(path_type=Path), default=None)
@click.option("--sentence-embeddings", type=click.Path(path_type=Path), default=None)
@click.option("--word-embeddings", type=click.Path(path_type=Path), default=None)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_obj
def score(run: RunContext, responses_path, manifest, scoring_config, sentence_embeddings, word_embeddings, out):
    """Clean and score free-text responses against ground-truth labels."""

    def step():
        m = load_manifest(manifest)
        config = run.scoring_config(scoring_config)
        rows, excluded = pipeline.score_responses_file(
            m, config, responses_path, sentence_embeddings, word_embeddings
        )
        pipeline.write_csv_artifact(out, pipeline.SCORED_FIELDS, rows, run.seed)
        click.echo(f"scored {len(rows)} responses; excluded {len(excluded)}")
        for row in excluded:
            click.echo(f"  excluded {row['participant_id']}/{row['node_id']}: {row['reason']}", err=True)

    run_data_step(step)


@main.command()
@click.option("--manifest", required=True, type=click.Path(path_type=Path))
@click.option("--trees", "trees_path", required=True, type=click.Path(path_type=Path))
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.pass_obj
def summarize(run: RunContext, manifest, trees_path, threshold, out):
    """Tally per-split sample, MIRC, and sub-MIRC counts."""

    def step():
        m = load_manifest(manifest)
        trees = pipeline.load_trees(trees_path)
        summary = summarize_trees(m, trees, threshold)
        if out is not None:
            pipeline.write_json_artifact(out, {"summary": summary.to_dict()}, run.seed)
        for split, s in sorted(summary.splits.items()):
            click.echo(
                f"{split}: videos {s.videos}, samples {s.samples}, MIRCs {s.mircs}, "
                f"spatial sub-MIRCs {s.spatial_sub_mircs}, spatiotemporal "
                f"{s.spatiotemporal_tested} ({s.spatiotemporal_unrecognisable})"
            )
        click.echo(
            f"spatiotemporal unrecognisable: {summary.spatiotemporal_unrecognisable_total}"
            f"/{summary.spatiotemporal_tested_total} = {summary.unrecognisable_percent}%"
        )

    run_data_step(step)


@main.group()
def metrics():
    """Recognition-gap and reduction-rate reports."""


def _load_pairs(path: Path) -> list[PairRecord]:
    return [PairRecord.from_dict(d) for d in pipeline.read_json_artifact(path)["pairs"]]


@metrics.command()
@click.option("--trees", "trees_path", required=True, type=click.Path(path_type=Path))
@click.option("--manifest", required=True, type=click.Path(path_type=Path))
@click.option("--confidences", type=click.Path(path_type=Path), default=None)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_obj
def pairs(run: RunContext, trees_path, manifest, confidences, out):
    """Extract parent-child pair records from labelled trees."""

    def step():
        m = load_manifest(manifest)
        trees = pipeline.load_trees(trees_path)
        records = pipeline.build_pairs(trees, m, confidences)
        pipeline.write_json_artifact(out, {"pairs": [p.to_dict() for p in records]}, run.seed)
        click.echo(f"extracted {len(records)} pairs")

    run_data_step(step)


@metrics.command()
@click.option("--pairs", "pairs_path", required=True, type=click.Path(path_type=Path))
@click.option("--measure", type=click.Choice(["human", "ai"]), required=True)
@click.option("--kind", type=click.Choice(["mirc", "st"]), default="mirc", show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_obj
def rg(run: RunContext, pairs_path, measure, kind, out):
    """Per-class recognition gap (percent) plus overall statistics."""

    def step():
        records = _load_pairs(pairs_path)
        pair_kind = PAIR_KINDS[kind]
        if measure == "human":
            per_class = human_recognition_gap(records, pair_kind)
            gaps = [
                p.delta
                for p in records
                if p.measure_kind == MeasureKind.HUMAN_ACCURACY and p.pair_kind == pair_kind
            ]
        else:
            points = mirc_operating_points(records, pair_kind)
            per_class = ai_recognition_gap(records, points, pair_kind)
            gaps = [
                p.delta
                for p in records
                if p.measure_kind == MeasureKind.MODEL_CONFIDENCE
                and p.pair_kind == pair_kind
                and p.verb_class in points
                and p.a_parent >= points[p.verb_class].tl
            ]
        payload = {
            "measure": measure,
            "kind": kind,
            "per_class_percent": {
                cls: (
                    None
                    if summary is None
                    else {
                        "n": summary.n,
                        "rg": round(100.0 * summary.mean, 2),
                        "std": round(100.0 * summary.std, 2),
                    }
                )
                for cls, summary in per_class.items()
            },
            "statistics": gap_statistics(gaps).to_dict() if gaps else None,
        }
        if measure == "ai":
            payload["operating_points"] = {
                cls: {
                    "target_fraction": op.target_fraction,
                    "tl": op.tl,
                    "achieved_fraction": op.achieved_fraction,
                }
                for cls, op in points.items()
            }
        pipeline.write_json_artifact(out, payload, run.seed)
        click.echo(f"{measure} recognition gap over {len(gaps)} pairs ({kind})")

    run_data_step(step)


@metrics.command()
@click.option("--pairs", "pairs_path", required=True, type=click.Path(path_type=Path))
@click.option("--measure", type=click.Choice(["human", "ai"]), required=True)
@click.option("--kind", type=click.Choice(["all", "mirc", "st"]), default="all", show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_obj
def arr(run: RunContext, pairs_path, measure, kind, out):
    """Average reduction rate with the 0.1-binned delta histogram."""

    def step():
        wanted = (
            MeasureKind.HUMAN_ACCURACY if measure == "human" else MeasureKind.MODEL_CONFIDENCE
        )
        records = [p for p in _load_pairs(pairs_path) if p.measure_kind == wanted]
        report = reduction_rate(records, PAIR_KINDS[kind])
        pipeline.write_json_artifact(out, {"measure": measure, "kind": kind, **report.to_dict()}, run.seed)
        arr_txt = "undefined" if report.arr is None else f"{report.arr:.4f}"
        click.echo(f"ARR ({measure}, {kind}): {arr_txt} over {report.pair_count} pairs")

    run_data_step(step)


@main.group()
def features():
    """Feature retention, transition, and temporal-category analyses."""


@features.command()
@click.option("--trees", "trees_path", required=True, type=click.Path(path_type=Path))
@click.option("--manifest", required=True, type=click.Path(path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_obj
def ratios(run: RunContext, trees_path, manifest, out):
    """Per-node retention ratio table over the 11 feature columns."""

    def step():
        m = load_manifest(manifest)
        trees = pipeline.load_trees(trees_path)
        table, skipped = pipeline.ratios_for_trees(trees, m)
        rows = pipeline.ratios_to_rows(table)
        pipeline.write_csv_artifact(out, ["node_id", *ALL_FEATURES], rows, run.seed)
        click.echo(f"ratios for {len(rows)} nodes; {len(skipped)} scrambled nodes lacked maps")

    run_data_step(step)


@features.command()
@click.option("--trees", "trees_path", required=True, type=click.Path(path_type=Path))
@click.option("--manifest", required=True, type=click.Path(path_type=Path))
@click.option("--classifier", type=click.Choice(["human", "ai"]), required=True)
@click.option("--threshold", type=float, default=0.5, show_default=True)
@click.option("--confidences", type=click.Path(path_type=Path), default=None)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_obj
def transitions(run: RunContext, trees_path, manifest, classifier, threshold, confidences, out):
    """Detect verb-prediction flips along parent-child edges."""

    def step():
        m = load_manifest(manifest)
        trees = pipeline.load_trees(trees_path)
        correctness = pipeline.verb_correctness(trees, m, classifier, threshold, confidences)
        records = []
        for clip_id in sorted(trees):
            records += detect_transitions(trees[clip_id], correctness, classifier)
        rows = pipeline.transitions_to_rows(records)
        fields = ["parent_node_id", "child_node_id", "direction", "classifier"]
        pipeline.write_csv_artifact(out, fields, rows, run.seed)
        n_fail = sum(1 for r in records if r.direction == TransitionDirection.FAILURE)
        click.echo(f"{n_fail} failures, {len(records) - n_fail} recoveries")

    run_data_step(step)


def _deltas_input(transitions_path: Path, ratios_path: Path):
    records = pipeline.rows_to_transitions(pipeline.read_csv_artifact(transitions_path))
    table = pipeline.rows_to_ratios(pipeline.read_csv_artifact(ratios_path))
    return attach_feature_deltas(records, table)


@features.command()
@click.option("--transitions", "transitions_path", required=True, type=click.Path(path_type=Path))
@click.option("--ratios", "ratios_path", required=True, type=click.Path(path_type=Path))
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_obj
def deltas(run: RunContext, transitions_path, ratios_path, out):
    """Mean per-feature retention change by transition direction."""

    def step():
        records = _deltas_input(transitions_path, ratios_path)
        rows = []
        for direction in TransitionDirection:
            stats = transition_delta_stats(records, direction)
            for feature in ALL_FEATURES:
                s = stats[feature]
                rows.append(
                    {
                        "direction": direction.value,
                        "feature": feature,
                        "mean_delta": "" if s.mean_delta is None else repr(s.mean_delta),
                        "n": s.n,
                        "excluded": s.excluded,
                    }
                )
        pipeline.write_csv_artifact(
            out, ["direction", "feature", "mean_delta", "n", "excluded"], rows, run.seed
        )
        click.echo(f"delta stats over {len(records)} transitions")

    run_data_step(step)


@features.command()
@click.option("--transitions", "transitions_path", required=True, type=click.Path(path_type=Path))
@click.option("--ratios", "ratios_path", required=True, type=click.Path(path_type=Path))
@click.option("--direction", type=click.Choice(["failure", "recovery"]), required=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_obj
def correlate(run: RunContext, transitions_path, ratios_path, direction, out):
    """Pearson correlation matrix of feature changes across transitions."""

    def step():
        records = _deltas_input(transitions_path, ratios_path)
        names, matrix = correlation_matrix(records, TransitionDirection(direction))
        rows = []
        for i, feature in enumerate(names):
            row = {"feature": feature}
            for j, other in enumerate(names):
                v = matrix[i, j]
                row[other] = "" if v != v else repr(float(v))
            rows.append(row)
        pipeline.write_csv_artifact(out, ["feature", *names], rows, run.seed)
        click.echo(f"correlation matrix over {direction} transitions")

    run_data_step(step)


@features.command()
@click.option("--pairs", "pairs_path", required=True, type=click.Path(path_type=Path))
@click.option("--lta", default="wash,cut,peel", show_default=True)
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.pass_obj
def temporal(run: RunContext, pairs_path, lta, out):
    """LTA vs HTA improvement proportions for scrambled MIRC pairs."""

    def step():
        records = [
            p
            for p in _load_pairs(pairs_path)
            if p.pair_kind == PairKind.SPATIOTEMPORAL_MIRC_SUB_MIRC
        ]
        lta_verbs = {v.strip() for v in lta.split(",") if v.strip()}
        vocab = {p.verb_class for p in records}
        table = TemporalCategoryTable(
            {v: ("lta" if v in lta_verbs else "hta") for v in vocab}
        )
        comparisons = temporal_category_stats(records, table)
        payload = {
            "comparisons": {
                name: {
                    "by_category": {
                        cat: {
                            "pair_count": c.pair_count,
                            "improved_count": c.improved_count,
                            "improved_percent": c.improved_percent,
                        }
                        for cat, c in comp.by_category.items()
                    },
                    "welch_t": comp.welch_t,
                    "welch_p": comp.welch_p,
                    "student_t": comp.student_t,
                    "student_p": comp.student_p,
                    "video_welch_t": comp.video_welch_t,
                    "video_welch_p": comp.video_welch_p,
                    "video_count": comp.video_count,
                    "notes": comp.notes,
                }
                for name, comp in comparisons.items()
            }
        }
        pipeline.write_json_artifact(out, payload, run.seed)
        for name, comp in comparisons.items():
            for cat, c in comp.by_category.items():
                click.echo(
                    f"{name} {cat.upper()}: {c.improved_count}/{c.pair_count} = "
                    f"{c.improved_percent}% improved"
                )

    run_data_step(step)


@main.command()
@click.option("--data-root", type=click.Path(path_type=Path), default="mirc-lab-studies")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(data_root, host, port):
    """Run the participant experiment HTTP service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(data_root), host=host, port=port)


if __name__ == "__main__":
    main()
