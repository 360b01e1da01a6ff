"""Command-line entry points for the full embed-and-evaluate pipeline.

Exit codes: 0 on success, 1 when a run fails numerically, 2 for usage or
input errors. Every command writes a `key=value` manifest recording the
resolved configuration and sha256 hashes of its inputs.
"""

import functools
import hashlib
from datetime import datetime, timezone
from pathlib import Path

import click
import numpy as np
from click.core import ParameterSource

from . import __version__
from .data import (
    TAG_NAMES,
    TRAIN,
    VALID,
    TEST,
    EdgeFileError,
    EdgeSet,
    GraphCycleError,
    SplitError,
    parse_edge_list,
    read_split_file,
    split_links,
    transitive_closure,
    write_edge_file,
)
from .evaluation import (
    DEFAULT_PENALTY_ALPHA,
    entailment_score,
    evaluate_entailment,
    evaluate_ranking,
    read_entailment_pairs,
)
from .figures import (
    render_ball_svg,
    save_entailment_scatter,
    save_loss_curve,
    save_rank_histogram,
)
from .geometry import POINCARE, SCORE_KINDS, TRANSLATIONAL
from .objectives import OBJECTIVE_KINDS, RANKING
from .store import (
    BALL_EPSILON,
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from .training import TrainConfig, TrainingDivergenceError, train as run_training

UNDIRECTED_TRANSLATIONAL_MSG = "translational score requires directed data"

_INPUT_ERRORS = (
    EdgeFileError,
    CheckpointError,
    GraphCycleError,
    SplitError,
    ValueError,
    OSError,
)


def _guarded(fn):
    """Map exceptions onto the documented exit codes."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except TrainingDivergenceError as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(1)
        except _INPUT_ERRORS as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(2)

    return wrapper


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            digest.update(block)
    return digest.hexdigest()


def _write_manifest(path, command, inputs, config, results=None):
    lines = [
        f"command={command}",
        f"version={__version__}",
        f"timestamp={datetime.now(timezone.utc).isoformat()}",
    ]
    for name in sorted(inputs):
        lines.append(f"input.{name}.sha256={_sha256(inputs[name])}")
    for key in sorted(config):
        lines.append(f"config.{key}={config[key]}")
    for key in sorted(results or {}):
        lines.append(f"result.{key}={results[key]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _remap_edges(edges, from_vocab, to_vocab, context):
    """Translate pair ids from the file's vocabulary into the checkpoint's."""
    mapping = np.empty(max(len(from_vocab), 1), dtype=np.int64)
    for idx, symbol in enumerate(from_vocab):
        target = to_vocab.get(symbol)
        if target is None:
            raise ValueError(f"symbol {symbol!r} from {context} is not in the checkpoint")
        mapping[idx] = target
    if len(edges) == 0:
        return edges
    return EdgeSet(mapping[edges.pairs], directed=edges.directed, tags=edges.tags)


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_CONFIG_TYPES = {
    "dim": int,
    "score": str,
    "objective": str,
    "lr": float,
    "epochs": int,
    "burn_in_epochs": int,
    "burn_in_divisor": float,
    "negatives": int,
    "batch": int,
    "seed": int,
    "threads": int,
    "epsilon": float,
    "radius": float,
    "temperature": float,
    "undirected": _parse_bool,
}


def _read_config_file(path):
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}: line {lineno}: expected key=value")
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in _CONFIG_TYPES:
                raise ValueError(f"{path}: line {lineno}: unknown key {key!r}")
            values[key] = _CONFIG_TYPES[key](value.strip())
    return values


@click.group()
@click.version_option(__version__, prog_name="hyperembed")
def main():
    """Hierarchy embeddings in the hyperbolic ball.

    Preprocess edge lists, train embeddings, rank held-out relations,
    score graded entailment, and render 2-d ball plots.
    """


@main.command("closure")
@click.argument("src", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path(dir_okay=False, writable=True))
@click.option("--manifest", "manifest_path", type=click.Path(dir_okay=False),
              default=None, help="Manifest location [default: OUT.manifest].")
@_guarded
def closure_cmd(src, out, manifest_path):
    """Write the transitive closure of a directed edge list."""
    edges, vocab = parse_edge_list(src, directed=True)
    closed = transitive_closure(edges, vocab)
    write_edge_file(closed, vocab, out)
    _write_manifest(
        manifest_path or f"{out}.manifest", "closure", {"edges": src},
        {"src": src, "out": out},
        {"edges_in": len(edges), "edges_out": len(closed), "symbols": len(vocab)},
    )
    click.echo(f"closure\t{len(closed)}")


@main.command("split")
@click.argument("src", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path(dir_okay=False, writable=True))
@click.option("--valid", "valid_frac", type=float, default=0.05, show_default=True,
              help="Fraction of edges to tag valid.")
@click.option("--test", "test_frac", type=float, default=0.1, show_default=True,
              help="Fraction of edges to tag test.")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--manifest", "manifest_path", type=click.Path(dir_okay=False), default=None)
@_guarded
def split_cmd(src, out, valid_frac, test_frac, seed, manifest_path):
    """Tag closure edges train/valid/test for link prediction."""
    edges, vocab = parse_edge_list(src, directed=True)
    tagged = split_links(edges, valid_frac, test_frac, seed)
    write_edge_file(tagged, vocab, out)
    counts = {name: int((tagged.tags == tag).sum()) for tag, name in enumerate(TAG_NAMES)}
    _write_manifest(
        manifest_path or f"{out}.manifest", "split", {"edges": src},
        {"src": src, "out": out, "valid": valid_frac, "test": test_frac, "seed": seed},
        counts,
    )
    for name in TAG_NAMES:
        click.echo(f"{name}\t{counts[name]}")


@main.command("train")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path(dir_okay=False, writable=True))
@click.option("--dim", type=int, default=5, show_default=True)
@click.option("--score", type=click.Choice(SCORE_KINDS), default=POINCARE,
              show_default=True)
@click.option("--objective", type=click.Choice(OBJECTIVE_KINDS), default=RANKING,
              show_default=True)
@click.option("--lr", type=float, default=None,
              help="Learning rate [default: 0.5 poincare, 0.05 flat].")
@click.option("--epochs", type=int, default=300, show_default=True)
@click.option("--burn-in-epochs", type=int, default=10, show_default=True,
              help="Epochs at the reduced settling rate.")
@click.option("--burn-in-divisor", type=float, default=10.0, show_default=True)
@click.option("--negatives", type=int, default=10, show_default=True)
@click.option("--batch", type=int, default=1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--epsilon", type=float, default=BALL_EPSILON, show_default=True,
              help="Ball margin for projection.")
@click.option("--radius", type=float, default=2.0, show_default=True,
              help="fermi_dirac link radius.")
@click.option("--temperature", type=float, default=0.1, show_default=True,
              help="fermi_dirac steepness.")
@click.option("--undirected", is_flag=True, help="Treat edges as undirected.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="key=value file; explicit flags take precedence.")
@click.option("--figures", "figures_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for report figures (loss_curve.png).")
@click.option("--quiet", is_flag=True, help="Suppress per-epoch loss lines.")
@click.option("--manifest", "manifest_path", type=click.Path(dir_okay=False), default=None)
@click.pass_context
@_guarded
def train_cmd(ctx, data, out, config_path, figures_dir, quiet, manifest_path, **params):
    """Fit embeddings to an edge list and write a checkpoint."""
    if config_path is not None:
        overrides = _read_config_file(config_path)
        for key, value in overrides.items():
            if ctx.get_parameter_source(key) == ParameterSource.DEFAULT:
                params[key] = value
    if params["lr"] is None:
        params["lr"] = 0.5 if params["score"] == POINCARE else 0.05
    if params["score"] == TRANSLATIONAL and params["undirected"]:
        raise ValueError(UNDIRECTED_TRANSLATIONAL_MSG)

    directed = not params["undirected"]
    edges, vocab = read_split_file(data, directed=directed)
    train_edges = edges.subset(TRAIN)
    cfg = TrainConfig(
        lr=params["lr"], epochs=params["epochs"],
        burn_in_epochs=params["burn_in_epochs"],
        burn_in_divisor=params["burn_in_divisor"],
        negatives=params["negatives"], batch=params["batch"],
        epsilon=params["epsilon"], seed=params["seed"],
        threads=params["threads"], objective=params["objective"],
        radius=params["radius"], temperature=params["temperature"],
    )

    def report_epoch(epoch, lr, loss):
        if not quiet:
            click.echo(f"{epoch}\t{loss!r}")

    matrix, report = run_training(
        train_edges, len(vocab), params["dim"], params["score"], cfg,
        on_epoch=report_epoch,
    )
    save_checkpoint(matrix, vocab, out)
    if figures_dir is not None:
        Path(figures_dir).mkdir(parents=True, exist_ok=True)
        save_loss_curve(report.epoch_losses, report.learning_rates,
                        Path(figures_dir) / "loss_curve.png")
    _write_manifest(
        manifest_path or f"{out}.manifest", "train", {"data": data},
        {"data": data, "out": out, "dim": params["dim"], "score": params["score"],
         "objective": params["objective"], "lr": cfg.lr, "epochs": cfg.epochs,
         "burn_in_epochs": cfg.burn_in_epochs, "burn_in_divisor": cfg.burn_in_divisor,
         "negatives": cfg.negatives, "batch": cfg.batch, "epsilon": cfg.epsilon,
         "seed": cfg.seed, "threads": cfg.threads, "radius": cfg.radius,
         "temperature": cfg.temperature, "undirected": params["undirected"]},
        {"wall_seconds": report.wall_seconds, "final_loss": report.final_loss,
         "examples": report.n_examples, "symbols": len(vocab)},
    )


@main.command("eval")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("relations", type=click.Path(exists=True, dir_okay=False))
@click.option("--mode", type=click.Choice(["reconstruction", "linkpred"]),
              default="reconstruction", show_default=True)
@click.option("--subset", type=click.Choice(["test", "valid"]), default="test",
              show_default=True, help="Which linkpred rows to score.")
@click.option("--truth", "truth_path", type=click.Path(exists=True, dir_okay=False),
              default=None,
              help="Negative-filter edge set [default: RELATIONS].")
@click.option("--undirected", is_flag=True, help="Treat edges as undirected.")
@click.option("--threads", type=int, default=1, show_default=True)
@click.option("--dump-ranks", "dump_path", type=click.Path(dir_okay=False), default=None,
              help="Write per-relation `u TAB v TAB rank` lines.")
@click.option("--figures", "figures_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for report figures (rank_histogram.png).")
@click.option("--manifest", "manifest_path", type=click.Path(dir_okay=False),
              default="eval.manifest", show_default=True)
@_guarded
def eval_cmd(checkpoint, relations, mode, subset, truth_path, undirected, threads,
             dump_path, figures_dir, manifest_path):
    """Rank relations against each source's negatives and report metrics."""
    matrix, vocab = load_checkpoint(checkpoint)
    directed = not undirected
    file_edges, file_vocab = read_split_file(relations, directed=directed)
    all_edges = _remap_edges(file_edges, file_vocab, vocab, relations)
    if mode == "linkpred":
        rel_edges = all_edges.subset(TEST if subset == "test" else VALID)
        truth_edges = all_edges
        if truth_path is not None:
            t_edges, t_vocab = read_split_file(truth_path, directed=directed)
            truth_edges = _remap_edges(t_edges, t_vocab, vocab, truth_path)
        if len(rel_edges) == 0:
            raise ValueError(f"no {subset} rows in {relations}")
    else:
        rel_edges = all_edges
        truth_edges = all_edges
        if truth_path is not None:
            t_edges, t_vocab = read_split_file(truth_path, directed=directed)
            truth_edges = _remap_edges(t_edges, t_vocab, vocab, truth_path)

    report = evaluate_ranking(rel_edges, truth_edges, matrix, threads=threads)
    if dump_path is not None:
        with open(dump_path, "w", encoding="utf-8", newline="\n") as fh:
            for u, v, rank in zip(report.sources, report.targets, report.ranks):
                fh.write(f"{vocab.symbol_of(int(u))}\t{vocab.symbol_of(int(v))}\t{rank}\n")
    if figures_dir is not None:
        Path(figures_dir).mkdir(parents=True, exist_ok=True)
        save_rank_histogram(report.ranks, Path(figures_dir) / "rank_histogram.png")
    inputs = {"checkpoint": checkpoint, "relations": relations}
    if truth_path is not None:
        inputs["truth"] = truth_path
    _write_manifest(
        manifest_path, "eval", inputs,
        {"mode": mode, "subset": subset, "threads": threads,
         "undirected": undirected},
        {"relations": report.n_relations, "mean_rank": report.mean_rank,
         "map": report.map_score},
    )
    click.echo(f"relations\t{report.n_relations}")
    click.echo(f"mean_rank\t{report.mean_rank!r}")
    click.echo(f"map\t{report.map_score!r}")


@main.command("entail")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("pairs", type=click.Path(exists=True, dir_okay=False))
@click.option("--alpha", type=float, default=DEFAULT_PENALTY_ALPHA, show_default=True,
              help="Norm-difference penalty weight.")
@click.option("--figures", "figures_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for report figures (entailment_scatter.png).")
@click.option("--manifest", "manifest_path", type=click.Path(dir_okay=False),
              default="entail.manifest", show_default=True)
@_guarded
def entail_cmd(checkpoint, pairs, alpha, figures_dir, manifest_path):
    """Correlate embedding entailment scores with gold ratings."""
    matrix, vocab = load_checkpoint(checkpoint)
    gold_pairs = read_entailment_pairs(pairs)
    rho, coverage = evaluate_entailment(gold_pairs, matrix, vocab, penalty_alpha=alpha)
    scored = round(coverage * len(gold_pairs))
    if figures_dir is not None:
        known = [
            p for p in gold_pairs if p.u in vocab and p.v in vocab
        ]
        scores = [
            entailment_score(vocab.id_of(p.u), vocab.id_of(p.v), matrix, alpha)
            for p in known
        ]
        Path(figures_dir).mkdir(parents=True, exist_ok=True)
        save_entailment_scatter(scores, [p.gold for p in known],
                                Path(figures_dir) / "entailment_scatter.png")
    _write_manifest(
        manifest_path, "entail", {"checkpoint": checkpoint, "pairs": pairs},
        {"alpha": alpha},
        {"pairs": len(gold_pairs), "scored": scored, "coverage": coverage,
         "spearman_rho": rho},
    )
    click.echo(f"pairs\t{len(gold_pairs)}")
    click.echo(f"scored\t{scored}")
    click.echo(f"coverage\t{coverage!r}")
    click.echo(f"spearman_rho\t{rho!r}")


@main.command("plot")
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False))
@click.argument("edges", type=click.Path(exists=True, dir_okay=False))
@click.argument("out", type=click.Path(dir_okay=False, writable=True))
@click.option("--manifest", "manifest_path", type=click.Path(dir_okay=False), default=None)
@_guarded
def plot_cmd(checkpoint, edges, out, manifest_path):
    """Render a 2-d ball checkpoint as an SVG with edge chords."""
    matrix, vocab = load_checkpoint(checkpoint)
    edge_set, edge_vocab = parse_edge_list(edges, directed=True)
    remapped = _remap_edges(edge_set, edge_vocab, vocab, edges)
    svg = render_ball_svg(matrix, vocab, remapped)
    Path(out).write_text(svg, encoding="utf-8", newline="\n")
    _write_manifest(
        manifest_path or f"{out}.manifest", "plot",
        {"checkpoint": checkpoint, "edges": edges},
        {"out": out},
        {"symbols": len(vocab), "edges": len(remapped)},
    )


if __name__ == "__main__":
    main()
