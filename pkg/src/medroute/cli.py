"""Command line entry points: serve, route, calibrate, eval, train-scorer."""

from __future__ import annotations

import json
import sys

import click
import httpx

from .config import load_config
from .core import default_label_registry, load_qa_jsonl
from .errors import MedrouteError
from .metrics import EmbeddingProvider, evaluate_corpus
from .router import (
    CalibrationSpec,
    LinearScorerModel,
    RouterReport,
    ScorerSpec,
    calibrate_threshold,
    resolve_scorer,
    score_labels,
    train_builtin_scorer,
)


@click.group()
def main():
    """Specialist-routing gateway and its evaluation tooling."""


def _scorer_from_arg(value: str):
    if value.startswith("http://") or value.startswith("https://"):
        return resolve_scorer(ScorerSpec(kind="remote", remote_endpoint=value))
    return LinearScorerModel.load(value)


def _print_router_report(report: RouterReport) -> None:
    click.echo(f"{'strategy':<14}{'precision':>11}{'recall':>9}{'#specialists':>14}")
    click.echo(
        f"{report.strategy.describe():<14}"
        f"{report.precision:>11.4f}{report.recall:>9.4f}{report.avg_specialists:>14.3f}"
    )


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def serve(config_path):
    """Run the gateway HTTP service."""
    import uvicorn

    from .gateway import create_app

    config = load_config(config_path)
    uvicorn.run(create_app(config), host=config.host, port=config.port)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--text", required=True)
def route(config_path, text):
    """Score a question and show the selection under the configured strategy."""
    from .router import apply_strategy

    config = load_config(config_path)
    scorer = resolve_scorer(config.scorer)
    scores = score_labels(scorer, text)
    decision = apply_strategy(scores, config.strategy)
    selected = set(decision.selected_ids())
    click.echo(f"{'label':<26}{'score':>8}  selected")
    for ls in scores:
        mark = "*" if ls.label.id in selected else ""
        click.echo(f"{ls.label.id:<26}{ls.score:>8.4f}  {mark}")
    if decision.fallback_used:
        click.echo("fallback to top-1: no label cleared the threshold")


@main.command()
@click.option("--scorer", "scorer_arg", required=True, help="Model artifact path or scorer URL.")
@click.option("--validation", required=True, type=click.Path(exists=True))
@click.option("--beta", required=True, type=float)
@click.option("--grid-step", default=0.01, type=float, show_default=True)
def calibrate(scorer_arg, validation, beta, grid_step):
    """Pick the F_beta-maximizing routing threshold on a validation set."""
    if not 0.0 < grid_step < 1.0:
        raise click.BadParameter("--grid-step must lie in (0, 1)")
    scorer = _scorer_from_arg(scorer_arg)
    examples = load_qa_jsonl(validation)
    steps = int(1.0 / grid_step)
    grid = tuple(
        t for t in (round(grid_step * k, 10) for k in range(1, steps + 1)) if 0.0 < t < 1.0
    )
    spec = CalibrationSpec(beta=beta, grid=grid)
    try:
        tau, report = calibrate_threshold(scorer, examples, spec)
    except MedrouteError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    click.echo(f"tau = {tau}")
    _print_router_report(report)


_TABLE_COLUMNS = (
    ("Rouge-1", "rouge1"),
    ("Rouge-2", "rouge2"),
    ("Rouge-L", "rougeL"),
    ("Rouge-Lsum", "rougeLsum"),
    ("BLEU", "bleu"),
    ("METEOR", "meteor"),
    ("BERT-P", "bert_p"),
    ("BERT-R", "bert_r"),
    ("BERT-F1", "bert_f1"),
)

_METRIC_NOTES = [
    "metric variants are implementation-pinned (exact-match METEOR, add-one "
    "smoothed corpus BLEU, greedy no-IDF embedding score); absolute values "
    "are not comparable across implementations",
]


@main.command(name="eval")
@click.option("--testset", required=True, type=click.Path(exists=True))
@click.option(
    "--outputs",
    required=True,
    help="JSONL of system outputs ({\"output\": ...} per line), or 'from-gateway'.",
)
@click.option("--embed", default="test", show_default=True, help="Embedding endpoint URL or 'test'.")
@click.option("--report", "report_path", required=True, type=click.Path())
@click.option("--gateway-url", default=None, help="Gateway base URL for --outputs from-gateway.")
@click.option("--workers", default=1, type=int, show_default=True)
def eval_command(testset, outputs, embed, report_path, gateway_url, workers):
    """Score system outputs against reference answers."""
    examples = load_qa_jsonl(testset)
    if outputs == "from-gateway":
        if not gateway_url:
            raise click.BadParameter("--outputs from-gateway requires --gateway-url")
        system_outputs = []
        for ex in examples:
            resp = httpx.post(
                f"{gateway_url.rstrip('/')}/v1/chat", json={"message": ex.question}, timeout=300.0
            )
            resp.raise_for_status()
            system_outputs.append(resp.json()["final"]["text"])
    else:
        system_outputs = []
        with open(outputs, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    system_outputs.append(json.loads(line)["output"])

    if embed == "test":
        provider = EmbeddingProvider(kind="deterministic_test")
    else:
        provider = EmbeddingProvider(kind="remote", endpoint=embed)

    report = evaluate_corpus(examples, system_outputs, provider=provider, workers=workers)
    payload = report.to_dict()
    payload["notes"] = _METRIC_NOTES
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, ensure_ascii=False, indent=2)

    def cell(value) -> str:
        return "absent" if value is None else f"{value:.4f}"

    row = report.to_dict()
    header = "".join(f"{name:>11}" for name, _ in _TABLE_COLUMNS)
    values = "".join(f"{cell(row[key]):>11}" for _, key in _TABLE_COLUMNS)
    click.echo(f"n_examples = {report.n_examples}")
    for note in _METRIC_NOTES:
        click.echo(f"note: {note}")
    click.echo(header)
    click.echo(values)
    click.echo(f"report written to {report_path}")


@main.command(name="train-scorer")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--buckets", default=1 << 16, type=int, show_default=True)
@click.option("--epochs", default=5, type=int, show_default=True)
@click.option("--seed", default=0, type=int, show_default=True)
def train_scorer(corpus, out_path, buckets, epochs, seed):
    """Train the built-in routing scorer and write its JSON artifact."""
    examples = load_qa_jsonl(corpus)
    model = train_builtin_scorer(examples, buckets=buckets, epochs=epochs, seed=seed)
    model.save(out_path)
    labels = len(default_label_registry())
    click.echo(f"trained {labels}-label scorer on {len(examples)} examples -> {out_path}")


if __name__ == "__main__":
    main()
