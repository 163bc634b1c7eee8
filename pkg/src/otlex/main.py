"""Main CLI entry point for otlex."""

import json
import logging
import time
from enum import StrEnum
from pathlib import Path
from typing import Any

import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import Progress, SpinnerColumn, TextColumn

from .errors import OtlexError
from .threads import apply_thread_env

app = typer.Typer(
    name="otlex",
    help="Semi-supervised bilingual lexicon induction with prior optimal transport",
    no_args_is_help=True,
)
console = Console()
err_console = Console(stderr=True)

MAP_NAME = "map.otlx"
REPORT_NAME = "report.jsonl"
MANIFEST_NAME = "manifest.json"
LEXICON_NAME = "lexicon.txt"


class StrategyChoice(StrEnum):
    CSS = "css"
    PSS = "pss"
    SUP_ONLY = "sup_only"
    UNSUP_ONLY = "unsup_only"


class SupMethodChoice(StrEnum):
    RCSLS = "rcsls"
    PROCRUSTES = "procrustes"


class EvalMethod(StrEnum):
    NN = "nn"
    CSLS = "csls"
    BOTH = "both"


def _fail(exc: BaseException) -> typer.Exit:
    err_console.print(f"{type(exc).__name__}: {exc}", markup=False, highlight=False)
    return typer.Exit(code=1)


def _overrides(**values: Any) -> dict[str, Any]:
    """Nested override dict from dotted option names, skipping unset options."""
    nested: dict[str, Any] = {}
    for dotted, value in values.items():
        if value is None:
            continue
        *parents, leaf = dotted.split("__")
        target = nested
        for parent in parents:
            target = target.setdefault(parent, {})
        target[leaf] = value.value if isinstance(value, StrEnum) else value
    return nested


@app.callback()
def main(
    verbose: bool = typer.Option(
        False,
        "--verbose",
        "-v",
        help="Enable verbose (debug) logging",
    ),
) -> None:
    """Align two embedding spaces and induce bilingual lexicons."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=err_console, show_path=False)],
        force=True,
    )
    apply_thread_env()


@app.command()
def train(
    src: Path = typer.Option(..., "--src", help="Source embedding file", exists=True, dir_okay=False),
    tgt: Path = typer.Option(..., "--tgt", help="Target embedding file", exists=True, dir_okay=False),
    lex: Path = typer.Option(..., "--lex", help="Annotated lexicon file", exists=True, dir_okay=False),
    out: Path = typer.Option(..., "--out", "-o", help="Output run directory"),
    strategy: StrategyChoice | None = typer.Option(
        None, "--strategy", help="css, pss, sup_only or unsup_only (default: css)"
    ),
    config: Path | None = typer.Option(
        None, "--config", help="JSON config (or run manifest) overriding defaults", exists=True, dir_okay=False
    ),
    epochs: int | None = typer.Option(None, "--epochs", help="Number of epochs (default: 5)"),
    seed: int | None = typer.Option(None, "--seed", help="Run seed (default: 0)"),
    sup_method: SupMethodChoice | None = typer.Option(
        None, "--sup-method", help="Supervised aligner (default: rcsls)"
    ),
    sup_iters: int | None = typer.Option(None, "--sup-iters", help="Supervised iterations per epoch (default: 2000)"),
    unsup_iters: int | None = typer.Option(None, "--unsup-iters", help="Unsupervised iterations per epoch (default: 50)"),
    ablate_pot: bool | None = typer.Option(
        None, "--ablate-pot/--no-ablate-pot", help="Remove the transport prior"
    ),
    ablate_blu: bool | None = typer.Option(
        None, "--ablate-blu/--no-ablate-blu", help="Remove the lexicon update"
    ),
    ablate_sup: bool | None = typer.Option(
        None, "--ablate-sup/--no-ablate-sup", help="Remove the supervised aligner"
    ),
    ablate_unsup: bool | None = typer.Option(
        None, "--ablate-unsup/--no-ablate-unsup", help="Remove the unsupervised aligner"
    ),
    test: Path | None = typer.Option(
        None, "--test", help="Held-out lexicon for P@1 in the report", exists=True, dir_okay=False
    ),
    gold: Path | None = typer.Option(
        None, "--gold", help="Gold lexicon for additional-lexicon precision", exists=True, dir_okay=False
    ),
    save_lexicon: bool | None = typer.Option(
        None, "--save-lexicon/--no-save-lexicon", help="Write the final extended lexicon with origins"
    ),
    repeats: int = typer.Option(1, "--repeats", min=1, help="Run seeds seed..seed+N-1 (default: 1)"),
    max_vocab: int | None = typer.Option(
        None, "--max-vocab", min=1, help="Embedding rows to load (default: 200000)"
    ),
    center: bool | None = typer.Option(
        None, "--center/--no-center", help="Mean-center embeddings before normalizing"
    ),
) -> None:
    """Train an alignment with the selected strategy.

    With ``--config`` pointing at a run manifest, the recorded config and loading
    settings are reused; options given on the command line still win.
    """
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        console=console,
    ) as progress:
        from .config import load_settings, resolve_config
        from .embed_io import load_embeddings, load_lexicon, save_lexicon as write_lexicon, save_map
        from .framework import StrategyRunner
        from .report import ReportWriter, build_manifest, repeat_summary, write_manifest
        from .retrieval import precision_at_1

        task = progress.add_task("Loading embeddings...", total=None)
        try:
            cfg = resolve_config(
                config,
                _overrides(
                    strategy=strategy,
                    epochs=epochs,
                    seed=seed,
                    sup__method=sup_method,
                    sup__iters_per_epoch=sup_iters,
                    unsup__iters_per_epoch=unsup_iters,
                    ablate_pot=ablate_pot,
                    ablate_blu=ablate_blu,
                    ablate_sup=ablate_sup,
                    ablate_unsup=ablate_unsup,
                ),
            )
            settings = load_settings(config).model_copy(
                update=_overrides(max_vocab=max_vocab, center=center, save_lexicon=save_lexicon)
            )
            started = time.perf_counter()
            src_space = load_embeddings(
                src, max_vocab=settings.max_vocab, normalize=settings.normalize, center=settings.center
            )
            tgt_space = load_embeddings(
                tgt, max_vocab=settings.max_vocab, normalize=settings.normalize, center=settings.center
            )
            annotated = load_lexicon(lex, src_space, tgt_space)
            test_lexicon = load_lexicon(test, src_space, tgt_space) if test else None
            gold_lexicon = load_lexicon(gold, src_space, tgt_space) if gold else None
            load_seconds = time.perf_counter() - started

            inputs = {"src": src, "tgt": tgt, "lex": lex}
            for name, path in (("test", test), ("gold", gold), ("config", config)):
                if path is not None:
                    inputs[name] = path
            seeds = [cfg.seed + r for r in range(repeats)]
            scores: list[float | None] = []
            writer = ReportWriter()

            for run_seed in seeds:
                run_cfg = cfg.model_copy(update={"seed": run_seed})
                run_dir = out if repeats == 1 else out / f"seed-{run_seed}"
                run_dir.mkdir(parents=True, exist_ok=True)

                def on_epoch(record, run_seed=run_seed, total=run_cfg.epochs):
                    progress.update(
                        task,
                        description=f"Seed {run_seed}: epoch {record.epoch + 1}/{total} done",
                    )

                progress.update(task, description=f"Seed {run_seed}: training...")
                started = time.perf_counter()
                runner = StrategyRunner(
                    src_space, tgt_space, annotated, run_cfg, gold=gold_lexicon, on_epoch=on_epoch
                )
                q, report = runner.run()
                train_seconds = time.perf_counter() - started

                if test_lexicon is not None:
                    progress.update(task, description=f"Seed {run_seed}: evaluating...")
                    p_at_1 = precision_at_1(
                        q,
                        src_space,
                        tgt_space,
                        test_lexicon,
                        method=run_cfg.eval_retrieval,
                        csls_k=run_cfg.csls_k,
                    )
                    report = report.model_copy(
                        update={"retrieval": run_cfg.eval_retrieval, "p_at_1": p_at_1}
                    )
                scores.append(report.p_at_1)

                save_map(q, run_dir / MAP_NAME)
                writer.save_to_file(report, run_dir / REPORT_NAME)
                if settings.save_lexicon:
                    write_lexicon(
                        runner.lexicon, src_space, tgt_space, run_dir / LEXICON_NAME, with_origin=True
                    )
                write_manifest(
                    build_manifest(
                        run_cfg,
                        inputs,
                        {"load": load_seconds, "train": train_seconds},
                        load=settings,
                    ),
                    run_dir / MANIFEST_NAME,
                )

                stats = writer.get_summary_stats(report)
                console.print(
                    f"📊 Seed {run_seed}: {stats['epochs']} epochs, chose {stats['chosen']}, "
                    f"+{stats['final_additional_size']} additional pairs"
                    + (f", P@1 {stats['p_at_1']:.4f}" if stats["p_at_1"] is not None else "")
                )

            if repeats > 1:
                summary = repeat_summary(seeds, scores)
                (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
                if summary["mean"] is not None:
                    console.print(f"📈 P@1 mean {summary['mean']:.4f} ± {summary['std']:.4f}")
        except (OtlexError, OSError, ValueError) as exc:
            raise _fail(exc) from exc

        progress.remove_task(task)

    console.print("✅ [bold green]Training finished!")
    console.print(f"📁 Output saved to: {out}")


@app.command("eval")
def evaluate(
    map_path: Path = typer.Option(..., "--map", help="Map file written by train", exists=True, dir_okay=False),
    src: Path = typer.Option(..., "--src", help="Source embedding file", exists=True, dir_okay=False),
    tgt: Path = typer.Option(..., "--tgt", help="Target embedding file", exists=True, dir_okay=False),
    lex: Path = typer.Option(..., "--lex", help="Test lexicon file", exists=True, dir_okay=False),
    method: EvalMethod = typer.Option(EvalMethod.CSLS, "--method", help="nn, csls or both (default: csls)"),
    csls_k: int = typer.Option(10, "--csls-k", help="CSLS neighbourhood size (default: 10)"),
    reverse: bool = typer.Option(False, "--reverse", help="Also evaluate target→source"),
    max_vocab: int = typer.Option(200000, "--max-vocab", help="Embedding rows to load (default: 200000)"),
) -> None:
    """Report P@1, P@5 and P@10 of a trained map."""
    from .embed_io import load_embeddings, load_lexicon, load_map
    from .models import RetrievalMethod
    from .retrieval import precision_at_ks, reverse_direction

    try:
        src_space = load_embeddings(src, max_vocab=max_vocab)
        tgt_space = load_embeddings(tgt, max_vocab=max_vocab)
        q = load_map(map_path, expected_dim=src_space.dim)
        test_lexicon = load_lexicon(lex, src_space, tgt_space)

        methods = (
            [RetrievalMethod.NN, RetrievalMethod.CSLS]
            if method is EvalMethod.BOTH
            else [RetrievalMethod(method.value)]
        )
        directions = [("forward", q, src_space, tgt_space, test_lexicon)]
        if reverse:
            q_back, reversed_lexicon = reverse_direction(q, test_lexicon)
            directions.append(("reverse", q_back, tgt_space, src_space, reversed_lexicon))

        for name, mapping, queries, targets, lexicon in directions:
            for retrieval in methods:
                scores = precision_at_ks(
                    mapping, queries, targets, lexicon, method=retrieval, ks=(1, 5, 10), csls_k=csls_k
                )
                console.print(
                    f"{retrieval.value} {name} "
                    + " ".join(f"P@{k}={v:.4f}" for k, v in scores.items()),
                    markup=False,
                    highlight=False,
                )
    except (OtlexError, OSError, ValueError) as exc:
        raise _fail(exc) from exc


@app.command()
def induce(
    map_path: Path = typer.Option(..., "--map", help="Map file written by train", exists=True, dir_okay=False),
    src: Path = typer.Option(..., "--src", help="Source embedding file", exists=True, dir_okay=False),
    tgt: Path = typer.Option(..., "--tgt", help="Target embedding file", exists=True, dir_okay=False),
    out: Path = typer.Option(..., "--out", "-o", help="Scored lexicon output file"),
    cap: int = typer.Option(10000, "--cap", min=0, help="Pairs to keep (default: 10000)"),
    k: int = typer.Option(10, "--K", help="Competitors per credit score (default: 10)"),
    pool: int = typer.Option(20000, "--pool", help="Most frequent words per side (default: 20000)"),
    exclude: Path | None = typer.Option(
        None, "--exclude", help="Lexicon whose pairs are left out", exists=True, dir_okay=False
    ),
    max_vocab: int = typer.Option(200000, "--max-vocab", help="Embedding rows to load (default: 200000)"),
) -> None:
    """Run the bi-directional lexicon update and write scored pairs."""
    from .embed_io import load_embeddings, load_lexicon, load_map
    from .lexicon_update import induce as induce_pairs
    from .models import BLUConfig
    from .report import write_scored_lexicon

    try:
        cfg = BLUConfig(K=k, cap=cap, pool=pool)
        src_space = load_embeddings(src, max_vocab=max_vocab)
        tgt_space = load_embeddings(tgt, max_vocab=max_vocab)
        q = load_map(map_path, expected_dim=src_space.dim)
        annotated = load_lexicon(exclude, src_space, tgt_space) if exclude else None
        scored = induce_pairs(src_space, tgt_space, q, cfg, annotated)
        out.parent.mkdir(parents=True, exist_ok=True)
        write_scored_lexicon(scored, src_space, tgt_space, out)
    except (OtlexError, OSError, ValueError) as exc:
        raise _fail(exc) from exc

    console.print(f"📝 Wrote {len(scored)} pairs to {out}")


@app.command()
def synth(
    out: Path = typer.Option(..., "--out", "-o", help="Output directory"),
    n: int = typer.Option(1000, "-n", help="Words per side (default: 1000)"),
    d: int = typer.Option(16, "-d", help="Embedding dimension (default: 16)"),
    noise: float = typer.Option(0.01, "--noise", help="Target noise sigma (default: 0.01)"),
    anisotropy: float = typer.Option(0.0, "--anisotropy", help="Hard-mode stretch of the target cloud"),
    seed: int = typer.Option(0, "--seed", help="Generator seed (default: 0)"),
    train_size: int = typer.Option(50, "--train-size", help="Annotated pairs (default: 50)"),
    test_size: int = typer.Option(200, "--test-size", help="Held-out pairs (default: 200)"),
) -> None:
    """Write a planted synthetic instance with train and test lexicons."""
    from .synth import generate, save_instance, train_test_split

    try:
        inst = generate(n, d, noise_sigma=noise, seed=seed, anisotropy=anisotropy)
        train_lex, test_lex = train_test_split(inst, train_size, test_size, seed=seed)
        paths = save_instance(inst, out, {"train": train_lex, "test": test_lex})
    except (OtlexError, OSError, ValueError) as exc:
        raise _fail(exc) from exc

    for name, path in paths.items():
        console.print(f"📁 {name}: {path}")


if __name__ == "__main__":
    app()
