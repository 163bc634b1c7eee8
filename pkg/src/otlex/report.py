"""Writers for run reports, manifests and scored lexicons."""

import hashlib
import json
import statistics
from pathlib import Path
from typing import Any

from . import __version__
from .models import (
    EmbeddingSpace,
    LoadSettings,
    RunManifest,
    RunReport,
    ScoredPair,
    StrategyConfig,
)


class ReportWriter:
    """Serializes a RunReport as JSON lines: one object per epoch, then a summary."""

    def generate(self, report: RunReport) -> str:
        """Generate the line-delimited report content."""
        lines = []
        for record in report.epochs:
            lines.append(
                json.dumps({"type": "epoch", **record.model_dump(mode="json")})
            )

        summary = report.model_dump(mode="json", exclude={"epochs"})
        lines.append(json.dumps({"type": "summary", **summary}))
        return "\n".join(lines) + "\n"

    def save_to_file(self, report: RunReport, output_path: Path) -> None:
        """Generate and save the report to file."""
        content = self.generate(report)

        with open(output_path, "w", encoding="utf-8") as f:
            f.write(content)

    def get_summary_stats(self, report: RunReport) -> dict:
        """Get summary statistics about the run."""
        return {
            "strategy": report.strategy.value,
            "epochs": len(report.epochs),
            "chosen": report.chosen,
            "final_additional_size": report.final_additional_size,
            "p_at_1": report.p_at_1,
            "last_sup_loss": report.epochs[-1].sup_loss if report.epochs else None,
            "last_unsup_objective": report.epochs[-1].unsup_objective
            if report.epochs
            else None,
        }


def file_digest(path: Path) -> str:
    """SHA-256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def build_manifest(
    cfg: StrategyConfig,
    inputs: dict[str, Path],
    phase_seconds: dict[str, float] | None = None,
    load: LoadSettings | None = None,
) -> RunManifest:
    return RunManifest(
        config=cfg.model_dump(mode="json"),
        load=load or LoadSettings(),
        input_digests={name: file_digest(path) for name, path in inputs.items()},
        seed=cfg.seed,
        version=__version__,
        phase_seconds=phase_seconds or {},
    )


def write_manifest(manifest: RunManifest, path: Path) -> None:
    path.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")


def write_scored_lexicon(
    scored: list[ScoredPair],
    src: EmbeddingSpace,
    tgt: EmbeddingSpace,
    path: Path,
) -> None:
    """Tab-separated ``src_token tgt_token cs_total`` lines in the given order."""
    with open(path, "w", encoding="utf-8") as f:
        for pair in scored:
            f.write(
                f"{src.words[pair.src_index]}\t{tgt.words[pair.tgt_index]}"
                f"\t{pair.cs_total!r}\n"
            )


def repeat_summary(seeds: list[int], scores: list[float | None]) -> dict[str, Any]:
    """Mean and standard deviation of P@1 over repeated seeds."""
    measured = [s for s in scores if s is not None]
    summary: dict[str, Any] = {"seeds": seeds, "p_at_1": scores, "mean": None, "std": None}
    if measured:
        summary["mean"] = statistics.fmean(measured)
        summary["std"] = statistics.pstdev(measured)
    return summary
