"""Writing synthetic photo-streams to disk"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from egoact.core.features import write_features
from egoact.core.manifest import write_manifest
from egoact.core.synth import StreamSpec, generate, generate_color

logger = logging.getLogger(__name__)


@dataclass
class GeneratedFiles:
    manifest: Path
    embedding: Path
    score: Path
    color: Optional[Path] = None
    spec: Optional[Path] = None


def generate_dataset(spec: StreamSpec, out_dir: Union[str, Path], with_color: bool = False) -> GeneratedFiles:
    """manifest.tsv, embedding.tsv, score.tsv (and color.tsv) plus the StreamSpec that produced them"""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest, embedding, score = generate(spec)

    files = GeneratedFiles(
        manifest=out_dir / "manifest.tsv",
        embedding=out_dir / "embedding.tsv",
        score=out_dir / "score.tsv",
        spec=out_dir / "stream-spec.json",
    )
    write_manifest(manifest, files.manifest)
    write_features(embedding, files.embedding)
    write_features(score, files.score)
    if with_color:
        files.color = out_dir / "color.tsv"
        write_features(generate_color(spec, manifest), files.color)
    files.spec.write_text(spec.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"Synthetic dataset written to {out_dir}")
    return files
