"""
Output writers: JSON results, CSV tables and manifest sidecars
"""
import hashlib
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

import pandas as pd
from pydantic import BaseModel

from hestonopt import __version__
from hestonopt.models.schemas import RunManifest

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"
MANIFEST_SUFFIX = ".manifest.json"

PathLike = Union[str, Path]


def file_digest(path: PathLike) -> str:
    """sha256 of a file's bytes."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(model: BaseModel, path: Optional[PathLike] = None) -> Optional[Path]:
    """Write a result model as indented JSON to a file, or to stdout when path is None."""
    text = model.model_dump_json(indent=2, by_alias=True) + "\n"
    if path is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return None
    path = Path(path)
    path.write_text(text)
    logger.info(f"Wrote {path}")
    return path


def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    """Fixed column order as given by the frame; 17 significant digits."""
    path = Path(path)
    frame.to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    logger.info(f"Wrote {path} ({len(frame)} rows)")
    return path


def manifest_path(output: PathLike) -> Path:
    output = Path(output)
    return output.with_name(output.name + MANIFEST_SUFFIX)


def build_manifest(
    command: str,
    resolved_config: Dict[str, Any],
    inputs: Iterable[PathLike] = (),
    outputs: Iterable[PathLike] = (),
) -> RunManifest:
    return RunManifest(
        command=command,
        resolved_config=resolved_config,
        input_digests={str(p): file_digest(p) for p in inputs},
        tool_version=__version__,
        outputs=[str(p) for p in outputs],
    )


def write_manifest(
    output: PathLike,
    command: str,
    resolved_config: Dict[str, Any],
    inputs: Iterable[PathLike] = (),
) -> Path:
    """Write the sidecar <output>.manifest.json next to an output file."""
    manifest = build_manifest(command, resolved_config, inputs, outputs=[output])
    path = manifest_path(output)
    write_json(manifest, path)
    return path
