"""Output files of a CLI run: CSV tables, PGM images and the run manifest"""

import csv
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence

import numpy as np

logger = logging.getLogger(__name__)

PGM_MAXVAL = 65535
MANIFEST_NAME = "manifest.json"


def format_cell(value: Any) -> str:
    """17 significant digits for floats so every value round-trips exactly"""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


def write_csv(path: Path, fieldnames: Sequence[str], rows: Iterable[Mapping[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({key: format_cell(row.get(key)) for key in fieldnames})
    logger.info("wrote %s", path)
    return path


def write_pgm(path: Path, counts: np.ndarray) -> Path:
    """ASCII graymap (P2), one image row per line, counts clipped to 65535"""
    path = Path(path)
    counts = np.asarray(counts, dtype=np.int64)
    if counts.ndim != 2:
        raise ValueError(f"image must be two-dimensional, got shape {counts.shape}")
    clipped = int(np.count_nonzero(counts > PGM_MAXVAL))
    if clipped:
        logger.warning("%d pixels of %s exceed %d and were clipped", clipped, path, PGM_MAXVAL)
    values = np.clip(counts, 0, PGM_MAXVAL)
    height, width = values.shape
    lines = ["P2", f"{width} {height}", str(PGM_MAXVAL)]
    lines.extend(" ".join(str(int(v)) for v in row) for row in values)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("wrote %s", path)
    return path


def read_pgm(path: Path) -> np.ndarray:
    tokens = Path(path).read_text(encoding="utf-8").split()
    if not tokens or tokens[0] != "P2":
        raise ValueError(f"{path} is not an ASCII graymap")
    width, height = int(tokens[1]), int(tokens[2])
    return np.array([int(v) for v in tokens[4:]], dtype=np.int64).reshape(height, width)


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(
    out_dir: Path,
    command: str,
    config: Dict[str, Any],
    artifacts: List[Path],
    extra: Optional[Dict[str, Any]] = None,
) -> Path:
    """Resolved config and artifact checksums; no timestamps, so re-runs are byte-identical"""
    out_dir = Path(out_dir)
    manifest: Dict[str, Any] = {
        "command": command,
        "config": config,
        "artifacts": {
            p.relative_to(out_dir).as_posix(): sha256_file(p) for p in sorted(artifacts)
        },
    }
    if extra:
        manifest.update(extra)
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    logger.info("wrote %s", path)
    return path
