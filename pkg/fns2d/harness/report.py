from __future__ import annotations

import logging
import platform
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy

from core.csvio import write_table
from field.io import write_field
from field.spectral import FourierField
from harness.runconfig import RunConfig

log = logging.getLogger(__name__)


def manifest_line(rc: RunConfig) -> str:
    return f"fns2d manifest config={rc.config_hash} seed={rc.seed}"


class ArtifactWriter:
    """Writes every CSV of one run under ``rc.out`` with the manifest comment first."""

    def __init__(self, rc: RunConfig):
        self.rc = rc
        self.root = Path(rc.out)
        self.paths: list[Path] = []

    def table(self, name: str, columns: Sequence[str], rows: Iterable[Sequence],
              comments: Sequence[str] = ()) -> Path:
        p = write_table(self.root / name, columns, rows, [manifest_line(self.rc), *comments])
        self.paths.append(p)
        log.info("wrote %s", p)
        return p

    def field(self, name: str, f: FourierField, comments: Sequence[str] = ()) -> Path:
        p = write_field(self.root / name, f, [manifest_line(self.rc), *comments])
        self.paths.append(p)
        return p

    def manifest(self, wall_seconds: float, status: str) -> Path:
        """Config echo, versions and wall time; kept out of the CSVs so those stay reproducible."""
        lines = [
            manifest_line(self.rc),
            f"subcommand={self.rc.subcommand}",
            f"status={status}",
            f"wall_seconds={wall_seconds:.3f}",
            f"python={platform.python_version()}",
            f"numpy={np.__version__}",
            f"scipy={scipy.__version__}",
            *self.rc.echo(),
            *(f"artifact={p.name}" for p in self.paths),
        ]
        self.root.mkdir(parents=True, exist_ok=True)
        p = self.root / "manifest.txt"
        p.write_text("\n".join(lines) + "\n", encoding="utf-8", newline="\n")
        return p
