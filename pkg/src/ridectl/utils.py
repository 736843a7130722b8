"""유틸리티 함수: 출력 파일, 실행 매니페스트, 테이블."""

import hashlib
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Iterable, NoReturn, Optional

import pandas as pd
import typer
from pydantic import BaseModel, Field
from rich.console import Console
from rich.logging import RichHandler
from rich.markup import escape
from rich.table import Table

from ridectl import __version__
from ridectl.errors import InvalidInputError, RidectlError

console = Console()


# ═══════════════════════════════════════════════════════════════════════════════
# General Utilities / 일반 유틸리티
# ═══════════════════════════════════════════════════════════════════════════════


def fail(error: RidectlError) -> NoReturn:
    """Print the error and leave with its exit code."""
    console.print(f"[red]✗[/red] {escape(error.message)}")
    raise typer.Exit(error.exit_code)


def setup_logging(level: str) -> None:
    """Route library logging through rich."""
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def file_digest(path: Path) -> str:
    """sha256 of a file."""
    digest = hashlib.sha256()
    with Path(path).open("rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def parse_float_list(text: str) -> list[float]:
    """``"0,0.3,0.6"`` → ``[0.0, 0.3, 0.6]``."""
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise InvalidInputError(f"expected comma-separated numbers, got {text!r}") from e


def parse_adjacency(text: Optional[str]) -> list[tuple[int, int]]:
    """``"1-2,2-3"`` → symmetric pairs; ``None`` or empty means no adjacency."""
    pairs: set[tuple[int, int]] = set()
    for part in (text or "").split(","):
        part = part.strip()
        if not part:
            continue
        try:
            i, j = (int(x) for x in part.split("-"))
        except ValueError as e:
            raise InvalidInputError(f"adjacency pairs look like 1-2, got {part!r}") from e
        pairs |= {(i, j), (j, i)}
    return sorted(pairs)


def parse_horizon(text: str) -> tuple[datetime, datetime]:
    """``"2016-04-04T08:00:00..2016-04-04T11:00:00"`` → (start, end)."""
    try:
        start, end = text.split("..")
        return datetime.fromisoformat(start.strip()), datetime.fromisoformat(end.strip())
    except ValueError as e:
        raise InvalidInputError(f"horizon must look like START..END in ISO-8601, got {text!r}") from e


# ═══════════════════════════════════════════════════════════════════════════════
# Output files / 출력 파일
# ═══════════════════════════════════════════════════════════════════════════════


def write_csv(frame: pd.DataFrame, path: Path, float_format: str = "%.6f") -> Path:
    """CSV with fixed float formatting so reruns diff cleanly."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=float_format, lineterminator="\n")
    return path


def write_json(data: Any, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


class RunManifest(BaseModel):
    """What a command read, how it was configured and what it wrote."""

    command: str
    version: str = __version__
    seed: Optional[int] = None
    config: dict[str, Any] = Field(default_factory=dict)
    inputs: dict[str, str] = Field(default_factory=dict, description="Input path -> sha256")
    outputs: list[str] = Field(default_factory=list)

    @classmethod
    def for_inputs(cls, command: str, inputs: Iterable[Path], **kwargs) -> "RunManifest":
        return cls(command=command, inputs={str(p): file_digest(p) for p in inputs}, **kwargs)

    def add_output(self, path: Path) -> Path:
        self.outputs.append(str(path))
        return path

    def write(self, path: Path) -> Path:
        self.outputs.append(str(path))
        self.outputs.sort()
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(self.model_dump_json(indent=2) + "\n", encoding="utf-8")
        return Path(path)


def manifest_path(output: Path) -> Path:
    """``out/targets.csv`` → ``out/targets.manifest.json``; a directory gets ``manifest.json``."""
    output = Path(output)
    if output.suffix:
        return output.with_name(f"{output.stem}.manifest.json")
    return output / "manifest.json"


# ═══════════════════════════════════════════════════════════════════════════════
# Tables / 테이블
# ═══════════════════════════════════════════════════════════════════════════════


def create_frame_table(frame: pd.DataFrame, title: str, limit: int = 20, precision: int = 3) -> Table:
    """DataFrame를 Rich 테이블로 변환."""
    table = Table(title=title, show_header=True, header_style="bold cyan")
    for column in frame.columns:
        table.add_column(str(column), justify="right")
    for row in frame.head(limit).itertuples(index=False):
        table.add_row(*(f"{v:.{precision}f}" if isinstance(v, float) else str(v) for v in row))
    if len(frame) > limit:
        table.caption = f"{len(frame) - limit} more rows in the CSV"
    return table


def create_summary_table(summary: dict[str, Any], title: str = "Summary") -> Table:
    table = Table(title=title, show_header=False, box=None)
    table.add_column("Key", style="dim")
    table.add_column("Value")
    for key, value in summary.items():
        table.add_row(key, f"{value:.4f}" if isinstance(value, float) else str(value))
    return table
