from datetime import datetime, timedelta
from pathlib import Path
from typing import Optional

from ridectl.ingest import TripRecord

EPOCH = datetime(2016, 4, 4, 8, 0, 0)
HEADER = "request_time,completion_time,origin_region,destination_region"


def trip(
    start: float, end: float, origin: int = 1, destination: Optional[int] = None, book_ahead: bool = False
) -> TripRecord:
    """Trip from minute offsets relative to EPOCH."""
    return TripRecord(
        EPOCH + timedelta(minutes=start),
        EPOCH + timedelta(minutes=end),
        origin,
        origin if destination is None else destination,
        book_ahead,
    )


def write_trip_csv(path: Path, rows: list[str]) -> Path:
    path.write_text(HEADER + "\n" + "".join(row + "\n" for row in rows), encoding="utf-8")
    return path
