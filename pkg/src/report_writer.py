"""
Output files of a run: JSON reports, CSV cost fields and DOT graphs.

All writes for one output directory go through a single file lock, and every
file is written to a temporary name first and then moved into place.
"""
import csv
import io
import json
import os
from typing import Any, Dict, List, Sequence, Union

from filelock import FileLock, Timeout
from loguru import logger
from pydantic import BaseModel

from src.config import LOCK_TIMEOUT

CSV_HEADER = ["cell_index", "midpoint", "value"]


def to_json_text(payload: Union[BaseModel, Dict[str, Any], List[Any]]) -> str:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json", by_alias=True)
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def to_csv_text(rows: Sequence[Sequence[str]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    writer.writerows(rows)
    return buffer.getvalue()


class ReportWriter:
    def __init__(self, output_dir: str):
        self.output_dir = output_dir
        self.lock = FileLock(os.path.join(output_dir, ".scr-output.lock"), timeout=LOCK_TIMEOUT)

    def _write(self, filename: str, text: str) -> str:
        os.makedirs(self.output_dir, exist_ok=True)
        path = os.path.join(self.output_dir, filename)
        tmp = f"{path}.tmp"
        try:
            with self.lock:
                with open(tmp, "w", encoding="utf-8", newline="") as f:
                    f.write(text)
                os.replace(tmp, path)
        except Timeout:
            logger.error(f"Timeout acquiring lock for {self.output_dir}")
            raise RuntimeError("Output directory busy (lock timeout)")
        logger.info(f"Wrote {path} ({len(text)} bytes)")
        return path

    def write_json(self, filename: str, payload: Union[BaseModel, Dict[str, Any], List[Any]]) -> str:
        return self._write(filename, to_json_text(payload))

    def write_csv(self, filename: str, rows: Sequence[Sequence[str]]) -> str:
        return self._write(filename, to_csv_text(rows))

    def write_text(self, filename: str, text: str) -> str:
        return self._write(filename, text)
