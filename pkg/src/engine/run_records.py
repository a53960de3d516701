import json
import logging
import os
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from src.engine.bound_result import BoundResult

logger = logging.getLogger(__name__)

TOOL_VERSION = "0.3.0"


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    return value


@dataclass
class RunRecord:
    input_hash: str
    command: str
    parameters: dict
    result: BoundResult
    tool_version: str = TOOL_VERSION
    timestamp: str = field(default_factory=lambda: datetime.now().isoformat())

    def to_dict(self):
        return {
            "input_hash": self.input_hash,
            "command": self.command,
            "parameters": _jsonable(self.parameters),
            "result": _jsonable(self.result.to_dict()),
            "tool_version": self.tool_version,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            input_hash=data["input_hash"],
            command=data["command"],
            parameters=data.get("parameters", {}),
            result=BoundResult.from_dict(data["result"]),
            tool_version=data.get("tool_version", TOOL_VERSION),
            timestamp=data.get("timestamp", ""),
        )

    def dump(self, path):
        """Write this single record as JSON (the --out file of a bound command)."""
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, allow_nan=True)


class RunRecordStore:
    """Append-only JSON list of RunRecords."""

    def __init__(self, storage_path=None):
        from src.config import Config
        self.storage_path = storage_path or Config.RECORDS_PATH

    def _load_raw(self, quarantine=False):
        if not os.path.exists(self.storage_path) or os.path.getsize(self.storage_path) == 0:
            return []
        try:
            with open(self.storage_path, "r") as f:
                data = json.load(f)
            if not isinstance(data, list):
                raise ValueError(f"expected a JSON list, got {type(data).__name__}")
        except (OSError, ValueError) as e:
            if not quarantine:
                logger.warning("could not read run records from %s: %s", self.storage_path, e)
                return []
            # Never overwrite records we could not parse.
            moved = f"{self.storage_path}.corrupt-{datetime.now().strftime('%Y%m%dT%H%M%S%f')}"
            os.replace(self.storage_path, moved)
            logger.error("run records in %s are unreadable (%s); moved to %s", self.storage_path, e, moved)
            return []
        return data

    def append(self, record):
        records = self._load_raw(quarantine=True)
        records.append(record.to_dict())
        directory = os.path.dirname(self.storage_path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        staging = f"{self.storage_path}.tmp"
        try:
            with open(staging, "w") as f:
                json.dump(records, f, indent=2, allow_nan=True)
            os.replace(staging, self.storage_path)
        except OSError as e:
            logger.error("could not save run record to %s: %s", self.storage_path, e)
            return False
        logger.debug("run record %s appended to %s", record.command, self.storage_path)
        return True

    def load_all(self):
        return [RunRecord.from_dict(entry) for entry in self._load_raw()]

    def find(self, input_hash):
        return [r for r in self.load_all() if r.input_hash == input_hash]

    def get_stats(self):
        records = self.load_all()
        by_command = {}
        for r in records:
            by_command[r.command] = by_command.get(r.command, 0) + 1
        return {
            "record_count": len(records),
            "by_command": by_command,
            "failed_count": sum(1 for r in records if not r.result.succeeded),
        }
