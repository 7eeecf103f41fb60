import hashlib
import json
import threading
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import numpy as np
import pandas as pd
from pydantic import ValidationError as PydanticValidationError

from config import Config
from database.models import RobustnessRecord
from utils.errors import DatasetValidationError
from utils.logger import logger

RECORD_COLUMNS = list(RobustnessRecord.model_fields)


def round_floats(value, digits: int = 12):
    """Recursively round floats to ``digits`` significant digits for reports"""
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not np.isfinite(value):
            return None
        return float(f"{value:.{digits}g}")
    if isinstance(value, dict):
        return {k: round_floats(v, digits) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [round_floats(v, digits) for v in value]
    if isinstance(value, np.integer):
        return int(value)
    return value


def content_hash(payload: Any) -> str:
    """sha256 of a JSON-serialisable payload with sorted keys"""
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


class RecordStore:
    """File-backed cell cache and report writer"""

    def __init__(self, out_dir, cache_dir: Optional[str] = None):
        self.out_dir = Path(out_dir)
        self.cache_dir = Path(cache_dir or Config.CACHE_DIR)
        self._lock = threading.Lock()
        self.out_dir.mkdir(parents=True, exist_ok=True)
        (self.cache_dir / "cells").mkdir(parents=True, exist_ok=True)
        (self.cache_dir / "models").mkdir(parents=True, exist_ok=True)

    # Cell cache

    @staticmethod
    def cell_key(data_hash: str, config_hash: str, seed: int) -> str:
        return hashlib.sha256(f"{data_hash}:{config_hash}:{seed}".encode('utf-8')).hexdigest()

    def _cell_path(self, key: str) -> Path:
        return self.cache_dir / "cells" / f"{key}.json"

    def load_cell(self, key: str) -> Optional[Dict[str, Any]]:
        """Cached cell payload, or None when absent or unreadable"""
        path = self._cell_path(key)
        if not path.exists():
            return None
        try:
            payload = json.loads(path.read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError) as e:
            logger.warning(f"Ignoring unreadable cache entry {path.name}: {e}")
            return None
        logger.log_store_operation("LOAD", path.name)
        return payload

    def save_cell(self, key: str, payload: Dict[str, Any]):
        path = self._cell_path(key)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps(payload, sort_keys=True), encoding='utf-8')
        tmp.replace(path)
        logger.log_store_operation("SAVE", path.name)

    def save_model_artifact(self, key: str, blob: bytes, suffix: str) -> Path:
        """Model checkpoint bytes (``.mlp``, ``.comp``) or parameter JSON (``.json``)"""
        path = self.cache_dir / "models" / f"{key}{suffix}"
        path.write_bytes(blob)
        logger.log_store_operation("SAVE", path.name)
        return path

    # Outputs

    def write_records(self, records: Iterable[RobustnessRecord], name: str = "records.csv") -> Path:
        rows = []
        for record in records:
            row = record.model_dump(mode='json')
            row["variable_group_e_r"] = json.dumps(row["variable_group_e_r"], sort_keys=True)
            rows.append(row)
        frame = pd.DataFrame(rows, columns=RECORD_COLUMNS)
        path = self.out_dir / name
        with self._lock:
            frame.to_csv(path, index=False, float_format=Config.FLOAT_FORMAT)
        logger.log_store_operation("WRITE", path.name)
        return path

    def write_report(self, report: Dict[str, Any], name: str = "report.json") -> Path:
        path = self.out_dir / name
        with self._lock:
            path.write_text(json.dumps(round_floats(report), indent=2, sort_keys=True), encoding='utf-8')
        logger.log_store_operation("WRITE", path.name)
        return path

    def write_plotdata(self, name: str, rows: List[Dict[str, Any]]) -> Path:
        directory = self.out_dir / "plotdata"
        directory.mkdir(parents=True, exist_ok=True)
        path = directory / f"{name}.tsv"
        with self._lock:
            pd.DataFrame(rows).to_csv(path, sep='\t', index=False, float_format=Config.FLOAT_FORMAT)
        logger.log_store_operation("WRITE", path.name)
        return path


def read_records(path) -> List[RobustnessRecord]:
    """Parse a records.csv written by RecordStore.write_records"""
    path = Path(path)
    if not path.exists():
        raise DatasetValidationError(f"Records file not found: {path}")
    frame = pd.read_csv(path, dtype={"train_group": str, "test_group": str, "model_id": str,
                                     "region": str, "normalizer_hash": str, "failure": str})
    missing = [c for c in RECORD_COLUMNS if c not in frame.columns]
    if missing:
        raise DatasetValidationError(f"Records file lacks columns: {', '.join(missing)}")
    records = []
    for number, row in enumerate(frame.to_dict(orient='records'), start=1):
        row = {k: (None if isinstance(v, float) and np.isnan(v) else v) for k, v in row.items()}
        row["variable_group_e_r"] = json.loads(row["variable_group_e_r"] or "{}")
        try:
            records.append(RobustnessRecord(**row))
        except PydanticValidationError as e:
            raise DatasetValidationError(f"Invalid record in row {number} of {path.name}: {e}")
    return records
