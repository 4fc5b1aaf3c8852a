import json
import hashlib
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, Any, List, Tuple
from uuid import uuid4

GENESIS_HASH = "0" * 64


def _event_hash(event_data: Dict[str, Any]) -> str:
    canonical_str = json.dumps(event_data, sort_keys=True, separators=(',', ':'), default=str)
    return hashlib.sha256(canonical_str.encode('utf-8')).hexdigest()


class AuditLogger:
    """
    Append-only, hash-chained run ledger (one JSON object per line).
    One instance per path; a training run is a single writer.
    """
    _instances: Dict[str, 'AuditLogger'] = {}

    def __new__(cls, filepath: str):
        path = str(Path(filepath).absolute())
        if path not in cls._instances:
            instance = super(AuditLogger, cls).__new__(cls)
            cls._instances[path] = instance
            instance._initialized = False
        return cls._instances[path]

    def __init__(self, filepath: str):
        if getattr(self, "_initialized", False):
            return

        self.filepath = Path(filepath)
        self.filepath.parent.mkdir(parents=True, exist_ok=True)
        self.last_hash = self._read_tail_hash()
        self._initialized = True

        self.log_event("AUDIT_FILE_OPENED", {
            "path": str(self.filepath),
            "pid": os.getpid()
        })

    def _read_tail_hash(self) -> str:
        if not self.filepath.exists():
            return GENESIS_HASH
        last = GENESIS_HASH
        with open(self.filepath, 'r', encoding='utf-8') as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    last = json.loads(line).get("hash", last)
                except json.JSONDecodeError:
                    continue
        return last

    def log_event(self, event_type: str, payload: Dict[str, Any]):
        event_data = {
            "event_id": str(uuid4()),
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "event_type": event_type,
            "payload": payload,
            "prev_hash": self.last_hash
        }
        event_data["hash"] = _event_hash(event_data)

        with open(self.filepath, 'a', encoding='utf-8') as f:
            f.write(json.dumps(event_data, default=str) + "\n")
            f.flush()
            os.fsync(f.fileno())

        self.last_hash = event_data["hash"]


def verify_hash_chain(file_path: Path) -> Tuple[bool, List[str]]:
    file_path = Path(file_path)
    if not file_path.exists():
        return False, ["File not found"]

    errors = []
    prev_hash = GENESIS_HASH
    with open(file_path, 'r', encoding='utf-8') as f:
        for i, line in enumerate(f):
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                errors.append(f"Line {i}: JSON Error: {e}")
                continue
            if data.get("prev_hash") != prev_hash:
                errors.append(f"Line {i}: Hash chain break. Expected {prev_hash}, got {data.get('prev_hash')}")
            recorded = data.pop("hash", None)
            # Values were serialized with default=str; re-hash the parsed form
            if _event_hash(data) != recorded:
                errors.append(f"Line {i}: Data tamper detected. Hash mismatch.")
            prev_hash = recorded
    return not errors, errors
