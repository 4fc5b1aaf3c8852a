import logging
import json
import logging.config
from pathlib import Path
from datetime import datetime, timezone
from typing import Any, Dict, Optional
from src.core.config import config


class JsonFormatter(logging.Formatter):
    """One JSON object per record; `context` (run hashes) is stamped on every line."""

    def __init__(self, context: Optional[Dict[str, Any]] = None):
        super().__init__()
        self.context = dict(context or {})

    def format(self, record):
        log_obj = {
            "timestamp": datetime.now(timezone.utc).isoformat(),
            "level": record.levelname,
            "module": record.module,
            "message": record.getMessage(),
            **self.context,
        }
        if hasattr(record, "props"):
            log_obj.update(record.props)
        return json.dumps(log_obj, default=str)


def setup_logging(log_dir: Optional[Path] = None, level: Optional[str] = None,
                  context: Optional[Dict[str, Any]] = None):
    """
    Console (stderr) + `run.log` for humans, `events.jsonl` for per-epoch and
    per-evaluation records. stdout is left to the CLI's config echo and tables.
    """
    log_dir = Path(log_dir) if log_dir is not None else config.output_dir()
    log_dir.mkdir(parents=True, exist_ok=True)

    log_level = (level or config.system.get("log_level", "INFO")).upper()

    logging_config = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "standard": {
                "format": "%(asctime)s [%(levelname)s] %(name)s: %(message)s"
            },
            "json": {
                "()": JsonFormatter,
                "context": context or {},
            }
        },
        "handlers": {
            "console": {
                "class": "logging.StreamHandler",
                "stream": "ext://sys.stderr",
                "level": log_level,
                "formatter": "standard",
            },
            "file": {
                "class": "logging.FileHandler",
                "filename": log_dir / "run.log",
                "level": log_level,
                "formatter": "standard",
            },
            "events_file": {
                "class": "logging.FileHandler",
                "filename": log_dir / "events.jsonl",
                "level": "INFO",
                "formatter": "json",
            }
        },
        "root": {
            "handlers": ["console", "file"],
            "level": log_level,
        },
        "loggers": {
            "events": {
                "handlers": ["events_file"],
                "level": "INFO",
                "propagate": True
            },
            "reportlab": {"level": "WARNING"},
            "torch": {"level": "WARNING"},
        }
    }

    logging.config.dictConfig(logging_config)
    logging.info(f"Logging initialized in {log_dir} at {log_level}.")


def log_event(message: str, **props):
    """Structured line on the `events` logger (JSON file + console)."""
    logging.getLogger("events").info(message, extra={"props": props})
