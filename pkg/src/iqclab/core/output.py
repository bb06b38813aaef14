"""
Artifact writers.

Every artifact embeds the resolved config it was produced from. Files are
written to a temporary sibling first and moved into place with os.replace,
so a reader never sees a partial file.
"""
from __future__ import annotations

import json
import logging
import os
import tempfile
from typing import Any

import pandas as pd

logger = logging.getLogger(__name__)

CSV_FLOAT_FORMAT = "%.17g"


def render_json(result: dict[str, Any], config: dict[str, Any]) -> str:
    return json.dumps({"config": config, "result": result}, sort_keys=True, indent=2) + "\n"


def render_csv(table: pd.DataFrame, config: dict[str, Any]) -> str:
    header = "# config: " + json.dumps(config, sort_keys=True) + "\n"
    return header + table.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")


def scalar_table(result: dict[str, Any]) -> pd.DataFrame:
    """One-row table of the scalar entries of a result, for results without a natural table."""
    return pd.DataFrame([{k: v for k, v in result.items() if isinstance(v, (int, float, str, bool)) or v is None}])


def atomic_write(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    handle = tempfile.NamedTemporaryFile(
        mode="w", encoding="utf-8", newline="", dir=directory, prefix=".iqclab-", suffix=".tmp", delete=False
    )
    try:
        with handle:
            handle.write(text)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(handle.name, path)
    except BaseException:
        if os.path.exists(handle.name):
            os.unlink(handle.name)
        raise
    logger.info("wrote %s", path)
