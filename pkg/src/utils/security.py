"""
Security utilities for safe report writing and JSON serialization
"""

import os
import json
import logging
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)


def sanitize_filename(filename: str) -> str:
    """
    Sanitize filename to prevent path traversal attacks
    """
    filename = os.path.basename(filename)
    filename = "".join(c for c in filename if c.isalnum() or c in "._-")

    if len(filename) > 255:
        filename = filename[:255]

    return filename


def safe_file_write(filepath: Path, content: str, max_size: int = 50*1024*1024) -> bool:
    """
    Safely write content to file with validation
    """
    try:
        if len(content.encode('utf-8')) > max_size:
            raise ValueError(f"Content exceeds maximum size of {max_size} bytes")

        filepath.parent.mkdir(parents=True, exist_ok=True)

        with open(filepath, 'w', encoding='utf-8', newline='') as f:
            f.write(content)

        return True

    except (OSError, ValueError) as e:
        logger.error(f"Error writing file {filepath}: {e}")
        return False


def convert_numpy(obj: Any) -> Any:
    """Convert numpy arrays and scalars (recursively) to native Python types"""
    import numpy as np

    if isinstance(obj, np.ndarray):
        return [convert_numpy(item) for item in obj.tolist()]
    elif isinstance(obj, (np.integer, np.bool_)):
        return obj.item()
    elif isinstance(obj, (float, np.floating)):
        value = float(obj)
        return value if np.isfinite(value) else None
    elif isinstance(obj, dict):
        return {str(key): convert_numpy(value) for key, value in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [convert_numpy(item) for item in obj]
    elif isinstance(obj, Path):
        return str(obj)
    else:
        return obj


def dumps_deterministic(data: Any) -> str:
    """JSON text with sorted keys so reruns produce byte-identical payloads"""
    return json.dumps(convert_numpy(data), indent=2, sort_keys=True) + "\n"
