"""
Report output: one structured JSON report, flat CSV tables and plot-ready series.

Payload files are deterministic for identical inputs; wall-clock information goes only
to ``metadata.json``.
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import pandas as pd

from ..utils.config import config
from ..utils.security import dumps_deterministic, safe_file_write, sanitize_filename

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
METADATA_FILE = "metadata.json"


class ReportWriter:
    """Writes every artifact of one run under a single output directory"""

    def __init__(self, output_dir: Optional[Path] = None):
        self.output_dir = Path(output_dir) if output_dir else config.output_dir / "reports"
        self.written: List[Path] = []

    def _write(self, relative: str, content: str) -> Path:
        parts = [sanitize_filename(part) for part in Path(relative).parts]
        path = self.output_dir.joinpath(*parts)
        if not safe_file_write(path, content):
            raise OSError(f"Could not write {path}")
        self.written.append(path)
        logger.debug(f"Wrote {path}")
        return path

    def write_report(self, payload: Dict[str, Any]) -> Path:
        return self._write(REPORT_FILE, dumps_deterministic(payload))

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        content = frame.to_csv(index=False, lineterminator='\n', float_format='%.12g')
        return self._write(f"{name}.csv", content)

    def write_series(self, name: str, frame: pd.DataFrame) -> Path:
        """Plot-ready long-format series under ``series/``"""
        content = frame.to_csv(index=False, lineterminator='\n', float_format='%.12g')
        return self._write(f"series/{name}.csv", content)

    def write_metadata(self, extra: Optional[Dict[str, Any]] = None) -> Path:
        metadata = {
            'written_at': datetime.now().isoformat(),
            'files': sorted(str(p.relative_to(self.output_dir)) for p in self.written),
        }
        metadata.update(extra or {})
        return self._write(METADATA_FILE, dumps_deterministic(metadata))


def failure_payload(command: str, resolved_config: Dict[str, Any], error: BaseException) -> Dict[str, Any]:
    """Report body marking a run that did not complete"""
    return {
        'status': 'failed',
        'command': command,
        'config': resolved_config,
        'error': {'type': type(error).__name__, 'message': str(error)},
        'results': None,
    }
