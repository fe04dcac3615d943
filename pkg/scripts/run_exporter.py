"""
Run directory management: hyperparameter echo, metrics log, artifacts.
"""

import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

METRIC_COLUMNS = ['step', 'split', 'masked_mse', 'nz_mse', 'z_mse', 'lr']


def _to_jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    return value


class RunExporter:
    """Collects everything a run writes under <output_dir>/<run-name>/."""

    def __init__(self, output_dir: str):
        """
        Initializes the exporter.

        Args:
            output_dir: Run directory (created if missing)
        """
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

        self.run_data: Dict[str, Any] = {
            'metadata': {},
            'results': {}
        }
        self.metrics: List[Dict[str, Any]] = []

    def set_metadata(self, metadata: Dict[str, Any]):
        """
        Sets run metadata (hyperparameter echo).

        Args:
            metadata: Dictionary with run information
        """
        self.run_data['metadata'] = _to_jsonable(metadata)
        self.run_data['metadata']['timestamp'] = datetime.now().isoformat()

    def add_result(self, key: str, value: Any):
        """Stores a final result that goes into run.json."""
        self.run_data['results'][key] = _to_jsonable(value)

    def add_metrics(self, step: int, split: str, masked_mse: float,
                    nz_mse: float, z_mse: float, lr: float):
        """
        Appends one row to the metrics log.

        Args:
            step: Optimizer step
            split: 'train' or 'val'
            masked_mse: Loss over all masked positions
            nz_mse: Loss over masked non-zero positions
            z_mse: Loss over masked zero positions
            lr: Learning rate used at this step
        """
        self.metrics.append({
            'step': int(step),
            'split': split,
            'masked_mse': float(masked_mse),
            'nz_mse': float(nz_mse),
            'z_mse': float(z_mse),
            'lr': float(lr),
        })

    def artifact_path(self, filename: str) -> Path:
        return self.output_dir / filename

    def save_json(self, filename: str = "run.json") -> Path:
        """
        Saves metadata and results in JSON format.

        Args:
            filename: JSON file name
        """
        json_path = self.output_dir / filename
        with open(json_path, 'w', encoding='utf-8') as f:
            json.dump(self.run_data, f, indent=2)
        logger.info("Run description saved: %s", json_path)
        return json_path

    def save_metrics_csv(self, filename: str = "metrics.csv") -> Path:
        """
        Saves the metrics log as CSV (step,split,masked_mse,nz_mse,z_mse,lr).

        Args:
            filename: CSV file name
        """
        csv_path = self.output_dir / filename
        frame = pd.DataFrame(self.metrics, columns=METRIC_COLUMNS)
        frame.to_csv(csv_path, index=False, float_format='%.10g')
        logger.info("Metrics saved: %s (%d rows)", csv_path, len(frame))
        return csv_path

    def save_table(self, frame: pd.DataFrame, filename: str) -> Path:
        path = self.output_dir / filename
        frame.to_csv(path, index=False, float_format='%.10g')
        logger.info("Table saved: %s", path)
        return path

    def create_summary(self, checkpoint: Optional[Path] = None) -> str:
        """
        Creates a summary of the run.

        Returns:
            Summary string
        """
        if not self.metrics:
            return "No metrics recorded."

        train_rows = [m for m in self.metrics if m['split'] == 'train']
        val_rows = [m for m in self.metrics if m['split'] == 'val']

        lines = ["", "Run Summary:", f"  Steps logged: {len(train_rows)}"]
        if train_rows:
            lines.append(f"  Train masked MSE: {train_rows[0]['masked_mse']:.4f} -> "
                         f"{train_rows[-1]['masked_mse']:.4f}")
        if val_rows:
            lines.append(f"  Val masked MSE:   {val_rows[0]['masked_mse']:.4f} -> "
                         f"{val_rows[-1]['masked_mse']:.4f}")
        for key, value in self.run_data['results'].items():
            if isinstance(value, (int, float)):
                lines.append(f"  {key}: {value:.4f}")
        if checkpoint is not None:
            lines.append(f"  Checkpoint: {checkpoint}")
        lines.append(f"  Output directory: {self.output_dir}")
        return "\n".join(lines) + "\n"
