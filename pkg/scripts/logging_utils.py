"""
Logging setup driven by the `logging:` section of the run config.
"""

import logging
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def setup_logging(config: Optional[Dict] = None) -> logging.Logger:
    """
    Configures the root logger.

    Args:
        config: `logging` section. Keys:
               - level (str): DEBUG, INFO, WARNING, ERROR
               - save_logs (bool): also write to a file under log_dir
               - log_dir (str): directory for log files

    Returns:
        The configured root logger
    """
    if config is None:
        config = {}

    level = getattr(logging, str(config.get('level', 'INFO')).upper(), logging.INFO)
    root = logging.getLogger()
    root.setLevel(level)

    # Re-running a mode in the same process must not stack handlers
    for handler in list(root.handlers):
        root.removeHandler(handler)

    console = logging.StreamHandler()
    console.setFormatter(logging.Formatter(LOG_FORMAT))
    root.addHandler(console)

    if config.get('save_logs', False):
        log_dir = Path(config.get('log_dir', 'logs'))
        log_dir.mkdir(parents=True, exist_ok=True)
        log_path = log_dir / f"sparsecell_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"
        file_handler = logging.FileHandler(log_path, encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(file_handler)

    return root
