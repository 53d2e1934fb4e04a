import logging
import os
import re
import sys
from datetime import datetime
from typing import List, Optional

import numpy as np
import pandas as pd

# Import the Config class and create an instance
from config.settings import Config
from src.errors import MultiColumnInput

config = Config()

_NON_FINITE_WORDS = {'nan', 'inf', '+inf', '-inf', 'infinity', '+infinity', '-infinity'}


def setup_logging(level: Optional[str] = None, log_to_file: Optional[bool] = None) -> logging.Logger:
    """
    Configure logging for a session. Records go to stderr so that stdout
    carries command results only; a dated log file is added on request.
    """
    level = (level or config.LOG_LEVEL).upper()
    log_to_file = config.LOG_TO_FILE if log_to_file is None else log_to_file

    handlers = [logging.StreamHandler(sys.stderr)]
    if log_to_file:
        config.ensure_directories()
        log_filename = f"modalfit_{datetime.now().strftime('%Y%m%d')}.log"
        handlers.append(logging.FileHandler(os.path.join(config.LOG_DIR, log_filename)))

    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True,
    )

    logger = logging.getLogger('ModalFit')
    logger.debug("=== ModalFit Session Started ===")
    return logger


def _is_number(token: str) -> bool:
    if token.lower() in _NON_FINITE_WORDS:
        return True
    return not np.isnan(pd.to_numeric(token, errors='coerce'))


def parse_sample_text(text: str) -> np.ndarray:
    """
    Read one column of numbers. Blank lines and '#' comments are skipped,
    a non-numeric first entry is taken as a header, and values may also be
    separated by whitespace.
    """
    tokens: List[str] = []
    for line in text.splitlines():
        line = line.split('#', 1)[0].strip()
        if not line:
            continue
        if ',' in line:
            fields = [f.strip() for f in line.split(',')]
            if sum(bool(f) for f in fields) > 1:
                raise MultiColumnInput(f"expected a single column, got the row '{line}'")
            tokens.extend(f for f in fields if f)
        else:
            tokens.extend(re.split(r'\s+', line))

    if tokens and not _is_number(tokens[0]):
        tokens = tokens[1:]
    return pd.to_numeric(pd.Series(tokens, dtype=object), errors='coerce').to_numpy(dtype=float)


def read_sample_file(path: str) -> np.ndarray:
    with open(path, encoding='utf-8') as handle:
        return parse_sample_text(handle.read())


def parse_points(raw: str) -> np.ndarray:
    """Query points given on the command line, separated by commas or spaces."""
    tokens = [t for t in re.split(r'[,\s]+', raw.strip()) if t]
    return pd.to_numeric(pd.Series(tokens, dtype=object), errors='coerce').to_numpy(dtype=float)
