"""
config.py
─────────
Run-time settings for probit_design.

Values come from the environment (a local .env file is loaded first) and
fall back to the defaults below. See .env.example for the full list.
"""

import logging
import os
import sys
from typing import Optional
from datetime import datetime

from dotenv import load_dotenv

load_dotenv()  # Load .env variables before anything reads os.environ

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def _env_int(name: str, default: int) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == '':
        return default
    try:
        return int(raw.replace('_', ''))
    except ValueError:
        logger.warning(f"{name}={raw!r} is not an integer; using default {default}.")
        return default


# ── 1.  ENVIRONMENT SETTINGS ────────────────────────────────────────────
LOG_LEVEL  = os.getenv('PROBIT_DESIGN_LOG_LEVEL', 'INFO').upper()
LOG_DIR    = os.getenv('PROBIT_DESIGN_LOG_DIR')            # unset -> no log file
KMAX_GUARD = _env_int('PROBIT_DESIGN_KMAX_GUARD', 12)      # largest K a sweep accepts
MC_SAMPLES = _env_int('PROBIT_DESIGN_MC_SAMPLES', 1_000_000)
MC_SHARD   = _env_int('PROBIT_DESIGN_MC_SHARD', 100_000)   # fixed shard size, not shard count
WORKERS    = _env_int('PROBIT_DESIGN_WORKERS', 1)
SEED       = _env_int('PROBIT_DESIGN_SEED', 42)

# ── 2.  NUMERICAL TOLERANCES ────────────────────────────────────────────
ZSTAR_BOUNDS   = (1e-6, 10.0)
ZSTAR_XATOL    = 1e-10
ORBIT_GRID     = (-2.0, 0.0, 2.0)   # 3 x 3 multi-start grid for (z1, z2)
ORBIT_XATOL    = 1e-6
ORBIT_TIE_RTOL = 1e-6
PSI_TOL        = 1e-6


def configure_logging(command: str = 'run', level: Optional[str] = None) -> Optional[str]:
    """
    Sets up root logging for a CLI run: stderr always, plus a timestamped
    UTF-8 log file when PROBIT_DESIGN_LOG_DIR is set.
    Returns the log file path, or None when only stderr is used.
    """
    handlers = [logging.StreamHandler(sys.stderr)]
    log_file_full_path = None
    if LOG_DIR:
        os.makedirs(LOG_DIR, exist_ok=True)
        log_file_name = f"probit_design_{command}_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"
        log_file_full_path = os.path.join(LOG_DIR, log_file_name)
        handlers.append(logging.FileHandler(log_file_full_path, encoding='utf-8'))

    logging.basicConfig(
        level=getattr(logging, (level or LOG_LEVEL).upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=handlers,
        force=True,
    )
    return log_file_full_path
