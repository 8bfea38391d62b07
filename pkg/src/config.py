"""
Runtime configuration: default tolerances and logging setup.
"""

import logging
import os
from typing import Optional

from linalg_core import Tolerance

VERSION = "1.0.0"

ENV_TOLERANCE_REL = "GBDT_TOLERANCE_REL"
ENV_TOLERANCE_ABS = "GBDT_TOLERANCE_ABS"

LOG_FORMAT = "%(asctime)s %(levelname)-7s %(name)s: %(message)s"


def _env_float(name: str) -> Optional[float]:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return None
    try:
        return float(raw)
    except ValueError:
        logging.getLogger(__name__).warning("Ignoring %s=%r: not a number", name, raw)
        return None


def default_tolerance() -> Tolerance:
    """
    Build the default tolerance, honouring the environment overrides.

    Returns:
        Tolerance with rel/abs taken from GBDT_TOLERANCE_REL / GBDT_TOLERANCE_ABS
        when set, the library defaults otherwise
    """
    base = Tolerance()
    rel = _env_float(ENV_TOLERANCE_REL)
    abs_ = _env_float(ENV_TOLERANCE_ABS)
    return Tolerance(
        rel=base.rel if rel is None else rel,
        abs=base.abs if abs_ is None else abs_,
        cond_warn=base.cond_warn,
    )


def setup_logging(verbosity: int = 0) -> None:
    """Configure the root logger for command-line use (0 warning, 1 info, 2+ debug)."""
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
