#!/usr/bin/env python3
"""
Runtime settings for the photocount tool.

Reads config.ini (next to this file unless another path is given) into a
frozen Settings object and sets up logging for the command-line entry points.
"""

import configparser
import logging
import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent / "config.ini"

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Settings:
    # [numerics]
    rel_tol: float = 1e-13
    max_terms: int = 10_000
    tail_tol: float = 1e-12
    max_dim: int = 20_000
    clamp_tol: float = 1e-14
    vacuum_tol: float = 1e-15
    # [counting]
    kmax_cumulative_tol: float = 1e-10
    quad_epsabs: float = 1e-10
    quad_epsrel: float = 1e-10
    moment_deficit_tol: float = 1e-8
    # [master]
    initial_step: float = 0.01
    min_step: float = 1e-5
    halving_tol: float = 1e-8
    # [montecarlo]
    edge_tol: float = 1e-6
    waiting_time_xtol: float = 1e-12
    ci_level: float = 0.95
    long_window_gamma_t: float = 50.0
    min_conditioned: int = 100
    # [checks]
    truncation_budget: float = 1e-8
    # [performance]
    use_multiprocessing: bool = False
    num_processes: int = 0
    # [output]
    float_digits: int = 12
    # [debug]
    verbose: bool = False

    @property
    def workers(self) -> int:
        if not self.use_multiprocessing:
            return 1
        return self.num_processes or (os.cpu_count() or 1)


def load_settings(path: Optional[os.PathLike] = None) -> Settings:
    """Load settings from an INI file; missing keys keep their defaults."""
    config_path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not parser.read(config_path):
        if path is not None:
            raise FileNotFoundError(f"Config file not found: {config_path}")
        logger.debug("No config file at %s, using built-in defaults", config_path)
        return Settings()

    values = {}
    for field in fields(Settings):
        for section in parser.sections():
            if not parser.has_option(section, field.name):
                continue
            if field.type in (bool, "bool"):
                values[field.name] = parser.getboolean(section, field.name)
            elif field.type in (int, "int"):
                values[field.name] = int(float(parser.get(section, field.name)))
            else:
                values[field.name] = parser.getfloat(section, field.name)
            break
    return Settings(**values)


_active: Optional[Settings] = None


def get_settings() -> Settings:
    global _active
    if _active is None:
        _active = load_settings()
    return _active


def use_config(path: Optional[os.PathLike]) -> Settings:
    """Make the settings from path (or the default file) current for every module."""
    global _active
    _active = load_settings(path)
    return _active


def configure_logging(verbose: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING
    logging.basicConfig(
        stream=sys.stderr,
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger().setLevel(level)
