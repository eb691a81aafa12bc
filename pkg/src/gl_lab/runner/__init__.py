from .config import CONFIG_TYPES, parse_config
from .manifest import RunResult
from .runs import run

__all__ = ["CONFIG_TYPES", "parse_config", "RunResult", "run"]
