"""labloop: semi-automated experiment orchestration.

Pipeline: corpus -> ideation -> triage -> planning -> budget-metered
generate-execute-reflect building -> reporting -> cross-run meta-analysis,
with human touchpoints exposed over a CLI and HTTP API.
"""

from .config import EngineConfig, load_config
from .engine import Engine

__version__ = "0.1.0"

__all__ = ["Engine", "EngineConfig", "load_config", "__version__"]
