"""Configuration, experiment dispatch and the ``spdelab`` command."""
from .config import ExperimentConfig, load, parse, serialize, validate
from .main import main, run

__all__ = ["ExperimentConfig", "load", "main", "parse", "run", "serialize", "validate"]
