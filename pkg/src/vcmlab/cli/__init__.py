"""Command-line entry points, experiment configs and manifests."""
from .config import DatasetDescriptor, ExperimentConfig, default_config_text
from .main import build_parser, exit_code_for, main
from .manifest import OUTPUT_ROOT_ENV, ExperimentManifest, new_run_dir, output_root

__all__ = [
    "DatasetDescriptor", "ExperimentConfig", "default_config_text", "build_parser", "exit_code_for", "main",
    "OUTPUT_ROOT_ENV", "ExperimentManifest", "new_run_dir", "output_root",
]
