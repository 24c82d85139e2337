# -*- coding: utf-8 -*-
"""
Output directory layout: artifact names, file names and producing subcommands
"""

import logging
import re
from pathlib import Path
from typing import Dict, NamedTuple, Tuple

from .errors import ConfigError, MissingArtifactError

logger = logging.getLogger(__name__)

# Control characters never belong in an output path
DANGEROUS_PATTERNS = [
    r'[\x00-\x1f\x7f]',
]
MAX_PATH_LENGTH = 4096


class Artifact(NamedTuple):
    file_name: str
    producer: str


ARTIFACTS: Dict[str, Artifact] = {
    "dataset": Artifact("dataset.csv", "collect"),
    "split": Artifact("split.json", "collect"),
    "heldout": Artifact("heldout.csv", "collect"),
    "nominal": Artifact("nominal.json", "fit-nominal"),
    "mismatch": Artifact("mismatch.csv", "fit-nominal"),
    "heldout_mismatch": Artifact("heldout_mismatch.csv", "fit-nominal"),
    "ann": Artifact("ann.json", "train-bnn"),
    "bnn": Artifact("bnn.json", "train-bnn"),
    "bnn_losses": Artifact("bnn_losses.csv", "train-bnn"),
    "meta": Artifact("meta.json", "meta-train"),
    "meta_losses": Artifact("meta_losses.csv", "meta-train"),
    "run_maml": Artifact("run_maml.csv", "run"),
    "run_global": Artifact("run_global.csv", "run"),
    "summary_maml": Artifact("summary_maml.json", "run"),
    "summary_global": Artifact("summary_global.json", "run"),
    "online_maml": Artifact("online_maml.csv", "run"),
    "online_global": Artifact("online_global.csv", "run"),
    "comparison": Artifact("comparison.json", "compare"),
}


def validate_output_dir(path_str: str) -> Tuple[bool, str]:
    """
    Check that a string can serve as output directory

    Returns:
        Tuple of (is_valid, message)
    """
    if not path_str:
        return False, "Empty output directory"
    if len(path_str) > MAX_PATH_LENGTH:
        return False, f"Output path too long (max {MAX_PATH_LENGTH} characters)"
    for pattern in DANGEROUS_PATTERNS:
        if re.search(pattern, path_str):
            return False, "Output path contains control characters"
    path = Path(path_str)
    if path.exists() and not path.is_dir():
        return False, f"Output path exists and is not a directory: {path}"
    return True, "Output directory validated"


class ArtifactStore:
    """Resolves artifact paths under one output directory"""

    def __init__(self, out_dir):
        is_valid, message = validate_output_dir(str(out_dir))
        if not is_valid:
            raise ConfigError(message)
        self.root = Path(out_dir).resolve()
        self.root.mkdir(parents=True, exist_ok=True)
        logger.debug(f"Artifact store at {self.root}")

    def path(self, name: str) -> Path:
        try:
            return self.root / ARTIFACTS[name].file_name
        except KeyError:
            raise ConfigError(f"Unknown artifact '{name}'") from None

    def exists(self, name: str) -> bool:
        return self.path(name).is_file()

    def require(self, name: str) -> Path:
        """Path of an existing artifact; names the producing subcommand otherwise"""
        path = self.path(name)
        if not path.is_file():
            raise MissingArtifactError(ARTIFACTS[name].file_name, ARTIFACTS[name].producer)
        return path

    @property
    def plots_dir(self) -> Path:
        return self.root / "plots"
