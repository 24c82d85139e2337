#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Adaptive scenario-based MPC with meta-learned Bayesian mismatch models - Main Entry Point

Usage: python app.py <subcommand> [--config FILE] [--out DIR] [--full-scale] [--threads N]
"""

import datetime
import logging
import sys
from pathlib import Path

# Add src directory to path for imports
sys.path.insert(0, str(Path(__file__).parent / "src"))

from src.cli import main as run_cli


def setup_logging(out_dir: Path, verbose: bool = False) -> str:
    """Setup logging to file in date-based subdirectories of the output directory"""
    now = datetime.datetime.now()

    # Create logs directory with year-month subdirectory
    log_dir = Path(out_dir) / "logs" / now.strftime('%Y-%m')
    log_dir.mkdir(parents=True, exist_ok=True)

    log_filename = log_dir / f"asmpc_{now.strftime('%Y%m%d_%H%M%S')}.log"
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_filename, encoding='utf-8'),
            logging.StreamHandler()
        ],
        force=True,
    )
    return str(log_filename)


def main():
    """Main entry point"""
    sys.exit(run_cli(sys.argv[1:], log_setup=setup_logging))


if __name__ == "__main__":
    main()
