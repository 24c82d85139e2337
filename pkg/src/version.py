#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Centralized version management for the adaptive scenario-MPC toolkit
"""

__version__ = "0.3.0"
__version_info__ = (0, 3, 0)
__release_date__ = "2026-10-19"

def get_version():
    """Return the current version string"""
    return __version__

def get_version_info():
    """Return version as tuple (major, minor, patch)"""
    return __version_info__

def get_full_version():
    """Return full version string with date"""
    return f"v{__version__} ({__release_date__})"

# Version history
VERSION_HISTORY = """
0.3.0 (2026-10-19): Meta-learned update law, scenario generation with bound fallback, closed-loop harness and comparison, plot CSV export.
0.2.0 (2026-09-28): Bayes-by-Backprop mismatch model with ANN weight transfer, Monte-Carlo statistics.
0.1.0 (2026-09-14): Tape-based autodiff, plant simulator, dataset collection, LPV nominal fit and BFR.
"""
