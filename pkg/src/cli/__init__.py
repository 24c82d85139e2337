# -*- coding: utf-8 -*-
"""
Command-line interface
"""

from .commands import COMMANDS, EXIT_ACCEPTANCE, EXIT_ERROR, EXIT_OK, SUBCOMMANDS, build_parser, evaluate, main

__all__ = [
    'COMMANDS',
    'EXIT_ACCEPTANCE',
    'EXIT_ERROR',
    'EXIT_OK',
    'SUBCOMMANDS',
    'build_parser',
    'evaluate',
    'main',
]
