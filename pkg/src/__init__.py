# -*- coding: utf-8 -*-
"""
Adaptive scenario-based MPC with meta-learned Bayesian mismatch models - Main Package
"""
