"""
Fairness Inference Package

Estimating-equation inference for data-fairness metrics (demographic parity, equal
opportunity and their probabilistic forms) and for conditional mutual information,
with simulation studies and Shapley-style covariate attribution.
"""

__version__ = "1.0.0"
__author__ = "Rosalina Torres"
__email__ = "your.email@example.com"
