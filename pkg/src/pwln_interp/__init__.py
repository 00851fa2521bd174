"""Interpretability of black-box classifiers by distillation, with closed-form
entropy and interpretability bounds for ReLU networks."""

__version__ = "0.1.0"
