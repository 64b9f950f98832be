"""Environments and the experiment runner."""

from .experiment import MetricCurve, curves_to_csv, run_experiment

__all__ = ["MetricCurve", "curves_to_csv", "run_experiment"]
