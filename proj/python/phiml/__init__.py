"""Constraint enforcement, fairness calibration and experiment runs."""

import json

from ._core import (
    DataError,
    UsageError,
    apply_implication_transfer,
    apply_mutual_exclusion,
    counterfactual_violation_rate,
    exclusion_violation_rate,
    generate,
    implication_violation_rate,
    repair_counterfactuals,
    run_report,
    scenarios,
    valid_combinations,
)


def run(scenario, model="forest", mode="baseline", seed=42, **params):
    """Run one scenario and return its report as a dict."""
    text = run_report(scenario, model, mode, seed, {k: _param(v) for k, v in params.items()})
    return json.loads(text)


def _param(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


__all__ = [
    "DataError",
    "UsageError",
    "apply_implication_transfer",
    "apply_mutual_exclusion",
    "counterfactual_violation_rate",
    "exclusion_violation_rate",
    "generate",
    "implication_violation_rate",
    "repair_counterfactuals",
    "run",
    "scenarios",
    "valid_combinations",
]
