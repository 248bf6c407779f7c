"""Probabilistic rank forecasting for multi-car races."""

import json

from ._ranknet import Model, RankNetError, mae, quantile, rho_risk, run_cli, simulate_csv

__all__ = [
    "Model",
    "RankNetError",
    "forecast",
    "load_model",
    "mae",
    "quantile",
    "rho_risk",
    "run_cli",
    "simulate",
]


def simulate(path, seed=1, **overrides):
    """Writes a synthetic race log to `path` and returns the number of rows."""
    text = simulate_csv(seed, {k: str(v).lower() if isinstance(v, bool) else str(v)
                               for k, v in overrides.items()})
    with open(path, "w") as f:
        f.write(text)
    return text.count("\n") - 1


def load_model(path):
    return Model.load(str(path))


def forecast(model, csv_path, race_id, origin, end, mode="mlp", num_samples=100, seed=1):
    """Rows of {race_id, car_id, lap, samples, q10, q50, q90, rank}."""
    return json.loads(model.forecast_json(str(csv_path), race_id, origin, end, mode,
                                          num_samples, seed))
