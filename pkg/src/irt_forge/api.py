"""High-level entry points shared by library users and the command line."""

from __future__ import annotations

import logging
from dataclasses import replace
from pathlib import Path

from . import io, registry
from .errors import ContractError
from .mml_em import MMLConfig, fit_mml
from .vi_engine import TrainConfig, fit_svi

log = logging.getLogger(__name__)

ESTIMATORS = ("svi", "mml")


def fit(dataset, model="1pl", estimator="svi", config=None):
    """Fit ``dataset`` with a registered model.

    ``config`` is a :class:`TrainConfig` for ``"svi"`` (its ``kind`` is
    overridden by the registration, and unset priors take the registration's
    defaults) or an :class:`MMLConfig` for ``"mml"``. Returns the
    :class:`FitReport`.
    """
    reg = registry.lookup(model)
    if estimator == "svi":
        config = config or TrainConfig()
        config = replace(config, kind=reg.kind, priors=config.priors or reg.priors)
        _, report = fit_svi(dataset, config)
    elif estimator == "mml":
        _, report = fit_mml(dataset, reg.kind, config or MMLConfig())
    else:
        raise ContractError(f"unknown estimator {estimator!r}; expected one of {', '.join(ESTIMATORS)}")
    if report.flagged_items:
        log.warning("items with identical responses (difficulty clamped): %s", ", ".join(report.flagged_items))
    return report


def train(dataset, model, out_dir, estimator="svi", config=None):
    """Fit and write ``best_parameters.json`` and ``training_log.csv`` to ``out_dir``."""
    report = fit(dataset, model, estimator, config)
    out_dir = Path(out_dir)
    doc = io.document_from_fit(dataset, report, registry.lookup(model).name)
    io.write_parameters(doc, out_dir)
    io.write_training_log(report, out_dir / io.TRAINING_LOG_FILE)
    return report, doc
