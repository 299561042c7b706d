from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import AbilityParams, ItemParams, ModelKind


@dataclass
class FitReport:
    """Outcome of a fit by either estimator.

    ``loss_trace`` holds one value per epoch (SVI: negative ELBO; EM: negative
    marginal log-likelihood). ``epoch_seconds`` is cumulative wall-clock time
    at the end of each epoch. ``scales`` maps parameter names to posterior
    standard deviations of the unconstrained guide and is empty for EM.
    """

    kind: ModelKind
    estimator: str
    items: ItemParams
    abilities: AbilityParams
    loss_trace: list
    epoch_seconds: list
    seconds: float
    converged: bool
    config: object
    best_epoch: int | None = None
    scales: dict = field(default_factory=dict)
    flagged_items: list = field(default_factory=list)

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1] if self.loss_trace else float("nan")

    def log_rows(self):
        """Rows ``(epoch, loss, seconds)`` for the training log."""
        return [(k + 1, loss, sec) for k, (loss, sec) in enumerate(zip(self.loss_trace, self.epoch_seconds))]

    def same_estimates(self, other: "FitReport") -> bool:
        """Exact equality of every estimate and trace, ignoring timings."""
        pairs = [
            (self.items.difficulty, other.items.difficulty),
            (self.items.discrimination, other.items.discrimination),
            (self.items.guessing, other.items.guessing),
            (self.items.feasibility, other.items.feasibility),
            (self.abilities.ability, other.abilities.ability),
        ]
        for x, y in pairs:
            if (x is None) != (y is None):
                return False
            if x is not None and not np.array_equal(x, y):
                return False
        if self.scales.keys() != other.scales.keys():
            return False
        if any(not np.array_equal(self.scales[k], other.scales[k]) for k in self.scales):
            return False
        return self.loss_trace == other.loss_trace and self.converged == other.converged
