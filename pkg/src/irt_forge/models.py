"""Item characteristic curves and Bernoulli log-likelihoods for binary IRT models.

All four model kinds share the logit ``x = a * (theta - b)``; the 3PL adds a
lower asymptote ``c`` and the feasibility model an upper asymptote ``lambda``::

    1PL  p = sigmoid(theta - b)
    2PL  p = sigmoid(a * (theta - b))
    3PL  p = c + (1 - c) * sigmoid(a * (theta - b))
    4PL  p = lambda * sigmoid(a * (theta - b))

Public ``icc_*`` functions validate their arguments. The underscored kernels
further down skip validation and are what the estimators call in their inner
loops.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import expit

from .errors import ContractError, DomainError

# bounds applied to 3PL/4PL probabilities before taking logs
PROB_EPS = 1e-12


class ModelKind(str, Enum):
    ONE_PARAM = "1pl"
    TWO_PARAM = "2pl"
    THREE_PARAM = "3pl"
    FOUR_PARAM = "4pl"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(k.value for k in cls)
            raise DomainError(f"unknown model kind {value!r}; expected one of {names}") from None

    @property
    def has_discrimination(self) -> bool:
        return self is not ModelKind.ONE_PARAM

    @property
    def has_guessing(self) -> bool:
        return self is ModelKind.THREE_PARAM

    @property
    def has_feasibility(self) -> bool:
        return self is ModelKind.FOUR_PARAM

    @property
    def uses_logit_form(self) -> bool:
        return self in (ModelKind.ONE_PARAM, ModelKind.TWO_PARAM)


def _frozen(values, name) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be finite")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ItemParams:
    """Point estimates of per-item parameters.

    ``discrimination`` is ``None`` for the 1PL (treated as all ones),
    ``guessing`` is only set for the 3PL and ``feasibility`` only for the 4PL.
    """

    difficulty: np.ndarray
    discrimination: np.ndarray | None = None
    guessing: np.ndarray | None = None
    feasibility: np.ndarray | None = None

    def __post_init__(self):
        b = _frozen(self.difficulty, "difficulty")
        object.__setattr__(self, "difficulty", b)
        n = b.shape[0]
        for name in ("discrimination", "guessing", "feasibility"):
            value = getattr(self, name)
            if value is None:
                continue
            arr = _frozen(value, name)
            if arr.shape[0] != n:
                raise ContractError(f"{name} has length {arr.shape[0]}, expected {n}")
            object.__setattr__(self, name, arr)
        if self.discrimination is not None and np.any(self.discrimination <= 0):
            raise DomainError("discrimination must be positive")
        if self.guessing is not None and np.any((self.guessing < 0) | (self.guessing > 1)):
            raise DomainError("guessing must lie in [0, 1]")
        if self.feasibility is not None and np.any((self.feasibility <= 0) | (self.feasibility > 1)):
            raise DomainError("feasibility must lie in (0, 1]")

    @property
    def n_items(self) -> int:
        return self.difficulty.shape[0]

    @property
    def slopes(self) -> np.ndarray:
        if self.discrimination is None:
            return np.ones(self.n_items)
        return self.discrimination

    def check_kind(self, kind: ModelKind) -> None:
        kind = ModelKind.parse(kind)
        missing = []
        if kind.has_discrimination and self.discrimination is None:
            missing.append("discrimination")
        if kind.has_guessing and self.guessing is None:
            missing.append("guessing")
        if kind.has_feasibility and self.feasibility is None:
            missing.append("feasibility")
        if missing:
            raise ContractError(f"{kind.value} items need {', '.join(missing)}")

    @classmethod
    def initial(cls, kind: ModelKind, n_items: int) -> "ItemParams":
        kind = ModelKind.parse(kind)
        return cls(
            difficulty=np.zeros(n_items),
            discrimination=np.ones(n_items) if kind.has_discrimination else None,
            guessing=np.full(n_items, 0.1) if kind.has_guessing else None,
            feasibility=np.full(n_items, 0.95) if kind.has_feasibility else None,
        )


@dataclass(frozen=True)
class AbilityParams:
    ability: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ability", _frozen(self.ability, "ability"))

    @property
    def n_subjects(self) -> int:
        return self.ability.shape[0]


def _check_finite(**values):
    for name, value in values.items():
        if not np.all(np.isfinite(value)):
            raise DomainError(f"{name} must be finite")


def _unwrap(x):
    return x.item() if isinstance(x, np.ndarray) and x.ndim == 0 else x


def icc_1pl(theta, b):
    """Rasch curve ``1 / (1 + exp(-(theta - b)))``."""
    theta, b = np.asarray(theta, float), np.asarray(b, float)
    _check_finite(theta=theta, b=b)
    return _unwrap(expit(theta - b))


def icc_2pl(theta, a, b):
    theta, a, b = (np.asarray(v, float) for v in (theta, a, b))
    _check_finite(theta=theta, a=a, b=b)
    if np.any(a <= 0):
        raise DomainError("discrimination a must be positive")
    return _unwrap(expit(a * (theta - b)))


def icc_3pl(theta, a, b, c):
    theta, a, b, c = (np.asarray(v, float) for v in (theta, a, b, c))
    _check_finite(theta=theta, a=a, b=b, c=c)
    if np.any(a <= 0):
        raise DomainError("discrimination a must be positive")
    if np.any((c < 0) | (c > 1)):
        raise DomainError("guessing c must lie in [0, 1]")
    return _unwrap(c + (1.0 - c) * expit(a * (theta - b)))


def icc_4pl_feasibility(theta, a, b, lam):
    """Curve with upper asymptote ``lam``: ``lam / (1 + exp(-a (theta - b)))``."""
    theta, a, b, lam = (np.asarray(v, float) for v in (theta, a, b, lam))
    _check_finite(theta=theta, a=a, b=b, lam=lam)
    if np.any(a <= 0):
        raise DomainError("discrimination a must be positive")
    if np.any((lam <= 0) | (lam > 1)):
        raise DomainError("feasibility lambda must lie in (0, 1]")
    return _unwrap(lam * expit(a * (theta - b)))


def icc(kind, theta, b, a=1.0, c=0.0, lam=1.0):
    """Dispatch to the curve for ``kind``; unused parameters are ignored."""
    kind = ModelKind.parse(kind)
    if kind is ModelKind.ONE_PARAM:
        return icc_1pl(theta, b)
    if kind is ModelKind.TWO_PARAM:
        return icc_2pl(theta, a, b)
    if kind is ModelKind.THREE_PARAM:
        return icc_3pl(theta, a, b, c)
    return icc_4pl_feasibility(theta, a, b, lam)


def log_sigmoid(x):
    """``log(sigmoid(x))`` without overflow for any finite ``x``."""
    x = np.asarray(x, float)
    return np.minimum(x, 0.0) - np.log1p(np.exp(-np.abs(x)))


def _probability(kind, x, c=None, lam=None):
    s = expit(x)
    if kind is ModelKind.THREE_PARAM:
        return c + (1.0 - c) * s
    if kind is ModelKind.FOUR_PARAM:
        return lam * s
    return s


def _log_prob(kind, y, x, c=None, lam=None):
    """Elementwise ``log p(y | logit x)``; no validation."""
    if kind.uses_logit_form:
        return np.where(y == 1, log_sigmoid(x), log_sigmoid(-x))
    p = np.clip(_probability(kind, x, c, lam), PROB_EPS, 1.0 - PROB_EPS)
    return np.where(y == 1, np.log(p), np.log1p(-p))


def _log_prob_and_grads(kind, y, x, c=None, lam=None):
    """Return ``(log p, d/dx, d/d(asymptote))``.

    The third entry is the derivative with respect to ``c`` (3PL) or
    ``lambda`` (4PL) and ``None`` for the logit-form kinds. Derivatives are
    those of the clamped function, so they vanish where the clamp is active.
    """
    s = expit(x)
    if kind.uses_logit_form:
        value = np.where(y == 1, log_sigmoid(x), log_sigmoid(-x))
        return value, y - s, None
    ds = s * (1.0 - s)
    if kind is ModelKind.THREE_PARAM:
        p_raw = c + (1.0 - c) * s
        dp_dx, dp_dasym = (1.0 - c) * ds, 1.0 - s
    else:
        p_raw = lam * s
        dp_dx, dp_dasym = lam * ds, s
    inside = (p_raw > PROB_EPS) & (p_raw < 1.0 - PROB_EPS)
    p = np.clip(p_raw, PROB_EPS, 1.0 - PROB_EPS)
    value = np.where(y == 1, np.log(p), np.log1p(-p))
    dl_dp = np.where(y == 1, 1.0 / p, -1.0 / (1.0 - p)) * inside
    return value, dl_dp * dp_dx, dl_dp * dp_dasym


def bernoulli_log_prob(y, kind, theta, b, a=1.0, c=0.0, lam=1.0):
    """Log-probability of the binary response ``y`` under model ``kind``.

    1PL/2PL are evaluated in logit space, the asymptote models from the
    probability clamped to ``[1e-12, 1 - 1e-12]``.
    """
    kind = ModelKind.parse(kind)
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise DomainError("responses must be 0 or 1")
    # validates the curve's domain
    icc(kind, theta, b, a=a, c=c, lam=lam)
    theta, b, a, c, lam = (np.asarray(v, float) for v in (theta, b, a, c, lam))
    x = theta - b if kind is ModelKind.ONE_PARAM else a * (theta - b)
    return _unwrap(_log_prob(kind, y, x, c, lam))


def observation_log_probs(dataset, items: ItemParams, abilities: AbilityParams, kind) -> np.ndarray:
    """Per-observation log-likelihood terms in observation order."""
    kind = ModelKind.parse(kind)
    items.check_kind(kind)
    if items.n_items != dataset.n_items:
        raise ContractError(f"{items.n_items} item parameters for {dataset.n_items} items")
    if abilities.n_subjects != dataset.n_subjects:
        raise ContractError(
            f"{abilities.n_subjects} abilities for {dataset.n_subjects} subjects"
        )
    j, i, y = dataset.subject_index, dataset.item_index, dataset.response
    x = (items.slopes[i] if kind.has_discrimination else 1.0) * (abilities.ability[j] - items.difficulty[i])
    c = items.guessing[i] if kind.has_guessing else None
    lam = items.feasibility[i] if kind.has_feasibility else None
    return _log_prob(kind, y, x, c, lam)


def dataset_log_likelihood(dataset, items: ItemParams, abilities: AbilityParams, kind) -> float:
    """Sum of log-probabilities over the observed cells of ``dataset``."""
    return float(np.sum(observation_log_probs(dataset, items, abilities, kind)))
