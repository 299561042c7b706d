"""Marginal maximum likelihood by Bock-Aitkin EM.

Ability is integrated out against a Normal(0, 1) prior on a Gauss-Hermite
grid. The E-step produces, for every item and grid node, the expected number
of subjects at that node who answered the item and who answered it
correctly; the M-step maximises each item's expected complete-data
log-likelihood under those counts. Abilities are afterwards set to their MAP
values given the fitted items.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import expit, logsumexp

from .errors import ContractError, ConvergenceError, TrainingError
from .models import PROB_EPS, AbilityParams, ItemParams, ModelKind, _log_prob, log_sigmoid
from .report import FitReport

log = logging.getLogger(__name__)

# box constraints of the M-step, per parameter column
DIFFICULTY_BOUND = 6.0
BOUNDS = {
    "b": (-DIFFICULTY_BOUND, DIFFICULTY_BOUND),
    "a": (0.05, 10.0),
    "c": (0.0, 0.5),
    "lam": (0.01, 1.0),
}
MAX_NEWTON_STEPS = 50
_OBS_BLOCK = 1 << 16


@dataclass(frozen=True)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)


def make_quadrature(n_points: int) -> QuadratureRule:
    """Gauss-Hermite rule for expectations under Normal(0, 1)."""
    if n_points < 3:
        raise ContractError("quadrature needs at least 3 points")
    x, w = hermgauss(n_points)
    nodes = x * np.sqrt(2.0)
    weights = w / np.sqrt(np.pi)
    weights = weights / weights.sum()
    return QuadratureRule(nodes, weights)


@dataclass(frozen=True)
class ExpectedCounts:
    """Expected exposures ``n_total[i, k]`` and correct answers ``n_correct[i, k]``."""

    nodes: np.ndarray
    n_correct: np.ndarray
    n_total: np.ndarray


@dataclass(frozen=True)
class EStepResult:
    posterior: np.ndarray
    counts: ExpectedCounts
    subject_log_marginal: np.ndarray

    @property
    def log_likelihood(self) -> float:
        return float(np.sum(self.subject_log_marginal))


def _columns(kind):
    kind = ModelKind.parse(kind)
    cols = ["b"]
    if kind.has_discrimination:
        cols.append("a")
    if kind.has_guessing:
        cols.append("c")
    if kind.has_feasibility:
        cols.append("lam")
    return cols


def _pack(items: ItemParams, kind) -> np.ndarray:
    fields = {"b": items.difficulty, "a": items.discrimination, "c": items.guessing, "lam": items.feasibility}
    return np.column_stack([fields[c] for c in _columns(kind)]).astype(float)


def _unpack(P, kind) -> ItemParams:
    cols = _columns(kind)
    get = {c: P[:, k].copy() for k, c in enumerate(cols)}
    return ItemParams(get["b"], get.get("a"), get.get("c"), get.get("lam"))


def _node_logits(P, kind, nodes):
    """Logits ``a_i (x_k - b_i)`` as an (items, nodes) array plus the deviations."""
    d = nodes[None, :] - P[:, [0]]
    a = P[:, [1]] if kind.has_discrimination else 1.0
    return a * d, d


def _asymptote(P, kind, col):
    return P[:, [_columns(kind).index(col)]]


def e_step(dataset, items: ItemParams, kind, rule: QuadratureRule) -> EStepResult:
    kind = ModelKind.parse(kind)
    items.check_kind(kind)
    if items.n_items != dataset.n_items:
        raise ContractError(f"{items.n_items} item parameters for {dataset.n_items} items")
    n_subj, n_items, n_nodes = dataset.n_subjects, dataset.n_items, rule.nodes.size
    P = _pack(items, kind)
    j_all, i_all, y_all = dataset.subject_index, dataset.item_index, dataset.response
    offsets = np.arange(n_nodes)

    loglik = np.zeros(n_subj * n_nodes)
    for start in range(0, dataset.n_observations, _OBS_BLOCK):
        sl = slice(start, start + _OBS_BLOCK)
        j, i, y = j_all[sl], i_all[sl], y_all[sl]
        x = (P[i, 1][:, None] if kind.has_discrimination else 1.0) * (rule.nodes[None, :] - P[i, 0][:, None])
        c = P[i, 2][:, None] if kind.has_guessing else None
        lam = P[i, 2][:, None] if kind.has_feasibility else None
        lp = _log_prob(kind, y[:, None], x, c, lam)
        loglik += np.bincount((j[:, None] * n_nodes + offsets).ravel(), weights=lp.ravel(), minlength=n_subj * n_nodes)
    log_post = loglik.reshape(n_subj, n_nodes) + rule.log_weights
    lse = logsumexp(log_post, axis=1)
    if not np.all(np.isfinite(lse)):
        bad = int(np.flatnonzero(~np.isfinite(lse))[0])
        raise TrainingError(f"marginal likelihood of subject {dataset.subject_ids[bad]!r} underflowed")
    post = np.exp(log_post - lse[:, None])

    n_total = np.zeros(n_items * n_nodes)
    n_correct = np.zeros(n_items * n_nodes)
    for start in range(0, dataset.n_observations, _OBS_BLOCK):
        sl = slice(start, start + _OBS_BLOCK)
        j, i, y = j_all[sl], i_all[sl], y_all[sl]
        idx = (i[:, None] * n_nodes + offsets).ravel()
        r = post[j]
        n_total += np.bincount(idx, weights=r.ravel(), minlength=n_items * n_nodes)
        n_correct += np.bincount(idx, weights=(r * y[:, None]).ravel(), minlength=n_items * n_nodes)
    counts = ExpectedCounts(
        rule.nodes.copy(), n_correct.reshape(n_items, n_nodes), n_total.reshape(n_items, n_nodes)
    )
    return EStepResult(post, counts, lse)


def _objective(P, kind, counts: ExpectedCounts):
    """Expected complete-data log-likelihood of each item."""
    x, _ = _node_logits(P, kind, counts.nodes)
    n1 = counts.n_correct
    n0 = counts.n_total - n1
    if kind.uses_logit_form:
        return np.sum(n1 * log_sigmoid(x) + n0 * log_sigmoid(-x), axis=1)
    s = expit(x)
    if kind.has_guessing:
        c = _asymptote(P, kind, "c")
        p = c + (1.0 - c) * s
    else:
        p = _asymptote(P, kind, "lam") * s
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    return np.sum(n1 * np.log(p) + n0 * np.log1p(-p), axis=1)


def _gradient_and_information(P, kind, counts: ExpectedCounts):
    """Gradient, exact negative Hessian and Fisher information per item."""
    x, d = _node_logits(P, kind, counts.nodes)
    n1, n = counts.n_correct, counts.n_total
    s = expit(x)
    ds = s * (1.0 - s)
    n_items, dim = P.shape
    if kind.uses_logit_form:
        g = n1 - n * s
        h = n * ds
        if kind is ModelKind.ONE_PARAM:
            grad = -np.sum(g, axis=1)[:, None]
            info = np.sum(h, axis=1)[:, None, None]
            return grad, info, info
        a = P[:, [1]]
        grad = np.column_stack([-a[:, 0] * np.sum(g, axis=1), np.sum(g * d, axis=1)])
        fisher = np.empty((n_items, 2, 2))
        fisher[:, 0, 0] = a[:, 0] ** 2 * np.sum(h, axis=1)
        fisher[:, 1, 1] = np.sum(h * d * d, axis=1)
        fisher[:, 0, 1] = fisher[:, 1, 0] = -a[:, 0] * np.sum(h * d, axis=1)
        exact = fisher.copy()
        exact[:, 0, 1] += np.sum(g, axis=1)
        exact[:, 1, 0] = exact[:, 0, 1]
        return grad, exact, fisher

    a = P[:, [1]]
    d2s = ds * (1.0 - 2.0 * s)
    if kind.has_guessing:
        c = _asymptote(P, kind, "c")
        p = c + (1.0 - c) * s
        k, ka = 1.0 - c, -1.0
        jac = [-(1.0 - c) * a * ds, (1.0 - c) * ds * d, 1.0 - s]
    else:
        lam = _asymptote(P, kind, "lam")
        p = lam * s
        k, ka = lam, 1.0
        jac = [-lam * a * ds, lam * ds * d, s]
    # second derivatives of p; the asymptote enters linearly
    hess_p = {
        (0, 0): k * a * a * d2s,
        (0, 1): -k * (ds + a * d * d2s),
        (1, 1): k * d * d * d2s,
        (0, 2): -ka * a * ds,
        (1, 2): ka * ds * d,
        (2, 2): np.zeros_like(s),
    }
    inside = (p > PROB_EPS) & (p < 1.0 - PROB_EPS)
    p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
    w = 1.0 / (p * (1.0 - p))
    resid = (n1 - n * p) * w * inside
    grad = np.column_stack([np.sum(resid * jk, axis=1) for jk in jac])
    n0 = n - n1
    curv = (n1 / (p * p) + n0 / ((1.0 - p) ** 2)) * inside
    fisher = np.empty((n_items, dim, dim))
    exact = np.empty((n_items, dim, dim))
    for r in range(dim):
        for q in range(r, dim):
            fisher[:, r, q] = fisher[:, q, r] = np.sum(n * w * jac[r] * jac[q] * inside, axis=1)
            exact[:, r, q] = exact[:, q, r] = np.sum(curv * jac[r] * jac[q] - resid * hess_p[r, q], axis=1)
    return grad, exact, fisher


def m_step(counts: ExpectedCounts, items: ItemParams, kind, item_ids=None) -> ItemParams:
    """Maximise every item's expected complete-data log-likelihood.

    Projected Newton inside the parameter box with step halving, falling
    back to Fisher scoring where the Hessian of the free coordinates is not
    negative definite; the objective of every item never decreases.
    """
    kind = ModelKind.parse(kind)
    items.check_kind(kind)
    cols = _columns(kind)
    lo = np.array([BOUNDS[c][0] for c in cols])
    hi = np.array([BOUNDS[c][1] for c in cols])
    P = np.clip(_pack(items, kind), lo, hi)
    n_items, dim = P.shape
    value = _objective(P, kind, counts)
    active = np.ones(n_items, dtype=bool)

    for _ in range(MAX_NEWTON_STEPS):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        sub = ExpectedCounts(counts.nodes, counts.n_correct[idx], counts.n_total[idx])
        Pa = P[idx]
        grad, exact, fisher = _gradient_and_information(Pa, kind, sub)
        # freeze coordinates sitting on a bound whose gradient points outward
        frozen = ((Pa <= lo) & (grad < 0)) | ((Pa >= hi) & (grad > 0))
        grad = np.where(frozen, 0.0, grad)
        eye = np.eye(dim)
        pinned = frozen[:, :, None] | frozen[:, None, :]
        exact = np.where(pinned, 0.0, exact) + frozen[:, :, None] * eye
        fisher = np.where(pinned, 0.0, fisher) + frozen[:, :, None] * eye
        # Newton where the free block is concave, Fisher scoring elsewhere
        use_exact = np.linalg.eigvalsh(exact)[:, 0] > 0
        info = np.where(use_exact[:, None, None], exact, fisher)
        ridge = 1e-10 * (1.0 + np.abs(np.trace(info, axis1=1, axis2=2)))
        direction = np.linalg.solve(info + ridge[:, None, None] * eye, grad[:, :, None])[:, :, 0]

        old = value[idx]
        step = np.ones(idx.size)
        new_P = Pa.copy()
        new_val = old.copy()
        pending = np.ones(idx.size, dtype=bool)
        for _ in range(60):
            cand = np.clip(Pa + step[:, None] * direction, lo, hi)
            cval = _objective(cand, kind, sub)
            ok = pending & (cval >= old)
            new_P[ok], new_val[ok] = cand[ok], cval[ok]
            pending &= ~ok
            if not pending.any():
                break
            step = np.where(pending, 0.5 * step, step)
        moved = np.max(np.abs(new_P - Pa), axis=1)
        P[idx], value[idx] = new_P, new_val
        done = (moved < 1e-9) | (new_val - old <= 1e-12 * (1.0 + np.abs(old))) | pending
        active[idx[done]] = False
    if active.any():
        bad = int(np.flatnonzero(active)[0])
        name = item_ids[bad] if item_ids is not None else bad
        raise ConvergenceError(f"M-step did not converge for item {name!r}", item=name)
    return _unpack(P, kind)


def expected_complete_loglik(counts: ExpectedCounts, items: ItemParams, kind) -> np.ndarray:
    """Per-item M-step objective, exposed for checking the ascent property."""
    kind = ModelKind.parse(kind)
    return _objective(_pack(items, kind), kind, counts)


@dataclass(frozen=True)
class MMLConfig:
    n_quad: int = 41
    max_iters: int = 200
    tol: float = 1e-6

    def __post_init__(self):
        if self.n_quad < 3:
            raise ContractError("n_quad must be at least 3")
        if self.max_iters < 1:
            raise ContractError("max_iters must be positive")
        if not self.tol > 0:
            raise ContractError("tol must be positive")


def _initial_items(dataset, kind):
    counts = dataset.item_counts()
    correct = np.bincount(dataset.item_index, weights=dataset.response, minlength=dataset.n_items)
    p = np.clip(correct / counts, 0.02, 0.98)
    init = ItemParams.initial(kind, dataset.n_items)
    b = np.clip(-np.log(p / (1.0 - p)), -DIFFICULTY_BOUND, DIFFICULTY_BOUND)
    return ItemParams(b, init.discrimination, init.guessing, init.feasibility)


def degenerate_items(dataset) -> list:
    """Ids of items whose observed responses are all identical."""
    counts = dataset.item_counts()
    correct = np.bincount(dataset.item_index, weights=dataset.response, minlength=dataset.n_items)
    return [dataset.item_ids[i] for i in np.flatnonzero((correct == 0) | (correct == counts))]


def fit_mml(dataset, kind, config: MMLConfig | None = None):
    """Alternate E- and M-steps until the relative change in marginal log-likelihood is below ``tol``.

    Items whose responses are all identical have no finite maximum; their
    difficulty ends on the +-6 bound and their ids are listed in
    ``report.flagged_items``.
    """
    kind = ModelKind.parse(kind)
    config = config or MMLConfig()
    counts = dataset.item_counts()
    if dataset.n_items == 0 or np.any(counts == 0):
        empty = [dataset.item_ids[i] for i in np.flatnonzero(counts == 0)]
        raise ContractError(f"items without observations: {empty}" if empty else "dataset has no items")
    rule = make_quadrature(config.n_quad)
    items = _initial_items(dataset, kind)

    trace, seconds = [], []
    converged = False
    start = time.perf_counter()
    prev = None
    for iteration in range(1, config.max_iters + 1):
        es = e_step(dataset, items, kind, rule)
        ll = es.log_likelihood
        trace.append(-ll)
        seconds.append(time.perf_counter() - start)
        log.debug("EM iteration %d marginal log-likelihood %.8f", len(trace), ll)
        if prev is not None and abs(ll - prev) <= config.tol * abs(prev):
            converged = True
            break
        if iteration == config.max_iters:
            # budget spent: keep the items the last trace entry was computed for
            break
        prev = ll
        items = m_step(es.counts, items, kind, dataset.item_ids)

    abilities = map_ability(dataset, items, kind)
    report = FitReport(
        kind=kind,
        estimator="mml",
        items=items,
        abilities=abilities,
        loss_trace=trace,
        epoch_seconds=seconds,
        seconds=time.perf_counter() - start,
        converged=converged,
        config=config,
        best_epoch=len(trace),
        flagged_items=degenerate_items(dataset),
    )
    return items, report


def marginal_log_likelihood(dataset, items: ItemParams, kind, n_quad: int = 41) -> float:
    kind = ModelKind.parse(kind)
    return e_step(dataset, items, kind, make_quadrature(n_quad)).log_likelihood


def map_ability(dataset, items: ItemParams, kind, start=0.0, prior_sd=1.0, max_iter=100) -> AbilityParams:
    """Posterior mode of every subject's ability under a Normal(0, prior_sd) prior.

    One-dimensional Newton (Fisher scoring for 3PL/4PL) with step halving,
    run for all subjects at once.
    """
    kind = ModelKind.parse(kind)
    items.check_kind(kind)
    if items.n_items != dataset.n_items:
        raise ContractError(f"{items.n_items} item parameters for {dataset.n_items} items")
    j, i, y = dataset.subject_index, dataset.item_index, dataset.response
    n_subj = dataset.n_subjects
    a = items.slopes[i]
    b = items.difficulty[i]
    c = items.guessing[i] if kind.has_guessing else None
    lam = items.feasibility[i] if kind.has_feasibility else None
    prec = 1.0 / (prior_sd * prior_sd)

    def objective(theta):
        lp = _log_prob(kind, y, a * (theta[j] - b), c, lam)
        return np.bincount(j, weights=lp, minlength=n_subj) - 0.5 * prec * theta * theta

    def derivatives(theta):
        x = a * (theta[j] - b)
        s = expit(x)
        ds = s * (1.0 - s)
        if kind.uses_logit_form:
            g = a * (y - s)
            h = a * a * ds
        else:
            p = c + (1.0 - c) * s if kind.has_guessing else lam * s
            dp = ((1.0 - c) if kind.has_guessing else lam) * a * ds
            p = np.clip(p, PROB_EPS, 1.0 - PROB_EPS)
            w = 1.0 / (p * (1.0 - p))
            g = (y - p) * w * dp
            h = w * dp * dp
        grad = np.bincount(j, weights=g, minlength=n_subj) - prec * theta
        curv = np.bincount(j, weights=h, minlength=n_subj) + prec
        return grad, curv

    theta = np.full(n_subj, float(start)) if np.ndim(start) == 0 else np.array(start, dtype=float)
    value = objective(theta)
    for _ in range(max_iter):
        grad, curv = derivatives(theta)
        step = grad / curv
        t = np.ones(n_subj)
        new_theta, new_value = theta.copy(), value.copy()
        pending = np.ones(n_subj, dtype=bool)
        for _ in range(60):
            cand = theta + t * step
            cval = objective(cand)
            ok = pending & (cval >= value - 1e-14 * np.abs(value))
            new_theta[ok], new_value[ok] = cand[ok], cval[ok]
            pending &= ~ok
            if not pending.any():
                break
            t = np.where(pending, 0.5 * t, t)
        moved = np.max(np.abs(new_theta - theta)) if n_subj else 0.0
        theta, value = new_theta, new_value
        if moved < 1e-12:
            break
    return AbilityParams(theta)
