"""Stochastic variational inference with a mean-field Normal/Gamma guide.

Latent variables and their priors::

    mu    ~ Normal(0, mu_sd)
    tau   ~ Gamma(tau_shape, tau_rate)
    theta ~ Normal(mu, 1 / sqrt(tau))          per subject
    b     ~ Normal(0, difficulty_sd)          per item
    log a ~ Normal(0, log_discrimination_sd)  per item (2PL, 3PL, 4PL)
    logit c, logit lambda ~ Normal(0, 1)      per item (3PL / 4PL)

With ``hierarchical=False`` ``mu`` and ``tau`` are dropped and
``theta ~ Normal(0, ability_sd)``.

The guide is Normal(loc, exp(log_scale)) for every real latent and
Gamma(exp(log_conc), exp(log_rate)) for ``tau``. Under this factorisation
every prior and entropy term has a closed-form expectation, including the
cross term ``E[log Normal(theta | mu, tau^-1/2)]``, so only the likelihood is
estimated by Monte Carlo through reparameterised Normal draws. Gradients are
analytic.

Sign convention: ``elbo_estimate`` returns the ELBO and its gradient; the
optimiser descends the loss ``-ELBO``, and the recorded trace is the loss.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import digamma, expit, gammaln, logit, polygamma

from .dataset import split_batches
from .errors import ContractError, TrainingError
from .models import AbilityParams, ItemParams, ModelKind, _log_prob_and_grads
from .report import FitReport

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PriorSpec:
    difficulty_sd: float = 1.0
    log_discrimination_sd: float = 0.25
    guessing_logit_sd: float = 1.0
    feasibility_logit_sd: float = 1.0
    ability_sd: float = 1.0
    mu_sd: float = 1.0
    tau_shape: float = 1.0
    tau_rate: float = 1.0


@dataclass(frozen=True)
class TrainConfig:
    kind: ModelKind = ModelKind.ONE_PARAM
    epochs: int = 100
    batch_size: int = 4096
    learning_rate: float = 0.1
    betas: tuple = (0.9, 0.999)
    epsilon: float = 1e-8
    mc_samples: int = 1
    seed: int = 0
    priors: PriorSpec | None = None
    hierarchical: bool = True
    tol: float = 1e-4
    window: int = 10
    init_scale: float = 0.1

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        for name in ("epochs", "batch_size", "mc_samples", "window"):
            if int(getattr(self, name)) < 1:
                raise ContractError(f"{name} must be a positive integer")
        for name in ("learning_rate", "epsilon", "tol", "init_scale"):
            if not getattr(self, name) > 0:
                raise ContractError(f"{name} must be positive")
        b1, b2 = self.betas
        if not (0 <= b1 < 1 and 0 <= b2 < 1):
            raise ContractError("adam betas must lie in [0, 1)")


# (guide name, constrained ItemParams field, prior sd attribute)
_ITEM_LATENTS = {
    "b": ("difficulty", "difficulty_sd"),
    "a": ("discrimination", "log_discrimination_sd"),
    "c": ("guessing", "guessing_logit_sd"),
    "lam": ("feasibility", "feasibility_logit_sd"),
}


def item_latents(kind: ModelKind) -> list:
    kind = ModelKind.parse(kind)
    names = ["b"]
    if kind.has_discrimination:
        names.append("a")
    if kind.has_guessing:
        names.append("c")
    if kind.has_feasibility:
        names.append("lam")
    return names


def constrain(kind, raw: dict) -> dict:
    """Map unconstrained item latents to model space.

    ``a = exp(raw_a)``, ``c = sigmoid(raw_c)``, ``lambda = sigmoid(raw_lam)``;
    difficulty is unconstrained. Keys are the guide names ``b, a, c, lam``.
    """
    out = {}
    for name in item_latents(kind):
        value = np.asarray(raw[name], float)
        if name == "a":
            out[name] = np.exp(value)
        elif name in ("c", "lam"):
            out[name] = expit(value)
        else:
            out[name] = value
    return out


def unconstrain(kind, constrained: dict) -> dict:
    out = {}
    for name in item_latents(kind):
        value = np.asarray(constrained[name], float)
        if name == "a":
            out[name] = np.log(value)
        elif name in ("c", "lam"):
            out[name] = logit(value)
        else:
            out[name] = value
    return out


def reparam_sample_normal(loc, scale, eps):
    """``loc + scale * eps``; the derivative in ``scale`` is ``eps``."""
    return np.asarray(loc) + np.asarray(scale) * np.asarray(eps)


@dataclass
class VariationalPosterior:
    """Mean-field guide parameters keyed by ``<latent>_loc`` / ``<latent>_log_scale``.

    Latents are ``theta`` plus the item latents of ``kind``; a hierarchical
    guide also carries ``mu_loc``, ``mu_log_scale``, ``tau_log_conc`` and
    ``tau_log_rate`` as length-1 arrays.
    """

    kind: ModelKind
    hierarchical: bool
    params: dict

    @classmethod
    def initial(cls, kind, n_subjects, n_items, hierarchical=True, init_scale=0.1, priors=None):
        kind = ModelKind.parse(kind)
        priors = priors or PriorSpec()
        log_s = np.log(init_scale)
        start = unconstrain(kind, {"b": 0.0, "a": 1.0, "c": 0.1, "lam": 0.95})
        params = {"theta_loc": np.zeros(n_subjects), "theta_log_scale": np.full(n_subjects, log_s)}
        for name in item_latents(kind):
            params[f"{name}_loc"] = np.full(n_items, float(start[name]))
            params[f"{name}_log_scale"] = np.full(n_items, log_s)
        if hierarchical:
            params["mu_loc"] = np.zeros(1)
            params["mu_log_scale"] = np.full(1, log_s)
            params["tau_log_conc"] = np.full(1, np.log(priors.tau_shape))
            params["tau_log_rate"] = np.full(1, np.log(priors.tau_rate))
        return cls(kind, hierarchical, params)

    @classmethod
    def at_prior(cls, kind, n_subjects, n_items, priors=None, hierarchical=False):
        """Guide equal to the prior (for the non-hierarchical ability prior)."""
        priors = priors or PriorSpec()
        post = cls.initial(kind, n_subjects, n_items, hierarchical=hierarchical, priors=priors)
        p = post.params
        p["theta_loc"][:] = 0.0
        p["theta_log_scale"][:] = np.log(priors.ability_sd)
        for name in item_latents(kind):
            p[f"{name}_loc"][:] = 0.0
            p[f"{name}_log_scale"][:] = np.log(getattr(priors, _ITEM_LATENTS[name][1]))
        if hierarchical:
            p["mu_loc"][:] = 0.0
            p["mu_log_scale"][:] = np.log(priors.mu_sd)
        return post

    @property
    def n_subjects(self) -> int:
        return self.params["theta_loc"].shape[0]

    @property
    def n_items(self) -> int:
        return self.params["b_loc"].shape[0]

    def loc(self, name) -> np.ndarray:
        return self.params[f"{name}_loc"]

    def scale(self, name) -> np.ndarray:
        return np.exp(self.params[f"{name}_log_scale"])

    def copy(self) -> "VariationalPosterior":
        return replace(self, params={k: v.copy() for k, v in self.params.items()})

    def point_items(self) -> ItemParams:
        values = constrain(self.kind, {n: self.loc(n) for n in item_latents(self.kind)})
        return ItemParams(
            difficulty=values["b"],
            discrimination=values.get("a"),
            guessing=values.get("c"),
            feasibility=values.get("lam"),
        )

    def point_abilities(self) -> AbilityParams:
        return AbilityParams(self.loc("theta"))

    def scales(self) -> dict:
        """Guide standard deviations by ItemParams/AbilityParams field name."""
        out = {"ability": self.scale("theta")}
        for name in item_latents(self.kind):
            out[_ITEM_LATENTS[name][0]] = self.scale(name)
        return out


def _normal_kl_terms(loc, log_scale, prior_sd):
    """``E_q[log N(z; 0, prior_sd)] + H[q]`` summed, with gradients."""
    s2 = np.exp(2.0 * log_scale)
    var = prior_sd * prior_sd
    value = np.sum(log_scale - np.log(prior_sd) + 0.5 - (loc * loc + s2) / (2.0 * var))
    return value, -loc / var, 1.0 - s2 / var


def prior_entropy_terms(posterior: VariationalPosterior, priors: PriorSpec):
    """Closed-form ``E_q[log p(latents)] - E_q[log q(latents)]`` (= -KL) and gradients."""
    p = posterior.params
    grads = {}
    total = 0.0
    for name in item_latents(posterior.kind):
        sd = getattr(priors, _ITEM_LATENTS[name][1])
        v, gm, gs = _normal_kl_terms(p[f"{name}_loc"], p[f"{name}_log_scale"], sd)
        total += v
        grads[f"{name}_loc"], grads[f"{name}_log_scale"] = gm, gs

    if not posterior.hierarchical:
        v, gm, gs = _normal_kl_terms(p["theta_loc"], p["theta_log_scale"], priors.ability_sd)
        grads["theta_loc"], grads["theta_log_scale"] = gm, gs
        return total + v, grads

    m_t, ls_t = p["theta_loc"], p["theta_log_scale"]
    m_mu, ls_mu = p["mu_loc"][0], p["mu_log_scale"][0]
    alpha, beta = np.exp(p["tau_log_conc"][0]), np.exp(p["tau_log_rate"][0])
    n_subj = m_t.shape[0]
    s2_t, s2_mu = np.exp(2.0 * ls_t), np.exp(2.0 * ls_mu)
    e_tau = alpha / beta
    e_log_tau = digamma(alpha) - np.log(beta)
    dev = m_t - m_mu
    sq = dev * dev + s2_t + s2_mu
    total_sq = np.sum(sq)

    # theta | mu, tau cross term plus theta entropy
    total += np.sum(ls_t + 0.5) + 0.5 * n_subj * e_log_tau - 0.5 * e_tau * total_sq
    grads["theta_loc"] = -e_tau * dev
    grads["theta_log_scale"] = 1.0 - e_tau * s2_t

    v, gm, gs = _normal_kl_terms(p["mu_loc"], p["mu_log_scale"], priors.mu_sd)
    total += v
    grads["mu_loc"] = gm + e_tau * np.sum(dev)
    grads["mu_log_scale"] = gs - n_subj * e_tau * s2_mu

    a0, b0 = priors.tau_shape, priors.tau_rate
    log_prior_tau = a0 * np.log(b0) - gammaln(a0) + (a0 - 1.0) * e_log_tau - b0 * e_tau
    entropy_tau = alpha - np.log(beta) + gammaln(alpha) + (1.0 - alpha) * digamma(alpha)
    total += log_prior_tau + entropy_tau
    trigamma = polygamma(1, alpha)
    coef_log = 0.5 * n_subj + a0 - 1.0
    coef_lin = 0.5 * total_sq + b0
    grads["tau_log_conc"] = np.array(
        [coef_log * alpha * trigamma - coef_lin * e_tau + alpha * (1.0 + (1.0 - alpha) * trigamma)]
    )
    grads["tau_log_rate"] = np.array([-coef_log + coef_lin * e_tau - 1.0])
    return float(total), grads


def _likelihood_terms(dataset, batch, posterior, rng, mc_samples):
    """Monte Carlo estimate of ``sum_{n in batch} E_q[log p(y_n | latents)]`` and its gradient."""
    kind = posterior.kind
    p = posterior.params
    grads = {k: np.zeros_like(v) for k, v in p.items() if not k.startswith(("mu_", "tau_"))}
    j_all = dataset.subject_index[batch]
    i_all = dataset.item_index[batch]
    y = dataset.response[batch]
    uj, jinv = np.unique(j_all, return_inverse=True)
    ui, iinv = np.unique(i_all, return_inverse=True)
    names = item_latents(kind)

    total = 0.0
    for _ in range(mc_samples):
        loc_t, sc_t = p["theta_loc"][uj], np.exp(p["theta_log_scale"][uj])
        eps_t = rng.standard_normal(uj.size)
        theta = reparam_sample_normal(loc_t, sc_t, eps_t)[jinv]
        draws, eps = {}, {}
        for name in names:
            loc, sc = p[f"{name}_loc"][ui], np.exp(p[f"{name}_log_scale"][ui])
            eps[name] = rng.standard_normal(ui.size)
            draws[name] = reparam_sample_normal(loc, sc, eps[name])
        b = draws["b"][iinv]
        a = np.exp(draws["a"])[iinv] if "a" in draws else 1.0
        c = expit(draws["c"])[iinv] if "c" in draws else None
        lam = expit(draws["lam"])[iinv] if "lam" in draws else None
        x = a * (theta - b)
        value, dx, dasym = _log_prob_and_grads(kind, y, x, c, lam)
        total += np.sum(value)

        # per-observation gradients with respect to each sampled latent
        obs_grads = {"b": -dx * a}
        if "a" in draws:
            obs_grads["a"] = dx * x
        if "c" in draws:
            obs_grads["c"] = dasym * c * (1.0 - c)
        if "lam" in draws:
            obs_grads["lam"] = dasym * lam * (1.0 - lam)
        g_t = np.bincount(jinv, weights=dx * a, minlength=uj.size)
        grads["theta_loc"][uj] += g_t
        grads["theta_log_scale"][uj] += g_t * eps_t * sc_t
        for name in names:
            g = np.bincount(iinv, weights=obs_grads[name], minlength=ui.size)
            grads[f"{name}_loc"][ui] += g
            grads[f"{name}_log_scale"][ui] += g * eps[name] * np.exp(p[f"{name}_log_scale"][ui])

    inv = 1.0 / mc_samples
    for g in grads.values():
        g *= inv
    return total * inv, grads


def elbo_estimate(dataset, batch, posterior: VariationalPosterior, priors: PriorSpec, rng, mc_samples=1):
    """Unbiased ELBO estimate from a mini-batch, with its gradient.

    The batch log-likelihood is scaled by ``N / len(batch)``; prior and
    entropy terms are exact. Returns ``(value, grads)`` where ``grads`` has
    the same keys as ``posterior.params``.
    """
    batch = np.asarray(batch)
    if batch.size == 0:
        raise ContractError("batch must not be empty")
    if posterior.n_subjects != dataset.n_subjects or posterior.n_items != dataset.n_items:
        raise ContractError("posterior shape does not match dataset")
    weight = dataset.n_observations / batch.size
    lik, lik_grads = _likelihood_terms(dataset, batch, posterior, rng, mc_samples)
    kl, kl_grads = prior_entropy_terms(posterior, priors)
    grads = {}
    for key in posterior.params:
        g = np.array(kl_grads[key], dtype=float)
        if key in lik_grads:
            g = g + weight * lik_grads[key]
        grads[key] = g
    return weight * lik + kl, grads


def evaluate_elbo(dataset, posterior, priors=None, n_samples=10_000, seed=0):
    """Full-batch ELBO averaged over ``n_samples`` single-draw estimates.

    Returns ``(mean, standard_error)``.
    """
    priors = priors or PriorSpec()
    rng = np.random.default_rng(seed)
    batch = np.arange(dataset.n_observations)
    kl, _ = prior_entropy_terms(posterior, priors)
    values = np.empty(n_samples)
    for k in range(n_samples):
        values[k], _ = _likelihood_terms(dataset, batch, posterior, rng, 1)
    values += kl
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(n_samples))


@dataclass
class AdamState:
    m: dict
    v: dict

    @classmethod
    def zeros_like(cls, params):
        return cls({k: np.zeros_like(v) for k, v in params.items()}, {k: np.zeros_like(v) for k, v in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, t: int, config: TrainConfig):
    """One Adam update descending ``grads``; returns ``(new_params, new_state)``."""
    if t < 1:
        raise ContractError("adam step index starts at 1")
    b1, b2 = config.betas
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_params, m_new, v_new = {}, {}, {}
    for k, x in params.items():
        g = grads[k]
        m = b1 * state.m[k] + (1.0 - b1) * g
        v = b2 * state.v[k] + (1.0 - b2) * g * g
        new_params[k] = x - config.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + config.epsilon)
        m_new[k], v_new[k] = m, v
    return new_params, AdamState(m_new, v_new)


def _smoothed(trace, window):
    return float(np.mean(trace[-window:]))


def fit_svi(dataset, config: TrainConfig, posterior: VariationalPosterior | None = None):
    """Fit the guide by mini-batch Adam on the negative ELBO.

    Returns ``(posterior, report)``; the posterior is the snapshot with the
    lowest trailing ``window``-epoch mean loss (later epochs win ties).
    """
    if dataset.n_observations == 0:
        raise ContractError("dataset has no observations")
    kind = config.kind
    priors = config.priors or PriorSpec()
    if posterior is None:
        posterior = VariationalPosterior.initial(
            kind, dataset.n_subjects, dataset.n_items, config.hierarchical, config.init_scale, priors
        )
    batch_ss, noise_ss = np.random.SeedSequence(config.seed).spawn(2)
    batch_rng = np.random.Generator(np.random.PCG64(batch_ss))
    noise_rng = np.random.Generator(np.random.PCG64(noise_ss))

    params = {k: v.copy() for k, v in posterior.params.items()}
    state = AdamState.zeros_like(params)
    trace, epoch_seconds = [], []
    best, best_epoch, best_loss = None, None, np.inf
    converged = False
    step = 0
    start = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        epoch_loss = 0.0
        batches = split_batches(dataset.n_observations, config.batch_size, batch_rng)
        for batch in batches:
            current = VariationalPosterior(kind, posterior.hierarchical, params)
            value, grads = elbo_estimate(dataset, batch, current, priors, noise_rng, config.mc_samples)
            if not np.isfinite(value) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise TrainingError(f"non-finite ELBO in epoch {epoch}", epoch=epoch, trace=trace)
            step += 1
            params, state = adam_step(params, {k: -g for k, g in grads.items()}, state, step, config)
            epoch_loss -= value
        for k, v in params.items():
            if k.endswith(("_log_scale", "_log_conc", "_log_rate")):
                with np.errstate(over="ignore"):
                    s = np.exp(v)
                if not np.all(np.isfinite(s) & (s > 0)):
                    raise TrainingError(f"posterior scale left (0, inf) in epoch {epoch}", epoch=epoch, trace=trace)
        trace.append(epoch_loss / len(batches))
        epoch_seconds.append(time.perf_counter() - start)
        log.debug("epoch %d loss %.6f", epoch, trace[-1])

        smooth = _smoothed(trace, config.window)
        if smooth <= best_loss:
            best_loss, best_epoch = smooth, epoch
            best = {k: v.copy() for k, v in params.items()}
        if epoch >= 2 * config.window:
            prev = float(np.mean(trace[-2 * config.window:-config.window]))
            if (prev - smooth) / abs(prev) < config.tol:
                converged = True
                break

    fitted = VariationalPosterior(kind, posterior.hierarchical, best)
    report = FitReport(
        kind=kind,
        estimator="svi",
        items=fitted.point_items(),
        abilities=fitted.point_abilities(),
        loss_trace=trace,
        epoch_seconds=epoch_seconds,
        seconds=time.perf_counter() - start,
        converged=converged,
        config=config,
        best_epoch=best_epoch,
        scales=fitted.scales(),
    )
    return fitted, report
