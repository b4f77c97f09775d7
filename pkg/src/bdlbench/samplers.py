"""Posterior-inference engines over flat parameter vectors.

Five engines: a Hamiltonian Monte Carlo reference sampler (fixed
leapfrog path length, warmup step-size adaptation by dual averaging),
the two stochastic-gradient MCMC samplers SGLD and SGHMC, MAP ensembles,
and MC-dropout forward sampling.  All engines are deterministic given
(seed, config, dataset).

SGLD update:   theta <- theta - a_t * gU~(theta) + sqrt(2 a_t) * eps_t
SGHMC update:  theta <- theta + r;  r <- (1-eta) r - a_t * gU~(theta_old)
               + sqrt(2 eta a_t) * eps_t
with stepsize decay a_t = a0 * (1 - t/T)^0.9 for t = 1..T, and gU~ the
minibatch estimate (N/b) * sum_batch grad-NLL + theta of the potential
gradient.  Sample sets serialize to a plain-text format: two comment
header lines (magic, JSON metadata) then one whitespace-separated
parameter vector per line.
"""

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import models, nn_kernels, optimizers
from .nn_core import MC_DROPOUT, TRAIN

DIVERGENCE_THRESHOLD = 1.0e3

# Dual-averaging constants (published defaults of the scheme).
DA_GAMMA = 0.05
DA_T0 = 10.0
DA_KAPPA = 0.75

METHOD_NAMES = ("hmc", "sgld", "sghmc", "ensembling", "map")

SAMPLES_MAGIC = "# bdlbench-samples v1"


class SamplerError(RuntimeError):
    """A sampling or training run left the finite-parameter domain."""


@dataclass
class HmcConfig:
    num_samples: int
    warmup_steps: int = 1000
    leapfrog_steps: int = 50
    step_size: float = 0.1
    target_accept: float = 0.8

    def __post_init__(self):
        if self.num_samples < 1:
            raise ValueError("num_samples must be >= 1")
        if self.warmup_steps < 0:
            raise ValueError("warmup_steps must be >= 0")
        if self.leapfrog_steps < 1:
            raise ValueError("leapfrog_steps must be >= 1")
        if not (np.isfinite(self.step_size) and self.step_size > 0):
            raise ValueError("step_size must be positive and finite")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")


@dataclass
class SgMcmcConfig:
    alpha0: float
    T: int
    batch_size: int
    M: int
    eta: float = 0.1
    decay_exponent: float = 0.9

    def __post_init__(self):
        if not (np.isfinite(self.alpha0) and self.alpha0 > 0):
            raise ValueError("alpha0 must be positive and finite")
        if not self.T >= self.M >= 1:
            raise ValueError("need T >= M >= 1")
        if self.T < 2:
            raise ValueError("T must be >= 2")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        if self.decay_exponent <= 0:
            raise ValueError("decay_exponent must be positive")


@dataclass
class EnsembleConfig:
    M: int
    epochs: int = 150
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 0.001

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("ensemble size M must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class McDropoutConfig:
    M: int
    epochs: int = 300
    batch_size: int = 32
    optimizer: str = "adam"
    lr: float = 0.001

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("forward-pass count M must be >= 1")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class PosteriorSampleSet:
    samples: np.ndarray
    method: str
    config: dict = field(default_factory=dict)
    seed: int = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 2 or samples.shape[0] < 1:
            raise ValueError("samples must be a (M >= 1, P) array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples contain non-finite entries")
        if self.method not in METHOD_NAMES:
            raise ValueError(f"unknown method {self.method!r}")
        self.samples = samples

    @property
    def num_samples(self):
        return self.samples.shape[0]

    @property
    def param_count(self):
        return self.samples.shape[1]


class AnalyticTarget:
    """An exact potential used directly as a sampler target.

    Stands in for the (model family, dataset) pair when the target
    density is known in closed form; the stochastic gradient is then the
    exact gradient (no data term, no minibatching).
    """

    def __init__(self, potential_fn, grad_fn, dim, init=None):
        self._potential_fn = potential_fn
        self._grad_fn = grad_fn
        self.param_count = int(dim)
        self._init = (np.zeros(self.param_count) if init is None
                      else np.asarray(init, dtype=np.float64).copy())
        if self._init.shape != (self.param_count,):
            raise ValueError("init must be a flat vector of length dim")

    def init_params(self, rng):
        return self._init.copy()

    def potential(self, theta):
        return self._potential_fn(theta), self._grad_fn(theta)

    def potential_grad(self, theta):
        return self._grad_fn(theta)


def standard_normal_target(dim=1):
    """U(theta) = theta.theta / 2, the unit Gaussian in ``dim`` dimensions."""
    return AnalyticTarget(lambda th: 0.5 * float(th @ th), lambda th: th, dim)


def _evaluate_potential(potential, theta):
    """(U, grad), with any non-finite outcome collapsed to (inf, None)."""
    if not np.all(np.isfinite(theta)):
        return np.inf, None
    try:
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            u, grad = potential(theta)
    except ArithmeticError:
        return np.inf, None
    if not (np.isfinite(u) and np.all(np.isfinite(grad))):
        return np.inf, None
    return float(u), grad


def leapfrog(potential, theta, p, step_size, num_steps, u=None, grad=None):
    """Integrate Hamilton's equations; returns (theta, p, u, grad, ok).

    ``ok`` is False when the path left the finite domain; the returned
    state is then unusable and the proposal must be rejected.
    """
    if grad is None:
        u, grad = _evaluate_potential(potential, theta)
        if grad is None:
            return theta, p, u, grad, False
    theta = np.asarray(theta, dtype=np.float64).copy()
    p = np.asarray(p, dtype=np.float64).copy()
    p -= 0.5 * step_size * grad
    for step in range(num_steps):
        theta += step_size * p
        u, grad = _evaluate_potential(potential, theta)
        if grad is None:
            return theta, p, u, grad, False
        if step != num_steps - 1:
            p -= step_size * grad
    p -= 0.5 * step_size * grad
    return theta, p, u, grad, True


def hmc_run(potential, init, config, rng, seed=None):
    """Metropolis-Hastings with leapfrog proposals; returns the sample set.

    Momentum is resampled from N(0, I_P) each iteration; the proposal is
    accepted with probability min(1, exp(H_old - H_new)).  During warmup
    the step size adapts by dual averaging toward ``target_accept`` and
    is frozen at the averaged value afterwards.  Proposals with
    |delta H| above 1e3 (or leaving the finite domain) count as
    divergences and are rejected.
    """
    theta = np.asarray(init, dtype=np.float64).copy()
    if theta.ndim != 1:
        raise ValueError("init must be a flat parameter vector")
    u, grad = _evaluate_potential(potential, theta)
    if grad is None:
        raise ValueError("potential is not finite at the initial point")

    eps = config.step_size
    mu_da = math.log(10.0 * eps)
    log_eps_bar = 0.0
    h_bar = 0.0

    dim = theta.shape[0]
    m_out = config.num_samples
    samples = np.empty((m_out, dim))
    delta_hs = np.empty(m_out)
    accept_probs = np.empty(m_out)
    accepted_flags = np.zeros(m_out, dtype=bool)
    divergences = 0
    divergences_warmup = 0
    accepted_count = 0

    total = config.warmup_steps + m_out
    for it in range(1, total + 1):
        p = rng.standard_normal(dim)
        h_old = u + 0.5 * p @ p
        theta_new, p_new, u_new, grad_new, ok = leapfrog(
            potential, theta, p, eps, config.leapfrog_steps, u, grad)
        if ok:
            delta_h = (u_new + 0.5 * p_new @ p_new) - h_old
        else:
            delta_h = np.inf
        divergent = (not math.isfinite(delta_h)
                     or abs(delta_h) > DIVERGENCE_THRESHOLD)
        if divergent:
            accept_prob = 0.0
        elif delta_h <= 0.0:
            accept_prob = 1.0
        else:
            accept_prob = math.exp(-delta_h)
        if rng.random() < accept_prob:
            theta, u, grad = theta_new, u_new, grad_new
            accepted = True
        else:
            accepted = False

        in_warmup = it <= config.warmup_steps
        if in_warmup:
            if divergent:
                divergences_warmup += 1
            # Dual averaging on log step size toward target_accept.
            h_bar = ((1.0 - 1.0 / (it + DA_T0)) * h_bar
                     + (config.target_accept - accept_prob) / (it + DA_T0))
            log_eps = mu_da - math.sqrt(it) / DA_GAMMA * h_bar
            w = it ** (-DA_KAPPA)
            log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar
            eps = math.exp(log_eps)
            if it == config.warmup_steps:
                eps = math.exp(log_eps_bar)
        else:
            k = it - config.warmup_steps - 1
            samples[k] = theta
            delta_hs[k] = delta_h
            accept_probs[k] = accept_prob
            accepted_flags[k] = accepted
            if divergent:
                divergences += 1
            if accepted:
                accepted_count += 1

    diagnostics = {
        "accept_rate": accepted_count / m_out,
        "divergences": divergences,
        "divergences_warmup": divergences_warmup,
        "final_step_size": eps,
        "delta_h": delta_hs,
        "accept_prob": accept_probs,
        "accepted": accepted_flags,
    }
    return PosteriorSampleSet(samples, "hmc", asdict(config), seed,
                              diagnostics)


def extraction_schedule(T, M):
    """M strictly increasing step indices from floor(0.75 T) to T."""
    if M < 1:
        raise ValueError("M must be >= 1")
    if T < 2:
        raise ValueError("T must be >= 2")
    if M == 1:
        return [int(T)]
    start = math.floor(0.75 * T)
    raw = np.linspace(start, T, M)
    indices = [int(v) for v in np.rint(raw)]
    for a, b in zip(indices, indices[1:]):
        if b <= a:
            raise ValueError(
                f"M={M} is too large to keep indices distinct on [{start}, {T}]")
    return indices


def _make_grad_estimator(family, dataset, batch_size):
    """Unbiased estimator of grad U as a (theta, rng) -> vector closure."""
    if dataset is None:
        if not hasattr(family, "potential_grad"):
            raise TypeError("family without dataset must expose potential_grad")
        return lambda theta, rng: family.potential_grad(theta)
    X, targets = dataset
    n = X.shape[0]
    if batch_size >= n:
        def estimator(theta, rng):
            _, g = family.data_sum_grad(theta, X, targets,
                                        nn_kernels.NLL_FORM)
            return g + theta
    else:
        scale = n / batch_size
        def estimator(theta, rng):
            idx = rng.integers(0, n, size=batch_size)
            _, g = family.data_sum_grad(theta, X[idx], targets[idx],
                                        nn_kernels.NLL_FORM)
            return scale * g + theta
    return estimator


def _sg_mcmc_run(family, dataset, config, rng, seed, method, noise,
                 fixed_alpha, with_momentum):
    grad_fn = _make_grad_estimator(family, dataset, config.batch_size)
    theta = np.asarray(family.init_params(rng), dtype=np.float64).copy()
    dim = theta.shape[0]
    schedule = extraction_schedule(config.T, config.M)
    samples = np.empty((config.M, dim))
    k = 0
    r = np.zeros(dim)
    alpha0 = config.alpha0
    decay = config.decay_exponent
    T = config.T
    eta = config.eta
    for t in range(1, T + 1):
        if fixed_alpha is not None:
            alpha = fixed_alpha
        else:
            alpha = alpha0 * (1.0 - t / T) ** decay
        # Overflow past this point is expected on divergent trajectories
        # and converted to SamplerError by the isfinite guard below.
        with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
            grad = grad_fn(theta, rng)
        eps_t = rng.standard_normal(dim) if noise is None else noise(t, dim)
        if with_momentum:
            theta = theta + r
            r = (1.0 - eta) * r - alpha * grad
            if eps_t is not None:
                r = r + math.sqrt(2.0 * eta * alpha) * eps_t
        else:
            theta = theta - alpha * grad
            if eps_t is not None:
                theta = theta + math.sqrt(2.0 * alpha) * eps_t
        if not np.all(np.isfinite(theta)):
            raise SamplerError(
                f"{method} left the finite domain at step {t}/{T} "
                f"(alpha={alpha:.3g}, |grad|={float(np.max(np.abs(grad))):.3g})")
        if k < config.M and t == schedule[k]:
            samples[k] = theta
            k += 1
    return PosteriorSampleSet(samples, method, asdict(config), seed,
                              {"schedule": schedule})


def sgld_run(family, dataset, config, rng, seed=None, noise=None,
             fixed_alpha=None):
    """Langevin-dynamics trajectory sampling; returns M extracted samples.

    ``noise`` and ``fixed_alpha`` are test hooks: ``noise(t, dim)`` may
    return a replacement for the standard-normal draw or None to drop
    the noise term entirely (the update then reduces to SGD on U), and
    ``fixed_alpha`` disables the stepsize decay.
    """
    return _sg_mcmc_run(family, dataset, config, rng, seed, "sgld", noise,
                        fixed_alpha, with_momentum=False)


def sghmc_run(family, dataset, config, rng, seed=None, noise=None,
              fixed_alpha=None):
    """Momentum-augmented trajectory sampling with friction ``eta``.

    The auxiliary variable starts at r = 0; the gradient in the r-update
    is evaluated at the pre-update position.  Hooks as in ``sgld_run``.
    """
    return _sg_mcmc_run(family, dataset, config, rng, seed, "sghmc", noise,
                        fixed_alpha, with_momentum=True)


def train_map(family, dataset, optimizer_kind, lr, epochs, batch_size, rng,
              init=None):
    """Minimize the MAP loss by minibatch passes over the shuffled data."""
    X, targets = dataset
    n = X.shape[0]
    if n < 1:
        raise ValueError("dataset must be non-empty")
    theta = (family.init_params(rng) if init is None
             else np.asarray(init, dtype=np.float64).copy())
    state = optimizers.make_optimizer(optimizer_kind, theta.shape[0])
    for epoch in range(epochs):
        perm = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = perm[start:start + batch_size]
            try:
                with np.errstate(over="ignore", invalid="ignore",
                                 divide="ignore"):
                    _, grad = models.map_loss_family(family, theta, X[idx],
                                                     targets[idx], n,
                                                     mode=TRAIN, rng=rng)
            except models.NonFiniteLossError as err:
                raise SamplerError(
                    f"MAP training diverged at epoch {epoch}, "
                    f"batch offset {start}: {err}") from err
            theta = optimizers.step(state, theta, grad, lr)
    return theta


def train_ensemble(family, dataset, config, rng, seed=None):
    """M independent MAP fits from fresh initializations on split streams."""
    members = np.empty((config.M, family.param_count))
    for m, child in enumerate(rng.spawn(config.M)):
        members[m] = train_map(family, dataset, config.optimizer, config.lr,
                               config.epochs, config.batch_size, child)
    return PosteriorSampleSet(members, "ensembling", asdict(config), seed, {})


def mc_dropout_posterior(model, x_set, num_passes, rng):
    """M dropout-mode forward passes per input with independent masks.

    For a Gaussian model returns (mu, log_sigma2) arrays of shape
    (M, n); for a categorical model returns a probs array of shape
    (M, n, C).  Row i of each pass is the prediction for input i.
    """
    if num_passes < 1:
        raise ValueError("forward-pass count M must be >= 1")
    X = np.asarray(x_set, dtype=np.float64)
    if isinstance(model, models.GaussianModel):
        if model.arch_mu.dropout is None or model.arch_sigma.dropout is None:
            raise ValueError("model architecture carries no dropout spec")
        family = models.GaussianRegressionFamily(model.arch_mu,
                                                 model.arch_sigma)
        theta = np.concatenate([model.params_mu, model.params_sigma])
        mu = np.empty((num_passes, X.shape[0]))
        log_s2 = np.empty((num_passes, X.shape[0]))
        for m in range(num_passes):
            mu[m], log_s2[m] = family.predict_batch(theta, X, MC_DROPOUT, rng)
        return mu, log_s2
    if isinstance(model, models.CategoricalModel):
        if model.arch.dropout is None:
            raise ValueError("model architecture carries no dropout spec")
        family = models.CategoricalFamily(model.arch)
        probs = np.empty((num_passes, X.shape[0], model.num_classes))
        for m in range(num_passes):
            probs[m] = family.predict_batch(model.params, X, MC_DROPOUT, rng)
        return probs
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _json_safe(value):
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    return value


def save_sample_set(path, sample_set):
    """Write the documented text format: magic, JSON header, one row per sample."""
    header = {
        "method": sample_set.method,
        "seed": sample_set.seed,
        "num_samples": int(sample_set.num_samples),
        "param_count": int(sample_set.param_count),
        "config": _json_safe(sample_set.config),
        "diagnostics": {k: _json_safe(v)
                        for k, v in sample_set.diagnostics.items()
                        if not isinstance(v, np.ndarray)},
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(SAMPLES_MAGIC + "\n")
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        np.savetxt(fh, sample_set.samples, fmt="%.17g")


def load_sample_set(path):
    with open(path, "r", encoding="utf-8") as fh:
        magic = fh.readline().rstrip("\n")
        if magic != SAMPLES_MAGIC:
            raise ValueError(f"{path}: not a sample-set file (bad magic line)")
        meta_line = fh.readline()
        if not meta_line.startswith("# "):
            raise ValueError(f"{path}: missing JSON header line")
        header = json.loads(meta_line[2:])
        samples = np.loadtxt(fh, ndmin=2)
    expected = (header["num_samples"], header["param_count"])
    if samples.shape != expected:
        raise ValueError(f"{path}: sample block {samples.shape} does not "
                         f"match header {expected}")
    return PosteriorSampleSet(samples, header["method"], header["config"],
                              header["seed"], header["diagnostics"])
