"""Random-walk Metropolis inference for the GMCAR agreement model.

The sampler works component by component on transformed coordinates:
autocorrelation parameters through a logit map of their prior interval,
precision-like parameters through a log map, linking coefficients and means
untouched. Each block proposal is a Gaussian step on the transformed scale,
accepted with the usual ratio plus the change-of-variables correction.
Proposal scales adapt toward a target acceptance rate during burn-in only
and are frozen afterwards, so the retained draws come from a fixed kernel.

The coefficient of interest is a deterministic function of the parameters;
its posterior is obtained by plugging every stored draw into
:func:`arealagree.concordance.spatial_concordance`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np
from scipy.special import expit, logit

from .concordance import spatial_concordance
from .errors import ChainInitError, InvalidParameterError
from .gmcar import GMCARParams, log_density
from .lattice import Lattice

__all__ = [
    "PriorSpec",
    "ChainConfig",
    "PosteriorDraws",
    "Transforms",
    "ChainState",
    "DICResult",
    "ParamSummary",
    "log_prior",
    "log_posterior",
    "params_from_values",
    "gmcar_chain_state",
    "rw_metropolis_step",
    "run_chain",
    "plugin_coefficient_draws",
    "hpd_interval",
    "dic",
    "summarize_draws",
    "gelman_rubin",
]

_IDENTITY, _LOG, _INTERVAL = 0, 1, 2


@dataclass(frozen=True)
class PriorSpec:
    """Independent priors for every model parameter.

    Autocorrelations are uniform on ``rho_bounds``; precision scales and
    noise precisions carry Gamma(shape, rate) priors; linking coefficients
    are centered normals; the two means share a normal prior with location
    ``mu_mean`` (kept explicit because it is usually chosen from external
    knowledge of the measured rates).
    """

    mu_mean: float = 0.0
    mu_var: float = 10.0
    rho_bounds: tuple[float, float] = (0.0, 1.0)
    tau_shape: float = 0.1
    tau_rate: float = 0.1
    noise_shape: float = 0.1
    noise_rate: float = 0.1
    eta_var: float = 100.0

    def __post_init__(self):
        lo, hi = self.rho_bounds
        if not (-1.0 <= lo < hi <= 1.0):
            raise InvalidParameterError("rho_bounds must be an interval inside [-1, 1]")
        for name in ("mu_var", "tau_shape", "tau_rate", "noise_shape", "noise_rate", "eta_var"):
            if not getattr(self, name) > 0.0:
                raise InvalidParameterError(f"{name} must be > 0")


@dataclass(frozen=True)
class ChainConfig:
    """MCMC run settings: length, burn-in, thinning, seed, adaptation."""

    iterations: int = 30_000
    burn_in: int = 15_000
    thin: int = 1
    seed: int = 0
    adapt: bool = True
    target_acceptance: float = 0.44
    initial_scale: float = 0.5
    scales: Mapping[str, float] | None = None

    def __post_init__(self):
        if self.iterations < 1 or not 0 <= self.burn_in < self.iterations:
            raise InvalidParameterError("need 0 <= burn_in < iterations")
        if self.thin < 1:
            raise InvalidParameterError("thin must be >= 1")
        if not 0.0 < self.target_acceptance < 1.0:
            raise InvalidParameterError("target_acceptance must be in (0, 1)")

    @property
    def n_stored(self) -> int:
        return -((self.iterations - self.burn_in) // -self.thin)


@dataclass(frozen=True)
class Transforms:
    """Per-component maps between natural and unconstrained coordinates."""

    kinds: tuple[int, ...]
    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        # mask arrays are reused on every proposal; build them once
        k = np.asarray(self.kinds)
        object.__setattr__(self, "_is_log", k == _LOG)
        object.__setattr__(self, "_is_int", k == _INTERVAL)
        object.__setattr__(self, "_lo", np.asarray(self.lo, dtype=float))
        object.__setattr__(self, "_hi", np.asarray(self.hi, dtype=float))
        with np.errstate(divide="ignore", invalid="ignore"):
            width = np.where(self._is_int, np.log(self._hi - self._lo), 0.0)
        object.__setattr__(self, "_log_width", width)

    @classmethod
    def build(cls, specs: Sequence) -> "Transforms":
        """Build from items ``"identity"``, ``"log"`` or ``("interval", lo, hi)``."""
        kinds, lo, hi = [], [], []
        for s in specs:
            if s == "identity":
                kinds.append(_IDENTITY), lo.append(0.0), hi.append(0.0)
            elif s == "log":
                kinds.append(_LOG), lo.append(0.0), hi.append(0.0)
            elif isinstance(s, tuple) and s[0] == "interval":
                kinds.append(_INTERVAL), lo.append(float(s[1])), hi.append(float(s[2]))
            else:
                raise InvalidParameterError(f"unknown transform spec {s!r}")
        return cls(kinds=tuple(kinds), lo=tuple(lo), hi=tuple(hi))

    def forward(self, theta: np.ndarray) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        z = theta.copy()
        z = np.where(self._is_log, np.log(theta, where=theta > 0, out=np.full_like(theta, -np.inf)), z)
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = (theta - self._lo) / np.where(self._is_int, self._hi - self._lo, 1.0)
            z = np.where(self._is_int, logit(np.clip(frac, 0.0, 1.0)), z)
        return z

    def inverse(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        theta = z.copy()
        with np.errstate(over="ignore"):
            theta = np.where(self._is_log, np.exp(z), theta)
        theta = np.where(self._is_int, self._lo + (self._hi - self._lo) * expit(z), theta)
        return theta

    def log_jacobian(self, z: np.ndarray) -> float | np.ndarray:
        """``log |d theta / d z|`` summed over components."""
        z = np.asarray(z, dtype=float)
        out = np.where(self._is_log, z, 0.0)
        logsig = lambda t: -np.logaddexp(0.0, -t)  # noqa: E731
        out = np.where(self._is_int, self._log_width + logsig(z) + logsig(-z), out)
        return out.sum(axis=-1)


def parameter_names(order: int, include_noise: bool) -> tuple[str, ...]:
    """Canonical parameter ordering for a model of a given linking order."""
    names = ["rho1", "rho2"]
    names += [f"eta{j}" for j in range(order + 1)]
    names += ["tau1", "tau2"]
    if include_noise:
        names += ["nu1", "nu2"]
    names += ["mu1", "mu2"]
    return tuple(names)


def parameter_transforms(names: Sequence[str], priors: PriorSpec) -> Transforms:
    specs = []
    for name in names:
        if name.startswith("rho"):
            specs.append(("interval", *priors.rho_bounds))
        elif name.startswith(("tau", "nu")):
            specs.append("log")
        else:
            specs.append("identity")
    return Transforms.build(specs)


def _gamma_logpdf(x: float, shape: float, rate: float) -> float:
    if not x > 0.0:
        return -math.inf
    return shape * math.log(rate) - math.lgamma(shape) + (shape - 1.0) * math.log(x) - rate * x


def _normal_logpdf(x, mean: float, var: float) -> float:
    if isinstance(x, (float, int)):
        return -0.5 * (math.log(2.0 * math.pi * var) + (x - mean) ** 2 / var)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    return float(np.sum(-0.5 * (np.log(2.0 * math.pi * var) + (x - mean) ** 2 / var)))


def log_prior(values: Mapping[str, float] | GMCARParams, spec: PriorSpec) -> float:
    """Sum of independent prior log-densities; ``-inf`` outside the support."""
    if isinstance(values, GMCARParams):
        values = params_to_values(values)
    total = 0.0
    lo, hi = spec.rho_bounds
    for name, value in values.items():
        if name.startswith("rho"):
            v = float(value)
            if not (lo < v < hi) or math.isnan(v):
                return -math.inf
            total += -math.log(hi - lo)
        elif name.startswith("tau"):
            term = _gamma_logpdf(float(value), spec.tau_shape, spec.tau_rate)
            if term == -math.inf:
                return -math.inf
            total += term
        elif name.startswith("nu"):
            term = _gamma_logpdf(float(value), spec.noise_shape, spec.noise_rate)
            if term == -math.inf:
                return -math.inf
            total += term
        elif name.startswith("eta"):
            total += _normal_logpdf(value, 0.0, spec.eta_var)
        elif name.startswith("mu"):
            total += _normal_logpdf(value, spec.mu_mean, spec.mu_var)
        else:
            raise InvalidParameterError(f"unknown parameter {name!r}")
    return total if not math.isnan(total) else -math.inf


def params_to_values(params: GMCARParams) -> dict[str, float]:
    values = {"rho1": params.rho1, "rho2": params.rho2}
    values.update({f"eta{j}": e for j, e in enumerate(params.eta)})
    values.update({"tau1": params.tau1, "tau2": params.tau2})
    if params.has_noise:
        values.update({"nu1": params.noise_prec1, "nu2": params.noise_prec2})
    values.update({"mu1": params.mu1, "mu2": params.mu2})
    return values


def params_from_values(values: Mapping[str, float]) -> GMCARParams:
    """Assemble a parameter object from a name/value mapping."""
    eta_keys = sorted((k for k in values if k.startswith("eta")), key=lambda k: int(k[3:]))
    eta = tuple(float(values[k]) for k in eta_keys)
    return GMCARParams(
        rho1=float(values["rho1"]),
        rho2=float(values["rho2"]),
        eta=eta,
        tau1=float(values["tau1"]),
        tau2=float(values["tau2"]),
        mu1=values["mu1"],
        mu2=values["mu2"],
        noise_prec1=float(values["nu1"]) if "nu1" in values else None,
        noise_prec2=float(values["nu2"]) if "nu2" in values else None,
    )


def _split_data(data) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(data, (tuple, list)):
        x1, x2 = data
        return np.asarray(x1, dtype=float).ravel(), np.asarray(x2, dtype=float).ravel()
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise InvalidParameterError("data must be an (n, 2) array or an (x1, x2) pair")
    return arr[:, 0].copy(), arr[:, 1].copy()


def log_posterior(values: Mapping[str, float], data, lattice: Lattice, spec: PriorSpec) -> float:
    """Unnormalized log-posterior; ``-inf`` encodes rejection regions."""
    lp = log_prior(values, spec)
    if lp == -math.inf:
        return lp
    x1, x2 = _split_data(data)
    try:
        ll = log_density(x1, x2, params_from_values(values), lattice)
    except (np.linalg.LinAlgError, InvalidParameterError):
        return -math.inf
    if math.isnan(ll):
        return -math.inf
    return lp + ll


@dataclass(frozen=True)
class ChainState:
    """Sampler position: transformed coordinates plus cached target values."""

    z: np.ndarray
    log_post: float  # natural-scale posterior (prior + likelihood)
    log_post_z: float  # target density on the transformed scale
    names: tuple[str, ...]
    transforms: Transforms
    log_target: Callable[[np.ndarray], float] = field(repr=False)

    @property
    def theta(self) -> np.ndarray:
        return self.transforms.inverse(self.z)

    def natural(self) -> dict[str, float]:
        return dict(zip(self.names, self.theta))

    @classmethod
    def from_target(cls, names, transforms: Transforms, theta0, log_target) -> "ChainState":
        z = transforms.forward(np.asarray(theta0, dtype=float))
        lp = float(log_target(transforms.inverse(z)))
        if not math.isfinite(lp):
            raise ChainInitError(f"non-finite target at initial state {dict(zip(names, theta0))}")
        return cls(
            z=z,
            log_post=lp,
            log_post_z=lp + float(transforms.log_jacobian(z)),
            names=tuple(names),
            transforms=transforms,
            log_target=log_target,
        )


def _default_init(
    data, priors: PriorSpec, order: int, include_noise: bool, likelihood: bool
) -> dict[str, float]:
    lo, hi = priors.rho_bounds
    init = {"rho1": 0.5 * (lo + hi), "rho2": 0.5 * (lo + hi)}
    init.update({f"eta{j}": 0.0 for j in range(order + 1)})
    if likelihood:
        x1, x2 = _split_data(data)
        v1, v2 = float(np.var(x1, ddof=1)), float(np.var(x2, ddof=1))
        if not (v1 > 0.0 and v2 > 0.0 and np.isfinite(v1) and np.isfinite(v2)):
            raise ChainInitError("data variance must be positive and finite to initialize")
        split = 2.0 if include_noise else 1.0
        init.update({"tau1": split / v1, "tau2": split / v2})
        if include_noise:
            init.update({"nu1": split / v1, "nu2": split / v2})
        init.update({"mu1": float(np.mean(x1)), "mu2": float(np.mean(x2))})
    else:
        init.update({"tau1": 1.0, "tau2": 1.0})
        if include_noise:
            init.update({"nu1": 1.0, "nu2": 1.0})
        init.update({"mu1": priors.mu_mean, "mu2": priors.mu_mean})
    return init


def gmcar_chain_state(
    data,
    lattice: Lattice,
    priors: PriorSpec,
    order: int = 1,
    include_noise: bool = True,
    likelihood: bool = True,
    init: Mapping[str, float] | None = None,
) -> ChainState:
    """Initial sampler state for the GMCAR posterior (or the bare prior)."""
    if likelihood and data is None:
        raise InvalidParameterError("data is required unless the likelihood is disabled")
    names = parameter_names(order, include_noise)
    transforms = parameter_transforms(names, priors)
    start = _default_init(data, priors, order, include_noise, likelihood)
    if init is not None:
        start.update(init)
    theta0 = np.array([start[name] for name in names])

    if likelihood:
        x1, x2 = _split_data(data)
        if not (np.all(np.isfinite(x1)) and np.all(np.isfinite(x2))):
            raise ChainInitError("data contains non-finite values")

        def target(theta: np.ndarray) -> float:
            values = dict(zip(names, theta))
            lp = log_prior(values, priors)
            if lp == -math.inf:
                return lp
            try:
                ll = log_density(x1, x2, params_from_values(values), lattice)
            except (np.linalg.LinAlgError, InvalidParameterError):
                return -math.inf
            return lp + ll if math.isfinite(ll) else -math.inf

    else:

        def target(theta: np.ndarray) -> float:
            return log_prior(dict(zip(names, theta)), priors)

    try:
        return ChainState.from_target(names, transforms, theta0, target)
    except ChainInitError as exc:
        raise ChainInitError(f"{exc}; check data scaling and prior settings") from None


def _step_inplace(
    z: np.ndarray,
    lp_nat: float,
    lp_z: float,
    transforms: Transforms,
    log_target,
    scales: np.ndarray,
    rng: np.random.Generator,
) -> tuple[float, float, np.ndarray]:
    """One sweep of per-component proposals; mutates ``z``. Returns
    (new natural log-posterior, new transformed-scale value, accepted flags)."""
    k = z.size
    accepted = np.zeros(k, dtype=bool)
    for j in range(k):
        step = scales[j] * rng.standard_normal()
        log_u = np.log(rng.uniform())
        z_prop = z.copy()
        z_prop[j] += step
        lp_nat_prop = float(log_target(transforms.inverse(z_prop)))
        if lp_nat_prop == -math.inf:
            continue
        lp_z_prop = lp_nat_prop + float(transforms.log_jacobian(z_prop))
        if log_u <= lp_z_prop - lp_z:
            z[j] = z_prop[j]
            lp_nat, lp_z = lp_nat_prop, lp_z_prop
            accepted[j] = True
    return lp_nat, lp_z, accepted


def rw_metropolis_step(
    state: ChainState, scales: Mapping[str, float] | np.ndarray, rng: np.random.Generator
) -> tuple[ChainState, dict[str, bool]]:
    """One full component-sweep from a state; returns the new state and
    per-parameter acceptance flags. Reversible for each block by symmetry of
    the Gaussian proposal plus the Jacobian correction."""
    if isinstance(scales, Mapping):
        scale_vec = np.array([float(scales[name]) for name in state.names])
    else:
        scale_vec = np.asarray(scales, dtype=float)
    z = state.z.copy()
    lp_nat, lp_z, accepted = _step_inplace(
        z, state.log_post, state.log_post_z, state.transforms, state.log_target, scale_vec, rng
    )
    new_state = ChainState(
        z=z,
        log_post=lp_nat,
        log_post_z=lp_z,
        names=state.names,
        transforms=state.transforms,
        log_target=state.log_target,
    )
    return new_state, dict(zip(state.names, accepted.tolist()))


@dataclass(frozen=True)
class PosteriorDraws:
    """Stored post-burn-in draws plus derived coefficient samples."""

    names: tuple[str, ...]
    values: np.ndarray  # (n_stored, n_params), natural scale
    rho_sc: np.ndarray
    log_posterior: np.ndarray
    acceptance: dict[str, float]
    scales: dict[str, float]
    config: ChainConfig
    priors: PriorSpec
    order: int
    include_noise: bool

    def __len__(self) -> int:
        return self.values.shape[0]

    def param(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def params_at(self, row: int) -> GMCARParams:
        return params_from_values(dict(zip(self.names, self.values[row])))


def run_chain(
    data,
    lattice: Lattice,
    priors: PriorSpec,
    config: ChainConfig,
    order: int = 1,
    include_noise: bool = True,
    likelihood: bool = True,
    init: Mapping[str, float] | None = None,
) -> PosteriorDraws:
    """Run a single chain and return the stored draws.

    Deterministic given ``config.seed``. During burn-in, proposal scales can
    adapt toward the target acceptance rate (Robbins-Monro on the log scale)
    and are frozen at the end of burn-in; reported acceptance rates cover
    only the post-burn-in phase.
    """
    state = gmcar_chain_state(
        data, lattice, priors, order=order, include_noise=include_noise,
        likelihood=likelihood, init=init,
    )
    names, transforms, log_target = state.names, state.transforms, state.log_target
    k = len(names)
    rng = np.random.default_rng(config.seed)

    scales = np.full(k, float(config.initial_scale))
    if config.scales:
        for j, name in enumerate(names):
            if name in config.scales:
                scales[j] = float(config.scales[name])

    z = state.z.copy()
    lp_nat, lp_z = state.log_post, state.log_post_z
    n_keep = config.n_stored
    values = np.empty((n_keep, k))
    lp_trace = np.empty(n_keep)
    accept_counts = np.zeros(k)
    kept = post_steps = 0

    for t in range(config.iterations):
        lp_nat, lp_z, accepted = _step_inplace(z, lp_nat, lp_z, transforms, log_target, scales, rng)
        if t < config.burn_in:
            if config.adapt:
                gamma = (t + 1.0) ** -0.6
                scales *= np.exp(gamma * (accepted - config.target_acceptance))
        else:
            accept_counts += accepted
            post_steps += 1
            if (t - config.burn_in) % config.thin == 0:
                values[kept] = transforms.inverse(z)
                lp_trace[kept] = lp_nat
                kept += 1

    rho_sc = _coefficient_for_rows(names, values, lattice, include_noise=False)
    return PosteriorDraws(
        names=names,
        values=values,
        rho_sc=rho_sc,
        log_posterior=lp_trace,
        acceptance=dict(zip(names, (accept_counts / post_steps).tolist())),
        scales=dict(zip(names, scales.tolist())),
        config=config,
        priors=priors,
        order=order,
        include_noise=include_noise,
    )


def _coefficient_for_rows(names, values: np.ndarray, lattice: Lattice, include_noise: bool) -> np.ndarray:
    out = np.empty(values.shape[0])
    for i, row in enumerate(values):
        params = params_from_values(dict(zip(names, row)))
        out[i] = spatial_concordance(params, lattice, include_noise=include_noise)
    return out


def plugin_coefficient_draws(
    draws: PosteriorDraws, lattice: Lattice, include_noise: bool = False
) -> np.ndarray:
    """Spatial concordance evaluated at every stored parameter draw."""
    return _coefficient_for_rows(draws.names, draws.values, lattice, include_noise)


def hpd_interval(samples, prob: float = 0.95) -> tuple[float, float]:
    """Shortest interval spanning ``ceil(prob * m)`` consecutive order
    statistics of the samples (empirical highest-density interval). Ties in
    width resolve to the lowest starting point."""
    samples = np.sort(np.asarray(samples, dtype=float).ravel())
    m = samples.size
    if m < 20:
        raise InvalidParameterError(f"need at least 20 samples for an HPD interval, got {m}")
    if not 0.0 < prob < 1.0:
        raise InvalidParameterError("prob must be in (0, 1)")
    k = math.ceil(prob * m)
    widths = samples[k - 1 :] - samples[: m - k + 1]
    i = int(np.argmin(widths))
    return float(samples[i]), float(samples[i + k - 1])


class DICResult(NamedTuple):
    dic: float
    dbar: float
    p_d: float
    plugin_fallback: bool = False


def dic(draws: PosteriorDraws, data, lattice: Lattice) -> DICResult:
    """Deviance information criterion from stored draws.

    Deviance is minus twice the observation log-density with any measurement
    noise marginalized out. The plug-in point is the posterior mean taken on
    the transformed sampling scale and mapped back, which keeps it inside
    the support; if its deviance is non-finite the componentwise median is
    used instead and the result is flagged.
    """
    if len(draws) == 0:
        raise InvalidParameterError("no stored draws")
    x1, x2 = _split_data(data)

    def deviance(row: np.ndarray) -> float:
        params = params_from_values(dict(zip(draws.names, row)))
        return -2.0 * log_density(x1, x2, params, lattice)

    dbar = float(np.mean([deviance(row) for row in draws.values]))
    transforms = parameter_transforms(draws.names, draws.priors)
    z = transforms.forward(draws.values)
    plug = transforms.inverse(z.mean(axis=0))
    d_plug = deviance(plug)
    fallback = False
    if not math.isfinite(d_plug):
        plug = transforms.inverse(np.median(z, axis=0))
        d_plug = deviance(plug)
        fallback = True
    p_d = dbar - d_plug
    return DICResult(dic=dbar + p_d, dbar=dbar, p_d=p_d, plugin_fallback=fallback)


class ParamSummary(NamedTuple):
    mean: float
    sd: float
    hpd_lo: float
    hpd_hi: float


def summarize_draws(draws: PosteriorDraws, prob: float = 0.95) -> dict[str, ParamSummary]:
    """Posterior mean, sd, and HPD interval per parameter and the coefficient."""
    out: dict[str, ParamSummary] = {}
    for j, name in enumerate(draws.names):
        col = draws.values[:, j]
        lo, hi = hpd_interval(col, prob)
        out[name] = ParamSummary(float(col.mean()), float(col.std(ddof=1)), lo, hi)
    lo, hi = hpd_interval(draws.rho_sc, prob)
    out["rho_sc"] = ParamSummary(float(draws.rho_sc.mean()), float(draws.rho_sc.std(ddof=1)), lo, hi)
    return out


def gelman_rubin(chains: Sequence[np.ndarray]) -> float:
    """Potential scale reduction factor across chains of equal length.

    A convergence diagnostic for multi-seed runs; not part of the single
    chain workflow.
    """
    arr = np.asarray([np.asarray(c, dtype=float).ravel() for c in chains])
    m, n = arr.shape
    if m < 2 or n < 2:
        raise InvalidParameterError("need at least two chains of length two")
    means = arr.mean(axis=1)
    b = n * means.var(ddof=1)
    w = arr.var(axis=1, ddof=1).mean()
    var_hat = (n - 1) / n * w + b / n
    return float(np.sqrt(var_hat / w))
