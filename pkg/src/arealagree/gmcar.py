"""Bivariate GMCAR process: covariance blocks, exact log-density, sampling.

The process couples two CAR fields on one lattice. The second component has
precision ``tau2 * (D_w - rho2 * W1)``; the first component, conditionally on
the second, has mean ``mu1 + A (x2 - mu2)`` and precision
``tau1 * (D_w - rho1 * W1)``, with the linking matrix
``A = eta0 * I + sum_j eta_j * W_j`` built from contiguity matrices of
increasing neighbor order. Optional independent Gaussian measurement noise
(parametrized by its *precision*) can sit on top of each component; the
noise is always marginalized analytically, never sampled as a latent field.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .errors import InvalidParameterError
from .lattice import ContiguityMatrix, Lattice, build_contiguity, contiguity_matrices

__all__ = [
    "CARSpec",
    "GMCARParams",
    "CovarianceBlocks",
    "car_precision",
    "linking_matrix",
    "covariance_blocks",
    "joint_covariance",
    "log_density",
    "sample",
    "mean_vector",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


def mean_vector(mu, n: int) -> np.ndarray:
    """Broadcast a scalar or length-``n`` mean to a length-``n`` vector."""
    arr = np.atleast_1d(np.asarray(mu, dtype=float)).ravel()
    if arr.size == 1:
        return np.full(n, arr[0])
    if arr.size != n:
        raise InvalidParameterError(f"mean has length {arr.size}, expected 1 or {n}")
    return arr


@lru_cache(maxsize=64)
def _graph_arrays(lattice: Lattice) -> tuple[np.ndarray, np.ndarray]:
    """Read-only (W1, degree vector) per lattice."""
    w1 = build_contiguity(lattice).values
    dw = w1.sum(axis=1)
    dw.flags.writeable = False
    return w1, dw


@lru_cache(maxsize=128)
def _base_cholesky(lattice: Lattice, rho: float) -> np.ndarray:
    """Lower Cholesky factor of ``D_w - rho * W1``; fails iff not PD."""
    w1, dw = _graph_arrays(lattice)
    g = np.diag(dw) - rho * w1
    chol = np.linalg.cholesky(g)
    chol.flags.writeable = False
    return chol


def _base_logdet(lattice: Lattice, rho: float) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(_base_cholesky(lattice, rho)))))


@dataclass(frozen=True)
class CARSpec:
    """Univariate CAR field on a lattice: precision ``tau * (D_w - rho * W1)``."""

    lattice: Lattice
    rho: float
    tau: float

    def __post_init__(self):
        if not abs(self.rho) < 1.0:
            raise InvalidParameterError(f"|rho| must be < 1, got {self.rho}")
        if not self.tau > 0.0:
            raise InvalidParameterError(f"tau must be > 0, got {self.tau}")

    @property
    def neighbor_weights(self) -> np.ndarray:
        """Row-normalized adjacency ``B = D_w^{-1} W1``."""
        w1, dw = _graph_arrays(self.lattice)
        return w1 / dw[:, None]

    @property
    def conditional_precisions(self) -> np.ndarray:
        """Diagonal of ``D_tau = tau * D_w``."""
        _, dw = _graph_arrays(self.lattice)
        return self.tau * dw


def car_precision(spec: CARSpec) -> np.ndarray:
    """Joint precision ``tau * (D_w - rho * W1)``, verified positive definite."""
    w1, dw = _graph_arrays(spec.lattice)
    _base_cholesky(spec.lattice, spec.rho)  # PD check: Cholesky must succeed
    return spec.tau * (np.diag(dw) - spec.rho * w1)


@dataclass(frozen=True)
class GMCARParams:
    """Full parameter set of the bivariate process.

    ``eta`` holds the linking coefficients ``(eta0, eta1, ..., eta_p)`` where
    ``p`` is the highest neighbor order entering ``A``. ``mu1`` and ``mu2``
    may be scalars (constant mean) or length-``n`` vectors. Noise precisions
    must be supplied together or not at all.
    """

    rho1: float
    rho2: float
    eta: tuple[float, ...]
    tau1: float
    tau2: float
    mu1: float | np.ndarray = 0.0
    mu2: float | np.ndarray = 0.0
    noise_prec1: float | None = None
    noise_prec2: float | None = None

    def __post_init__(self):
        for name in ("rho1", "rho2"):
            if not abs(getattr(self, name)) < 1.0:
                raise InvalidParameterError(f"|{name}| must be < 1, got {getattr(self, name)}")
        for name in ("tau1", "tau2"):
            if not getattr(self, name) > 0.0:
                raise InvalidParameterError(f"{name} must be > 0, got {getattr(self, name)}")
        object.__setattr__(self, "eta", tuple(float(e) for e in np.atleast_1d(self.eta)))
        if len(self.eta) < 1:
            raise InvalidParameterError("eta must contain at least eta0")
        if (self.noise_prec1 is None) != (self.noise_prec2 is None):
            raise InvalidParameterError("noise precisions must be given for both components")
        for name in ("noise_prec1", "noise_prec2"):
            v = getattr(self, name)
            if v is not None and not v > 0.0:
                raise InvalidParameterError(f"{name} must be > 0, got {v}")

    @property
    def order(self) -> int:
        """Highest neighbor order used by the linking matrix."""
        return len(self.eta) - 1

    @property
    def has_noise(self) -> bool:
        return self.noise_prec1 is not None


@dataclass(frozen=True)
class CovarianceBlocks:
    """Blocks of the 2n x 2n spatial covariance and their building pieces.

    ``sigma12 = linking @ sigma22`` and
    ``sigma11 = conditional + linking @ sigma22 @ linking.T`` by construction.
    """

    sigma11: np.ndarray
    sigma12: np.ndarray
    sigma22: np.ndarray
    conditional: np.ndarray
    linking: np.ndarray

    @property
    def n(self) -> int:
        return self.sigma22.shape[0]


def linking_matrix(eta, contiguity: list[ContiguityMatrix] | tuple, n: int | None = None) -> np.ndarray:
    """Assemble ``A = eta0 * I + sum_j eta_j * W_j``.

    ``contiguity`` supplies ``(W_1, ..., W_p)``; ``len(eta)`` must equal
    ``1 + len(contiguity)``. ``n`` is only required when no contiguity
    matrices are given.
    """
    eta = tuple(float(e) for e in np.atleast_1d(eta))
    mats = [w.values if isinstance(w, ContiguityMatrix) else np.asarray(w, dtype=float) for w in contiguity]
    if len(eta) != 1 + len(mats):
        raise InvalidParameterError(
            f"eta has {len(eta)} entries but {len(mats)} contiguity matrices were given"
        )
    if mats:
        n = mats[0].shape[0]
    elif n is None:
        raise InvalidParameterError("n is required when no contiguity matrices are given")
    a = eta[0] * np.eye(n)
    for coef, w in zip(eta[1:], mats):
        a = a + coef * w
    return a


def _spd_inverse(lattice: Lattice, rho: float, tau: float) -> np.ndarray:
    """Inverse of ``tau * (D_w - rho * W1)`` via the cached Cholesky factor."""
    chol = _base_cholesky(lattice, rho)
    inv = cho_solve((np.asarray(chol), True), np.eye(lattice.n)) / tau
    return 0.5 * (inv + inv.T)


def covariance_blocks(params: GMCARParams, lattice: Lattice) -> CovarianceBlocks:
    """Spatial covariance blocks implied by the parameters (noise excluded)."""
    order = params.order
    mats = contiguity_matrices(lattice, max(order, 1))
    a = linking_matrix(params.eta, mats[:order], n=lattice.n)
    sigma22 = _spd_inverse(lattice, params.rho2, params.tau2)
    conditional = _spd_inverse(lattice, params.rho1, params.tau1)
    sigma12 = a @ sigma22
    sigma11 = conditional + sigma12 @ a.T
    sigma11 = 0.5 * (sigma11 + sigma11.T)
    return CovarianceBlocks(
        sigma11=sigma11, sigma12=sigma12, sigma22=sigma22, conditional=conditional, linking=a
    )


def joint_covariance(blocks: CovarianceBlocks, params: GMCARParams) -> np.ndarray:
    """Full 2n x 2n covariance; adds ``1/noise_prec`` to the diagonal when present."""
    top = blocks.sigma11.copy()
    bottom = blocks.sigma22.copy()
    if params.has_noise:
        idx = np.arange(blocks.n)
        top[idx, idx] += 1.0 / params.noise_prec1
        bottom[idx, idx] += 1.0 / params.noise_prec2
    return np.block([[top, blocks.sigma12], [blocks.sigma12.T, bottom]])


def _apply_linking(params: GMCARParams, lattice: Lattice, v: np.ndarray) -> np.ndarray:
    """``A @ v`` without materializing A."""
    mats = contiguity_matrices(lattice, max(params.order, 1))
    out = params.eta[0] * v
    for coef, w in zip(params.eta[1:], mats):
        out = out + coef * (w.values @ v)
    return out


def log_density(x1, x2, params: GMCARParams, lattice: Lattice) -> float:
    """Exact joint log-density of the observation pair.

    Without noise this is the factorized form: conditional Gaussian of the
    first component given the second, times the marginal CAR of the second,
    both evaluated through quadratic forms and Cholesky log-determinants.
    With noise the Gaussian marginal (spatial covariance plus diagonal noise)
    is evaluated through the latent-field precision, so no covariance block
    is ever inverted explicitly.
    """
    n = lattice.n
    x1 = np.asarray(x1, dtype=float).ravel()
    x2 = np.asarray(x2, dtype=float).ravel()
    if x1.size != n or x2.size != n:
        raise InvalidParameterError(f"observation vectors must have length {n}")
    mu1 = mean_vector(params.mu1, n)
    mu2 = mean_vector(params.mu2, n)
    w1, dw = _graph_arrays(lattice)

    s = x2 - mu2
    if not params.has_noise:
        r = x1 - mu1 - _apply_linking(params, lattice, s)
        quad1 = params.tau1 * (np.dot(dw * r, r) - params.rho1 * np.dot(r, w1 @ r))
        quad2 = params.tau2 * (np.dot(dw * s, s) - params.rho2 * np.dot(s, w1 @ s))
        logdet1 = n * np.log(params.tau1) + _base_logdet(lattice, params.rho1)
        logdet2 = n * np.log(params.tau2) + _base_logdet(lattice, params.rho2)
        return float(0.5 * (logdet1 + logdet2 - quad1 - quad2) - n * _LOG_2PI)

    # Marginal with noise: covariance C = Q_phi^{-1} + P^{-1} with P the
    # diagonal noise precision, handled via
    #   C^{-1} = P - P (Q_phi + P)^{-1} P
    #   log det C = log det(Q_phi + P) - log det Q_phi - log det P
    # and log det Q_phi splits over the two CAR factors.
    mats = contiguity_matrices(lattice, max(params.order, 1))
    a = linking_matrix(params.eta, mats[: params.order], n=n)
    q1 = params.tau1 * (np.diag(dw) - params.rho1 * w1)
    q2 = params.tau2 * (np.diag(dw) - params.rho2 * w1)
    q1a = q1 @ a
    q_phi = np.block([[q1, -q1a], [-q1a.T, q2 + a.T @ q1a]])
    p_diag = np.concatenate(
        [np.full(n, params.noise_prec1), np.full(n, params.noise_prec2)]
    )
    m = q_phi + np.diag(p_diag)
    chol_m = np.linalg.cholesky(m)
    d = np.concatenate([x1 - mu1, x2 - mu2])
    pd = p_diag * d
    half = solve_triangular(chol_m, pd, lower=True)
    quad = float(np.dot(d, pd) - np.dot(half, half))
    logdet_q = (
        n * np.log(params.tau1)
        + _base_logdet(lattice, params.rho1)
        + n * np.log(params.tau2)
        + _base_logdet(lattice, params.rho2)
    )
    logdet_c = 2.0 * float(np.sum(np.log(np.diag(chol_m)))) - logdet_q - float(np.sum(np.log(p_diag)))
    return float(-0.5 * (2 * n * _LOG_2PI + logdet_c + quad))


def sample(params: GMCARParams, lattice: Lattice, rng: np.random.Generator, size: int | None = None):
    """Draw from the process: ``(x1, x2)`` vectors, or ``(size, n)`` arrays.

    The spatial pair is generated through the conditional factorization
    (second component first, then the linked conditional for the first);
    measurement noise, when present, is added independently to each
    component afterwards. Deterministic for a given generator state.
    """
    n = lattice.n
    blocks = covariance_blocks(params, lattice)
    l22 = np.linalg.cholesky(blocks.sigma22)
    lcond = np.linalg.cholesky(blocks.conditional)
    mu1 = mean_vector(params.mu1, n)
    mu2 = mean_vector(params.mu2, n)

    m = 1 if size is None else int(size)
    phi2 = (l22 @ rng.standard_normal((n, m)))
    phi1 = blocks.linking @ phi2 + lcond @ rng.standard_normal((n, m))
    x1 = mu1[:, None] + phi1
    x2 = mu2[:, None] + phi2
    if params.has_noise:
        x1 = x1 + rng.standard_normal((n, m)) / np.sqrt(params.noise_prec1)
        x2 = x2 + rng.standard_normal((n, m)) / np.sqrt(params.noise_prec2)
    if size is None:
        return x1[:, 0], x2[:, 0]
    return x1.T, x2.T
