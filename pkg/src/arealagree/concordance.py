"""Agreement coefficients: scalar, weighted multivariate, and spatial.

The scalar coefficient rescales the expected squared difference between two
measurements against its value under zero covariance,

    rho_c = 2*cov12 / (var1 + var2 + (mu1 - mu2)^2),

and factors as ``rho_c = rho * C`` with the bias-correction factor
``C = 2 / (v + 1/v + u^2)``, ``v = sd1/sd2``, ``u = (mu1-mu2)/sqrt(sd1*sd2)``.
The multivariate version weighs paired vectors with a non-negative definite
matrix ``D``; the spatial version evaluates it with ``D = J_n`` (all ones)
on the covariance blocks of a GMCAR process, so every trace reduces to a
grand sum of matrix entries.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateInputError, InvalidParameterError
from .gmcar import (
    CovarianceBlocks,
    GMCARParams,
    covariance_blocks,
    linking_matrix,
    mean_vector,
)
from .lattice import Lattice, contiguity_matrices

__all__ = [
    "LinInputs",
    "ConcordanceWeights",
    "LinResult",
    "MonteCarloConcordance",
    "lin_concordance",
    "multivariate_concordance",
    "spatial_concordance",
    "mc_concordance_oracle",
]


@dataclass(frozen=True)
class LinInputs:
    """Moments of a bivariate normal pair: means, variances, covariance."""

    mu1: float
    mu2: float
    var1: float
    var2: float
    cov12: float

    def __post_init__(self):
        if not (self.var1 > 0.0 and self.var2 > 0.0):
            raise InvalidParameterError("variances must be strictly positive")
        bound = np.sqrt(self.var1 * self.var2)
        if abs(self.cov12) > bound * (1.0 + 1e-12):
            raise InvalidParameterError("|cov12| exceeds sqrt(var1*var2)")


@dataclass(frozen=True)
class ConcordanceWeights:
    """Symmetric non-negative definite weight matrix for paired vectors."""

    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise InvalidParameterError("weight matrix must be square")
        if not np.allclose(d, d.T, rtol=0.0, atol=1e-12):
            raise InvalidParameterError("weight matrix must be symmetric")
        if np.linalg.eigvalsh(d).min() < -1e-10:
            raise InvalidParameterError("weight matrix must be non-negative definite")
        d = d.copy()
        d.flags.writeable = False
        object.__setattr__(self, "d", d)

    @classmethod
    def uniform(cls, n: int) -> "ConcordanceWeights":
        """The all-ones matrix ``J_n``, the canonical spatial weighting."""
        return cls(d=np.ones((n, n)))


class LinResult(NamedTuple):
    rho_c: float
    rho: float
    c: float
    v: float
    u: float


class MonteCarloConcordance(NamedTuple):
    estimate: float
    stderr: float
    n_draws: int


def lin_concordance(inputs: LinInputs) -> LinResult:
    """Scalar concordance coefficient with its accuracy/precision components."""
    sd1 = np.sqrt(inputs.var1)
    sd2 = np.sqrt(inputs.var2)
    rho = inputs.cov12 / (sd1 * sd2)
    v = sd1 / sd2
    u = (inputs.mu1 - inputs.mu2) / np.sqrt(sd1 * sd2)
    c = 2.0 / (v + 1.0 / v + u * u)
    rho_c = 2.0 * inputs.cov12 / (inputs.var1 + inputs.var2 + (inputs.mu1 - inputs.mu2) ** 2)
    return LinResult(rho_c=float(rho_c), rho=float(rho), c=float(c), v=float(v), u=float(u))


def _trace_product(d: np.ndarray, m: np.ndarray) -> float:
    # Tr[D M] = sum_ij D_ij M_ji, no matrix product needed
    return float(np.sum(d * m.T))


def _unpack_blocks(blocks):
    if isinstance(blocks, (tuple, list)):
        s11, s12, s22 = blocks
        return np.asarray(s11, float), np.asarray(s12, float), np.asarray(s22, float)
    return blocks.sigma11, blocks.sigma12, blocks.sigma22


def multivariate_concordance(mu1, mu2, blocks, weights) -> float:
    """Weighted concordance between two jointly Gaussian vectors.

    ``blocks`` is a :class:`~arealagree.gmcar.CovarianceBlocks` or a
    ``(sigma11, sigma12, sigma22)`` triple; ``weights`` a
    :class:`ConcordanceWeights` or raw matrix. Reduces to
    :func:`lin_concordance` when n = 1.
    """
    s11, s12, s22 = _unpack_blocks(blocks)
    if not isinstance(weights, ConcordanceWeights):
        weights = ConcordanceWeights(d=np.asarray(weights, dtype=float))
    d = weights.d
    n = d.shape[0]
    mu1 = mean_vector(mu1, n)
    mu2 = mean_vector(mu2, n)
    delta = mu1 - mu2
    numerator = _trace_product(d, s12) + _trace_product(d, s12.T)
    denominator = _trace_product(d, s11) + _trace_product(d, s22) + float(delta @ (d @ delta))
    if denominator == 0.0:
        raise DegenerateInputError("zero denominator: no dispersion and equal means")
    return numerator / denominator


def spatial_concordance(params: GMCARParams, lattice: Lattice, include_noise: bool = False) -> float:
    """Concordance of a GMCAR pair under the all-ones weighting.

    Evaluated on the spatial covariance blocks; measurement-noise variance is
    excluded unless ``include_noise`` is set (it then enlarges the
    denominator only, since noise is independent across components).
    """
    blocks = covariance_blocks(params, lattice)
    n = lattice.n
    delta = mean_vector(params.mu1, n) - mean_vector(params.mu2, n)
    numerator = 2.0 * float(blocks.sigma12.sum())
    denominator = float(blocks.sigma11.sum()) + float(blocks.sigma22.sum()) + float(delta.sum()) ** 2
    if include_noise and params.has_noise:
        denominator += n / params.noise_prec1 + n / params.noise_prec2
    return numerator / denominator


def _precision_draws(params: GMCARParams, lattice: Lattice, rng, m: int):
    """Vectorized draws through the conditional precision factorization.

    Independent of :func:`~arealagree.gmcar.covariance_blocks`: no covariance
    matrix is formed, only Cholesky factors of the two CAR precisions.
    """
    from .gmcar import _base_cholesky  # local import: private helper reuse

    n = lattice.n
    l1 = np.asarray(_base_cholesky(lattice, params.rho1)) * np.sqrt(params.tau1)
    l2 = np.asarray(_base_cholesky(lattice, params.rho2)) * np.sqrt(params.tau2)
    mats = contiguity_matrices(lattice, max(params.order, 1))
    a = linking_matrix(params.eta, mats[: params.order], n=n)
    phi2 = solve_triangular(l2.T, rng.standard_normal((n, m)), lower=False)
    phi1 = a @ phi2 + solve_triangular(l1.T, rng.standard_normal((n, m)), lower=False)
    x1 = mean_vector(params.mu1, n)[:, None] + phi1
    x2 = mean_vector(params.mu2, n)[:, None] + phi2
    if params.has_noise:
        x1 = x1 + rng.standard_normal((n, m)) / np.sqrt(params.noise_prec1)
        x2 = x2 + rng.standard_normal((n, m)) / np.sqrt(params.noise_prec2)
    return x1, x2


def mc_concordance_oracle(
    params: GMCARParams,
    lattice: Lattice,
    n_draws: int,
    rng: np.random.Generator,
    chunk: int = 50_000,
) -> MonteCarloConcordance:
    """Monte Carlo estimate of the spatial coefficient from its definition.

    Estimates ``1 - E[q] / E0[q]`` with ``q = (sum(x1 - x2))^2``, where the
    numerator expectation is over the joint process and the reference one
    over the independence coupling (same marginals, zero cross-covariance),
    realized by pairing components from two independent joint draws. Returns
    the estimate with a delta-method standard error.
    """
    if n_draws < 1_000:
        raise InvalidParameterError("n_draws must be at least 1000")
    joint = np.empty(n_draws)
    decoupled = np.empty(n_draws)
    done = 0
    while done < n_draws:
        m = min(chunk, n_draws - done)
        x1, x2 = _precision_draws(params, lattice, rng, m)
        joint[done : done + m] = (x1 - x2).sum(axis=0) ** 2
        y1, _ = _precision_draws(params, lattice, rng, m)
        _, y2 = _precision_draws(params, lattice, rng, m)
        decoupled[done : done + m] = (y1 - y2).sum(axis=0) ** 2
        done += m
    a_bar = joint.mean()
    b_bar = decoupled.mean()
    estimate = 1.0 - a_bar / b_bar
    var = joint.var(ddof=1) / (n_draws * b_bar**2) + (
        a_bar**2 * decoupled.var(ddof=1) / (n_draws * b_bar**4)
    )
    return MonteCarloConcordance(estimate=float(estimate), stderr=float(np.sqrt(var)), n_draws=n_draws)
