"""Design-based survey estimators: Horvitz-Thompson and the SAE composite.

The HT estimator weights each sampled value by its inverse inclusion
probability, giving design-unbiased estimates of population totals and
means. The small-area composite blends a direct survey rate with a
regression-based synthetic rate,

    r_sae = (1 - lam) * r_dir + lam * r_syn,
    lam   = var_dir / (var_dir + var_syn).

Note the weight uses the synthetic rate's *variance* in the denominator,
not a mean squared error against the truth; callers following the classical
composite-estimator convention should supply MSEs as the variance inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError, DegenerateInputError, InvalidParameterError, SingularDesignError

__all__ = [
    "FinitePopulation",
    "SurveySample",
    "SAEInputs",
    "ht_total",
    "ht_mean",
    "synthetic_rate",
    "fit_beta",
    "sae_composite",
    "srs_ht_variance",
    "load_survey_file",
]


@dataclass(frozen=True)
class FinitePopulation:
    """All unit-level values of the study variable in one area."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise InvalidParameterError("population values must be a non-empty vector")
        if not np.all(np.isfinite(v)):
            raise InvalidParameterError("population values must be finite")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def total(self) -> float:
        return float(self.values.sum())

    @property
    def mean(self) -> float:
        return float(self.values.mean())


@dataclass(frozen=True)
class SurveySample:
    """Sampled units with their values and inclusion probabilities."""

    indices: np.ndarray
    y: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        y = np.asarray(self.y, dtype=float)
        pi = np.asarray(self.pi, dtype=float)
        if not (idx.shape == y.shape == pi.shape) or idx.ndim != 1:
            raise InvalidParameterError("indices, y, pi must be vectors of equal length")
        if len(np.unique(idx)) != idx.size:
            raise InvalidParameterError("sample indices must be distinct")
        if np.any(pi <= 0.0) or np.any(pi > 1.0):
            raise InvalidParameterError("inclusion probabilities must lie in (0, 1]")
        for name, arr in (("indices", idx), ("y", y), ("pi", pi)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @classmethod
    def from_population(cls, population: FinitePopulation, indices, pi) -> "SurveySample":
        idx = np.asarray(indices, dtype=int)
        return cls(indices=idx, y=population.values[idx], pi=np.asarray(pi, dtype=float))


@dataclass(frozen=True)
class SAEInputs:
    """Ingredients of the composite small-area rate.

    ``r_syn`` may be given directly or left as None to be derived from the
    auxiliary covariates ``x`` and regression coefficients ``beta``.
    """

    r_dir: float
    var_dir: float
    r_syn: float | None = None
    var_syn: float = 0.0
    x: np.ndarray | None = None
    beta: np.ndarray | None = None

    def __post_init__(self):
        if self.var_dir < 0.0 or self.var_syn < 0.0:
            raise InvalidParameterError("variances must be non-negative")
        if self.r_syn is None:
            if self.x is None or self.beta is None:
                raise InvalidParameterError("either r_syn or (x, beta) must be supplied")
            object.__setattr__(self, "r_syn", synthetic_rate(self.x, self.beta))
        if self.var_dir == 0.0 and self.var_syn == 0.0:
            raise DegenerateInputError("both variances are zero; composite weight undefined")


def ht_total(sample: SurveySample) -> float:
    """Inverse-probability weighted estimate of the population total."""
    return float(np.sum(sample.y / sample.pi))


def ht_mean(sample: SurveySample, population_size: int) -> float:
    """HT total scaled by the population size: the estimated rate."""
    if population_size < sample.y.size or population_size < 1:
        raise InvalidParameterError("population size must be >= sample size and positive")
    return ht_total(sample) / population_size


def synthetic_rate(x, beta) -> float:
    """Linear prediction ``x . beta`` from auxiliary data."""
    x = np.asarray(x, dtype=float).ravel()
    beta = np.asarray(beta, dtype=float).ravel()
    if x.size != beta.size:
        raise InvalidParameterError(f"covariate length {x.size} != coefficient length {beta.size}")
    return float(x @ beta)


def fit_beta(design_matrix, responses) -> np.ndarray:
    """Least-squares coefficients via a stable orthogonal factorization."""
    a = np.asarray(design_matrix, dtype=float)
    b = np.asarray(responses, dtype=float).ravel()
    if a.ndim != 2 or a.shape[0] < a.shape[1]:
        raise SingularDesignError("design matrix needs at least as many rows as columns")
    beta, _, rank, _ = np.linalg.lstsq(a, b, rcond=None)
    if rank < a.shape[1]:
        raise SingularDesignError(f"design matrix rank {rank} < {a.shape[1]} columns")
    return beta


def sae_composite(inputs: SAEInputs) -> tuple[float, float]:
    """Composite weight and rate: ``(lam, (1-lam) r_dir + lam r_syn)``."""
    lam = inputs.var_dir / (inputs.var_dir + inputs.var_syn)
    return float(lam), float((1.0 - lam) * inputs.r_dir + lam * inputs.r_syn)


def srs_ht_variance(sample_values, sample_size: int, population_size: int) -> float:
    """Variance of the HT mean under simple random sampling without
    replacement, using the sample variance: ``(1 - n/N) s^2 / n``.

    Convenience only; the composite inputs are normally caller-supplied.
    """
    y = np.asarray(sample_values, dtype=float)
    n, big_n = int(sample_size), int(population_size)
    if not 1 < n <= big_n:
        raise InvalidParameterError("need 1 < n <= N")
    return float((1.0 - n / big_n) * np.var(y, ddof=1) / n)


def load_survey_file(path: str | Path, header: bool = False):
    """Read ``id,y,pi`` lines into (ids, values, inclusion probabilities).

    ``#`` starts a comment; blank lines are skipped. Population files can use
    ``pi = 1`` throughout.
    """
    path = Path(path)
    ids: list[str] = []
    y: list[float] = []
    pi: list[float] = []
    skipped_header = not header
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if not skipped_header:
                skipped_header = True
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != 3:
                raise DataFormatError(f"{path.name}:{lineno}: expected 'id,y,pi'")
            try:
                ids.append(parts[0])
                y.append(float(parts[1]))
                pi.append(float(parts[2]))
            except ValueError as exc:
                raise DataFormatError(f"{path.name}:{lineno}: {exc}") from None
    if not ids:
        raise DataFormatError(f"{path.name}: empty file")
    return ids, np.array(y), np.array(pi)
