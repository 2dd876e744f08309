"""Command line interface: fit, compare, simulate, plot-data.

File conventions
----------------
Adjacency files list one edge per line as ``ID1,ID2`` (``#`` comments,
optional header). Data files are comma-separated with a header row and
``unit_id,rate1,rate2`` columns, where ``rate1`` is the conditioned
sequence (e.g. the small-area estimate) and ``rate2`` the reference (e.g.
the direct survey estimate); ``--swap`` reverses that convention. All
emitted tables are comma-separated text with ``#`` provenance comments;
the fit summary is a JSON document.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import functools
import hashlib
import json
import sys
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import (
    ChainInitError,
    DataFormatError,
    DegenerateInputError,
    InvalidParameterError,
    LatticeError,
)
from .estimator import GMCARConcordance
from .gmcar import GMCARParams, sample as gmcar_sample
from .lattice import Lattice, grid_lattice, load_adjacency
from .mcmc import PriorSpec, hpd_interval
from .concordance import spatial_concordance

__all__ = ["main", "RunConfig", "ResultBundle", "load_paired_data", "run_fit"]


@dataclass(frozen=True)
class RunConfig:
    """Everything one fit needs; hashed (minus paths) into file provenance."""

    adjacency_path: str
    data_path: str
    model_order: int = 1
    iterations: int = 30_000
    burn_in: int = 15_000
    thin: int = 1
    seed: int = 0
    mu_prior_mean: float = 0.0
    include_noise: bool = True
    include_noise_in_coefficient: bool = False
    swap: bool = False
    adjacency_header: bool = False
    output_dir: str = "."
    hpd_prob: float = 0.95

    def __post_init__(self):
        if self.model_order not in (1, 2, 3):
            raise InvalidParameterError("model order must be 1, 2, or 3")
        for p in (self.adjacency_path, self.data_path):
            if not Path(p).is_file():
                raise DataFormatError(f"no such file: {p}")

    def config_hash(self) -> str:
        payload = asdict(self)
        payload.pop("output_dir")
        payload["adjacency_path"] = Path(self.adjacency_path).name
        payload["data_path"] = Path(self.data_path).name
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()
        return digest[:16]


@dataclass
class ResultBundle:
    """Posterior summaries of one fit, as written to the summary file."""

    n_units: int
    order: int
    parameters: dict
    coefficient: dict
    dic: dict
    acceptance: dict
    provenance: dict
    unit_ids: tuple[str, ...] = field(default=())


def load_paired_data(path: str | Path, lattice: Lattice, swap: bool = False) -> np.ndarray:
    """Read a header-led ``unit_id,rate1,rate2`` file aligned to the lattice.

    Every lattice unit must appear exactly once; unknown or repeated IDs and
    non-numeric or non-finite values are input errors. Rates outside [0, 1]
    only warn, since the model itself is Gaussian.
    """
    path = Path(path)
    rows: dict[str, tuple[float, float]] = {}
    with path.open(encoding="utf-8") as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.strip().startswith("#")]
    if len(lines) < 2:
        raise DataFormatError(f"{path.name}: expected a header plus data rows")
    for lineno, line in enumerate(lines[1:], start=2):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 3:
            raise DataFormatError(f"{path.name}:{lineno}: expected 'unit_id,rate1,rate2'")
        uid = parts[0]
        if uid in rows:
            raise DataFormatError(f"{path.name}:{lineno}: duplicate unit {uid!r}")
        try:
            r1, r2 = float(parts[1]), float(parts[2])
        except ValueError:
            raise DataFormatError(f"{path.name}:{lineno}: non-numeric rate") from None
        if not (np.isfinite(r1) and np.isfinite(r2)):
            raise DataFormatError(f"{path.name}:{lineno}: non-finite rate for unit {uid!r}")
        rows[uid] = (r2, r1) if swap else (r1, r2)
    known = set(lattice.unit_ids)
    unknown = sorted(set(rows) - known)
    if unknown:
        raise DataFormatError(f"{path.name}: units not in the adjacency file: {unknown[:5]}")
    missing = sorted(known - set(rows))
    if missing:
        raise DataFormatError(f"{path.name}: units missing from the data file: {missing[:5]}")
    x = np.array([rows[uid] for uid in lattice.unit_ids])
    if np.any((x < 0.0) | (x > 1.0)):
        warnings.warn(f"{path.name}: some rates fall outside [0, 1]")
    return x


def _provenance(seed: int, cfg_hash: str) -> dict:
    return {
        "package": "arealagree",
        "version": __version__,
        "seed": int(seed),
        "config_sha256": cfg_hash,
    }


def _comment_lines(prov: dict) -> list[str]:
    return [
        f"# {prov['package']} v{prov['version']}",
        f"# seed={prov['seed']} config_sha256={prov['config_sha256']}",
    ]


def _write_table(path: Path, columns: list[str], rows, prov: dict) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for line in _comment_lines(prov):
            fh.write(line + "\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row) + "\n")


def read_table(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read back a table written by this CLI: (column names, value array)."""
    lines = [ln.strip() for ln in Path(path).open(encoding="utf-8") if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise DataFormatError(f"{path}: empty table")
    columns = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return columns, data


def run_fit(config: RunConfig, echo=lambda msg: None) -> ResultBundle:
    """Fit one model order and write summary/draws/coefficient/trace files."""
    lattice = load_adjacency(config.adjacency_path, header=config.adjacency_header)
    x = load_paired_data(config.data_path, lattice, swap=config.swap)
    priors = PriorSpec(mu_mean=config.mu_prior_mean)
    est = GMCARConcordance(
        lattice=lattice,
        order=config.model_order,
        include_noise=config.include_noise,
        priors=priors,
        iterations=config.iterations,
        burn_in=config.burn_in,
        thin=config.thin,
        seed=config.seed,
        hpd_prob=config.hpd_prob,
        include_noise_in_coefficient=config.include_noise_in_coefficient,
    ).fit(x)

    prov = _provenance(config.seed, config.config_hash())
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    draws = est.draws_
    stored_iters = config.burn_in + np.arange(len(draws)) * config.thin
    _write_table(
        out / "draws.csv",
        list(draws.names),
        (row for row in draws.values),
        prov,
    )
    _write_table(out / "rho_sc_draws.csv", ["rho_sc"], ([v] for v in est.coefficient_draws_), prov)
    _write_table(
        out / "trace.csv",
        ["iteration", "log_posterior"],
        ((int(t), lp) for t, lp in zip(stored_iters, draws.log_posterior)),
        prov,
    )

    summary = {name: s._asdict() for name, s in est.summary_.items()}
    coefficient = summary.pop("rho_sc")
    if est.include_noise_in_coefficient:
        lo, hi = est.coefficient_hpd_
        coefficient = {
            "mean": est.coefficient_mean_,
            "sd": float(est.coefficient_draws_.std(ddof=1)),
            "hpd_lo": lo,
            "hpd_hi": hi,
        }
    bundle = ResultBundle(
        n_units=lattice.n,
        order=config.model_order,
        parameters=summary,
        coefficient=coefficient,
        dic={"dic": est.dic_.dic, "dbar": est.dic_.dbar, "p_d": est.dic_.p_d,
             "plugin_fallback": est.dic_.plugin_fallback},
        acceptance=est.acceptance_,
        provenance=prov,
        unit_ids=lattice.unit_ids,
    )
    (out / "summary.json").write_text(json.dumps(asdict(bundle), indent=2, sort_keys=True) + "\n")
    echo(
        f"n={lattice.n} order={config.model_order} "
        f"rho_sc mean={bundle.coefficient['mean']:.4f} "
        f"hpd=({bundle.coefficient['hpd_lo']:.4f}, {bundle.coefficient['hpd_hi']:.4f}) "
        f"dic={bundle.dic['dic']:.2f}"
    )
    return bundle


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (DataFormatError, LatticeError, InvalidParameterError, DegenerateInputError,
                FileNotFoundError) as exc:
            click.echo(f"input error: {exc}", err=True)
            sys.exit(2)
        except (ChainInitError, np.linalg.LinAlgError, FloatingPointError, OverflowError) as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(3)

    return wrapper


@click.group()
@click.version_option(version=__version__)
def main():
    """Spatial agreement between two areal sequences."""


_fit_options = [
    click.option("--adjacency", "adjacency_path", required=True, help="edge-list file"),
    click.option("--data", "data_path", required=True, help="unit_id,rate1,rate2 file"),
    click.option("--iterations", default=30_000, show_default=True),
    click.option("--burn-in", "burn_in", default=15_000, show_default=True),
    click.option("--thin", default=1, show_default=True),
    click.option("--seed", required=True, type=int),
    click.option("--mu-prior-mean", "mu_prior_mean", required=True, type=float,
                 help="prior mean for both sequence means (declared, never inferred)"),
    click.option("--include-noise/--no-noise", "include_noise", default=True, show_default=True),
    click.option("--include-noise-in-coefficient", is_flag=True),
    click.option("--swap", is_flag=True, help="swap the two rate columns"),
    click.option("--adjacency-header", is_flag=True, help="adjacency file has a header line"),
    click.option("--out", "output_dir", envvar="AREALAGREE_OUT", default=".", show_default=True),
]


def _with_options(options):
    def deco(fn):
        for opt in reversed(options):
            fn = opt(fn)
        return fn

    return deco


@main.command("fit")
@_with_options(_fit_options)
@click.option("--order", "model_order", type=click.IntRange(1, 3), default=1, show_default=True)
@_guarded
def cmd_fit(**kwargs):
    """Fit one model and write summary, draws, coefficient, and trace files."""
    config = RunConfig(**kwargs)
    run_fit(config, echo=click.echo)


@main.command("compare")
@_with_options(_fit_options)
@click.option("--orders", default="1,2,3", show_default=True,
              help="comma-separated linking orders to fit")
@_guarded
def cmd_compare(orders, **kwargs):
    """Fit several linking orders and rank them by DIC (lowest wins)."""
    order_list = [int(tok) for tok in orders.split(",") if tok.strip()]
    if len(order_list) < 2:
        raise InvalidParameterError("compare needs at least two orders")
    out = Path(kwargs.pop("output_dir"))
    seed = kwargs.pop("seed")
    results = []
    for order in order_list:
        child_seed = int(np.random.SeedSequence([seed, order]).generate_state(1)[0])
        config = RunConfig(
            model_order=order, seed=child_seed,
            output_dir=str(out / f"order{order}"), **kwargs,
        )
        bundle = run_fit(config)
        results.append((order, bundle))
        click.echo(f"order {order}: dic={bundle.dic['dic']:.3f}")
    dics = [b.dic["dic"] for _, b in results]
    best = int(np.argmin(dics))  # ties resolve to the lowest order listed first
    prov = _provenance(seed, hashlib.sha256(orders.encode()).hexdigest()[:16])
    _write_table(
        out / "dic_table.csv",
        ["order", "dic", "dbar", "p_d", "selected"],
        (
            (order, b.dic["dic"], b.dic["dbar"], b.dic["p_d"], int(i == best))
            for i, (order, b) in enumerate(results)
        ),
        prov,
    )
    click.echo(f"selected order {results[best][0]} (lowest DIC)")


@main.command("simulate")
@click.option("--grid", "grid_spec", default=None, help="ROWSxCOLS rook lattice, e.g. 3x3")
@click.option("--adjacency", "adjacency_path", default=None, help="edge-list file")
@click.option("--adjacency-header", is_flag=True)
@click.option("--rho1", default=0.5, show_default=True)
@click.option("--rho2", default=0.5, show_default=True)
@click.option("--eta", default="0.4,0.1", show_default=True, help="eta0,eta1,... (order implied)")
@click.option("--tau1", default=1.0, show_default=True)
@click.option("--tau2", default=1.0, show_default=True)
@click.option("--mu1", default=0.0, show_default=True)
@click.option("--mu2", default=0.0, show_default=True)
@click.option("--noise-prec1", default=None, type=float)
@click.option("--noise-prec2", default=None, type=float)
@click.option("--seed", required=True, type=int)
@click.option("--out", "output_dir", envvar="AREALAGREE_OUT", default=".", show_default=True)
@_guarded
def cmd_simulate(grid_spec, adjacency_path, adjacency_header, rho1, rho2, eta, tau1, tau2,
                 mu1, mu2, noise_prec1, noise_prec2, seed, output_dir):
    """Draw one paired dataset from known parameters, with its ground truth."""
    if (grid_spec is None) == (adjacency_path is None):
        raise InvalidParameterError("give exactly one of --grid or --adjacency")
    if grid_spec is not None:
        try:
            rows, cols = (int(tok) for tok in grid_spec.lower().split("x"))
        except ValueError:
            raise InvalidParameterError(f"bad grid spec {grid_spec!r}, expected ROWSxCOLS") from None
        lattice = grid_lattice(rows, cols)
    else:
        lattice = load_adjacency(adjacency_path, header=adjacency_header)
    eta_tuple = tuple(float(tok) for tok in eta.split(","))
    params = GMCARParams(
        rho1=rho1, rho2=rho2, eta=eta_tuple, tau1=tau1, tau2=tau2,
        mu1=mu1, mu2=mu2, noise_prec1=noise_prec1, noise_prec2=noise_prec2,
    )
    rng = np.random.default_rng(seed)
    x1, x2 = gmcar_sample(params, lattice, rng)
    truth = {
        "rho1": rho1, "rho2": rho2, "eta": list(eta_tuple), "tau1": tau1, "tau2": tau2,
        "mu1": mu1, "mu2": mu2, "noise_prec1": noise_prec1, "noise_prec2": noise_prec2,
        "rho_sc": spatial_concordance(params, lattice),
        "n": lattice.n, "seed": int(seed),
    }
    cfg_hash = hashlib.sha256(json.dumps(truth, sort_keys=True).encode()).hexdigest()[:16]
    prov = _provenance(seed, cfg_hash)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_table(
        out / "data.csv",
        ["unit_id", "rate1", "rate2"],
        ((uid, a, b) for uid, a, b in zip(lattice.unit_ids, x1, x2)),
        prov,
    )
    truth["provenance"] = prov
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")
    click.echo(f"n={lattice.n} true rho_sc={truth['rho_sc']:.4f}")


@main.command("plot-data")
@click.option("--draws", "draws_path", required=True, help="a draws table written by fit")
@click.option("--column", default="rho_sc", show_default=True)
@click.option("--bins", default=None, type=int, help="bin count (default: Freedman-Diaconis)")
@click.option("--prob", default=0.95, show_default=True)
@click.option("--out", "output_dir", envvar="AREALAGREE_OUT", default=".", show_default=True)
@_guarded
def cmd_plotdata(draws_path, column, bins, prob, output_dir):
    """Turn a draws table into a plot-ready binned density plus summary."""
    columns, data = read_table(draws_path)
    if column not in columns:
        raise DataFormatError(f"{draws_path}: no column {column!r} (has {columns})")
    samples = data[:, columns.index(column)]
    if samples.size == 0:
        raise DataFormatError(f"{draws_path}: no draws")
    if samples.max() == samples.min():
        edges = np.array([samples[0] - 0.5, samples[0] + 0.5])
    else:
        edges = np.histogram_bin_edges(samples, bins=bins if bins else "fd")
    density, edges = np.histogram(samples, bins=edges, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    lo, hi = hpd_interval(samples, prob)
    summary = {
        "column": column,
        "n": int(samples.size),
        "bins": int(centers.size),
        "mean": float(samples.mean()),
        "sd": float(samples.std(ddof=1)),
        "hpd_prob": prob,
        "hpd_lo": lo,
        "hpd_hi": hi,
    }
    cfg_hash = hashlib.sha256(json.dumps(summary, sort_keys=True).encode()).hexdigest()[:16]
    prov = _provenance(0, cfg_hash)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_table(out / "density.csv", ["bin_center", "density"], zip(centers, density), prov)
    summary["provenance"] = prov
    (out / "density_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    click.echo(f"{column}: mean={summary['mean']:.4f} hpd=({lo:.4f}, {hi:.4f})")


if __name__ == "__main__":
    main()
