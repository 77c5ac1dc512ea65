"""Command implementations shared by ``manage.py flm`` and manifest replay.

Each handler takes JSON-able options, writes its outputs under ``out`` and
returns ``(seed, inputs, outputs)``; ``execute`` wraps it with a RunManifest.
"""
import logging
import time
from pathlib import Path

from django.conf import settings

from . import __version__
from .choices import COMPLETE_METHODS, MAR_METHODS, TABLE_ORDER, WEIGHTED_METHODS, Command
from .estimators import MarSample, fit_observance_for, fit_slope
from .exceptions import ConfigError
from .functional import fpc_decompose
from .gof import wild_bootstrap_test
from .ingest import (
    atomic_write,
    file_digest,
    read_curves,
    read_json,
    read_responses,
    write_curves,
    write_json,
    write_responses,
)
from .models import RunManifest
from .reports import boxplot, density_plot, eta_label, rejection_tables, slope_plot
from .serializers import (
    CellTimingSerializer,
    DgpConfigSerializer,
    EstimatorConfigSerializer,
    FunctionalSlopeSerializer,
    GofResultSerializer,
    McConfigSerializer,
    McReportSerializer,
    RunManifestSerializer,
    validated,
)
from .simulation import generate_dataset, mc_experiment

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def load_sample(curves, responses) -> MarSample:
    x = read_curves(curves)
    y, r = read_responses(responses, n=x.n)
    if not r.any():
        raise ConfigError(f"{responses}: every response is missing.")
    return MarSample(x, y, r)


def resolve_methods(method, sample=None):
    """A single tag, or ``all``: the six MAR estimators (plus C, CL on complete data)."""
    if method != "all":
        return [method]
    if sample is not None and sample.is_complete:
        return list(TABLE_ORDER)
    return list(MAR_METHODS)


def estimator_config(estimator=None, seed=None):
    options = dict(estimator or {})
    if seed is not None:
        options.setdefault("seed", seed)
    return validated(EstimatorConfigSerializer, options)


def _out_dir(out):
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def simulate_dataset(*, dgp, out):
    config = validated(DgpConfigSerializer, dgp)
    dataset = generate_dataset(config)
    directory = _out_dir(out)
    sample = dataset.sample
    truth = {
        **DgpConfigSerializer(config).data,
        "grid": sample.x.grid.points,
        "beta": dataset.beta,
        "observance_probability": dataset.probabilities,
        "missing_fraction": 1.0 - sample.n_obs / sample.n,
    }
    outputs = [
        write_curves(directory / "curves.csv", sample.x),
        write_responses(directory / "responses.csv", sample.y, sample.r),
        write_json(directory / "truth.json", truth),
    ]
    logger.info(
        "Simulated n=%d curves, %d responses observed.", sample.n, sample.n_obs
    )
    return config.seed, [], outputs


def fit_from_files(*, curves, responses, method, out, seed=0, estimator=None, plots=True):
    sample = load_sample(curves, responses)
    config = estimator_config(estimator, seed)
    basis = fpc_decompose(sample.x, config.var_cutoff, config.k_max)
    logger.info("FPC basis with K_max=%d for n=%d curves.", basis.k_max, basis.n)
    directory = _out_dir(out)
    outputs, slopes = [], []
    observance = None
    for tag in resolve_methods(method, sample):
        if tag in WEIGHTED_METHODS and observance is None:
            observance = fit_observance_for(sample, config)
        slope = fit_slope(tag, sample, basis, config, observance=observance)
        logger.info("%s: FPCs %s, tuning %s.", tag, slope.indices_one_based, slope.tuning)
        slopes.append(slope)
        outputs.append(write_json(directory / f"slope_{tag}.json", FunctionalSlopeSerializer(slope).data))
        if plots:
            outputs.append(atomic_write(directory / f"slope_{tag}.svg", slope_plot([slope])))
    if plots and len(slopes) > 1:
        outputs.append(atomic_write(directory / "slopes.svg", slope_plot(slopes)))
    return config.seed, [curves, responses], outputs


def gof_from_files(
    *, curves, responses, method, out, seed, bootstrap=None, alpha=None,
    threads=None, estimator=None, plots=True,
):
    sample = load_sample(curves, responses)
    config = estimator_config(estimator, seed)
    bootstrap = bootstrap or settings.FLM["BOOTSTRAP"]
    alpha = settings.FLM["ALPHA"] if alpha is None else alpha
    basis = fpc_decompose(sample.x, config.var_cutoff, config.k_max)
    directory = _out_dir(out)
    outputs, results = [], {}
    observance = None
    for tag in resolve_methods(method, sample):
        if tag in COMPLETE_METHODS and not sample.is_complete:
            raise ConfigError(f"Method {tag} needs every response observed.")
        if tag in WEIGHTED_METHODS and observance is None:
            observance = fit_observance_for(sample, config)
        result = wild_bootstrap_test(
            sample, basis, tag,
            bootstrap=bootstrap, seed=seed, config=config,
            observance=observance, threads=threads,
        )
        results[tag] = result
        if plots:
            outputs.append(atomic_write(directory / f"density_{tag}.svg", density_plot(result)))
    report = {
        "alpha": alpha,
        "results": {
            tag: {**GofResultSerializer(result).data, "rejected": result.rejects(alpha)}
            for tag, result in results.items()
        },
        "slopes": {
            tag: FunctionalSlopeSerializer(result.slope).data for tag, result in results.items()
        },
    }
    outputs.insert(0, write_json(directory / "gof.json", report))
    if plots:
        outputs.append(
            atomic_write(directory / "slopes.svg", slope_plot([r.slope for r in results.values()]))
        )
    return seed, [curves, responses], outputs


def run_mc(*, config, out, threads=None, full_scale=False, plots=True):
    scale = settings.FLM["MC_FULL" if full_scale else "MC_SCALED"]
    options = {
        "replications": scale["REPLICATIONS"],
        "bootstrap": scale["BOOTSTRAP"],
        **config,
    }
    mc_config = validated(McConfigSerializer, options)
    report = mc_experiment(mc_config, threads=threads)
    directory = _out_dir(out)
    outputs = [
        atomic_write(directory / name, text) for name, text in sorted(rejection_tables(report).items())
    ]
    outputs.append(write_json(directory / "report.json", McReportSerializer(report).data))
    outputs.append(
        write_json(directory / "timing.json", CellTimingSerializer(report.cells, many=True).data)
    )
    if plots:
        for cell in report.cells:
            dgp = cell.dgp
            stem = f"beta{dgp.beta_id}_eta{eta_label(dgp.eta)}_n{dgp.n}_delta{dgp.delta:g}"
            title = f"beta{dgp.beta_id}, eta={eta_label(dgp.eta)}, n={dgp.n}, delta={dgp.delta:g}"
            outputs.append(atomic_write(directory / f"msee_{stem}.svg", boxplot(cell.msee, "MSEE", title)))
            outputs.append(
                atomic_write(directory / f"time_{stem}.svg", boxplot(cell.fit_time, "seconds", title))
            )
    return mc_config.seed, [], outputs


HANDLERS = {
    Command.SIMULATE: simulate_dataset,
    Command.FIT: fit_from_files,
    Command.TEST: gof_from_files,
    Command.MC: run_mc,
}


def record_manifest(command, options, seed, inputs, outputs, wall_time) -> RunManifest:
    manifest = RunManifest.objects.create(
        command=command,
        config=options,
        seed=seed,
        version=__version__,
        input_digests={str(path): file_digest(path) for path in inputs},
        outputs=[str(path) for path in outputs],
        wall_time=wall_time,
    )
    data = RunManifestSerializer(manifest).data
    write_json(Path(options["out"]) / MANIFEST_NAME, data)
    return manifest


def execute(command, options) -> RunManifest:
    """Run one command and record its manifest."""
    handler = HANDLERS[Command(command)]
    started = time.perf_counter()
    seed, inputs, outputs = handler(**options)
    wall_time = time.perf_counter() - started
    logger.info("%s finished in %.2fs; %d files written.", command, wall_time, len(outputs))
    return record_manifest(command, options, seed, inputs, outputs, wall_time)


def replay(manifest_path, out=None) -> RunManifest:
    recorded = read_json(manifest_path)
    try:
        command, options = recorded["command"], dict(recorded["config"])
    except (KeyError, TypeError):
        raise ConfigError(f"{manifest_path}: not a run manifest.") from None
    for path, digest in recorded.get("input_digests", {}).items():
        if not Path(path).exists() or file_digest(path) != digest:
            logger.warning("Input %s changed since the recorded run.", path)
    if out is not None:
        options["out"] = str(out)
    return execute(command, options)
