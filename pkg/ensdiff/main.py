"""
Command-line entry point for ensdiff.
"""

import functools
import math
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import click
import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .core.config import ExperimentConfig, PathsConfig, RuntimeSettings, SamplerSettings, ScheduleConfig, TrainConfig
from .core.enums import CovarianceKind, Criterion, DenoiserKind, Season, VarianceClosure
from .core.exceptions import EnsDiffException
from .core.fields import bilinear_resize, fit_standardizer
from .core.interfaces import Denoiser
from .core.logging import configure_logging, get_logger
from .core.schedule import delta_t_for_steps, make_schedule
from .persistence.dataset_store import load_dataset, load_spec, save_dataset
from .persistence.grd import read_grd, write_grd
from .persistence.reports import (
    plot_point_series, plot_schedule, plot_spatial_maps, plot_variance_curve, schedule_frame, write_csv,
)
from .services.calibrate import CalibrationSettings, calibrate_steps
from .services.concurrency_manager import ConcurrencyManager
from .services.ensemble_stats import (
    EnsembleSet, mean_ssim, mse, pixelwise_variance, point_series, spatial_mean_variance, summarize,
)
from .services.sampler import SamplerConfig, generate_ensemble_set
from .services.synthdata import FieldSpec, make_dataset, oracle_for_spec
from .services.variance_theory import predict_variance_closed

logger = get_logger(__name__)
console = Console()


@dataclass
class CliContext:
    threads: int = 1
    _pool: Optional[ConcurrencyManager] = field(default=None, repr=False)

    @property
    def pool(self) -> ConcurrencyManager:
        if self._pool is None:
            self._pool = ConcurrencyManager(self.threads)
        return self._pool

    def close(self) -> None:
        if self._pool is not None:
            self._pool.cleanup()


def handle_errors(func: Callable) -> Callable:
    """Report library errors as one-line messages with exit code 1."""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        command = func.__name__.replace("_", "-")
        logger.debug("command_started", command=command)
        try:
            result = func(*args, **kwargs)
        except EnsDiffException as e:
            logger.error("command_failed", command=command, error=e.message)
            raise click.ClickException(e.message) from e
        logger.info("command_finished", command=command)
        return result
    return wrapper


def _int_list(ctx, param, value: Optional[str]) -> Optional[List[int]]:
    if value is None:
        return None
    try:
        values = [int(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated integers, got {value!r}")
    if not values:
        raise click.BadParameter("expected at least one value")
    return values


def _size_pair(ctx, param, value: Optional[str]) -> Optional[Tuple[int, int]]:
    if value is None:
        return None
    parts = _int_list(ctx, param, value)
    if len(parts) != 2 or min(parts) < 1:
        raise click.BadParameter(f"expected H,W with positive integers, got {value!r}")
    return parts[0], parts[1]


def _require_divisors(T: int, steps: List[int], flag: str) -> None:
    for n in steps:
        if n < 1 or T % n:
            raise click.BadParameter(
                f"N={n} does not divide T={T}; pick step counts that divide T", param_hint=flag,
            )


def _experiment(path: Optional[str]) -> ExperimentConfig:
    """The --config file, or all defaults when none was given."""
    if path is None:
        return ExperimentConfig()
    with open(path, encoding="utf-8") as f:
        return ExperimentConfig.parse(f.read())


def _pick(value, fallback):
    return fallback if value is None else value


def _config_path(value: str) -> Optional[str]:
    return value or None


def _resolve_denoiser(
    model: Optional[str], oracle: Optional[str], timesteps: Optional[int],
    experiment: Optional[ExperimentConfig] = None,
) -> Denoiser:
    experiment = experiment or ExperimentConfig()
    if model is None and oracle is None:
        model = _config_path(experiment.paths.model)
    if (model is None) == (oracle is None):
        raise click.UsageError("give exactly one of --model or --oracle")
    if oracle is not None:
        spec: FieldSpec = load_spec(oracle)["field"]
        schedule_cfg = experiment.schedule
        schedule = make_schedule(_pick(timesteps, schedule_cfg.T), schedule_cfg.sr_min, schedule_cfg.sr_max, 1.0)
        return oracle_for_spec(spec, schedule)

    from .persistence.checkpoint import load_checkpoint
    network = load_checkpoint(model)
    if network.kind is not DenoiserKind.DENOISER:
        raise click.ClickException(f"{model} holds a regression baseline, not a denoiser")
    return network


def _conditionings(d: Denoiser, lo: np.ndarray) -> List[Optional[np.ndarray]]:
    from .models.oracle import GaussianOracle

    if isinstance(d, GaussianOracle):
        return [None] * lo.shape[0]
    return list(lo)


def _print_table(title: str, frame: pd.DataFrame) -> None:
    table = Table(title=title)
    for column in frame.columns:
        table.add_column(str(column))
    for _, row in frame.iterrows():
        table.add_row(*(f"{v:.6g}" if isinstance(v, float) else str(v) for v in row.tolist()))
    console.print(table)


def _model_option(func):
    func = click.option("--model", type=click.Path(exists=True, dir_okay=False), help="VDMW denoiser checkpoint")(func)
    func = click.option("--oracle", type=click.Path(exists=True, file_okay=False),
                        help="Dataset directory whose spec defines a Gaussian oracle")(func)
    func = click.option("--timesteps", type=click.IntRange(min=1), default=None,
                        help="T for oracle runs  [default: schedule.T, 256]")(func)
    return func


def _config_option(func):
    return click.option(
        "--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
        help="key=value experiment config; command-line options take precedence",
    )(func)


def _require_data(data_dir: Optional[str], experiment: ExperimentConfig) -> str:
    data_dir = _pick(data_dir, _config_path(experiment.paths.data_dir))
    if data_dir is None:
        raise click.UsageError("give --data or set paths.data_dir in --config")
    return data_dir


def _default_steps(T: int, experiment: ExperimentConfig) -> int:
    delta_t = experiment.sampler.delta_t
    if T % delta_t:
        raise click.UsageError(f"sampler.delta_t={delta_t} does not divide T={T}")
    return T // delta_t


@click.group()
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads (results do not depend on it)")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False), default=None)
@click.pass_context
def cli(ctx: click.Context, threads: Optional[int], log_level: Optional[str]):
    """Step-count-controlled ensemble diffusion downscaling."""
    settings = RuntimeSettings()
    configure_logging(log_level or settings.log_level, settings.log_json)
    ctx.obj = CliContext(threads=threads or settings.threads)
    ctx.call_on_close(ctx.obj.close)


@cli.command("gen-data")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--size", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--coarse-factor", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--samples", type=click.IntRange(min=1), default=64, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--kind", type=click.Choice([k.value for k in CovarianceKind]), default="smoothed-spectral", show_default=True)
@click.option("--length-scale", type=click.FloatRange(min=0.0), default=3.0, show_default=True)
@click.option("--mean-level", type=float, default=6.0, show_default=True)
@click.pass_obj
@handle_errors
def gen_data(obj: CliContext, out_dir, size, coarse_factor, samples, seed, kind, length_scale, mean_level):
    """Generate a synthetic paired dataset."""
    if size % coarse_factor:
        raise click.BadParameter(f"{coarse_factor} does not divide --size {size}", param_hint="--coarse-factor")
    spec = FieldSpec(
        height=size, width=size, kind=CovarianceKind(kind), length_scale=length_scale, mean_level=mean_level,
    )
    dataset = make_dataset(spec, samples, coarse_factor, seed, obj.pool)
    save_dataset(out_dir, dataset, seed)
    click.echo(f"wrote {samples} samples ({size}x{size}, coarse {size // coarse_factor}) to {out_dir}")


@cli.command()
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--epochs", type=click.IntRange(min=1), default=300, show_default=True)
@click.option("--batch-size", type=click.IntRange(min=1), default=16, show_default=True)
@click.option("--lr", type=click.FloatRange(min=0.0, min_open=True), default=1e-3, show_default=True)
@click.option("--weight-decay", type=click.FloatRange(min=0.0), default=1e-4, show_default=True)
@click.option("--lambda", "lambda_", type=click.FloatRange(min=1.0), default=3.0, show_default=True)
@click.option("--timesteps", type=click.IntRange(min=1), default=256, show_default=True)
@click.option("--width", type=click.IntRange(min=1), default=32, show_default=True)
@click.option("--blocks", type=click.IntRange(min=1), default=3, show_default=True)
@click.option("--pad-multiple", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--baseline", is_flag=True, help="Train the deterministic regression baseline instead")
@click.pass_obj
@handle_errors
def train(obj: CliContext, data_dir, out_path, epochs, batch_size, lr, weight_decay, lambda_, timesteps,
          width, blocks, pad_multiple, seed, baseline):
    """Train a denoiser (or the regression baseline) on a dataset."""
    from .models.network import ToyDenoiser, ToyRegressor
    from .models.training import train as train_denoiser, train_regressor
    from .persistence.checkpoint import save_checkpoint

    dataset = load_dataset(data_dir)
    schedule_cfg = ScheduleConfig(T=timesteps, lambda_=lambda_)
    cfg = TrainConfig(
        epochs=epochs, batch_size=batch_size, learning_rate=lr, weight_decay=weight_decay, seed=seed,
        width=width, blocks=blocks, pad_multiple=pad_multiple,
    )
    schedule = make_schedule(schedule_cfg.T, schedule_cfg.sr_min, schedule_cfg.sr_max, schedule_cfg.lambda_)
    if baseline:
        net = ToyRegressor.create(dataset.hi, dataset.lo, schedule, cfg)
        result = train_regressor(net, dataset.hi, dataset.lo, cfg)
    else:
        net = ToyDenoiser.create(dataset.hi, dataset.lo, schedule, cfg)
        result = train_denoiser(net, dataset.hi, dataset.lo, cfg)
    save_checkpoint(out_path, net)

    stem = os.path.splitext(out_path)[0]
    write_csv(result.to_frame(), f"{stem}.loss.csv")
    experiment = ExperimentConfig(
        schedule=schedule_cfg,
        sampler=SamplerSettings(delta_t=timesteps // math.gcd(timesteps, 8), seed=seed),
        train=cfg,
        paths=PathsConfig(data_dir=data_dir, model=out_path),
    )
    with open(f"{stem}.cfg", "w", encoding="utf-8") as f:
        f.write(experiment.serialize())
    click.echo(f"trained {net.kind.name.lower()} ({net.count_params()} parameters), final loss {result.final_loss:.4f}")


@cli.command()
@_model_option
@_config_option
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--steps", type=click.IntRange(min=1), default=None, help="[default: T / sampler.delta_t]")
@click.option("--members", type=click.IntRange(min=1), default=None, help="[default: sampler.members, 10]")
@click.option("--samples", type=click.IntRange(min=1), default=None, help="Only the first K samples")
@click.option("--seed", type=click.IntRange(min=0), default=None, help="[default: sampler.seed, 0]")
@click.option("--final-projection/--no-final-projection", default=None, help="End with the denoised projection at t = T")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.pass_obj
@handle_errors
def sample(obj: CliContext, model, oracle, timesteps, config_path, data_dir, steps, members, samples, seed,
           final_projection, out_path):
    """Generate an (S, M, h, w) ensemble with N reverse steps."""
    experiment = _experiment(config_path)
    d = _resolve_denoiser(model, oracle, timesteps, experiment)
    steps = steps if steps is not None else _default_steps(d.schedule.T, experiment)
    _require_divisors(d.schedule.T, [steps], "--steps")
    dataset = load_dataset(_require_data(data_dir, experiment))
    lo = dataset.lo[:samples] if samples else dataset.lo

    defaults = experiment.sampler
    settings = SamplerSettings(
        delta_t=d.schedule.T // steps,
        members=_pick(members, defaults.members),
        seed=_pick(seed, defaults.seed),
        final_projection=_pick(final_projection, defaults.final_projection),
    )
    cfg = SamplerConfig(
        schedule=d.schedule, delta_t=settings.delta_t, members=settings.members,
        base_seed=settings.seed, final_projection=settings.final_projection,
    )
    ensembles = generate_ensemble_set(d, cfg, _conditionings(d, lo), obj.pool)
    write_grd(out_path, ensembles)
    click.echo(f"wrote ensemble {ensembles.shape} with N={steps} to {out_path}")


@cli.command("predict-var")
@_model_option
@_config_option
@click.option("--steps", callback=_int_list, default=None, help="Comma-separated step counts  [default: T / sampler.delta_t]")
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), default=None,
              help="Dataset whose conditioning is used (network denoisers)")
@click.option("--samples", type=click.IntRange(min=1), default=1, show_default=True)
@click.option("--closure", type=click.Choice(["unit", "linearized", "both"]), default="both", show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_obj
@handle_errors
def predict_var(obj: CliContext, model, oracle, timesteps, config_path, steps, data_dir, samples, closure, out_dir):
    """Predict ensemble variance maps from the step-count recursion."""
    experiment = _experiment(config_path)
    d = _resolve_denoiser(model, oracle, timesteps, experiment)
    steps = steps if steps is not None else [_default_steps(d.schedule.T, experiment)]
    _require_divisors(d.schedule.T, steps, "--steps")
    data_dir = _pick(data_dir, _config_path(experiment.paths.data_dir))
    conds: List[Optional[np.ndarray]] = [None]
    if data_dir is not None:
        conds = _conditionings(d, load_dataset(data_dir).lo[:samples])
    closures = [VarianceClosure.UNIT, VarianceClosure.LINEARIZED] if closure == "both" else [VarianceClosure(closure)]

    records = []
    for n in steps:
        delta_t = delta_t_for_steps(d.schedule.T, n)
        for kind in closures:
            predictions = obj.pool.map_ordered(
                lambda lo: predict_variance_closed(d, d.schedule, delta_t, d.prepare_conditioning(lo), kind), conds,
            )
            maps = np.stack([p.data_scale() for p in predictions])
            write_grd(os.path.join(out_dir, f"variance_N{n}_{kind.value}.grd"), maps)
            records.append({
                "N_steps": n,
                "closure": kind.value,
                "mean_v_T": float(np.mean(maps)),
                "clamp_count": sum(p.clamp_count for p in predictions),
            })
    frame = pd.DataFrame.from_records(records)
    write_csv(frame, os.path.join(out_dir, "variance.csv"))
    _print_table("predicted variance", frame)


@cli.command()
@click.option("--ensemble", "ensemble_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--reference", "reference_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--reference-size", callback=_size_pair, default=None, help="Resample to H,W before statistics")
@click.option("--steps", type=click.IntRange(min=0), required=True, help="Step count recorded in the table")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@handle_errors
def stats(ensemble_path, data_dir, reference_path, reference_size, steps, out_dir):
    """Variance, MVD and skill statistics of a saved ensemble."""
    dataset = load_dataset(data_dir)
    values = read_grd(ensemble_path, expected_rank=4).astype(np.float64)
    S = values.shape[0]
    seasons = dataset.seasons[:S]
    D = EnsembleSet(values, seasons)
    truth = dataset.hi[:S]
    if reference_size is not None:
        D = D.resized(*reference_size)
        truth = bilinear_resize(truth, *reference_size)

    reference = None
    if reference_path is not None:
        ref_values = read_grd(reference_path, expected_rank=4).astype(np.float64)
        reference = EnsembleSet(ref_values, dataset.seasons[:ref_values.shape[0]])
        if reference_size is not None:
            reference = reference.resized(*reference_size)

    row = summarize(D, steps, reference)
    standardizer = fit_standardizer(list(dataset.hi))
    means = standardizer.apply(D.ensemble_mean())
    row["MSE"] = mse(means, standardizer.apply(truth))
    row["SSIM"] = mean_ssim(means, standardizer.apply(truth))

    frame = pd.DataFrame([row])
    write_csv(frame, os.path.join(out_dir, "stats.csv"))
    _print_table("ensemble statistics", frame)


@cli.command()
@_model_option
@_config_option
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--reference", "reference_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--candidates", required=True, callback=_int_list, help="Comma-separated step counts")
@click.option("--criterion", type=click.Choice([c.value for c in Criterion]), default="global", show_default=True)
@click.option("--members", type=click.IntRange(min=2), default=None,
              help="Defaults to sampler.members from --config, else the reference member count")
@click.option("--seed", type=click.IntRange(min=0), default=None, help="[default: sampler.seed, 0]")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_obj
@handle_errors
def calibrate(obj: CliContext, model, oracle, timesteps, config_path, data_dir, reference_path, candidates, criterion,
              members, seed, out_dir):
    """Pick the step count whose ensemble variance matches a reference."""
    experiment = _experiment(config_path)
    d = _resolve_denoiser(model, oracle, timesteps, experiment)
    _require_divisors(d.schedule.T, candidates, "--candidates")
    dataset = load_dataset(_require_data(data_dir, experiment))
    reference_path = _pick(reference_path, _config_path(experiment.paths.reference))
    if reference_path is None:
        raise click.UsageError("give --reference or set paths.reference in --config")
    ref_values = read_grd(reference_path, expected_rank=4).astype(np.float64)
    S = ref_values.shape[0]
    reference = EnsembleSet(ref_values, dataset.seasons[:S])

    if config_path is not None:
        members = _pick(members, experiment.sampler.members)
    settings = CalibrationSettings(
        seed=_pick(seed, experiment.sampler.seed), members=members, conditionings=_conditionings(d, dataset.lo[:S]),
    )
    report = calibrate_steps(d, reference, candidates, Criterion(criterion), settings, obj.pool)
    frame = report.to_frame()
    write_csv(frame, os.path.join(out_dir, "calibration.csv"))
    plot_variance_curve(frame, os.path.join(out_dir, "calibration.svg"), report.reference_mu_v)
    _print_table("calibration", frame)
    click.echo(f"best N: {report.best} ({criterion}); global={report.best_n[Criterion.GLOBAL]} mvd={report.best_n[Criterion.MVD]}")


@cli.command("eval")
@click.option("--model", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--data", "data_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--steps", callback=_int_list, default="2,4,8,16", show_default=True)
@click.option("--members", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--seed", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--baseline", "baseline_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.pass_obj
@handle_errors
def evaluate_command(obj: CliContext, model, data_dir, steps, members, seed, baseline_path, out_dir):
    """MSE/SSIM of DDIM ensembles against bilinear upsampling and the baseline."""
    from .persistence.checkpoint import load_checkpoint
    from .services.evaluation import evaluate

    d = _resolve_denoiser(model, None, None)
    _require_divisors(d.schedule.T, steps, "--steps")
    baseline = load_checkpoint(baseline_path) if baseline_path else None
    if baseline is not None and baseline.kind is not DenoiserKind.REGRESSOR:
        raise click.ClickException(f"{baseline_path} is not a regression baseline checkpoint")
    report = evaluate(d, load_dataset(data_dir), steps, members, seed, baseline, obj.pool)
    frame = report.to_frame()
    write_csv(frame, os.path.join(out_dir, "eval.csv"))
    _print_table("evaluation", frame[frame["season"] == "all"])


@cli.command()
@click.option("--kind", type=click.Choice(["variance-curve", "spatial", "schedule", "point"]), required=True)
@click.option("--input", "input_path", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--data", "data_dir", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--timesteps", type=click.IntRange(min=1), default=256, show_default=True)
@click.option("--lambda", "lambda_", type=click.FloatRange(min=1.0), default=3.0, show_default=True)
@click.option("--x", "px", type=click.IntRange(min=0), default=0)
@click.option("--y", "py", type=click.IntRange(min=0), default=0)
@click.option("--window", type=click.IntRange(min=1), default=30, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@handle_errors
def plot(kind, input_path, data_dir, timesteps, lambda_, px, py, window, out_path):
    """Write an SVG figure and the CSV behind it."""
    csv_path = os.path.splitext(out_path)[0] + ".csv"
    if kind == "schedule":
        schedule = make_schedule(timesteps, lambda_=lambda_)
        write_csv(schedule_frame(schedule), csv_path)
        plot_schedule(schedule, out_path)
        return
    if input_path is None:
        raise click.UsageError(f"--kind {kind} needs --input")

    if kind == "variance-curve":
        frame = pd.read_csv(input_path)
        if not {"N_steps", "mu_V"} <= set(frame.columns):
            raise click.ClickException(f"{input_path} needs N_steps and mu_V columns")
        reference = float(frame["mu_V_reference"].iloc[0]) if "mu_V_reference" in frame else None
        write_csv(frame[["N_steps", "mu_V"]], csv_path)
        plot_variance_curve(frame, out_path, reference)
        return

    values = read_grd(input_path, expected_rank=4).astype(np.float64)
    if kind == "point":
        frame = point_series(EnsembleSet(values), px, py, window)
        write_csv(frame, csv_path)
        plot_point_series(frame, out_path)
        return

    if data_dir is None:
        raise click.UsageError("--kind spatial needs --data for season labels")
    seasons: Tuple[Season, ...] = load_dataset(data_dir).seasons[:values.shape[0]]
    maps = spatial_mean_variance(pixelwise_variance(EnsembleSet(values, seasons)), seasons)
    records = [
        {"season": season.value, "y": y, "x": x, "mean_variance": float(m[y, x])}
        for season, m in maps.items() for y in range(m.shape[0]) for x in range(m.shape[1])
    ]
    write_csv(pd.DataFrame.from_records(records), csv_path)
    plot_spatial_maps({season.value: m for season, m in maps.items()}, out_path)


def main() -> None:
    cli(prog_name="ensdiff")


if __name__ == "__main__":
    main()
