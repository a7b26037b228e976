#!/usr/bin/env python3
"""bmode CLI - simulate, despeckle, deconvolve and score ultrasound B-mode images."""
import functools
import json
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import click
from tabulate import tabulate

from src.config.settings import PipelineConfig, load_config
from src.deconv.bmcflms import deconvolve_2d
from src.deconv.cepstrum import cepstrum_deconvolve_2d
from src.deconv.synthetic import separable_blur_pair
from src.experiments.checks import (
    check_deconvolution,
    check_misconvergence,
    deconvolution_experiment,
    misconvergence_experiment,
)
from src.experiments.reference import ReferenceTables
from src.experiments.reports import REPORT_FIELDS, plot_convergence, write_json, write_rows_csv
from src.experiments.tables import check_table2, check_table3, run_table2, run_table3
from src.imagecore.envelope import envelope
from src.imagecore.image import Image
from src.imagecore.io import read_image, read_stack, write_image, write_stack
from src.imagecore.phantom import generate_phantom
from src.mads.pipeline import PipelineResult, mads_pipeline
from src.metrics.report import EPI_DEFINITION, MetricReport, evaluate
from src.msne.estimator import write_trace_csv
from src.postproc.display import display_chain
from src.specklesim.synth import RNG_ALGORITHM, clamp_rate, synthesize_frames, true_speckle
from src.utils.logging import log_run, setup_logging
from src.utils.validators import require_frames


# timings differ between runs; they go to run.json, not the report
DETERMINISTIC_REPORT_FIELDS = [name for name in REPORT_FIELDS if name != "runtime_s"]


class BmodeCLI:
    """Resolves configuration and runs the pipeline stages behind each command."""

    def __init__(self, config_path: Optional[str] = None, log_level: Optional[str] = None):
        """Remember the config file; logging is set up once the level is known."""
        self.config_path = config_path
        self.log_level = log_level

    def config(self, **overrides: Any) -> PipelineConfig:
        """Defaults < environment < config file < non-None CLI overrides."""
        if self.log_level:
            overrides["log_level"] = self.log_level
        cfg = load_config(self.config_path, overrides)
        setup_logging(cfg.log_level)
        return cfg

    def simulate(self, cfg: PipelineConfig, out_dir: Path) -> Dict[str, Any]:
        """Write the phantom, the speckled frames, the true speckle fields and metadata."""
        clean = generate_phantom(cfg.phantom_spec())
        params = cfg.speckle_params()
        stack = synthesize_frames(clean, params)
        truth = true_speckle(clean, stack)

        write_image(clean, out_dir / "phantom.raw")
        write_image(clean, out_dir / "phantom.png")
        frames = write_stack(stack, out_dir / "frames", "frame")
        write_stack(truth, out_dir / "truth", "truth")

        metadata = {
            "seed": params.seed,
            "rng": RNG_ALGORITHM,
            "sigma": params.sigma,
            "eta": params.eta,
            "p": params.p,
            "size": cfg.size,
            "clamp_rate": clamp_rate(clean, params),
        }
        write_json(metadata, out_dir / "metadata.json")
        metadata["frame_files"] = len(frames)
        return metadata

    def despeckle(
        self,
        cfg: PipelineConfig,
        out_dir: Path,
        input_dir: Optional[Path] = None,
        show_frame: int = 0,
    ) -> PipelineResult:
        """
        Run speckle estimation, SNC estimation and averaging.

        Without input_dir the frames are simulated from the config; with it,
        input_dir/frames holds the stack and input_dir/phantom.raw and
        input_dir/truth are used for scoring when present.
        """
        reference = truth = None
        if input_dir is None:
            reference = generate_phantom(cfg.phantom_spec())
            stack = synthesize_frames(reference, cfg.speckle_params())
            truth = true_speckle(reference, stack)
        else:
            stack = read_stack(input_dir / "frames", "frame")
            if (input_dir / "phantom.raw").exists():
                reference = read_image(input_dir / "phantom.raw")
            if (input_dir / "truth").is_dir():
                truth = read_stack(input_dir / "truth", "truth")

        if not 0 <= show_frame < stack.p:
            raise ValueError(f"--show-frame must be in [0, {stack.p - 1}], got {show_frame}")

        rois = (cfg.roi_list() or ReferenceTables().rois(stack.shape[0])) if reference is not None else None
        msne_cfg, mads_cfg = cfg.msne_config(), cfg.mads_config()
        result = mads_pipeline(stack, msne_cfg, mads_cfg, reference=reference, truth=truth, rois=rois)

        write_image(result.image, out_dir / "despeckled.raw")
        write_image(display_chain(result.image, cfg.display_params(), cfg.display_order), out_dir / "despeckled.png")
        write_image(result.speckle.fields.frame(show_frame), out_dir / f"speckle_{show_frame:03d}.png")
        write_stack(result.speckle.fields, out_dir / "speckle", "speckle")

        row = {"method": "MADS"}
        row.update(result.to_row(msne_cfg, mads_cfg, sigma=cfg.sigma if input_dir is None else None))
        write_rows_csv([row], out_dir / "report.csv", DETERMINISTIC_REPORT_FIELDS)
        write_trace_csv(result.speckle, out_dir / "msne_trace.csv")
        plot_convergence(
            {"speckle estimation": result.speckle.cost_trace, "SNC": result.snc.cost_trace},
            out_dir / "convergence.png",
        )
        write_json({
            "msne_runtime_s": result.msne_runtime_s,
            "snc_runtime_s": result.snc_runtime_s,
            "runtime_s": result.runtime_s,
            "msne_iterations": result.speckle.iterations_used,
            "snc_iterations": result.snc.iterations_used,
            "msne_halvings": result.speckle.halvings,
            "epi_definition": EPI_DEFINITION,
        }, out_dir / "run.json")
        return result

    def deconvolve(self, cfg: PipelineConfig, out_dir: Path, input_path: Optional[Path], synthetic: bool) -> Image:
        """Two-pass deconvolution of one RF image; writes the TRF estimate and its envelope."""
        if synthetic:
            trf, rf = separable_blur_pair((cfg.size, max(16, cfg.size // 4)), seed=cfg.seed)
            write_image(rf, out_dir / "rf.raw")
            write_image(trf, out_dir / "trf_true.raw")
        elif input_path is not None:
            rf = read_image(input_path)
        else:
            raise ValueError("Pass --input RF.raw or --synthetic")

        if cfg.method == "cepstrum":
            out = cepstrum_deconvolve_2d(rf, cfg.lifter_cutoff, cfg.noise_floor)
        else:
            out = deconvolve_2d(rf, cfg.deconv_config())

        write_image(out, out_dir / "deconvolved.raw")
        env = envelope(out)
        write_image(env, out_dir / "deconvolved_envelope.raw")
        write_image(display_chain(env, cfg.display_params(), "log-first"), out_dir / "deconvolved_envelope.png")
        return out


def _reports_errors(command: str):
    """Turn ValueError/RuntimeError/FileNotFoundError into a ClickException and log the failed run."""
    def decorate(fn):
        @functools.wraps(fn)
        def wrapper(*args, **kwargs):
            start = time.perf_counter()
            try:
                return fn(*args, **kwargs)
            except (ValueError, RuntimeError, FileNotFoundError) as e:
                log_run(command, time.perf_counter() - start, error=str(e))
                raise click.ClickException(str(e))
        return wrapper
    return decorate


def _echo_rows(rows: List[Dict[str, Any]], output_format: str, headers: Optional[List[str]] = None):
    if output_format == "json":
        click.echo(json.dumps(rows, indent=2, default=str))
        return
    if headers is None:
        headers = list(rows[0].keys()) if rows else []
    table = [[("" if row.get(h) is None else row.get(h)) for h in headers] for row in rows]
    click.echo("\n" + tabulate(table, headers=headers, tablefmt="grid") + "\n")


def _echo_failures(failures: List[str]):
    for failure in failures:
        click.echo(f"✗ {failure}", err=True)
    if failures:
        raise SystemExit(1)
    click.echo("✓ All acceptance checks passed")


format_option = click.option("--format", "output_format", type=click.Choice(["table", "json"]), default="table", help="Output format")
out_dir_option = click.option("--out-dir", type=click.Path(file_okay=False, path_type=Path), default=None, help="Output directory")
seed_option = click.option("--seed", type=int, default=None, help="Root RNG seed")
sigma_option = click.option("--sigma", type=float, default=None, help="Speckle standard deviation")
eta_option = click.option("--eta", type=float, default=None, help="Speckle intensity exponent")
frames_option = click.option("--frames", type=int, default=None, help="Number of frames p (>= 2)")
beta1_option = click.option("--beta1", type=float, default=None, help="Correlation-constraint coupling factor")
beta2_option = click.option("--beta2", type=float, default=None, help="SNC energy regularization")
grad_avg_option = click.option("--grad-avg", type=float, default=None, help="Gradient-averaging weight in (0, 1]")
check_option = click.option("--check", is_flag=True, help="Enforce acceptance tolerances; non-zero exit on failure")


def _out_dir(cfg: PipelineConfig, out_dir: Optional[Path], command: str) -> Path:
    path = out_dir if out_dir is not None else Path(cfg.out_dir) / command
    path.mkdir(parents=True, exist_ok=True)
    return path


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None, help="key=value config file")
@click.option("--log-level", default=None, help="DEBUG, INFO or WARNING")
@click.pass_context
def cli(ctx, config_path, log_level):
    """bmode CLI - ultrasound B-mode despeckling and deconvolution."""
    ctx.obj = BmodeCLI(config_path, log_level)


@cli.command()
@sigma_option
@eta_option
@frames_option
@seed_option
@click.option("--size", type=int, default=None, help="Phantom side length")
@out_dir_option
@click.pass_obj
@_reports_errors("simulate")
def simulate(cli_obj, sigma, eta, frames, seed, size, out_dir):
    """Write phantom, speckled frames and true speckle fields.

    Example: bmode simulate --sigma 0.4 --frames 10 --seed 7
    """
    if frames is not None:
        require_frames(frames)
    start = time.perf_counter()
    cfg = cli_obj.config(sigma=sigma, eta=eta, frames=frames, seed=seed, size=size)
    out = _out_dir(cfg, out_dir, "simulate")
    metadata = cli_obj.simulate(cfg, out)
    log_run("simulate", time.perf_counter() - start, sigma=cfg.sigma, frames=cfg.frames)
    click.echo(f"✓ Wrote {metadata['frame_files']} frames + truth to {out} (clamp rate {metadata['clamp_rate']:.4%})")


@cli.command()
@click.option("--input", "input_dir", type=click.Path(file_okay=False, exists=True, path_type=Path), default=None,
              help="Directory written by 'simulate' (default: simulate in memory)")
@sigma_option
@eta_option
@frames_option
@seed_option
@beta1_option
@beta2_option
@grad_avg_option
@click.option("--gamma", type=float, default=None, help="Display gamma")
@click.option("--wlow", type=float, default=None, help="Gray-window low threshold")
@click.option("--whigh", type=float, default=None, help="Gray-window high threshold")
@click.option("--show-frame", type=int, default=0, help="Frame whose speckle field is written")
@out_dir_option
@format_option
@click.pass_obj
@_reports_errors("despeckle")
def despeckle(cli_obj, input_dir, sigma, eta, frames, seed, beta1, beta2, grad_avg, gamma, wlow, whigh,
              show_frame, out_dir, output_format):
    """Despeckle a frame stack and report quality.

    Example: bmode despeckle --sigma 0.4 --frames 10 --beta2 0.01
    """
    if frames is not None:
        require_frames(frames)
    cfg = cli_obj.config(sigma=sigma, eta=eta, frames=frames, seed=seed, beta1=beta1, beta2=beta2,
                         grad_avg=grad_avg, gamma=gamma, wlow=wlow, whigh=whigh)
    out = _out_dir(cfg, out_dir, "despeckle")
    result = cli_obj.despeckle(cfg, out, input_dir, show_frame)

    report = result.report
    log_run("despeckle", result.runtime_s, sigma=cfg.sigma, frames=result.speckle.p,
            npm_db=report.npm_db, snr_db=report.snr_db, psnr_db=report.psnr_db)
    row = {"p": result.speckle.p, **report.to_row(), "runtime_s": round(result.runtime_s, 3)}
    _echo_rows([row], output_format)
    if output_format == "table":
        click.echo(f"✓ Despeckled image and report written to {out}")


@cli.command()
@click.option("--input", "input_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="RF image (.raw)")
@click.option("--synthetic", is_flag=True, help="Generate a separable-blur test image instead of reading one")
@click.option("--method", type=click.Choice(["bmcflms", "cepstrum"]), default=None, help="Deconvolution method")
@check_option
@seed_option
@out_dir_option
@format_option
@click.pass_obj
@_reports_errors("deconvolve")
def deconvolve(cli_obj, input_path, synthetic, method, check, seed, out_dir, output_format):
    """Blind 2-D deconvolution of an RF image.

    Example: bmode deconvolve --synthetic --method bmcflms --check
    """
    start = time.perf_counter()
    cfg = cli_obj.config(method=method, seed=seed)
    out = _out_dir(cfg, out_dir, "deconvolve")

    if check:
        result = deconvolution_experiment(cfg)
        rows = result.to_rows(ReferenceTables())
        write_rows_csv(rows, out / "deconvolution_check.csv")
        _echo_rows(rows, output_format)
        log_run("deconvolve", time.perf_counter() - start)
        _echo_failures(check_deconvolution(result))
        return

    cli_obj.deconvolve(cfg, out, input_path, synthetic)
    log_run("deconvolve", time.perf_counter() - start)
    click.echo(f"✓ {cfg.method} output written to {out}")


@cli.command()
@click.option("--reference", type=click.Path(dir_okay=False, exists=True, path_type=Path), default=None, help="Clean image")
@click.option("--test", "test_path", type=click.Path(dir_okay=False, exists=True, path_type=Path), required=True, help="Image to score")
@click.option("--truth", type=click.Path(file_okay=False, exists=True, path_type=Path), default=None, help="True speckle directory")
@click.option("--estimate", type=click.Path(file_okay=False, exists=True, path_type=Path), default=None, help="Estimated speckle directory (speckle_NNN.raw)")
@click.option("--rois", default=None, help="EPI regions 'row,col,height,width;...'")
@format_option
@click.pass_obj
@_reports_errors("metrics")
def metrics(cli_obj, reference, test_path, truth, estimate, rois, output_format):
    """Compute every metric the given inputs allow.

    Example: bmode metrics --reference runs/simulate/phantom.raw --test runs/despeckle/despeckled.raw
    """
    start = time.perf_counter()
    cfg = cli_obj.config(rois=rois)
    test_image = read_image(test_path)
    ref_image = read_image(reference) if reference else None
    roi_list = cfg.roi_list() or (ReferenceTables().rois(test_image.rows) if ref_image is not None else [])
    true_fields = read_stack(truth, "truth") if truth else None
    est_fields = read_stack(estimate, "speckle") if estimate else None

    report: MetricReport = evaluate(ref_image, test_image, roi_list, true_fields, est_fields)
    log_run("metrics", time.perf_counter() - start, npm_db=report.npm_db, snr_db=report.snr_db, psnr_db=report.psnr_db)
    rows = [{"metric": key, "value": value} for key, value in report.to_row().items() if value is not None]
    if output_format == "json":
        click.echo(json.dumps(report.to_row(), indent=2))
    elif rows:
        _echo_rows(rows, "table", ["metric", "value"])
    else:
        click.echo("✗ Nothing to compute: pass --reference and/or --truth with --estimate", err=True)


@cli.command()
@click.option("--sigmas", default=None, help="Comma-separated sigma values (default: all published)")
@click.option("--frame-counts", default=None, help="Comma-separated frame counts (default: all published)")
@check_option
@seed_option
@beta1_option
@out_dir_option
@format_option
@click.pass_obj
@_reports_errors("table2")
def table2(cli_obj, sigmas, frame_counts, check, seed, beta1, out_dir, output_format):
    """Speckle-estimation NPM grid next to the published values.

    Example: bmode table2 --check
    """
    start = time.perf_counter()
    cfg = cli_obj.config(seed=seed, beta1=beta1)
    out = _out_dir(cfg, out_dir, "table2")
    rows = run_table2(
        cfg,
        sigmas=[float(s) for s in sigmas.split(",")] if sigmas else None,
        frame_counts=[int(p) for p in frame_counts.split(",")] if frame_counts else None,
    )
    write_rows_csv(rows, out / "table2.csv")
    _echo_rows(rows, output_format)
    log_run("table2", time.perf_counter() - start)
    if check:
        _echo_failures(check_table2(rows))


@cli.command()
@click.option("--sigmas", default=None, help="Comma-separated sigma values (default: all published)")
@frames_option
@check_option
@seed_option
@beta1_option
@beta2_option
@grad_avg_option
@out_dir_option
@format_option
@click.pass_obj
@_reports_errors("table3")
def table3(cli_obj, sigmas, frames, check, seed, beta1, beta2, grad_avg, out_dir, output_format):
    """Despeckling quality (MADS and non-paper baselines) next to the published values.

    Example: bmode table3 --check
    """
    if frames is not None:
        require_frames(frames)
    start = time.perf_counter()
    cfg = cli_obj.config(frames=frames, seed=seed, beta1=beta1, beta2=beta2, grad_avg=grad_avg)
    out = _out_dir(cfg, out_dir, "table3")
    rows = run_table3(cfg, sigmas=[float(s) for s in sigmas.split(",")] if sigmas else None)
    write_rows_csv(rows, out / "table3.csv")
    _echo_rows(rows, output_format, ["method", "sigma", "p", "snr_db", "psnr_db", "ssim", "epi", "npm_db", "runtime_s"])
    log_run("table3", time.perf_counter() - start, frames=cfg.frames)
    if check:
        _echo_failures(check_table3(rows, cfg.frames))


@cli.command()
@click.option("--snr-db", type=float, default=None, help="Additive white-noise SNR (default: published setting)")
@check_option
@sigma_option
@frames_option
@seed_option
@out_dir_option
@format_option
@click.pass_obj
@_reports_errors("misconvergence")
def misconvergence(cli_obj, snr_db, check, sigma, frames, seed, out_dir, output_format):
    """Speckle estimation on noisy frames with and without the correlation constraint.

    Example: bmode misconvergence --check
    """
    if frames is not None:
        require_frames(frames)
    start = time.perf_counter()
    cfg = cli_obj.config(sigma=sigma, frames=frames, seed=seed)
    out = _out_dir(cfg, out_dir, "misconvergence")
    result = misconvergence_experiment(cfg, snr_db=snr_db)
    rows = result.to_rows()
    write_rows_csv(rows, out / "misconvergence.csv")
    plot_convergence({"beta1=0": result.unconstrained_trace}, out / "npm_trace.png", ylabel="NPM (dB)", log_scale=False)
    _echo_rows(rows, output_format)
    log_run("misconvergence", time.perf_counter() - start, sigma=cfg.sigma, frames=cfg.frames,
            npm_db=result.best_constrained)
    if check:
        _echo_failures(check_misconvergence(result))


@cli.command("print-config")
@click.pass_obj
@_reports_errors("print-config")
def print_config(cli_obj):
    """Print every resolved setting as key=value.

    Example: bmode print-config > run.cfg
    """
    for line in cli_obj.config().to_lines():
        click.echo(line)


if __name__ == "__main__":
    cli()
