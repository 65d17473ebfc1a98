"""Command-line front end.

Exit codes: 0 success, 2 insufficient entropy, 3 insufficient data,
4 I/O failure, 5 configuration or parameter error.
"""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import click

from .errors import (
    ConfigError,
    InsufficientDataError,
    InsufficientEntropyError,
    QrbgError,
)
from .extractor import ExtractorParams, extract_stream, format_epsilon, parse_epsilon
from .bits import BitStream, read_bits_file, write_bits_file
from .pipeline import (
    PipelineConfig,
    load_config,
    load_raw_bits,
    resolve_seed,
    run_pipeline,
    simulate_logs,
)
from .sources import PRNG_NAME, load_event_log
from .stat_tests import ALL_TESTS, BatteryConfig, battery_report, run_battery
from .tomography import certify, reconstruct, state_report

EXIT_CODES = (
    (InsufficientEntropyError, 2),
    (InsufficientDataError, 3),
    (OSError, 4),
    (QrbgError, 5),
)


def _exit_on_error(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (QrbgError, OSError) as exc:
            click.echo(f"error: {exc}", err=True)
            for cls, code in EXIT_CODES:
                if isinstance(exc, cls):
                    sys.exit(code)
            sys.exit(5)

    return wrapper


def _config_from(config_path: str | None) -> PipelineConfig:
    return load_config(config_path) if config_path else PipelineConfig()


def _parse_state(text: str | None):
    if text is None:
        return None
    from .pipeline import _parse_triple

    return _parse_triple(text, "state")


@click.group()
def main() -> None:
    """Simulated quantum random-bit generator with certified extraction."""


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--mode", type=click.Choice(["single", "entangled", "adversarial"]), default=None)
@click.option("--state", default=None, help="single mode Bloch vector 's1,s2,s3'")
@click.option("--coherence", type=float, default=None)
@click.option("--accidental-fraction", type=float, default=None)
@click.option("--adv-target", default=None, help="decompose this state adversarially")
@click.option("--events", type=int, default=None, help="calibration events (total)")
@click.option("--gen-bits", type=int, default=None, help="generation raw bits")
@click.option("--seed", type=int, default=None, help="master PRNG seed")
@click.option("--gen-format", type=click.Choice(["bits", "events"]), default=None)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@_exit_on_error
def simulate(config_path, mode, state, coherence, accidental_fraction,
             adv_target, events, gen_bits, seed, gen_format, out_dir) -> None:
    """Write a calibration event log and a generation log/raw-bit file."""
    cfg = _config_from(config_path)
    if mode:
        cfg.mode = mode
    if state:
        cfg.state = _parse_state(state)
    if coherence is not None:
        cfg.coherence = coherence
    if accidental_fraction is not None:
        cfg.accidental_fraction = accidental_fraction
    if adv_target:
        cfg.adv_target = _parse_state(adv_target)
    if events is not None:
        cfg.tomography_events = events
    if gen_bits is not None:
        cfg.generation_bits = gen_bits
    if seed is not None:
        cfg.rng_seed = seed
    if gen_format is not None:
        cfg.gen_format = gen_format
    cfg.validate()
    calib, gen, master = simulate_logs(cfg, out_dir)
    click.echo(f"master_seed={master}")
    click.echo(f"calibration={calib}")
    click.echo(f"generation={gen}")


@main.command()
@click.argument("logfile", type=click.Path(exists=True))
@click.option("--alpha", type=float, default=0.01, show_default=True)
@click.option("--conservative", is_flag=True, help="certify the deflated lower bound")
@click.option("--min-basis-count", type=int, default=100, show_default=True)
@click.option("--report", "report_path", type=click.Path(), default=None)
@_exit_on_error
def calibrate(logfile, alpha, conservative, min_basis_count, report_path) -> None:
    """Reconstruct the state from a calibration log and certify a rate."""
    log = load_event_log(logfile)
    result, rate = reconstruct(
        log, alpha=alpha, conservative=conservative, min_count=min_basis_count
    )
    _, lower = certify(result, alpha)
    block = state_report(result, rate, alpha, lower)
    click.echo(block, nl=False)
    if report_path:
        Path(report_path).write_text(block, encoding="ascii")


@main.command()
@click.argument("genlog", type=click.Path(exists=True))
@click.option("--out", "out_path", type=click.Path(), required=True)
@_exit_on_error
def generate(genlog, out_path) -> None:
    """Pack the outcomes of a generation event log into a raw-bit file."""
    log = load_event_log(genlog)
    write_bits_file(
        out_path,
        BitStream(log.outcomes),
        {"role": "raw", "source": log.source, "seed": str(log.seed), "prng": PRNG_NAME},
    )
    click.echo(f"raw_bits={log.n}")
    click.echo(f"path={out_path}")


@main.command()
@click.argument("rawfile", type=click.Path(exists=True))
@click.option("--h-rate", type=float, required=True, help="certified min-entropy per raw bit")
@click.option("--block-n", type=int, default=100_000, show_default=True)
@click.option("--epsilon", default="2^-64", show_default=True)
@click.option("--seed-file", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", type=click.Path(), required=True)
@_exit_on_error
def extract(rawfile, h_rate, block_n, epsilon, seed_file, out_path) -> None:
    """Extract near-uniform bits from a raw-bit file or generation log."""
    raw = load_raw_bits(rawfile)
    params = ExtractorParams(block_n, parse_epsilon(epsilon), h_rate)
    seed, seed_ref = resolve_seed(params, seed_file)
    result = extract_stream(raw, params, seed=seed)
    write_bits_file(
        out_path,
        result.output,
        {
            "role": "extracted",
            "block_n": str(params.n),
            "block_m": str(params.m),
            "epsilon": format_epsilon(params.epsilon),
            "h_rate": repr(params.h_rate),
            seed_ref.split("=", 1)[0]: seed_ref.split("=", 1)[1],
            "source": rawfile,
        },
    )
    click.echo(f"blocks={result.blocks}")
    click.echo(f"block_m={params.m}")
    click.echo(f"ratio={params.ratio!r}")
    click.echo(f"output_bits={result.output.bit_length}")
    click.echo(f"path={out_path}")


@main.command("test")
@click.argument("bitsfile", type=click.Path(exists=True))
@click.option("--tests", "test_list", default="all", show_default=True)
@click.option("--significance", type=float, default=0.01, show_default=True)
@click.option("--report", "report_path", type=click.Path(), default=None)
@_exit_on_error
def test_cmd(bitsfile, test_list, significance, report_path) -> None:
    """Run the statistical battery on a packed bit file."""
    stream = read_bits_file(bitsfile)
    token = test_list.strip().lower()
    if token == "all":
        names = ALL_TESTS
    elif token in ("", "none"):
        names = ()
    else:
        names = tuple(t.strip() for t in test_list.split(",") if t.strip())
    results = run_battery(stream, BatteryConfig(tests=names, significance=significance))
    block = battery_report(results)
    click.echo(block, nl=False)
    if report_path:
        Path(report_path).write_text(block, encoding="ascii")
    if any(not r.passed for r in results):
        sys.exit(1)


@main.command("pipeline")
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--out", "out_dir", type=click.Path(), default=None)
@click.option("--report", "report_path", type=click.Path(), default=None)
@click.option("--recalibrate-every", type=int, default=None, help="raw bits between recertifications")
@_exit_on_error
def pipeline_cmd(config_path, out_dir, report_path, recalibrate_every) -> None:
    """Run simulate, calibrate, certify, generate, extract and test."""
    cfg = load_config(config_path)
    if recalibrate_every is not None:
        cfg.recalibrate_every = recalibrate_every
    target = out_dir or cfg.out_dir
    if not target:
        raise ConfigError("no output directory: set out_dir in the config or pass --out")
    report = run_pipeline(cfg, target, report_path=report_path)
    click.echo(report.render(), nl=False)


if __name__ == "__main__":
    main()
