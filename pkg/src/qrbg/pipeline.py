"""End-to-end orchestration: simulate, calibrate, certify, generate,
extract, test, report.

A run is driven by a flat ASCII key=value configuration.  Calibration and
generation always use disjoint event streams derived from distinct
sub-seeds of the master seed, mirroring off-line calibration: the bits
that are extracted never enter the tomographic estimate.  The certified
entropy rate fixes the extractor's output length before any raw bit is
generated; if it admits no output the run aborts without generating.

Every file a run emits is listed in its report together with a SHA-256
digest, and the extracted file is re-read after writing so the report's
accounting line reflects the bytes actually on disk.
"""

from __future__ import annotations

import hashlib
import math
import secrets
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .bits import BitStream, read_bits_file, write_bits_file
from .errors import ConfigError, QrbgError
from .extractor import (
    ExtractorParams,
    HashSeed,
    extract_stream,
    format_epsilon,
    parse_epsilon,
)
from .minentropy import EntropyRate
from .sources import (
    PRNG_NAME,
    Adversarial,
    Entangled,
    EventLog,
    SinglePhoton,
    SourceModel,
    Variant,
    blocked_schedule,
    derive_subseeds,
    load_event_log,
    sample_events,
    sample_raw_bits,
    save_event_log,
)
from .stat_tests import ALL_TESTS, BatteryConfig, TestResult, battery_report, pass_fraction, run_battery
from .states import Decomposition, PureState, StokesVector, worst_case_decomposition, stokes_to_density
from .tomography import TomographyResult, certify, reconstruct, state_report

SECURITY_NOTE = (
    "statistical tests check implementation correctness only; "
    "the security claim rests on the certified min-entropy rate"
)

_CONFIG_KEYS = (
    "mode",
    "rng_seed",
    "state",
    "coherence",
    "accidental_fraction",
    "phase",
    "adv_target",
    "adv_weights",
    "adv_states",
    "tomography_events",
    "alpha",
    "conservative",
    "generation_bits",
    "block_n",
    "epsilon",
    "seed_file",
    "tests",
    "significance",
    "gen_format",
    "out_dir",
    "recalibrate_every",
    "min_basis_count",
)


@dataclass
class PipelineConfig:
    mode: str = "single"
    rng_seed: int | None = None
    state: StokesVector | None = None
    coherence: float | None = None
    accidental_fraction: float = 0.0
    phase: float = 0.0
    adv_target: StokesVector | None = None
    adv_weights: tuple[float, ...] | None = None
    adv_states: tuple[tuple[float, float, float], ...] | None = None
    tomography_events: int = 3_000_000
    alpha: float = 0.01
    conservative: bool = False
    generation_bits: int = 1_000_000
    block_n: int = 100_000
    epsilon: float = 2.0 ** -64
    seed_file: str | None = None
    tests: tuple[str, ...] = ALL_TESTS
    significance: float = 0.01
    gen_format: str = "bits"
    out_dir: str | None = None
    recalibrate_every: int | None = None
    min_basis_count: int = 100

    def validate(self) -> None:
        if self.mode not in ("single", "entangled", "adversarial"):
            raise ConfigError(f"mode must be single|entangled|adversarial, got {self.mode!r}")
        if self.mode == "single" and self.state is None:
            raise ConfigError("single mode requires 'state = s1,s2,s3'")
        if self.mode == "entangled" and self.coherence is None:
            raise ConfigError("entangled mode requires 'coherence'")
        if self.mode == "adversarial":
            has_explicit = self.adv_weights is not None or self.adv_states is not None
            if self.adv_target is None and not (self.adv_weights and self.adv_states):
                raise ConfigError(
                    "adversarial mode requires 'adv_target' or both "
                    "'adv_weights' and 'adv_states'"
                )
            if self.adv_target is not None and has_explicit:
                raise ConfigError("give either adv_target or adv_weights/adv_states, not both")
        for name, value in (
            ("tomography_events", self.tomography_events),
            ("generation_bits", self.generation_bits),
            ("block_n", self.block_n),
            ("min_basis_count", self.min_basis_count),
        ):
            if int(value) < 1:
                raise ConfigError(f"{name} must be positive, got {value}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha {self.alpha} outside (0, 1)")
        if not 0.0 < self.epsilon < 1.0:
            raise ConfigError(f"epsilon {self.epsilon} outside (0, 1)")
        if self.gen_format not in ("bits", "events"):
            raise ConfigError(f"gen_format must be bits|events, got {self.gen_format!r}")
        if self.recalibrate_every is not None and self.recalibrate_every < 1:
            raise ConfigError("recalibrate_every must be positive")

    def variant(self) -> Variant:
        if self.mode == "single":
            return SinglePhoton(self.state)
        if self.mode == "entangled":
            return Entangled(self.coherence, self.accidental_fraction, self.phase)
        if self.adv_target is not None:
            d = worst_case_decomposition(stokes_to_density(self.adv_target))
        else:
            if len(self.adv_weights) != len(self.adv_states):
                raise ConfigError("adv_weights and adv_states differ in length")
            d = Decomposition(
                tuple(
                    (w, PureState(StokesVector(*s)))
                    for w, s in zip(self.adv_weights, self.adv_states)
                )
            )
        return Adversarial(d)

    def echo(self) -> list[tuple[str, str]]:
        """Canonical key=value view of the effective configuration."""
        pairs: list[tuple[str, str]] = [("mode", self.mode)]
        if self.rng_seed is not None:
            pairs.append(("rng_seed", str(self.rng_seed)))
        if self.state is not None:
            s = self.state
            pairs.append(("state", f"{s.s1!r},{s.s2!r},{s.s3!r}"))
        if self.coherence is not None:
            pairs.append(("coherence", repr(self.coherence)))
            pairs.append(("accidental_fraction", repr(self.accidental_fraction)))
            pairs.append(("phase", repr(self.phase)))
        if self.adv_target is not None:
            t = self.adv_target
            pairs.append(("adv_target", f"{t.s1!r},{t.s2!r},{t.s3!r}"))
        if self.adv_weights is not None:
            pairs.append(("adv_weights", ",".join(repr(w) for w in self.adv_weights)))
            pairs.append(
                (
                    "adv_states",
                    ";".join(",".join(repr(c) for c in s) for s in self.adv_states),
                )
            )
        pairs += [
            ("tomography_events", str(self.tomography_events)),
            ("alpha", repr(self.alpha)),
            ("conservative", str(int(self.conservative))),
            ("generation_bits", str(self.generation_bits)),
            ("block_n", str(self.block_n)),
            ("epsilon", format_epsilon(self.epsilon)),
            ("tests", ",".join(self.tests) if self.tests else "none"),
            ("significance", repr(self.significance)),
            ("gen_format", self.gen_format),
            ("min_basis_count", str(self.min_basis_count)),
        ]
        if self.seed_file:
            pairs.append(("seed_file", self.seed_file))
        if self.recalibrate_every is not None:
            pairs.append(("recalibrate_every", str(self.recalibrate_every)))
        if self.out_dir:
            pairs.append(("out_dir", self.out_dir))
        return pairs


def _parse_triple(value: str, key: str) -> StokesVector:
    parts = [p for p in value.replace(";", ",").split(",") if p.strip()]
    if len(parts) != 3:
        raise ConfigError(f"{key} needs three comma-separated numbers, got {value!r}")
    try:
        return StokesVector(*(float(p) for p in parts))
    except QrbgError:
        raise
    except ValueError as exc:
        raise ConfigError(f"bad number in {key}: {exc}") from None


def parse_config_text(text: str) -> PipelineConfig:
    cfg = PipelineConfig()
    seen: set[str] = set()
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate config key {key!r}")
        seen.add(key)
        try:
            _apply_key(cfg, key, value)
        except (ValueError, QrbgError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    cfg.validate()
    return cfg


def _apply_key(cfg: PipelineConfig, key: str, value: str) -> None:
    if key == "mode":
        cfg.mode = value
    elif key == "rng_seed":
        cfg.rng_seed = int(value)
    elif key == "state":
        cfg.state = _parse_triple(value, key)
    elif key == "coherence":
        cfg.coherence = float(value)
    elif key == "accidental_fraction":
        cfg.accidental_fraction = float(value)
    elif key == "phase":
        cfg.phase = float(value)
    elif key == "adv_target":
        cfg.adv_target = _parse_triple(value, key)
    elif key == "adv_weights":
        cfg.adv_weights = tuple(float(p) for p in value.split(",") if p.strip())
    elif key == "adv_states":
        triples = []
        for chunk in value.split(";"):
            parts = [p for p in chunk.split(",") if p.strip()]
            if len(parts) != 3:
                raise ConfigError(f"adv_states entry {chunk!r} needs three numbers")
            triples.append(tuple(float(p) for p in parts))
        cfg.adv_states = tuple(triples)
    elif key == "tomography_events":
        cfg.tomography_events = int(value)
    elif key == "alpha":
        cfg.alpha = float(value)
    elif key == "conservative":
        cfg.conservative = value.strip().lower() in ("1", "true", "yes")
    elif key == "generation_bits":
        cfg.generation_bits = int(value)
    elif key == "block_n":
        cfg.block_n = int(value)
    elif key == "epsilon":
        cfg.epsilon = parse_epsilon(value)
    elif key == "seed_file":
        cfg.seed_file = value
    elif key == "tests":
        token = value.strip().lower()
        if token in ("", "none"):
            cfg.tests = ()
        elif token == "all":
            cfg.tests = ALL_TESTS
        else:
            cfg.tests = tuple(t.strip() for t in value.split(",") if t.strip())
            unknown = [t for t in cfg.tests if t not in ALL_TESTS]
            if unknown:
                raise ConfigError(f"unknown tests {unknown}")
    elif key == "significance":
        cfg.significance = float(value)
    elif key == "gen_format":
        cfg.gen_format = value
    elif key == "out_dir":
        cfg.out_dir = value
    elif key == "recalibrate_every":
        cfg.recalibrate_every = int(value)
    elif key == "min_basis_count":
        cfg.min_basis_count = int(value)


def load_config(path: str) -> PipelineConfig:
    return parse_config_text(Path(path).read_text(encoding="ascii"))


@dataclass
class FileRecord:
    label: str
    path: str
    sha256: str
    size: int


@dataclass
class RunReport:
    timestamp: str
    config: list[tuple[str, str]]
    master_seed: int
    tomography: TomographyResult | None = None
    certified: EntropyRate | None = None
    lower: EntropyRate | None = None
    alpha: float = 0.01
    recalibrations: int = 0
    blocks: int = 0
    block_n: int = 0
    block_m: int = 0
    output_bits: int = 0
    epsilon: float = 0.0
    seed_ref: str = ""
    test_results: list[TestResult] = field(default_factory=list)
    files: list[FileRecord] = field(default_factory=list)
    raw_bits_per_second: float | None = None

    @property
    def ratio(self) -> float:
        return self.block_m / self.block_n if self.block_n else 0.0

    def render(self) -> str:
        out = ["# qrbg run report"]
        out.append(f"timestamp={self.timestamp}")
        out.append(f"prng={PRNG_NAME}")
        out.append(f"master_seed={self.master_seed}")
        out.append("[config]")
        out.extend(f"{k}={v}" for k, v in self.config)
        if self.tomography is not None:
            out.append("[tomography]")
            out.append(
                state_report(
                    self.tomography, self.certified, self.alpha, self.lower
                ).rstrip("\n")
            )
            if self.recalibrations:
                out.append(f"recalibrations={self.recalibrations}")
        if self.block_n:
            out.append("[extraction]")
            out.append(f"certified_rate={self.certified.bits_per_sample!r}")
            out.append(f"blocks={self.blocks}")
            out.append(f"block_n={self.block_n}")
            out.append(f"block_m={self.block_m}")
            out.append(f"ratio={self.ratio!r}")
            out.append(f"output_bits={self.output_bits}")
            out.append(f"epsilon={format_epsilon(self.epsilon)}")
            out.append(f"seed={self.seed_ref}")
            if self.raw_bits_per_second is not None:
                out.append(f"raw_bits_per_second={self.raw_bits_per_second:.3e}")
        if self.test_results:
            out.append("[tests]")
            out.append(battery_report(self.test_results).rstrip("\n"))
            out.append(f"pass_fraction={pass_fraction(self.test_results)!r}")
        if self.files:
            out.append("[files]")
            for rec in self.files:
                out.append(
                    f"file={rec.label} path={rec.path} sha256={rec.sha256} bytes={rec.size}"
                )
        out.append(f"note={SECURITY_NOTE}")
        return "\n".join(out) + "\n"


def _digest(path: Path, label: str) -> FileRecord:
    # paths are recorded relative to the run directory so a report stays
    # valid wherever the directory is moved
    data = path.read_bytes()
    return FileRecord(label, path.name, hashlib.sha256(data).hexdigest(), len(data))


def _stage(name: str, exc: Exception) -> Exception:
    if isinstance(exc, (QrbgError, OSError)) and not str(exc).startswith("["):
        try:
            return type(exc)(f"[{name}] {exc}")
        except TypeError:
            return exc
    return exc


def simulate_logs(
    config: PipelineConfig, out_dir: str
) -> tuple[Path, Path, int]:
    """Write a calibration log and a generation log with distinct sub-seeds.

    Returns (calibration path, generation path, master seed).  The
    generation file is either an ASCII event log or a packed raw-bit file
    depending on gen_format.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    master = config.rng_seed if config.rng_seed is not None else secrets.randbits(63)
    calib_seed, gen_seed = derive_subseeds(master, 2)
    variant = config.variant()

    calib_log = sample_events(
        SourceModel(variant, calib_seed),
        blocked_schedule(config.tomography_events),
        config.tomography_events,
    )
    calib_path = out / "calibration.log"
    save_event_log(calib_log, str(calib_path))

    gen_model = SourceModel(variant, gen_seed)
    if config.gen_format == "events":
        gen_log = sample_events(
            gen_model,
            np.zeros(config.generation_bits, dtype=np.uint8),
            config.generation_bits,
        )
        gen_path = out / "generation.log"
        save_event_log(gen_log, str(gen_path))
    else:
        raw = sample_raw_bits(gen_model, config.generation_bits)
        gen_path = out / "raw.bits"
        write_bits_file(
            str(gen_path),
            BitStream(raw),
            {
                "role": "raw",
                "source": gen_model.describe(),
                "seed": str(gen_seed),
                "prng": PRNG_NAME,
            },
        )
    return calib_path, gen_path, master


def load_raw_bits(path: str) -> np.ndarray:
    """Raw generation bits from either container format."""
    with open(path, "rb") as fh:
        head = fh.read(8)
    if head.startswith(b"QRBGBITS"):
        return read_bits_file(path).bits
    return load_event_log(path).outcomes


def resolve_seed(params: ExtractorParams, seed_file: str | None) -> tuple[HashSeed, str]:
    """Session seed plus the header reference recording where it came from."""
    needed = params.seed_bits_needed
    if seed_file:
        stream = read_bits_file(seed_file)
        if stream.meta.get("role") not in (None, "seed"):
            raise ConfigError(f"{seed_file} has role={stream.meta.get('role')}, expected seed")
        if stream.bit_length < needed:
            raise ConfigError(
                f"seed file holds {stream.bit_length} bits, extractor needs {needed}"
            )
        return HashSeed(stream.bits[:needed]), f"seed_file={seed_file}"
    seed = HashSeed.system(needed)
    return seed, f"seed_hex={seed.hex}"


def run_pipeline(
    config: PipelineConfig,
    out_dir: str,
    report_path: str | None = None,
) -> RunReport:
    """Run every stage and write a single report.

    Fails fast at the first stage error; insufficient certified entropy
    aborts before any generation happens.
    """
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    master = config.rng_seed if config.rng_seed is not None else secrets.randbits(63)
    variant = config.variant()
    report = RunReport(
        timestamp=datetime.now(timezone.utc).isoformat(),
        config=config.echo(),
        master_seed=master,
        alpha=config.alpha,
    )

    recal = config.recalibrate_every
    segments = 1
    if recal is not None:
        segments = max(1, math.ceil(config.generation_bits / recal))
    seeds = derive_subseeds(master, 1 + segments)
    gen_seed, calib_seeds = seeds[0], seeds[1:]

    # calibrate (certification uses the worst segment)
    try:
        certified: EntropyRate | None = None
        lower: EntropyRate | None = None
        first_result: TomographyResult | None = None
        calib_path = out / "calibration.log"
        for i, calib_seed in enumerate(calib_seeds):
            calib_log = sample_events(
                SourceModel(variant, calib_seed),
                blocked_schedule(config.tomography_events),
                config.tomography_events,
            )
            if i == 0:
                save_event_log(calib_log, str(calib_path))
            result, rate = reconstruct(
                calib_log,
                alpha=config.alpha,
                conservative=config.conservative,
                min_count=config.min_basis_count,
            )
            _, seg_lower = certify(result, config.alpha)
            if certified is None or float(rate) < float(certified):
                certified, lower, first_result = rate, seg_lower, result
        report.tomography = first_result
        report.certified = certified
        report.lower = lower
        report.recalibrations = segments if recal is not None else 0
        report.files.append(_digest(calib_path, "calibration_log"))
    except Exception as exc:
        raise _stage("calibrate", exc) from exc

    # certify extractor accounting before generating anything
    try:
        params = ExtractorParams(config.block_n, config.epsilon, float(certified))
    except Exception as exc:
        raise _stage("certify", exc) from exc

    # generate
    try:
        gen_model = SourceModel(variant, gen_seed)
        raw = sample_raw_bits(gen_model, config.generation_bits)
        if config.gen_format == "events":
            gen_path = out / "generation.log"
            save_event_log(
                EventLog(
                    gen_model.describe(),
                    gen_seed,
                    np.zeros(config.generation_bits, dtype=np.uint8),
                    raw,
                    None,
                ),
                str(gen_path),
            )
        else:
            gen_path = out / "raw.bits"
            write_bits_file(
                str(gen_path),
                BitStream(raw),
                {
                    "role": "raw",
                    "source": gen_model.describe(),
                    "seed": str(gen_seed),
                    "prng": PRNG_NAME,
                },
            )
        # generation bits must never feed the state estimate
        assert gen_path != calib_path and gen_seed not in calib_seeds
        report.files.append(_digest(gen_path, "generation_raw"))
    except Exception as exc:
        raise _stage("generate", exc) from exc

    # extract
    try:
        seed, seed_ref = resolve_seed(params, config.seed_file)
        t1 = time.perf_counter()
        result = extract_stream(raw, params, seed=seed)
        t2 = time.perf_counter()
        extracted_path = out / "extracted.bits"
        write_bits_file(
            str(extracted_path),
            result.output,
            {
                "role": "extracted",
                "block_n": str(params.n),
                "block_m": str(params.m),
                "epsilon": format_epsilon(params.epsilon),
                "h_rate": repr(params.h_rate),
                seed_ref.split("=", 1)[0]: seed_ref.split("=", 1)[1],
                "source": gen_model.describe(),
            },
        )
        # accounting audit against the bytes actually written
        reread = read_bits_file(str(extracted_path))
        if reread.bit_length != result.blocks * params.m:
            raise QrbgError(
                f"accounting mismatch: file holds {reread.bit_length} bits, "
                f"expected {result.blocks * params.m}"
            )
        report.blocks = result.blocks
        report.block_n = params.n
        report.block_m = params.m
        report.output_bits = reread.bit_length
        report.epsilon = params.epsilon
        report.seed_ref = seed_ref
        hashed = result.blocks * params.n
        if t2 > t1 and hashed:
            report.raw_bits_per_second = hashed / (t2 - t1)
        report.files.append(_digest(extracted_path, "extracted_bits"))
    except Exception as exc:
        raise _stage("extract", exc) from exc

    # test
    try:
        if config.tests:
            battery = BatteryConfig(
                tests=config.tests, significance=config.significance
            )
            report.test_results = run_battery(reread.bits, battery)
    except Exception as exc:
        raise _stage("test", exc) from exc

    target = Path(report_path) if report_path else out / "report.txt"
    target.write_text(report.render(), encoding="ascii")
    return report
