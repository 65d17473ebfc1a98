"""Seeded simulation of polarization-qubit sources.

Three source variants produce detection events:

* ``SinglePhoton``: a fixed qubit state measured event by event.
* ``Entangled``: a photon-pair source observed through coincidence
  detection.  Only the two-detector subspace is kept, which behaves as an
  effective qubit; dephasing and accidental-coincidence background both
  act inside that subspace before any event is recorded, and nothing is
  ever subtracted afterwards.
* ``Adversarial``: an attacker prepares each event as one pure state drawn
  from a decomposition of the target density matrix and remembers which.

Outcomes follow the Born rule in the scheduled measurement basis:
``P(outcome 0) = (1 + s.u)/2`` for Bloch vector ``s`` and basis direction
``u`` in {Z=(0,0,1), X=(1,0,0), Y=(0,1,0)}.  Outcome 0 is an H-type click,
1 a V-type click (H1-V2 / V1-H2 for coincidences).

Sampling uses numpy's PCG64 generator and consumes random numbers in a
fixed chunked order, so equal (model, schedule, n, seed) inputs reproduce
identical logs.  Distinct logs with distinct seeds may be generated
concurrently; a single log is generated sequentially.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence, TextIO, Union

import numpy as np

from .errors import EmptyInputError, ParameterError
from .states import (
    Decomposition,
    DensityMatrix,
    StokesVector,
    density_to_stokes,
    rotate_equatorial,
    stokes_to_density,
)

PRNG_NAME = "numpy-pcg64"

BASIS_CHARS = ("Z", "X", "Y")
_BASIS_CODE = {"Z": 0, "X": 1, "Y": 2}

# Fixed sampling chunk; part of the reproducibility contract because it
# determines the order in which random numbers are consumed.
_CHUNK = 1 << 22


@dataclass(frozen=True)
class SinglePhoton:
    state: StokesVector

    def describe(self) -> str:
        s = self.state
        return f"single_photon(s1={s.s1!r},s2={s.s2!r},s3={s.s3!r})"


@dataclass(frozen=True)
class Entangled:
    coherence: float
    accidental_fraction: float = 0.0
    phase: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.coherence <= 1.0:
            raise ParameterError(f"coherence {self.coherence} outside [0, 1]")
        if not 0.0 <= self.accidental_fraction < 1.0:
            raise ParameterError(
                f"accidental_fraction {self.accidental_fraction} outside [0, 1)"
            )

    def describe(self) -> str:
        return (
            f"entangled(coherence={self.coherence!r},"
            f"accidental_fraction={self.accidental_fraction!r},"
            f"phase={self.phase!r})"
        )


@dataclass(frozen=True)
class Adversarial:
    decomposition: Decomposition

    def describe(self) -> str:
        return f"adversarial(terms={len(self.decomposition.terms)})"


Variant = Union[SinglePhoton, Entangled, Adversarial]


@dataclass(frozen=True)
class SourceModel:
    variant: Variant
    rng_seed: int

    def __post_init__(self) -> None:
        seed = int(self.rng_seed)
        if not 0 <= seed < 2 ** 64:
            raise ParameterError("rng_seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "rng_seed", seed)

    def describe(self) -> str:
        return self.variant.describe()


class EventRecord(NamedTuple):
    index: int
    basis: str
    outcome: int
    eve_label: int | None


@dataclass(frozen=True)
class EventLog:
    """Ordered detection events plus the provenance needed to recreate them."""

    source: str
    seed: int
    bases: np.ndarray
    outcomes: np.ndarray
    eve_labels: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.outcomes.shape[0])

    def __len__(self) -> int:
        return self.n

    def records(self) -> Iterator[EventRecord]:
        labels = self.eve_labels
        for i in range(self.n):
            yield EventRecord(
                i,
                BASIS_CHARS[self.bases[i]],
                int(self.outcomes[i]),
                None if labels is None else int(labels[i]),
            )


def effective_qubit(
    coherence: float, accidental_fraction: float, phase: float = 0.0
) -> DensityMatrix:
    """Effective qubit seen by coincidence detection of a photon pair.

    A dephased maximally entangled pair restricted to the coincidence
    subspace gives a balanced state with equatorial Bloch vector of length
    ``coherence``.  Accidental coincidences add a uniform background in the
    same subspace, shrinking the coherence to coherence*(1 - fraction)
    while the populations stay at 1/2 each.  ``phase`` rotates the
    coherence in the equatorial plane (fiber birefringence) and has no
    effect on any coherence-magnitude quantity.
    """
    model = Entangled(coherence, accidental_fraction, phase)
    c_eff = model.coherence * (1.0 - model.accidental_fraction)
    bloch = rotate_equatorial(StokesVector(c_eff, 0.0, 0.0), model.phase)
    return stokes_to_density(bloch)


def _variant_bloch(variant: Variant) -> StokesVector:
    if isinstance(variant, SinglePhoton):
        return variant.state
    if isinstance(variant, Entangled):
        return density_to_stokes(
            effective_qubit(
                variant.coherence, variant.accidental_fraction, variant.phase
            )
        )
    raise TypeError(f"no single Bloch vector for {type(variant).__name__}")


def constant_schedule(basis: str, n: int) -> np.ndarray:
    return np.full(n, _BASIS_CODE[basis], dtype=np.uint8)


def blocked_schedule(n: int) -> np.ndarray:
    """Equal thirds of Z, X, Y in consecutive blocks (remainder goes Z, X)."""
    per = n // 3
    sched = np.full(n, _BASIS_CODE["Y"], dtype=np.uint8)
    sched[:per] = _BASIS_CODE["Z"]
    sched[per : 2 * per] = _BASIS_CODE["X"]
    rest = n - 3 * per
    if rest:
        sched[3 * per :] = [_BASIS_CODE["Z"], _BASIS_CODE["X"]][:rest]
    return sched


def round_robin_schedule(n: int) -> np.ndarray:
    return (np.arange(n) % 3).astype(np.uint8)


def as_schedule(schedule: Union[np.ndarray, Sequence[str]], n: int) -> np.ndarray:
    if isinstance(schedule, np.ndarray) and schedule.dtype == np.uint8:
        sched = schedule
    else:
        try:
            sched = np.fromiter(
                (_BASIS_CODE[b] for b in schedule), dtype=np.uint8
            )
        except KeyError as exc:
            raise ParameterError(f"unknown basis {exc.args[0]!r}") from None
    if sched.shape[0] != n:
        raise ParameterError(
            f"schedule length {sched.shape[0]} does not match n={n}"
        )
    if sched.size and sched.max() > 2:
        raise ParameterError("basis codes must be 0 (Z), 1 (X) or 2 (Y)")
    return sched


def _basis_p0(bloch: StokesVector) -> np.ndarray:
    # P(outcome 0) per basis code, order Z, X, Y
    return 0.5 * (1.0 + np.array([bloch.s3, bloch.s1, bloch.s2]))


def sample_events(
    model: SourceModel,
    basis_schedule: Union[np.ndarray, Sequence[str]],
    n: int,
) -> EventLog:
    """Draw ``n`` Born-rule outcomes under the given basis schedule.

    Adversarial sources first draw the prepared term for each event of a
    chunk, then the outcome uniforms for that chunk; the per-event term
    index is recorded as the event's eve_label.
    """
    if n < 1:
        raise ParameterError("n must be >= 1")
    sched = as_schedule(basis_schedule, n)
    rng = np.random.default_rng(model.rng_seed)
    outcomes = np.empty(n, dtype=np.uint8)
    variant = model.variant

    if isinstance(variant, Adversarial):
        d = variant.decomposition
        cum = np.cumsum(d.weights())
        cum[-1] = 1.0
        blochs = d.bloch_vectors()
        # rows: term, columns: basis code (Z, X, Y)
        p0 = 0.5 * (1.0 + blochs[:, [2, 0, 1]])
        labels = np.empty(n, dtype=np.int32)
        for start in range(0, n, _CHUNK):
            stop = min(start + _CHUNK, n)
            chunk_labels = np.searchsorted(
                cum, rng.random(stop - start), side="right"
            )
            labels[start:stop] = chunk_labels
            p_chunk = p0[chunk_labels, sched[start:stop]]
            outcomes[start:stop] = rng.random(stop - start) >= p_chunk
        return EventLog(model.describe(), model.rng_seed, sched, outcomes, labels)

    p0 = _basis_p0(_variant_bloch(variant))
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        p_chunk = p0[sched[start:stop]]
        outcomes[start:stop] = rng.random(stop - start) >= p_chunk
    return EventLog(model.describe(), model.rng_seed, sched, outcomes, None)


def sample_raw_bits(model: SourceModel, n: int) -> np.ndarray:
    """Computational-basis outcomes only, for generation runs.

    Identical to ``sample_events`` with a constant-Z schedule but without
    materializing the per-event basis array.
    """
    log = sample_events(model, constant_schedule("Z", n), n)
    return log.outcomes


def sample_coincidences(
    coherence: float,
    accidental_fraction: float,
    basis_schedule: Union[np.ndarray, Sequence[str]],
    n: int,
    seed: int,
    phase: float = 0.0,
) -> EventLog:
    """Coincidence events from the entangled source.

    Provided as its own entry point so the entangled pipeline is explicit:
    the accidental background enters the state before events are drawn and
    there is no operation anywhere that removes it afterwards.
    """
    model = SourceModel(Entangled(coherence, accidental_fraction, phase), seed)
    return sample_events(model, basis_schedule, n)


def write_event_log(log: EventLog, fh: TextIO) -> None:
    """ASCII event-log format: '# key=value' header lines then one
    'index,basis,outcome[,eve_label]' record per line."""
    fh.write(f"# source={log.source}\n")
    fh.write(f"# seed={log.seed}\n")
    fh.write(f"# n={log.n}\n")
    fh.write(f"# prng={PRNG_NAME}\n")
    labels = log.eve_labels
    for start in range(0, log.n, 1 << 20):
        stop = min(start + (1 << 20), log.n)
        if labels is None:
            lines = [
                f"{i},{BASIS_CHARS[log.bases[i]]},{log.outcomes[i]}"
                for i in range(start, stop)
            ]
        else:
            lines = [
                f"{i},{BASIS_CHARS[log.bases[i]]},{log.outcomes[i]},{labels[i]}"
                for i in range(start, stop)
            ]
        fh.write("\n".join(lines))
        fh.write("\n")


def save_event_log(log: EventLog, path: str) -> None:
    with open(path, "w", encoding="ascii") as fh:
        write_event_log(log, fh)


def read_event_log(fh: TextIO) -> EventLog:
    header: dict[str, str] = {}
    bases: list[int] = []
    outcomes: list[int] = []
    labels: list[int] = []
    expected = 0
    for line in fh:
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
            continue
        fields = line.split(",")
        if len(fields) not in (3, 4):
            raise ParameterError(f"malformed event record: {line!r}")
        if int(fields[0]) != expected:
            raise ParameterError(
                f"event index {fields[0]} out of order (expected {expected})"
            )
        expected += 1
        bases.append(_BASIS_CODE[fields[1]])
        outcomes.append(int(fields[2]))
        if len(fields) == 4:
            labels.append(int(fields[3]))
    if expected == 0:
        raise EmptyInputError("event log contains no records")
    if labels and len(labels) != expected:
        raise ParameterError("eve_label present on only some records")
    n_declared = header.get("n")
    if n_declared is not None and int(n_declared) != expected:
        raise ParameterError(
            f"header declares n={n_declared} but log has {expected} records"
        )
    return EventLog(
        header.get("source", "unknown"),
        int(header.get("seed", 0)),
        np.array(bases, dtype=np.uint8),
        np.array(outcomes, dtype=np.uint8),
        np.array(labels, dtype=np.int32) if labels else None,
    )


def load_event_log(path: str) -> EventLog:
    with open(path, "r", encoding="ascii") as fh:
        return read_event_log(fh)


def derive_subseeds(master_seed: int, count: int) -> list[int]:
    """Deterministic child seeds drawn from the master PCG64 stream."""
    rng = np.random.default_rng(master_seed)
    return [int(x) for x in rng.integers(0, 2 ** 63, size=count)]
