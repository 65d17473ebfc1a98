"""State reconstruction from measured counts.

Calibration runs measure the source in the three complementary bases.
Linear inversion maps each basis's outcome counts to one Stokes component;
if the resulting point falls outside the unit sphere it is scaled back
radially, which for a qubit is exactly the nearest physical state and can
only shrink the coherence, i.e. it errs in the secure direction for the
certified entropy rate.

Calibration is a separate run from bit generation; the certified rate is
assumed valid while the source state does not drift between the two.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, InsufficientDataError
from .minentropy import EntropyRate, lower_confidence_rate, rate_from_coherence
from .sources import BASIS_CHARS, EventLog
from .states import StokesVector

DEFAULT_MIN_COUNT = 100


@dataclass(frozen=True)
class CountTable:
    """Outcome counts per measurement basis; rows ordered Z, X, Y."""

    counts: np.ndarray  # shape (3, 2): [basis code][outcome]

    def __post_init__(self) -> None:
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (3, 2):
            raise ValueError(f"expected counts of shape (3, 2), got {c.shape}")
        if (c < 0).any():
            raise ValueError("counts must be nonnegative")
        c.flags.writeable = False
        object.__setattr__(self, "counts", c)

    def n0(self, basis: str) -> int:
        return int(self.counts[BASIS_CHARS.index(basis), 0])

    def n1(self, basis: str) -> int:
        return int(self.counts[BASIS_CHARS.index(basis), 1])

    def total(self) -> int:
        return int(self.counts.sum())

    def per_basis(self) -> np.ndarray:
        return self.counts.sum(axis=1)


@dataclass(frozen=True)
class TomographyResult:
    """Estimated state with its statistics.

    ``s_raw`` is the raw linear-inversion vector and may be non-physical;
    ``s_hat`` is always physical.  ``projected`` is set exactly when the
    raw vector had to be scaled back to the sphere.
    """

    s_hat: StokesVector
    s_raw: np.ndarray
    stderr: np.ndarray
    n_per_basis: np.ndarray
    projected: bool


def tally(log: EventLog) -> CountTable:
    """Count outcomes per (basis, outcome) cell."""
    if log.n == 0:
        raise EmptyInputError("cannot tally an empty event log")
    cells = log.bases.astype(np.int64) * 2 + log.outcomes
    counts = np.bincount(cells, minlength=6).reshape(3, 2)
    return CountTable(counts)


def estimate_stokes(
    c: CountTable, min_count: int = DEFAULT_MIN_COUNT
) -> TomographyResult:
    """Linear inversion with radial projection to the physical ball.

    Component estimates are (n0 - n1)/(n0 + n1) per basis (X -> s1,
    Y -> s2, Z -> s3) with standard error sqrt((1 - s^2)/n).
    """
    per_basis = c.per_basis()
    low = [BASIS_CHARS[i] for i in range(3) if per_basis[i] < min_count]
    if low:
        raise InsufficientDataError(
            f"bases {low} below the {min_count}-count floor "
            f"(counts {per_basis.tolist()})"
        )
    diff = (c.counts[:, 0] - c.counts[:, 1]).astype(float)
    est_zxy = diff / per_basis
    # reorder basis codes (Z, X, Y) into components (s1, s2, s3)
    s_raw = np.array([est_zxy[1], est_zxy[2], est_zxy[0]])
    n_comp = np.array([per_basis[1], per_basis[2], per_basis[0]])
    stderr = np.sqrt(np.maximum(0.0, 1.0 - s_raw ** 2) / n_comp)
    norm = float(np.linalg.norm(s_raw))
    projected = norm > 1.0
    s_phys = s_raw / norm if projected else s_raw
    return TomographyResult(
        s_hat=StokesVector(*s_phys),
        s_raw=s_raw,
        stderr=stderr,
        n_per_basis=n_comp,
        projected=projected,
    )


def reconstruct(
    log: EventLog,
    alpha: float = 0.01,
    conservative: bool = False,
    min_count: int = DEFAULT_MIN_COUNT,
) -> tuple[TomographyResult, EntropyRate]:
    """Tally a calibration log, estimate the state, certify a rate.

    The certified rate is the closed form evaluated at the estimated
    coherence.  With ``conservative=True`` the estimate is first deflated
    by the Hoeffding margin at confidence ``alpha`` (see
    ``lower_confidence_rate``); the deflated figure is reported in either
    case.
    """
    result = estimate_stokes(tally(log), min_count=min_count)
    if conservative:
        rate = lower_confidence_rate(
            result.s_hat, int(result.n_per_basis.min()), alpha
        )
    else:
        rate = rate_from_coherence(result.s_hat.coherence)
    return result, rate


def state_report(
    result: TomographyResult,
    rate: EntropyRate,
    alpha: float,
    lower: EntropyRate | None = None,
) -> str:
    """ASCII key=value block describing a calibration."""
    s = result.s_hat
    lines = [
        f"s1={s.s1!r}",
        f"s2={s.s2!r}",
        f"s3={s.s3!r}",
        f"stderr1={result.stderr[0]!r}",
        f"stderr2={result.stderr[1]!r}",
        f"stderr3={result.stderr[2]!r}",
        f"projected={int(result.projected)}",
        f"n_per_basis={','.join(str(int(x)) for x in result.n_per_basis)}",
        f"minentropy_rate={rate.bits_per_sample!r}",
        f"alpha={alpha!r}",
    ]
    if lower is not None:
        lines.append(f"minentropy_lower={lower.bits_per_sample!r}")
        lines.append(
            "note=minentropy_lower is a Hoeffding deflation added by this "
            "implementation, not part of the certified figure"
        )
    return "\n".join(lines) + "\n"


def certify(
    result: TomographyResult, alpha: float
) -> tuple[EntropyRate, EntropyRate]:
    """Plug-in certified rate and its Hoeffding lower companion."""
    plug_in = rate_from_coherence(result.s_hat.coherence)
    lower = lower_confidence_rate(
        result.s_hat, int(result.n_per_basis.min()), alpha
    )
    return plug_in, lower
