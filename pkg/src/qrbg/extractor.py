"""Seeded randomness extraction with explicit entropy accounting.

A binary Toeplitz matrix hashed against each raw block implements a
2-universal family: output bit j is the parity of the AND between the raw
block and matrix row j, with T[j][k] = seed[j - k + n - 1].  The seed of
n + m - 1 uniform bits is public but must be drawn independently of the
raw data; one seed is drawn per session and reused across blocks.

The output length per n-bit block at statistical distance epsilon from
uniform, given a certified min-entropy rate h, is

    m = floor(h*n - 4*log2(1/epsilon) - 2)

m is floored, so fractional entropy is forfeited per block; a raw tail
shorter than one block is discarded, never buffered.  Both choices keep
the accounting stateless and auditable.

The hot path computes each block's parity vector as one integer
convolution via real FFTs (the seed transform is cached for the whole
session).  Convolution coefficients are bounded by n, far below the 2^53
integer ceiling of float64, and a residual guard rejects any transform
whose rounding error approaches one half, so outputs are bit-exact.
"""

from __future__ import annotations

import math
import secrets
import warnings
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy import fft as _fft

from .bits import BitStream, pack_bits, unpack_bits
from .errors import InsufficientEntropyError, ParameterError
from .minentropy import EntropyRate

_FFT_GUARD = 0.25


def parse_epsilon(text: Union[str, float]) -> float:
    """Accept '2^-K' or a plain float literal."""
    if isinstance(text, (int, float)):
        eps = float(text)
    else:
        text = text.strip()
        if text.startswith("2^"):
            eps = 2.0 ** float(text[2:])
        else:
            eps = float(text)
    if not 0.0 < eps < 1.0:
        raise ParameterError(f"epsilon {eps} outside (0, 1)")
    return eps


def format_epsilon(eps: float) -> str:
    exp = math.log2(eps)
    if eps == 2.0 ** round(exp):
        return f"2^{round(exp)}"
    return repr(eps)


def output_length(
    h: Union[EntropyRate, float], n: int, epsilon: float
) -> int:
    """Extractable bits per n-bit block; may be <= 0 (callers must reject)."""
    if not 0.0 < epsilon < 1.0:
        raise ParameterError(f"epsilon {epsilon} outside (0, 1)")
    if n < 1:
        raise ParameterError("block size n must be >= 1")
    rate = float(h)
    return math.floor(rate * n - 4.0 * math.log2(1.0 / epsilon) - 2.0)


@dataclass(frozen=True)
class ExtractorParams:
    """Block size, distance target and certified rate, with m derived."""

    n: int
    epsilon: float
    h_rate: float
    m: int = 0

    def __post_init__(self) -> None:
        rate = float(self.h_rate)
        m = output_length(rate, self.n, self.epsilon)
        if m < 1:
            raise InsufficientEntropyError(
                f"no extractable output: floor(h*n - 4*log2(1/eps) - 2) = {m} "
                f"with h*n = {rate * self.n}, "
                f"4*log2(1/eps) = {4.0 * math.log2(1.0 / self.epsilon)}"
            )
        object.__setattr__(self, "h_rate", rate)
        object.__setattr__(self, "m", m)

    @property
    def seed_bits_needed(self) -> int:
        return self.n + self.m - 1

    @property
    def ratio(self) -> float:
        return self.m / self.n


@dataclass(frozen=True)
class HashSeed:
    """Uniform public bits defining one Toeplitz matrix (first row and
    first column concatenated)."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.asarray(self.bits, dtype=np.uint8)
        if bits.ndim != 1 or bits.size == 0:
            raise ParameterError("seed must be a nonempty bit vector")
        if bits.max() > 1:
            raise ParameterError("seed bits must be 0 or 1")
        bits = bits.copy()
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def bit_length(self) -> int:
        return int(self.bits.shape[0])

    @property
    def hex(self) -> str:
        return pack_bits(self.bits).hex()

    @classmethod
    def from_hex(cls, text: str, bit_length: int) -> "HashSeed":
        return cls(unpack_bits(bytes.fromhex(text), bit_length))

    @classmethod
    def system(cls, bit_length: int) -> "HashSeed":
        payload = secrets.token_bytes((bit_length + 7) // 8)
        return cls(unpack_bits(payload, bit_length))


def toeplitz_extract(seed: Union[HashSeed, np.ndarray], raw: np.ndarray) -> np.ndarray:
    """Hash one raw block; the output width is len(seed) - len(raw) + 1.

    Output bit j equals parity(sum_k seed[j - k + n - 1] * raw[k]), i.e.
    the (n - 1 + j)-th coefficient of the seed*raw convolution mod 2.
    """
    seed_bits = seed.bits if isinstance(seed, HashSeed) else np.asarray(seed, dtype=np.uint8)
    raw = np.asarray(raw, dtype=np.uint8)
    n = raw.shape[0]
    m = seed_bits.shape[0] - n + 1
    if n < 1 or m < 1:
        raise ParameterError(
            f"seed of {seed_bits.shape[0]} bits cannot hash a {n}-bit block"
        )
    session = _Session(seed_bits, n, m)
    return session.extract(raw)


class _Session:
    """Per-session state: the seed and its cached forward transform."""

    def __init__(self, seed_bits: np.ndarray, n: int, m: int) -> None:
        if seed_bits.shape[0] != n + m - 1:
            raise ParameterError(
                f"seed length {seed_bits.shape[0]} != n + m - 1 = {n + m - 1}"
            )
        self.n = n
        self.m = m
        # Circular convolution of length >= n + m - 1 aliases only the
        # coefficients below index n - 1, which the output window never
        # reads, so the transform can stay one block short of the full
        # linear-convolution length.
        self.fft_len = _fft.next_fast_len(n + m - 1)
        self.seed_fft = _fft.rfft(seed_bits.astype(np.float64), self.fft_len)
        self._block = np.zeros(self.fft_len, dtype=np.float64)

    def extract(self, raw: np.ndarray) -> np.ndarray:
        if raw.shape[0] != self.n:
            raise ParameterError(
                f"raw block has {raw.shape[0]} bits, expected {self.n}"
            )
        buf = self._block
        buf[: self.n] = raw
        buf[self.n :] = 0.0
        conv = _fft.irfft(self.seed_fft * _fft.rfft(buf, self.fft_len), self.fft_len)
        window = conv[self.n - 1 : self.n - 1 + self.m]
        rounded = np.rint(window)
        if np.max(np.abs(window - rounded)) > _FFT_GUARD:
            raise ParameterError(
                "FFT convolution lost integer precision; block size too large"
            )
        return (rounded.astype(np.int64) & 1).astype(np.uint8)


@dataclass
class ExtractionResult:
    output: BitStream
    seed: HashSeed
    params: ExtractorParams
    blocks: int

    @property
    def ratio(self) -> float:
        return self.params.ratio


SeedSource = Callable[[int], HashSeed]


def extract_stream(
    raw: Union[BitStream, np.ndarray],
    params: ExtractorParams,
    seed: HashSeed | None = None,
    seed_source: SeedSource | None = None,
) -> ExtractionResult:
    """Hash every full n-bit block of ``raw`` with one session seed.

    The tail remainder is discarded.  If no seed is supplied one is drawn
    from ``seed_source`` (default: the operating system's entropy source).
    """
    bits = raw.bits if isinstance(raw, BitStream) else np.asarray(raw, dtype=np.uint8)
    if params.m < 1:
        raise InsufficientEntropyError("extractor params admit no output")
    if seed is None:
        source = seed_source or HashSeed.system
        seed = source(params.seed_bits_needed)
    if seed.bit_length != params.seed_bits_needed:
        raise ParameterError(
            f"seed has {seed.bit_length} bits, params need {params.seed_bits_needed}"
        )
    blocks = bits.shape[0] // params.n
    if blocks == 0:
        warnings.warn(
            f"raw stream of {bits.shape[0]} bits is shorter than one "
            f"{params.n}-bit block; emitting no output",
            stacklevel=2,
        )
        return ExtractionResult(BitStream(np.empty(0, dtype=np.uint8)), seed, params, 0)
    session = _Session(seed.bits, params.n, params.m)
    out = np.empty(blocks * params.m, dtype=np.uint8)
    for b in range(blocks):
        out[b * params.m : (b + 1) * params.m] = session.extract(
            bits[b * params.n : (b + 1) * params.n]
        )
    return ExtractionResult(BitStream(out), seed, params, blocks)


def toeplitz_matrix(seed_bits: np.ndarray, n: int, m: int) -> np.ndarray:
    """Materialize T[j][k] = seed[j - k + n - 1]; small sizes only."""
    seed_bits = np.asarray(seed_bits, dtype=np.uint8)
    if seed_bits.shape[0] != n + m - 1:
        raise ParameterError("seed length must be n + m - 1")
    j = np.arange(m)[:, None]
    k = np.arange(n)[None, :]
    return seed_bits[j - k + n - 1]


@dataclass(frozen=True)
class UniversalityReport:
    n: int
    m: int
    seed_count: int
    expected_collisions: int
    min_collisions: int
    max_collisions: int

    @property
    def exact(self) -> bool:
        return self.min_collisions == self.max_collisions == self.expected_collisions


def universality_check(n: int, m: int) -> UniversalityReport:
    """Exhaustively verify the 2-universal property at small sizes.

    For every pair of distinct inputs, counts the seeds mapping both to
    the same output; the family is 2-universal with collision probability
    exactly 2^-m iff every count equals 2^(n+m-1) / 2^m.  Cost grows as
    4^n * 2^(n+m), so keep n at 8 or below in routine runs.
    """
    if not 1 <= n <= 12 or not 1 <= m <= 6:
        raise ParameterError("exhaustive check limited to n <= 12, m <= 6")
    seed_len = n + m - 1
    num_inputs = 1 << n
    num_seeds = 1 << seed_len
    shifts = np.arange(n - 1, -1, -1)
    inputs = ((np.arange(num_inputs)[:, None] >> shifts[None, :]) & 1).astype(np.uint8)
    out_weights = 1 << np.arange(m - 1, -1, -1)
    seed_shifts = np.arange(seed_len - 1, -1, -1)
    collisions = np.zeros((num_inputs, num_inputs), dtype=np.int64)
    for seed_int in range(num_seeds):
        seed_bits = ((seed_int >> seed_shifts) & 1).astype(np.uint8)
        t = toeplitz_matrix(seed_bits, n, m)
        out_ids = ((inputs @ t.T) & 1) @ out_weights
        collisions += out_ids[:, None] == out_ids[None, :]
    off_diag = collisions[~np.eye(num_inputs, dtype=bool)]
    return UniversalityReport(
        n=n,
        m=m,
        seed_count=num_seeds,
        expected_collisions=num_seeds >> m,
        min_collisions=int(off_diag.min()),
        max_collisions=int(off_diag.max()),
    )
