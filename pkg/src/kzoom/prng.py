"""32-bit word streams from the deep-zoom orbit, plus bit-level tests.

A stream takes the top 32 bits of each zoomed orbit value,
w_t = floor(y_t * 2**32), and serializes them as raw 4-byte words with no
header, so the files feed directly into external test batteries. The three
tests implemented here (monobit, runs, block frequency) are the standard
erfc/igamc formulations; they are the in-package smoke battery, not a
replacement for the external suites.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, gammaincc

from .chaos import OrbitParams
from .errors import DegenerateOrbit, DomainError, TooFewBits
from .precision import PrecisionSpec, RealValue

TWO32 = 4294967296
DEFAULT_ALPHA = 0.01
DEFAULT_BLOCK_M = 128
DEFAULT_STREAM_MU = "3.99999"


def extract_word32(y) -> int:
    """Top 32 bits of a value in [0, 1): floor(y * 2**32).

    Exact in both backends: binary64 scaling by 2**32 never rounds, and the
    decimal backend shifts integers. Accepts a RealValue or a plain float.
    """
    if isinstance(y, RealValue):
        w = y.spec.backend().word32(y.raw)
        if not (0 <= w < TWO32):
            raise DomainError("word extraction needs 0 <= y < 1")
        return w
    if not (0.0 <= y < 1.0):
        raise DomainError(f"word extraction needs 0 <= y < 1, got {y!r}")
    return int(y * TWO32)


@dataclass(frozen=True)
class StreamConfig:
    """A deterministic word-stream request.

    x0 and mu are exact decimal strings (see OrbitParams). byte_order only
    matters when the words are serialized.
    """

    x0: str
    n_words: int
    mu: str = DEFAULT_STREAM_MU
    k: int = 4
    precision: PrecisionSpec = PrecisionSpec.binary64()
    transient: int = 1000
    byte_order: str = "little"

    def __post_init__(self):
        if self.n_words < 1:
            raise DomainError("n_words must be at least 1")
        if self.transient < 0:
            raise DomainError("transient must be nonnegative")
        if self.byte_order not in ("little", "big"):
            raise DomainError(f"byte_order must be little or big, got {self.byte_order!r}")
        self.orbit_params()  # validates mu, x0, k against the precision

    def orbit_params(self) -> OrbitParams:
        return OrbitParams(mu=self.mu, x0=self.x0, k=self.k, precision=self.precision)


def generate_stream(config: StreamConfig) -> np.ndarray:
    """The stream's words as a uint32 array, in orbit order."""
    params = config.orbit_params()
    backend = config.precision.backend()
    mu = params.raw_mu()
    x = params.raw_x0()
    k = config.k
    n = config.n_words
    out = np.empty(n, dtype=np.uint32)
    if config.precision.mode == "binary64":
        for _ in range(config.transient):
            x = (mu * x) * (1.0 - x)
        p10 = 10.0 ** k
        for i in range(n):
            x = (mu * x) * (1.0 - x)
            if x == 0.0 or x == 1.0:
                raise DegenerateOrbit(
                    f"orbit became degenerate at stream word {i}", iteration=i
                )
            if k:
                z = x * p10
                y = z - math.floor(z)
            else:
                y = x
            out[i] = int(y * 4294967296.0)
    else:
        scale = backend.scale
        p10 = 10 ** k
        for _ in range(config.transient):
            v = (mu * x) // scale
            x = (v * (scale - x)) // scale
        for i in range(n):
            v = (mu * x) // scale
            x = (v * (scale - x)) // scale
            if x == 0 or x == scale:
                raise DegenerateOrbit(
                    f"orbit became degenerate at stream word {i}", iteration=i
                )
            y = (x * p10) % scale if k else x
            out[i] = (y << 32) // scale
    return out


def words_to_bytes(words: np.ndarray, byte_order: str = "little") -> bytes:
    """Serialize words as raw 4-byte integers, no header or padding."""
    if byte_order not in ("little", "big"):
        raise DomainError(f"byte_order must be little or big, got {byte_order!r}")
    dtype = "<u4" if byte_order == "little" else ">u4"
    return np.asarray(words, dtype=np.uint32).astype(dtype).tobytes()


def read_stream_file(path, byte_order: str = "little") -> np.ndarray:
    """Read a raw word file back into a uint32 array."""
    dtype = "<u4" if byte_order == "little" else ">u4"
    data = np.fromfile(path, dtype=dtype)
    return data.astype(np.uint32)


def bits_from_words(words: np.ndarray) -> np.ndarray:
    """Unpack words into one bit per entry, most significant bit first."""
    big = np.ascontiguousarray(np.asarray(words, dtype=np.uint32).astype(">u4"))
    return np.unpackbits(big.view(np.uint8))


@dataclass(frozen=True)
class TestResult:
    name: str
    n_bits: int
    statistic: float
    p_value: float
    alpha: float
    passed: bool


def _as_bits(bits) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.uint8)
    if arr.ndim != 1:
        raise DomainError("bits must be a one-dimensional array")
    if arr.size and arr.max() > 1:
        raise DomainError("bits must be 0 or 1")
    return arr


def monobit_test(bits, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Balance of ones and zeros: p = erfc(|S_n| / sqrt(2 n))."""
    arr = _as_bits(bits)
    n = arr.size
    if n < 100:
        raise TooFewBits(f"monobit needs at least 100 bits, got {n}")
    s = abs(2.0 * int(arr.sum()) - n) / math.sqrt(n)
    p = float(erfc(s / math.sqrt(2.0)))
    return TestResult("monobit", n, s, p, alpha, p >= alpha)


def runs_test(bits, alpha: float = DEFAULT_ALPHA) -> TestResult:
    """Oscillation rate between 0 and 1.

    Only applicable when the ones proportion is already near 1/2; when the
    prerequisite |pi - 1/2| >= 2/sqrt(n) fails the result reports p = 0.0,
    matching how external batteries score it.
    """
    arr = _as_bits(bits)
    n = arr.size
    if n < 100:
        raise TooFewBits(f"runs needs at least 100 bits, got {n}")
    pi = float(arr.mean())
    if abs(pi - 0.5) >= 2.0 / math.sqrt(n):
        return TestResult("runs", n, float("nan"), 0.0, alpha, False)
    v = 1 + int(np.count_nonzero(arr[1:] != arr[:-1]))
    num = abs(v - 2.0 * n * pi * (1.0 - pi))
    den = 2.0 * math.sqrt(2.0 * n) * pi * (1.0 - pi)
    p = float(erfc(num / den))
    return TestResult("runs", n, float(v), p, alpha, p >= alpha)


def block_frequency_test(
    bits, m: int = DEFAULT_BLOCK_M, alpha: float = DEFAULT_ALPHA
) -> TestResult:
    """Ones proportion within m-bit blocks: chi-square against 1/2 per block.

    Trailing bits that do not fill a block are discarded.
    """
    arr = _as_bits(bits)
    n = arr.size
    if m < 2:
        raise DomainError(f"block length must be at least 2, got {m}")
    if n < 100 * m:
        raise TooFewBits(
            f"block frequency needs at least 100 blocks ({100 * m} bits at m={m}), got {n}"
        )
    n_blocks = n // m
    props = arr[: n_blocks * m].reshape(n_blocks, m).mean(axis=1)
    chi2 = 4.0 * m * float(np.sum((props - 0.5) ** 2))
    p = float(gammaincc(n_blocks / 2.0, chi2 / 2.0))
    return TestResult("block_frequency", n, chi2, p, alpha, p >= alpha)


@dataclass(frozen=True)
class BatteryReport:
    label: str
    n_words: int
    alpha: float
    results: tuple[TestResult, ...] = field(default_factory=tuple)

    @property
    def all_passed(self) -> bool:
        return all(r.passed for r in self.results)

    def csv_rows(self) -> list[str]:
        rows = ["test,n_bits,statistic,p_value,alpha,passed"]
        for r in self.results:
            rows.append(
                f"{r.name},{r.n_bits},{r.statistic!r},{r.p_value!r},{r.alpha!r},{int(r.passed)}"
            )
        return rows


def run_battery(
    words: np.ndarray,
    alpha: float = DEFAULT_ALPHA,
    block_m: int = DEFAULT_BLOCK_M,
    label: str = "stream",
) -> BatteryReport:
    """Run the three bit-level tests on a word array."""
    words = np.asarray(words, dtype=np.uint32)
    bits = bits_from_words(words)
    results = (
        monobit_test(bits, alpha),
        runs_test(bits, alpha),
        block_frequency_test(bits, DEFAULT_BLOCK_M if block_m is None else block_m, alpha),
    )
    return BatteryReport(label=label, n_words=int(words.size), alpha=alpha, results=results)
