"""Precision backends for the iterated map.

Two arithmetic modes are supported:

* ``binary64``: IEEE double precision, the usual numpy/C double. Fast,
  platform-reproducible in practice, but subject to rounding.
* ``decimalP``: fixed-point base-10 arithmetic with exactly P fractional
  digits, carried as a Python integer scaled by 10**P. Every multiply is
  truncated toward zero to P digits. Deterministic down to the byte on any
  platform, and the digit-shift structure of the deep zoom is exact.

Backends expose raw-value primitives (floats or scaled ints) so hot loops can
avoid wrapper objects; ``RealValue`` is the hashable wrapper used at API
boundaries.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache

from .errors import DomainError

MIN_DECIMAL_DIGITS = 32  # fewer digits cannot feed a 32-bit extraction
DEFAULT_DECIMAL_DIGITS = 128

_DECIMAL_RE = re.compile(r"^(\d+)(?:\.(\d+))?$")


@dataclass(frozen=True)
class PrecisionSpec:
    """Which arithmetic a computation runs under.

    mode is "binary64" or "decimalP"; digits is the fractional digit count P
    (None for binary64, at least 32 for decimalP).
    """

    mode: str
    digits: int | None = None

    def __post_init__(self):
        if self.mode == "binary64":
            if self.digits is not None:
                raise DomainError("binary64 takes no digit count")
        elif self.mode == "decimalP":
            if not isinstance(self.digits, int) or self.digits < MIN_DECIMAL_DIGITS:
                raise DomainError(
                    f"decimalP needs digits >= {MIN_DECIMAL_DIGITS}, got {self.digits!r}"
                )
        else:
            raise DomainError(f"unknown precision mode {self.mode!r}")

    @classmethod
    def binary64(cls) -> "PrecisionSpec":
        return cls("binary64")

    @classmethod
    def decimal(cls, digits: int = DEFAULT_DECIMAL_DIGITS) -> "PrecisionSpec":
        return cls("decimalP", digits)

    @classmethod
    def from_string(cls, text: str) -> "PrecisionSpec":
        """Parse "binary64" or "decimal:P" (also accepts "decimalP:P")."""
        text = text.strip()
        if text == "binary64":
            return cls.binary64()
        for prefix in ("decimal:", "decimalP:"):
            if text.startswith(prefix):
                try:
                    return cls.decimal(int(text[len(prefix):]))
                except ValueError as exc:
                    raise DomainError(f"bad digit count in {text!r}") from exc
        raise DomainError(f"unknown precision {text!r}")

    def spec_string(self) -> str:
        if self.mode == "binary64":
            return "binary64"
        return f"decimal:{self.digits}"

    def backend(self):
        return _backend_for(self)


@lru_cache(maxsize=None)
def _backend_for(spec: PrecisionSpec):
    if spec.mode == "binary64":
        return Binary64Backend()
    return DecimalBackend(spec.digits)


@dataclass(frozen=True)
class RealValue:
    """A number tagged with the precision it was computed under.

    raw is a float in binary64 mode, or an int scaled by 10**P in decimalP
    mode. Hashable so values can key caches and sit in frozen dataclasses.
    """

    raw: float | int
    spec: PrecisionSpec

    def as_float(self) -> float:
        return self.spec.backend().to_float(self.raw)

    def decimal_string(self) -> str:
        return self.spec.backend().format(self.raw)

    def __float__(self) -> float:
        return self.as_float()


def random_unit_string(rng, spec: PrecisionSpec) -> str:
    """Draw a random value in (0, 1) exactly representable under spec.

    rng is any object with random() and randrange() (random.Random works).
    Returned as the decimal string the backends parse back exactly.
    """
    if spec.mode == "binary64":
        while True:
            u = rng.random()
            if 0.0 < u < 1.0:
                return repr(u)
    while True:
        digits = "".join(str(rng.randrange(10)) for _ in range(spec.digits))
        stripped = digits.rstrip("0")
        if stripped:
            return "0." + stripped


class Binary64Backend:
    """IEEE double arithmetic. Raw values are plain Python floats."""

    mode = "binary64"

    def parse(self, value, lo: float = 0.0, hi: float = 1.0) -> float:
        """Accept a decimal string or a real number; reject out-of-range."""
        if isinstance(value, str):
            if not _DECIMAL_RE.match(value.strip()):
                raise DomainError(f"not a plain decimal literal: {value!r}")
            x = float(value)
        elif isinstance(value, (int, float)):
            x = float(value)
        else:
            raise DomainError(f"cannot parse {type(value).__name__} as a real value")
        if not (lo <= x <= hi) or math.isnan(x):
            raise DomainError(f"value {x!r} outside [{lo}, {hi}]")
        return x

    def format(self, raw: float) -> str:
        return repr(raw)

    def to_float(self, raw: float) -> float:
        return raw

    def step(self, x: float, mu: float) -> float:
        # Evaluation order is fixed: (mu * x) * (1 - x). Changing it changes
        # trajectories after ~50 iterations, which breaks cipher round trips
        # against recorded counts.
        return (mu * x) * (1.0 - x)

    def zoom(self, x: float, k: int) -> float:
        if k == 0:
            return x
        z = x * (10.0 ** k)
        return z - math.floor(z)

    def word32(self, y: float) -> int:
        # y * 2**32 is exact in binary64 (scaling by a power of two), so the
        # floor introduces no rounding of its own.
        return int(y * 4294967296.0)

    def ulp(self, raw: float) -> float:
        return math.ulp(raw)


class DecimalBackend:
    """Fixed-point base-10 arithmetic with P fractional digits.

    Raw values are Python ints: v represents v / 10**P. Multiplication
    truncates toward zero (floor division of nonnegative products), applied
    after every multiply, so results carry exactly P digits at all times.
    """

    mode = "decimalP"

    def __init__(self, digits: int):
        self.digits = digits
        self.scale = 10 ** digits

    def parse(self, value, lo: float = 0.0, hi: float = 1.0) -> int:
        """Parse an exact decimal literal into a scaled int.

        Strings must carry at most P fractional digits; silently truncating
        key material would change trajectories, so extra digits are an error.
        Floats are accepted via their shortest decimal repr.
        """
        if isinstance(value, float):
            value = repr(value)
        elif isinstance(value, int):
            value = str(value)
        if not isinstance(value, str):
            raise DomainError(f"cannot parse {type(value).__name__} as a real value")
        m = _DECIMAL_RE.match(value.strip())
        if not m:
            raise DomainError(f"not a plain decimal literal: {value!r}")
        int_part, frac_part = m.group(1), m.group(2) or ""
        if len(frac_part) > self.digits:
            raise DomainError(
                f"{value!r} has {len(frac_part)} fractional digits, "
                f"more than the {self.digits} this precision carries"
            )
        raw = int(int_part) * self.scale
        if frac_part:
            raw += int(frac_part) * 10 ** (self.digits - len(frac_part))
        lo_raw = self._bound(lo)
        hi_raw = self._bound(hi)
        if not (lo_raw <= raw <= hi_raw):
            raise DomainError(f"value {value!r} outside [{lo}, {hi}]")
        return raw

    def _bound(self, b: float) -> int:
        # Bounds used here are small exact values (0, 1, 4).
        return round(b * self.scale)

    def format(self, raw: int) -> str:
        int_part, frac = divmod(raw, self.scale)
        if frac == 0:
            return str(int_part)
        return f"{int_part}.{str(frac).zfill(self.digits).rstrip('0')}"

    def digit_string(self, raw: int) -> str:
        """The P fractional digits as a fixed-width string."""
        return str(raw % self.scale).zfill(self.digits)

    def to_float(self, raw: int) -> float:
        return raw / self.scale

    def step(self, x: int, mu: int) -> int:
        # Same evaluation order as binary64, truncating after each multiply.
        v = (mu * x) // self.scale
        return (v * (self.scale - x)) // self.scale

    def zoom(self, x: int, k: int) -> int:
        # Shifting left by k digits and dropping the integer part is exact.
        return (x * 10 ** k) % self.scale

    def word32(self, y: int) -> int:
        return (y << 32) // self.scale

    def ulp(self, raw: int) -> int:
        return 1
