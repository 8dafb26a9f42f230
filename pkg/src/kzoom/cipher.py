"""Ergodic cipher over the deep-zoom orbit (Baptista-style search coding).

The attractor window [x_min, x_max) is split into S equal sites, each owned
by one symbol through a bijective association table. Encrypting a symbol
means iterating the map from the current state and counting iterations until
the zoomed observable lands in the symbol's site, subject to a minimum count
N0, a ceiling N_max, and an optional rejection knob eta. The count is the
ciphertext unit; the arrival value becomes the next unit's initial condition
(the chain), so decryption is pure replay: iterate the recorded count, read
off the site, look up the symbol.

Trajectory sources abstract where values come from, so the same counting
loop can run over the orbit, a labeled baseline generator, or words from an
externally supplied file. That substitution is what the ciphertext
distribution experiments in analysis.py are built on.
"""

from __future__ import annotations

import hashlib
import random
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import (
    DegenerateOrbit,
    DomainError,
    ExternalFileExhausted,
    InvalidCiphertext,
    ParseError,
    ReturnExhausted,
    ValidationError,
)
from .precision import (
    DEFAULT_DECIMAL_DIGITS,
    PrecisionSpec,
    RealValue,
    random_unit_string,
)
from .chaos import check_zoom_depth

MAX_CEILING = 65532  # largest representable count ceiling
DEFAULT_SITES = 256
KEY_MAGIC = "# kzoom key v1"
CT_MAGIC_TEXT = "kzoom-ct v1 text"
CT_MAGIC_BIN = "kzoom-ct v1 bin"


def direct_association(S: int) -> tuple[int, ...]:
    """Symbol value v owns site v, with 0 wrapping to site S.

    This is the table that puts byte 104 ('h') in site 104 under 1-based
    site numbering.
    """
    return tuple(v if v >= 1 else S for v in range(S))


def random_association(S: int, rng: random.Random) -> tuple[int, ...]:
    sites = list(range(1, S + 1))
    rng.shuffle(sites)
    return tuple(sites)


@dataclass(frozen=True)
class CipherKey:
    """Complete secret state of the cipher.

    mu, x0, x_min, x_max are exact decimal strings; they are parsed per
    backend so the same key file means the same trajectory in either mode.
    association maps symbol value (position) to site number (1-based).
    chain picks which value seeds the next unit: the zoomed arrival
    (default) or the underlying map state.
    """

    mu: str
    x0: str
    k: int
    precision: PrecisionSpec
    S: int = DEFAULT_SITES
    x_min: str = "0.2"
    x_max: str = "0.8"
    N0: int = 250
    N_max: int = MAX_CEILING
    eta: float = 0.0
    association: tuple[int, ...] = ()
    chain: str = "zoomed"

    def __post_init__(self):
        problems: list[str] = []
        if not self.association:
            object.__setattr__(self, "association", direct_association(self.S))
        elif not isinstance(self.association, tuple):
            object.__setattr__(self, "association", tuple(self.association))
        if isinstance(self.eta, int):
            object.__setattr__(self, "eta", float(self.eta))
        for name in ("mu", "x0", "x_min", "x_max"):
            v = getattr(self, name)
            if not isinstance(v, str):
                object.__setattr__(self, name, repr(float(v)) if isinstance(v, float) else str(v))

        if not isinstance(self.precision, PrecisionSpec):
            problems.append("precision must be a PrecisionSpec")
            raise ValidationError(problems)
        backend = self.precision.backend()

        if not (2 <= self.S <= 65536):
            problems.append(f"S must lie in [2, 65536], got {self.S}")
        try:
            mu = backend.parse(self.mu, 0.0, 4.0)
            del mu
        except DomainError as exc:
            problems.append(f"mu: {exc}")
        x0_ok = False
        try:
            x0 = backend.parse(self.x0, 0.0, 1.0)
            x0_ok = 0.0 < backend.to_float(x0) < 1.0
            if not x0_ok:
                problems.append("x0 must lie strictly inside (0, 1)")
        except DomainError as exc:
            problems.append(f"x0: {exc}")
        lo = hi = None
        try:
            lo = backend.parse(self.x_min, 0.0, 1.0)
            hi = backend.parse(self.x_max, 0.0, 1.0)
            if not lo < hi:
                problems.append("need x_min < x_max")
        except DomainError as exc:
            problems.append(f"window: {exc}")
        try:
            check_zoom_depth(self.k, self.precision)
        except DomainError as exc:
            problems.append(str(exc))
        if not (0 <= self.N0 < self.N_max <= MAX_CEILING):
            problems.append(
                f"need 0 <= N0 < N_max <= {MAX_CEILING}, got N0={self.N0}, N_max={self.N_max}"
            )
        if not (0.0 <= self.eta < 1.0):
            problems.append(f"eta must lie in [0, 1), got {self.eta}")
        if self.chain not in ("zoomed", "underlying"):
            problems.append(f"chain must be zoomed or underlying, got {self.chain!r}")
        if sorted(self.association) != list(range(1, self.S + 1)):
            problems.append("association must be a bijection onto sites 1..S")
        if (
            lo is not None
            and hi is not None
            and lo < hi
            and self.precision.mode == "decimalP"
            and (hi - lo) < self.S
        ):
            problems.append("window narrower than the arithmetic grid allows for S sites")
        if problems:
            raise ValidationError(problems)

    def epsilon(self) -> float:
        """Site width as a float (exact only as far as the mode allows)."""
        backend = self.precision.backend()
        lo = backend.to_float(backend.parse(self.x_min, 0.0, 1.0))
        hi = backend.to_float(backend.parse(self.x_max, 0.0, 1.0))
        return (hi - lo) / self.S

    def inverse_association(self) -> dict[int, int]:
        return {site: symbol for symbol, site in enumerate(self.association)}


class _Partition:
    """Site lookup and bounds, consistent by construction per backend.

    binary64 keeps a boundary array whose entries are the correctly rounded
    values of the exact decimals x_min + i * (x_max - x_min) / S (no float
    accumulation, so a grid point like 0.44140625 comes out on the nose);
    lookups bisect that same array, so site_of and site_bounds can never
    disagree. decimalP works on scaled ints where the arithmetic is exact.
    """

    def __init__(self, precision: PrecisionSpec, x_min: str, x_max: str, S: int):
        backend = precision.backend()
        self.mode = precision.mode
        self.S = S
        self.lo_raw = backend.parse(x_min, 0.0, 1.0)
        self.hi_raw = backend.parse(x_max, 0.0, 1.0)
        if S < 1:
            raise ValidationError(["need at least one site"])
        if not self.lo_raw < self.hi_raw:
            raise ValidationError(["need x_min < x_max"])
        if self.mode == "binary64":
            lo_q = Fraction(x_min)
            wid_q = Fraction(x_max) - lo_q
            b = np.empty(S + 1, dtype=np.float64)
            for i in range(S + 1):
                b[i] = float(lo_q + wid_q * i / S)
            if not np.all(np.diff(b) > 0):
                raise ValidationError(
                    ["window too narrow for S sites at binary64 resolution"]
                )
            self.bounds = b
        else:
            self.width = self.hi_raw - self.lo_raw

    def site_of_raw(self, y):
        if not (self.lo_raw <= y < self.hi_raw):
            return None
        if self.mode == "binary64":
            return int(np.searchsorted(self.bounds, y, side="right"))
        return ((y - self.lo_raw) * self.S) // self.width + 1

    def bounds_raw(self, site: int):
        if not (1 <= site <= self.S):
            raise IndexError(f"site {site} outside 1..{self.S}")
        if self.mode == "binary64":
            return float(self.bounds[site - 1]), float(self.bounds[site])
        w, s = self.width, self.S
        lower = self.lo_raw + ((site - 1) * w + s - 1) // s
        upper = self.lo_raw + (site * w + s - 1) // s
        return lower, upper


@lru_cache(maxsize=64)
def build_partition(precision: PrecisionSpec, x_min: str, x_max: str,
                    S: int) -> _Partition:
    """Standalone site partition; also usable without a full key (S=1 is
    legal here, e.g. a window covering the whole interval for return-time
    statistics)."""
    return _Partition(precision, x_min, x_max, S)


def _partition(key: CipherKey) -> _Partition:
    return build_partition(key.precision, key.x_min, key.x_max, key.S)


def site_of(y, key: CipherKey):
    """Which 1-based site a value falls in; None outside the window."""
    backend = key.precision.backend()
    if isinstance(y, RealValue):
        raw = y.raw
    else:
        raw = backend.parse(y, 0.0, 1.0)
    return _partition(key).site_of_raw(raw)


def site_bounds(site: int, key: CipherKey) -> tuple[RealValue, RealValue]:
    """Half-open [lower, upper) cell of a site, in the key's precision."""
    lo, hi = _partition(key).bounds_raw(site)
    return RealValue(lo, key.precision), RealValue(hi, key.precision)


# ---------------------------------------------------------------------------
# trajectory sources

class TrajectorySource:
    """Stream of values in [0, 1) driving the counting loop.

    Subclasses implement next_value() returning a raw backend value and may
    override run_unit / skip with faster equivalents. commit_arrival() is
    called once per accepted unit so chained sources can update state.
    """

    label = "source"

    def next_value(self):
        raise NotImplementedError

    def commit_arrival(self) -> None:
        pass

    def reset(self) -> None:
        raise NotImplementedError

    def run_unit(self, lo, hi, n0: int, n_max: int, eta: float, aux: random.Random):
        """Count steps until an accepted visit to [lo, hi); returns (count, y)."""
        for _ in range(n0):
            self.next_value()
        t = n0
        while t < n_max:
            t += 1
            y = self.next_value()
            if lo <= y < hi and (eta == 0.0 or aux.random() >= eta):
                self.commit_arrival()
                return t, y
        raise ReturnExhausted(f"no accepted visit within {n_max} steps")

    def skip(self, count: int):
        """Advance exactly count steps and return the last value."""
        y = None
        for _ in range(count):
            y = self.next_value()
        return y


class KLogisticSource(TrajectorySource):
    """The deep-zoom orbit itself, with unit-to-unit chaining."""

    def __init__(self, key: CipherKey):
        self.key = key
        self._backend = key.precision.backend()
        self._mu = self._backend.parse(key.mu, 0.0, 4.0)
        self._x0 = self._backend.parse(key.x0, 0.0, 1.0)
        self._k = key.k
        self._chain = key.chain
        self._x = self._x0
        self._y = None
        self.label = f"k-logistic k={key.k}"

    def reset(self) -> None:
        self._x = self._x0
        self._y = None

    def set_state(self, x) -> None:
        """Place the source at an arbitrary chain state (unit replay)."""
        if isinstance(x, RealValue):
            self._x = x.raw
        else:
            self._x = self._backend.parse(x, 0.0, 1.0)
        self._y = None

    def _step_checked(self):
        b = self._backend
        x = b.step(self._x, self._mu)
        if b.to_float(x) in (0.0, 1.0):
            raise DegenerateOrbit("orbit became degenerate inside a unit")
        self._x = x
        return x

    def next_value(self):
        x = self._step_checked()
        y = self._backend.zoom(x, self._k) if self._k else x
        self._y = y
        return y

    def commit_arrival(self) -> None:
        if self._chain == "zoomed" and self._y is not None:
            self._x = self._y

    def run_unit(self, lo, hi, n0: int, n_max: int, eta: float, aux: random.Random):
        mu, x, k = self._mu, self._x, self._k
        if self.key.precision.mode == "binary64":
            p10 = 10.0 ** k
            for _ in range(n0):
                x = (mu * x) * (1.0 - x)
                if x == 0.0 or x == 1.0:
                    self._x = x
                    raise DegenerateOrbit("orbit became degenerate inside a unit")
            t = n0
            while t < n_max:
                t += 1
                x = (mu * x) * (1.0 - x)
                if x == 0.0 or x == 1.0:
                    self._x = x
                    raise DegenerateOrbit("orbit became degenerate inside a unit")
                if k:
                    z = x * p10
                    y = z - int(z)
                else:
                    y = x
                if lo <= y < hi and (eta == 0.0 or aux.random() >= eta):
                    self._x = y if self._chain == "zoomed" else x
                    self._y = y
                    return t, y
        else:
            scale = self._backend.scale
            p10 = 10 ** k
            for _ in range(n0):
                v = (mu * x) // scale
                x = (v * (scale - x)) // scale
                if x == 0 or x == scale:
                    self._x = x
                    raise DegenerateOrbit("orbit became degenerate inside a unit")
            t = n0
            while t < n_max:
                t += 1
                v = (mu * x) // scale
                x = (v * (scale - x)) // scale
                if x == 0 or x == scale:
                    self._x = x
                    raise DegenerateOrbit("orbit became degenerate inside a unit")
                y = (x * p10) % scale if k else x
                if lo <= y < hi and (eta == 0.0 or aux.random() >= eta):
                    self._x = y if self._chain == "zoomed" else x
                    self._y = y
                    return t, y
        self._x = x
        raise ReturnExhausted(f"no accepted visit within {n_max} steps")

    def skip(self, count: int):
        if count < 1:
            raise DomainError("skip needs at least one step")
        mu, x = self._mu, self._x
        if self.key.precision.mode == "binary64":
            for _ in range(count):
                x = (mu * x) * (1.0 - x)
                if x == 0.0 or x == 1.0:
                    self._x = x
                    raise DegenerateOrbit("orbit became degenerate inside a unit")
            if self._k:
                z = x * (10.0 ** self._k)
                y = z - int(z)
            else:
                y = x
        else:
            scale = self._backend.scale
            for _ in range(count):
                v = (mu * x) // scale
                x = (v * (scale - x)) // scale
                if x == 0 or x == scale:
                    self._x = x
                    raise DegenerateOrbit("orbit became degenerate inside a unit")
            y = (x * 10 ** self._k) % scale if self._k else x
        self._x = x
        self._y = y
        return y


class BaselinePRNGSource(TrajectorySource):
    """A labeled general-purpose generator (the stdlib Mersenne Twister)."""

    def __init__(self, seed: int, precision: PrecisionSpec | None = None):
        self.seed = seed
        self.precision = precision or PrecisionSpec.binary64()
        self.label = "mt19937"
        self.reset()

    def reset(self) -> None:
        self._rng = random.Random(self.seed)

    def next_value(self):
        if self.precision.mode == "binary64":
            return self._rng.random()
        scale = self.precision.backend().scale
        return (self._rng.getrandbits(53) * scale) >> 53


class ExternalFileSource(TrajectorySource):
    """Values read from an externally supplied file of raw 4-byte words.

    The whole file is loaded up front (tens of megabytes at most for the
    sizes used here); cursor tracks consumption and running out raises
    ExternalFileExhausted.
    """

    def __init__(self, path, precision: PrecisionSpec | None = None,
                 byte_order: str = "little"):
        self.path = str(path)
        self.precision = precision or PrecisionSpec.binary64()
        dtype = "<u4" if byte_order == "little" else ">u4"
        self._words = np.fromfile(self.path, dtype=dtype).astype(np.uint64)
        self.cursor = 0
        self.label = f"external:{self.path.rsplit('/', 1)[-1]}"
        if self.precision.mode == "binary64":
            self._values = self._words.astype(np.float64) / 4294967296.0
        else:
            self._values = None
            self._scale = self.precision.backend().scale

    def reset(self) -> None:
        self.cursor = 0

    def __len__(self) -> int:
        return int(self._words.size)

    def next_value(self):
        if self.cursor >= self._words.size:
            raise ExternalFileExhausted(
                f"{self.path} exhausted after {self.cursor} words"
            )
        i = self.cursor
        self.cursor = i + 1
        if self._values is not None:
            return float(self._values[i])
        return (int(self._words[i]) * self._scale) >> 32


# ---------------------------------------------------------------------------
# encryption and decryption

class EncryptSession:
    """Holds the evolving chain state and the auxiliary randomizer.

    The randomizer is consulted only on qualifying visits and only when
    eta > 0, so decryption never needs it. One session encrypts one message;
    construct a fresh one per message to restart the chain.
    """

    def __init__(self, key: CipherKey, aux_seed: int = 0,
                 source: TrajectorySource | None = None):
        self.key = key
        self.source = source if source is not None else KLogisticSource(key)
        self.aux = random.Random(aux_seed)
        self.units_done = 0
        self._partition = _partition(key)

    def encrypt_unit(self, symbol: int) -> tuple[int, RealValue]:
        """Encrypt one symbol; returns (count, arrival value)."""
        key = self.key
        if not (0 <= symbol < key.S):
            raise DomainError(
                f"symbol {symbol} outside the alphabet (S={key.S}) "
                f"at unit {self.units_done}"
            )
        site = key.association[symbol]
        lo, hi = self._partition.bounds_raw(site)
        try:
            count, y = self.source.run_unit(
                lo, hi, key.N0, key.N_max, key.eta, self.aux
            )
        except (ReturnExhausted, DegenerateOrbit, ExternalFileExhausted) as exc:
            if getattr(exc, "unit_index", None) is None:
                exc.unit_index = self.units_done
            raise
        self.units_done += 1
        return count, RealValue(y, key.precision)


def encrypt(plaintext, key: CipherKey, aux_seed: int = 0,
            source: TrajectorySource | None = None) -> list[int]:
    """Encrypt a byte string (or symbol sequence) into a list of counts."""
    session = EncryptSession(key, aux_seed=aux_seed, source=source)
    return [session.encrypt_unit(sym)[0] for sym in plaintext]


def decrypt_unit(x, count: int, key: CipherKey) -> tuple[int, RealValue]:
    """Replay one unit from state x; returns (symbol, next chain state)."""
    source = KLogisticSource(key)
    source.set_state(x)
    return _decrypt_step(source, count, key, _partition(key),
                         key.inverse_association(), unit_index=0)


def _decrypt_step(source, count, key, partition, inverse, unit_index):
    if not (key.N0 < count <= key.N_max):
        raise InvalidCiphertext(
            f"count {count} outside ({key.N0}, {key.N_max}]", unit_index=unit_index
        )
    y = source.skip(count)
    site = partition.site_of_raw(y)
    if site is None:
        raise InvalidCiphertext(
            "arrival outside the attractor window", unit_index=unit_index
        )
    source.commit_arrival()
    return inverse[site], RealValue(y, key.precision)


def decrypt(counts: Sequence[int], key: CipherKey,
            source: TrajectorySource | None = None):
    """Replay a whole ciphertext; returns bytes (or a list when S > 256)."""
    source = source if source is not None else KLogisticSource(key)
    partition = _partition(key)
    inverse = key.inverse_association()
    symbols = []
    for i, count in enumerate(counts):
        symbol, _ = _decrypt_step(source, int(count), key, partition, inverse, i)
        symbols.append(symbol)
    if key.S <= 256:
        return bytes(symbols)
    return symbols


# ---------------------------------------------------------------------------
# key generation and serialization

def keygen(
    seed: int,
    S: int = DEFAULT_SITES,
    k: int = 4,
    precision: PrecisionSpec | None = None,
    mu: str = "3.99999",
    x_min: str = "0.2",
    x_max: str = "0.8",
    N0: int = 250,
    N_max: int = MAX_CEILING,
    eta: float = 0.0,
    chain: str = "zoomed",
) -> CipherKey:
    """Draw a key deterministically from a seed.

    The seed feeds a private randomizer that draws x0 first, then shuffles
    the association table; everything else comes from the arguments.
    """
    precision = precision or PrecisionSpec.decimal(DEFAULT_DECIMAL_DIGITS)
    rng = random.Random(seed)
    x0 = random_unit_string(rng, precision)
    association = random_association(S, rng)
    return CipherKey(
        mu=mu, x0=x0, k=k, precision=precision, S=S,
        x_min=x_min, x_max=x_max, N0=N0, N_max=N_max, eta=eta,
        association=association, chain=chain,
    )


def key_serialize(key: CipherKey) -> str:
    """Canonical text form: fixed field order, exact value strings."""
    lines = [
        KEY_MAGIC,
        f"mu = {key.mu}",
        f"x0 = {key.x0}",
        f"k = {key.k}",
        f"S = {key.S}",
        f"x_min = {key.x_min}",
        f"x_max = {key.x_max}",
        f"N0 = {key.N0}",
        f"N_max = {key.N_max}",
        f"eta = {key.eta!r}",
        f"precision = {key.precision.spec_string()}",
        f"association = {','.join(map(str, key.association))}",
    ]
    if key.chain != "zoomed":
        lines.append(f"chain = {key.chain}")
    return "\n".join(lines) + "\n"


_KEY_FIELDS = {
    "mu", "x0", "k", "precision", "S", "x_min", "x_max",
    "N0", "N_max", "eta", "association", "chain",
}
_REQUIRED_FIELDS = _KEY_FIELDS - {"chain"}


def key_parse(text: str) -> CipherKey:
    """Parse the serialized form; unknown or duplicate fields are errors."""
    fields: dict[str, str] = {}
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected name = value, got {rawline!r}", line=lineno)
        name, _, value = line.partition("=")
        name = name.strip()
        value = value.strip()
        if name not in _KEY_FIELDS:
            raise ParseError(f"unknown field {name!r}", line=lineno)
        if name in fields:
            raise ParseError(f"duplicate field {name!r}", line=lineno)
        if not value:
            raise ParseError(f"empty value for {name!r}", line=lineno)
        fields[name] = value
    missing = _REQUIRED_FIELDS - fields.keys()
    if missing:
        raise ParseError(f"missing fields: {', '.join(sorted(missing))}")
    try:
        precision = PrecisionSpec.from_string(fields["precision"])
        association = tuple(int(s) for s in fields["association"].split(","))
        return CipherKey(
            mu=fields["mu"],
            x0=fields["x0"],
            k=int(fields["k"]),
            precision=precision,
            S=int(fields["S"]),
            x_min=fields["x_min"],
            x_max=fields["x_max"],
            N0=int(fields["N0"]),
            N_max=int(fields["N_max"]),
            eta=float(fields["eta"]),
            association=association,
            chain=fields.get("chain", "zoomed"),
        )
    except (ValueError, DomainError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise ParseError(f"bad field value: {exc}") from exc


def write_key(path, key: CipherKey) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(key_serialize(key))


def read_key(path) -> CipherKey:
    with open(path, "r", encoding="utf-8") as fh:
        return key_parse(fh.read())


def key_fingerprint(key: CipherKey) -> str:
    return hashlib.sha256(key_serialize(key).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# ciphertext files

def write_ciphertext(path, counts: Sequence[int], mode: str = "text") -> None:
    """Write counts with a one-line header; text or 4-byte little-endian."""
    if mode == "text":
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(CT_MAGIC_TEXT + "\n")
            for c in counts:
                fh.write(f"{int(c)}\n")
    elif mode == "bin":
        with open(path, "wb") as fh:
            fh.write((CT_MAGIC_BIN + "\n").encode("ascii"))
            fh.write(struct.pack(f"<{len(counts)}I", *[int(c) for c in counts]))
    else:
        raise DomainError(f"ciphertext mode must be text or bin, got {mode!r}")


def read_ciphertext(path) -> list[int]:
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").rstrip("\n")
        body = fh.read()
    if header == CT_MAGIC_TEXT:
        counts = []
        for lineno, line in enumerate(body.decode("utf-8").splitlines(), start=2):
            line = line.strip()
            if not line:
                continue
            try:
                counts.append(int(line))
            except ValueError:
                raise ParseError(f"bad count {line!r}", line=lineno) from None
        return counts
    if header == CT_MAGIC_BIN:
        if len(body) % 4:
            raise ParseError("binary body is not a whole number of 4-byte words")
        return list(struct.unpack(f"<{len(body) // 4}I", body))
    raise ParseError(f"unrecognized ciphertext header {header!r}", line=1)
