"""Keys, partition geometry, trajectory sources, and the cipher itself."""

import dataclasses
import math
import random
from fractions import Fraction

import numpy as np
import pytest

from kzoom import (
    CipherKey,
    EncryptSession,
    OrbitParams,
    PrecisionSpec,
    RealValue,
    build_partition,
    decrypt,
    decrypt_unit,
    direct_association,
    encrypt,
    key_fingerprint,
    key_parse,
    key_serialize,
    keygen,
    orbit_values,
    random_association,
    read_ciphertext,
    read_key,
    site_bounds,
    site_of,
    write_ciphertext,
    write_key,
)
from kzoom.cipher import (
    BaselinePRNGSource,
    ExternalFileSource,
    KLogisticSource,
    TrajectorySource,
)
from kzoom.errors import (
    DomainError,
    ExternalFileExhausted,
    InvalidCiphertext,
    ParseError,
    ReturnExhausted,
    ValidationError,
)

B64 = PrecisionSpec.binary64()
D64 = PrecisionSpec.decimal(64)


# --- association tables -----------------------------------------------------

def test_direct_association_wraps_zero():
    table = direct_association(256)
    assert table[104] == 104          # 'h' sits in site 104
    assert table[0] == 256            # byte 0 wraps to the top site
    assert table[1] == 1
    assert sorted(table) == list(range(1, 257))


def test_random_association_is_seeded_bijection():
    a = random_association(100, random.Random(5))
    b = random_association(100, random.Random(5))
    c = random_association(100, random.Random(6))
    assert a == b != c
    assert sorted(a) == list(range(1, 101))


# --- key validation ---------------------------------------------------------

def test_key_collects_every_problem():
    with pytest.raises(ValidationError) as exc:
        CipherKey(mu="4.2", x0="0", k=-1, precision=B64, S=1,
                  N0=10, N_max=5, eta=1.5)
    text = " ".join(exc.value.problems)
    assert len(exc.value.problems) >= 5
    for fragment in ("mu", "x0", "S must", "zoom depth", "N0", "eta"):
        assert fragment in text


@pytest.mark.parametrize("overrides", [
    {"S": 65537},
    {"N0": -1},
    {"N_max": 65533},
    {"N0": 300, "N_max": 300},
    {"eta": 1.0},
    {"chain": "sideways"},
    {"x_min": "0.8", "x_max": "0.2"},
    {"association": (1, 2, 3)},
    {"k": 1, "precision": PrecisionSpec.decimal(32)},
])
def test_key_rejects_bad_field(overrides):
    base = dict(mu="3.8", x0="0.232323", k=0, precision=B64)
    base.update(overrides)
    with pytest.raises(ValidationError):
        CipherKey(**base)


def test_key_accepts_zero_warmup():
    key = CipherKey(mu="3.8", x0="0.232323", k=0, precision=B64, N0=0)
    counts = encrypt(b"z", key)
    assert 1 <= counts[0] <= key.N_max
    assert decrypt(counts, key) == b"z"


def test_key_coercions():
    key = CipherKey(mu=3.8, x0=0.232323, k=0, precision=B64, eta=0)
    assert key.mu == "3.8" and key.x0 == "0.232323"
    assert key.eta == 0.0 and isinstance(key.eta, float)
    assert key.association == direct_association(256)


def test_key_decimal_window_must_resolve_sites():
    hi = "0.20000000000000000000000000000255"  # 255 grid ticks above x_min
    with pytest.raises(ValidationError) as exc:
        CipherKey(mu="3.8", x0="0.5", k=0, precision=PrecisionSpec.decimal(32),
                  x_min="0.2", x_max=hi)
    assert any("narrower" in p for p in exc.value.problems)


def test_key_epsilon_and_inverse(table_key):
    assert table_key.epsilon() == pytest.approx(0.6 / 256)
    inv = table_key.inverse_association()
    assert inv[104] == 104 and inv[256] == 0
    assert len(inv) == 256


# --- partition geometry -----------------------------------------------------

def test_site_of_table_values(table_key):
    assert site_of("0.2", table_key) == 1
    assert site_of(0.44160905447136, table_key) == 104
    assert site_of(0.44375, table_key) == 105
    for outside in ("0.1", 0.95, "0.8"):
        assert site_of(outside, table_key) is None
    with pytest.raises(DomainError):
        site_of(1.5, table_key)


def test_site_bounds_exact_grid_points(table_key):
    lo, hi = site_bounds(104, table_key)
    assert lo.raw == 0.44140625 and hi.raw == 0.44375
    assert site_bounds(1, table_key)[0].raw == 0.2
    assert site_bounds(256, table_key)[1].raw == 0.8
    assert site_bounds(104, table_key)[1].raw == site_bounds(105, table_key)[0].raw
    for bad in (0, 257):
        with pytest.raises(IndexError):
            site_bounds(bad, table_key)


def test_cells_tile_binary64(table_key):
    for s in (1, 2, 104, 137, 255, 256):
        lo, hi = site_bounds(s, table_key)
        assert site_of(lo, table_key) == s
        assert site_of(float(np.nextafter(hi.raw, -np.inf)), table_key) == s


def test_cells_tile_decimal(table_key_at):
    key = table_key_at(0, D64)
    for s in (1, 2, 104, 137, 255, 256):
        lo, hi = site_bounds(s, key)
        assert site_of(lo, key) == s
        assert site_of(RealValue(hi.raw - 1, D64), key) == s


def test_decimal_bounds_are_ceilinged_rationals():
    # Dual route: integer ceiling division against exact Fractions.
    part = build_partition(D64, "0.2", "0.8", 256)
    w = part.hi_raw - part.lo_raw
    for s in (1, 104, 200, 256):
        lo, hi = part.bounds_raw(s)
        assert lo == part.lo_raw + math.ceil(Fraction((s - 1) * w, 256))
        assert hi == part.lo_raw + math.ceil(Fraction(s * w, 256))


def test_whole_interval_partition_single_site():
    for spec in (B64, D64):
        part = build_partition(spec, "0", "1", 1)
        backend = spec.backend()
        assert part.site_of_raw(backend.parse("0.5")) == 1
    with pytest.raises(ValidationError):
        build_partition(B64, "0.5", "0.5", 4)


# --- reference counting runs ------------------------------------------------

def test_reference_counts_at_k0(table_key):
    session = EncryptSession(table_key)
    count, y = session.encrypt_unit(104)
    assert count == 1713
    assert f"{y.as_float():.14f}" == "0.44160905447136"
    count2, y2 = session.encrypt_unit(105)
    assert count2 == 364
    assert f"{y2.as_float():.14f}" == "0.44486572362642"
    assert encrypt(b"hi", table_key) == [1713, 364]


def test_reference_counts_under_zoom(table_key_at):
    expected = {1: [529, 573], 2: [609, 1671], 3: [1361, 892], 4: [592, 399]}
    for k, counts in expected.items():
        assert encrypt(b"hi", table_key_at(k)) == counts
    _, y = EncryptSession(table_key_at(1)).encrypt_unit(104)
    assert f"{y.as_float():.14f}" == "0.44194259087588"


def test_reference_counts_decimal128(table_key_at):
    key = table_key_at(4, PrecisionSpec.decimal(128))
    assert encrypt(b"hi", key) == [568, 349]


def test_decrypt_unit_replays_chain(table_key):
    sym1, y1 = decrypt_unit("0.232323", 1713, table_key)
    sym2, _ = decrypt_unit(y1, 364, table_key)
    assert bytes([sym1, sym2]) == b"hi"


# --- round trips ------------------------------------------------------------

def test_round_trip_across_modes_and_depths(rng):
    for spec in (B64, D64):
        for k in (0, 2, 4):
            key = keygen(1000 + k, k=k, precision=spec)
            msg = rng.randbytes(rng.randrange(1, 121))
            assert decrypt(encrypt(msg, key, aux_seed=3), key) == msg


def test_round_trip_with_skips(rng):
    # eta > 0 changes the counts with the auxiliary seed, never the message.
    for eta in (0.3, 0.7):
        key = keygen(55, k=2, precision=B64, eta=eta)
        msg = rng.randbytes(120)
        c3 = encrypt(msg, key, aux_seed=3)
        c4 = encrypt(msg, key, aux_seed=4)
        assert c3 != c4
        assert decrypt(c3, key) == msg
        assert decrypt(c4, key) == msg


def test_round_trip_underlying_chain():
    key = keygen(321, k=3, precision=B64, chain="underlying")
    msg = b"chain on the raw state"
    assert decrypt(encrypt(msg, key), key) == msg
    assert "chain = underlying" in key_serialize(key)


def test_empty_message():
    key = keygen(11)
    assert encrypt(b"", key) == []
    assert decrypt([], key) == b""


# --- failure modes ----------------------------------------------------------

def test_count_may_equal_the_ceiling(table_key):
    key = dataclasses.replace(table_key, N_max=1713)
    assert encrypt(b"h", key) == [1713]


def test_return_exhausted_first_unit(table_key):
    key = dataclasses.replace(table_key, N_max=251)
    with pytest.raises(ReturnExhausted) as exc:
        encrypt(b"h", key)
    assert exc.value.unit_index == 0


def test_return_exhausted_mid_message(table_key):
    # b"ok" needs [276, 1469]; capping just below the second count fails
    # at unit 1 with the first already accepted.
    assert encrypt(b"ok", table_key) == [276, 1469]
    key = dataclasses.replace(table_key, N_max=1468)
    with pytest.raises(ReturnExhausted) as exc:
        encrypt(b"ok", key)
    assert exc.value.unit_index == 1


def test_symbol_outside_alphabet(table_key):
    with pytest.raises(DomainError):
        encrypt([999], table_key)


def test_tampered_count_out_of_range(table_key):
    for bad in (0, 250, 65533):
        with pytest.raises(InvalidCiphertext) as exc:
            decrypt([bad], table_key)
        assert exc.value.unit_index == 0
    with pytest.raises(InvalidCiphertext) as exc:
        decrypt([1713, 70000], table_key)
    assert exc.value.unit_index == 1


def test_tampered_count_lands_outside_window(table_key):
    # Find a legal count whose arrival misses the window entirely; the
    # cipher never emits one, so seeing it means the ciphertext was altered.
    vals = orbit_values(OrbitParams(mu="3.8", x0="0.232323"), 2000)
    stray = next(
        t for t in range(251, 2001) if vals[t - 1] < 0.2 or vals[t - 1] >= 0.8
    )
    with pytest.raises(InvalidCiphertext, match="window"):
        decrypt([stray], table_key)


# --- trajectory sources -----------------------------------------------------

def test_generic_unit_loop_matches_fast_path():
    # The override is an optimization only; both routes must agree on the
    # count, the arrival, and the state left behind.
    for spec in (B64, D64):
        for eta in (0.0, 0.3):
            key = keygen(99, k=2, precision=spec, eta=eta)
            lo, hi = build_partition(spec, key.x_min, key.x_max, key.S).bounds_raw(104)
            fast, slow = KLogisticSource(key), KLogisticSource(key)
            cf, yf = fast.run_unit(lo, hi, key.N0, key.N_max, eta, random.Random(5))
            cs, ys = TrajectorySource.run_unit(
                slow, lo, hi, key.N0, key.N_max, eta, random.Random(5)
            )
            slow.commit_arrival()
            assert (cf, yf) == (cs, ys)
            assert fast._x == slow._x


def test_skip_matches_stepwise(table_key):
    walker = KLogisticSource(table_key)
    vals = [walker.next_value() for _ in range(37)]
    jumper = KLogisticSource(table_key)
    assert jumper.skip(37) == vals[-1]
    assert jumper._x == walker._x
    with pytest.raises(DomainError):
        jumper.skip(0)


def test_source_reset(table_key):
    src = KLogisticSource(table_key)
    first = src.next_value()
    src.next_value()
    src.reset()
    assert src.next_value() == first


def test_baseline_source_is_seeded_uniform():
    src = BaselinePRNGSource(42)
    assert src.label == "mt19937"
    vals = [src.next_value() for _ in range(50)]
    twin = random.Random(42)
    assert vals == [twin.random() for _ in range(50)]
    src.reset()
    assert src.next_value() == vals[0]

    dec = BaselinePRNGSource(42, D64)
    scale = D64.backend().scale
    raws = [dec.next_value() for _ in range(50)]
    ref = random.Random(42)
    assert raws == [(ref.getrandbits(53) * scale) >> 53 for _ in range(50)]
    assert all(0 <= r < scale for r in raws)


def test_external_source_reads_words(tmp_path):
    path = tmp_path / "words.bin"
    words = np.array([0, 2**31, 0xFFFFFFFF, 1], dtype="<u4")
    path.write_bytes(words.tobytes())

    src = ExternalFileSource(path)
    assert len(src) == 4
    assert src.next_value() == 0.0
    assert src.next_value() == 0.5
    assert src.next_value() == (2**32 - 1) / 2**32
    assert src.cursor == 3
    src.next_value()
    with pytest.raises(ExternalFileExhausted):
        src.next_value()
    src.reset()
    assert src.cursor == 0 and src.next_value() == 0.0

    dec = ExternalFileSource(path, D64)
    scale = D64.backend().scale
    assert [dec.next_value() for _ in range(4)] == [
        (int(w) * scale) >> 32 for w in words
    ]


# --- key generation and files -----------------------------------------------

def test_keygen_is_deterministic():
    assert keygen(7) == keygen(7)
    assert keygen(7) != keygen(8)
    key = keygen(7)
    assert key.precision == PrecisionSpec.decimal(128)
    assert sorted(key.association) == list(range(1, 257))
    with pytest.raises(ValidationError):
        keygen(7, mu="4.2")


def test_key_round_trips_through_text(table_key, tmp_path):
    keys = [
        table_key,
        keygen(7),
        keygen(8, k=3, precision=B64, eta=0.25, chain="underlying"),
    ]
    for key in keys:
        assert key_parse(key_serialize(key)) == key
    path = tmp_path / "k.key"
    write_key(path, keys[1])
    assert read_key(path) == keys[1]


def test_key_serialization_field_order(table_key):
    names = [line.split(" = ")[0] for line in key_serialize(table_key).splitlines()[1:]]
    assert names == ["mu", "x0", "k", "S", "x_min", "x_max",
                     "N0", "N_max", "eta", "precision", "association"]


def test_key_parse_tolerates_comments(table_key):
    text = key_serialize(table_key) + "\n# trailing note\n\n"
    assert key_parse(text) == table_key


@pytest.mark.parametrize("mangle,expect_line", [
    (lambda t: t.replace("x0 = 0.232323\n", ""), None),          # missing field
    (lambda t: t + "shape = round\n", 13),                       # unknown field
    (lambda t: t + "mu = 3.9\n", 13),                            # duplicate
    (lambda t: t.replace("mu = 3.8", "mu ="), 2),                # empty value
    (lambda t: t.replace("mu = 3.8", "mu 3.8"), 2),              # no equals
    (lambda t: t.replace("precision = binary64", "precision = decimal:31"), None),
])
def test_key_parse_errors(table_key, mangle, expect_line):
    text = mangle(key_serialize(table_key))
    with pytest.raises(ParseError) as exc:
        key_parse(text)
    if expect_line is not None:
        assert exc.value.line == expect_line


def test_key_parse_bad_association_is_validation_error(table_key):
    text = key_serialize(table_key).replace("\nassociation = 256,1,",
                                            "\nassociation = 256,256,")
    with pytest.raises(ValidationError):
        key_parse(text)


def test_key_fingerprint(table_key):
    fp = key_fingerprint(table_key)
    assert len(fp) == 64 and int(fp, 16) >= 0
    assert fp == key_fingerprint(table_key)
    assert fp != key_fingerprint(keygen(7))


# --- ciphertext files -------------------------------------------------------

def test_ciphertext_round_trips(tmp_path):
    counts = [1713, 364, 65532, 251]
    for mode in ("text", "bin"):
        path = tmp_path / f"ct.{mode}"
        write_ciphertext(path, counts, mode=mode)
        assert read_ciphertext(path) == counts
    with pytest.raises(DomainError):
        write_ciphertext(tmp_path / "x", counts, mode="hex")


def test_ciphertext_text_layout(tmp_path):
    path = tmp_path / "ct.txt"
    write_ciphertext(path, [1713, 364])
    assert path.read_text() == "kzoom-ct v1 text\n1713\n364\n"


def test_ciphertext_parse_errors(tmp_path):
    bad_header = tmp_path / "a"
    bad_header.write_text("not a ciphertext\n1713\n")
    with pytest.raises(ParseError) as exc:
        read_ciphertext(bad_header)
    assert exc.value.line == 1

    bad_count = tmp_path / "b"
    bad_count.write_text("kzoom-ct v1 text\n1713\n3x4\n")
    with pytest.raises(ParseError) as exc:
        read_ciphertext(bad_count)
    assert exc.value.line == 3

    torn = tmp_path / "c"
    write_ciphertext(torn, [1713, 364], mode="bin")
    torn.write_bytes(torn.read_bytes()[:-2])
    with pytest.raises(ParseError):
        read_ciphertext(torn)
