"""Command-line front end.

Subcommands: keygen, encrypt, decrypt, gen, and the analyze family. Every
command is deterministic given its flags; where a seed matters it comes
from --seed, then the KZOOM_SEED environment variable, then a fixed
default. Analyze subcommands write their delimited output and a rendered
figure side by side in --outdir and print a single summary line; --assert
turns a failed statistical check into exit code 5.

Exit codes: 0 ok, 2 configuration or I/O, 3 generation failure,
4 bad ciphertext, 5 assertion failure, 64 usage.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import analysis, cipher, plotting, prng
from .errors import (
    DegenerateOrbit,
    DomainError,
    ExpectedTooSmall,
    ExternalFileExhausted,
    InsufficientReturns,
    InvalidCiphertext,
    KZoomError,
    ParseError,
    ReturnExhausted,
    TooFewBits,
    ValidationError,
    ZeroVariance,
    ZoomExhausted,
)
from .precision import PrecisionSpec

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_GENERATION = 3
EXIT_CIPHERTEXT = 4
EXIT_ASSERTION = 5
EXIT_USAGE = 64

DEFAULT_SEED = 1001

_GENERATION_ERRORS = (
    DegenerateOrbit, ZoomExhausted, ReturnExhausted,
    ExternalFileExhausted, InsufficientReturns,
)
_CONFIG_ERRORS = (
    ValidationError, ParseError, DomainError, ExpectedTooSmall,
    TooFewBits, ZeroVariance,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit_(EXIT_USAGE, f"{self.prog}: error: {message}")


class SystemExit_(Exception):
    def __init__(self, code: int, message: str | None = None):
        super().__init__(message or "")
        self.code = code
        self.message = message


def _seed(args) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get("KZOOM_SEED")
    if env is not None and env != "":
        try:
            return int(env)
        except ValueError:
            raise DomainError(f"KZOOM_SEED must be an integer, got {env!r}") from None
    return DEFAULT_SEED


def _pick(value, desk, paper, paper_scale: bool):
    if value is not None:
        return value
    return paper if paper_scale else desk


def _precision(text: str) -> PrecisionSpec:
    return PrecisionSpec.from_string(text)


# ---------------------------------------------------------------------------
# key and message commands

def cmd_keygen(args) -> int:
    key = cipher.keygen(
        _seed(args), S=args.sites, k=args.k,
        precision=_precision(args.precision),
        mu=args.mu, x_min=args.x_min, x_max=args.x_max,
        N0=args.n0, N_max=args.n_max, eta=args.eta, chain=args.chain,
    )
    cipher.write_key(args.out, key)
    print(f"key written to {args.out} fingerprint {cipher.key_fingerprint(key)}")
    return EXIT_OK


def cmd_encrypt(args) -> int:
    key = cipher.read_key(args.key)
    with open(args.infile, "rb") as fh:
        plaintext = fh.read()
    counts = cipher.encrypt(plaintext, key, aux_seed=args.aux_seed)
    cipher.write_ciphertext(args.out, counts, mode=args.format)
    print(f"encrypted {len(counts)} units to {args.out}")
    return EXIT_OK


def cmd_decrypt(args) -> int:
    key = cipher.read_key(args.key)
    try:
        counts = cipher.read_ciphertext(args.infile)
    except ParseError as exc:
        print(f"error: bad ciphertext file: {exc}", file=sys.stderr)
        return EXIT_CIPHERTEXT
    recovered = cipher.decrypt(counts, key)
    with open(args.out, "wb") as fh:
        fh.write(bytes(recovered))
    print(f"decrypted {len(counts)} units to {args.out}")
    return EXIT_OK


def cmd_gen(args) -> int:
    words = _pick(args.words, 31250, 2_800_000, args.paper_scale)
    precision = _precision(args.precision)
    x0 = args.x0
    if x0 is None:
        import random as _random

        from .precision import random_unit_string

        x0 = random_unit_string(_random.Random(_seed(args)), precision)
    config = prng.StreamConfig(
        x0=x0, n_words=words, mu=args.mu, k=args.k, precision=precision,
        transient=args.transient, byte_order=args.byte_order,
    )
    stream = prng.generate_stream(config)
    data = prng.words_to_bytes(stream, config.byte_order)
    with open(args.out, "wb") as fh:
        fh.write(data)
    print(f"wrote {words} words ({len(data)} bytes) to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# analyze subcommands

def _finish(args, passed: bool, line: str) -> int:
    print(line)
    if args.do_assert and not passed:
        return EXIT_ASSERTION
    return EXIT_OK


def cmd_hist(args) -> int:
    seeds = _pick(args.seeds, 10, 100, args.paper_scale)
    samples = _pick(args.samples, 10_000, 10_000, args.paper_scale)
    result = analysis.histogram_experiment(
        mu=args.mu, k=args.k, seeds=seeds, samples=samples,
        transient=args.transient, bins=args.bins,
        precision=_precision(args.precision),
        master_seed=_seed(args), threads=args.threads,
    )
    base = os.path.join(args.outdir, f"hist_k{args.k}")
    analysis.export_csv(result, base + ".csv")
    plotting.plot_histogram(result, base + ".png")
    npass = 0
    for row in result.counts:
        _, p = analysis.chi_square_uniform(row)
        if p >= 0.01:
            npass += 1
    frac = npass / seeds
    ok = frac >= 0.9
    return _finish(
        args, ok,
        f"hist k={args.k} mu={args.mu}: uniform chi-square pass "
        f"{npass}/{seeds} seeds {'PASS' if ok else 'FAIL'}",
    )


def cmd_bif(args) -> int:
    iters = _pick(args.iters, 10_000, 100_000, args.paper_scale)
    grid = analysis.bifurcation_grid(
        mu_lo=args.mu_lo, mu_hi=args.mu_hi, mu_steps=args.mu_steps,
        x_bins=args.x_bins, iters=iters, transient=args.transient,
        k=args.k, x0=args.x0,
    )
    base = os.path.join(args.outdir, f"bif_k{args.k}")
    analysis.export_csv(grid, base + ".csv")
    plotting.export_pgm(grid, base + ".pgm")
    plotting.plot_bifurcation(grid, base + ".png")
    occupancy = float((grid.counts[:, -1] > 0).mean())
    return _finish(
        args, True,
        f"bif k={args.k}: final-column occupancy {occupancy:.3f} "
        f"({int(grid.degenerate.sum())} degenerate columns) ok",
    )


def cmd_retmap(args) -> int:
    data = analysis.return_map_data(
        mu=args.mu, x0=args.x0, k=args.k, n=args.n,
        transient=args.transient, dims=args.dims,
    )
    base = os.path.join(args.outdir, f"retmap_k{args.k}")
    analysis.export_csv(data, base + ".csv")
    plotting.plot_return_map(data, base + ".png")
    corr = analysis.lag_autocorrelation(data.y, 1)
    dev = analysis.parabola_deviation(data)
    ok = dev >= 0.1 and abs(corr) < 0.05
    return _finish(
        args, ok,
        f"retmap k={args.k}: lag-1 corr {corr:+.4f}, parabola deviation "
        f"{dev:.3f} {'PASS' if ok else 'FAIL'}",
    )


def cmd_cipherdist(args) -> int:
    plaintexts = _pick(args.plaintexts, 10, 100, args.paper_scale)
    letters = _pick(args.letters, 1_000, 10_000, args.paper_scale)
    k_set = [int(s) for s in args.k_set.split(",") if s.strip() != ""]
    seed = _seed(args)
    results = []
    mean_by_k = {}
    for k in k_set:
        key = cipher.keygen(seed, k=k, precision=PrecisionSpec.binary64())
        res = analysis.cipher_distribution_experiment(
            key, analysis.SourceSpec("klogistic"), plaintexts=plaintexts,
            letters=letters, master_seed=seed, threads=args.threads,
            label=f"k-logistic k={k}",
        )
        mean_by_k[k] = res.mean_total
        results.append((f"k{k}", res))
    base_key = cipher.keygen(seed, k=4, precision=PrecisionSpec.binary64())
    if args.baseline:
        res = analysis.cipher_distribution_experiment(
            base_key, analysis.SourceSpec("baseline"), plaintexts=plaintexts,
            letters=letters, master_seed=seed, threads=args.threads,
        )
        results.append(("mt19937", res))
    if args.external:
        res = analysis.cipher_distribution_experiment(
            base_key, analysis.SourceSpec("external", args.external),
            plaintexts=plaintexts, letters=letters, master_seed=seed,
        )
        results.append(("external", res))
    for name, res in results:
        analysis.export_csv(res, os.path.join(args.outdir, f"cipherdist_{name}.csv"))
    plotting.plot_cipher_distribution(
        [r for _, r in results], os.path.join(args.outdir, "cipherdist.png")
    )
    parts = [f"{name} mean_total={res.mean_total:.1f}" for name, res in results]
    if 0 in mean_by_k and 4 in mean_by_k:
        ok = mean_by_k[4] < mean_by_k[0]
        verdict = "PASS" if ok else "FAIL"
    else:
        ok, verdict = True, "ok"
    return _finish(args, ok, f"cipherdist: {', '.join(parts)} {verdict}")


def cmd_kac(args) -> int:
    min_returns = _pick(args.min_returns, 2_000, 10_000, args.paper_scale)
    max_iters = _pick(args.max_iters, 5_000_000, 20_000_000, args.paper_scale)
    report = analysis.kac_report(
        mu=args.mu, x0=args.x0, k=args.k, site=args.site, S=args.sites,
        x_min=args.x_min, x_max=args.x_max, min_returns=min_returns,
        max_iters=max_iters, transient=args.transient,
    )
    base = os.path.join(args.outdir, f"kac_site{args.site}_k{args.k}")
    analysis.export_csv(report, base + ".csv")
    plotting.plot_kac(report, base + ".png")
    ok = report.relative_error <= 0.10
    return _finish(
        args, ok,
        f"kac site {args.site} k={args.k}: predicted {report.predicted_mean_return:.2f} "
        f"empirical {report.empirical_mean_return:.2f} rel_err "
        f"{report.relative_error:.3%} ({report.basis}) {'PASS' if ok else 'FAIL'}",
    )


def cmd_battery(args) -> int:
    if args.input:
        words = prng.read_stream_file(args.input, args.byte_order)
        label = os.path.basename(args.input)
    else:
        n_words = _pick(args.words, 31_250, 2_800_000, args.paper_scale)
        precision = _precision(args.precision)
        x0 = args.x0
        if x0 is None:
            import random as _random

            from .precision import random_unit_string

            x0 = random_unit_string(_random.Random(_seed(args)), precision)
        config = prng.StreamConfig(
            x0=x0, n_words=n_words, mu=args.mu, k=args.k,
            precision=precision, transient=args.transient,
        )
        words = prng.generate_stream(config)
        label = f"k-logistic k={args.k}"
    report = prng.run_battery(words, alpha=args.alpha, block_m=args.block_m,
                              label=label)
    analysis.export_csv(report, os.path.join(args.outdir, "battery.csv"))
    plotting.plot_battery(report, os.path.join(args.outdir, "battery.png"))
    parts = [f"{r.name} p={r.p_value:.4g}" for r in report.results]
    ok = report.all_passed
    return _finish(
        args, ok,
        f"battery [{label}]: {', '.join(parts)} {'PASS' if ok else 'FAIL'}",
    )


# ---------------------------------------------------------------------------
# parser assembly

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="kzoom", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("keygen", help="derive and write a key file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--sites", "-S", type=int, default=cipher.DEFAULT_SITES)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--precision", default="decimal:128")
    p.add_argument("--mu", default="3.99999")
    p.add_argument("--x-min", default="0.2")
    p.add_argument("--x-max", default="0.8")
    p.add_argument("--n0", type=int, default=250)
    p.add_argument("--n-max", type=int, default=cipher.MAX_CEILING)
    p.add_argument("--eta", type=float, default=0.0)
    p.add_argument("--chain", choices=["zoomed", "underlying"], default="zoomed")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("encrypt", help="encrypt a file of bytes")
    p.add_argument("--key", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["text", "bin"], default="text")
    p.add_argument("--aux-seed", type=int, default=0)
    p.set_defaults(func=cmd_encrypt)

    p = sub.add_parser("decrypt", help="decrypt a ciphertext file")
    p.add_argument("--key", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decrypt)

    p = sub.add_parser("gen", help="write a raw 32-bit word stream")
    p.add_argument("--out", required=True)
    p.add_argument("--words", type=int, default=None)
    p.add_argument("--x0", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--mu", default=prng.DEFAULT_STREAM_MU)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--precision", default="binary64")
    p.add_argument("--transient", type=int, default=1000)
    p.add_argument("--byte-order", choices=["little", "big"], default="little")
    p.add_argument("--paper-scale", action="store_true")
    p.set_defaults(func=cmd_gen)

    pa = sub.add_parser("analyze", help="statistical reports (CSV + figure)")
    suba = pa.add_subparsers(dest="experiment", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--outdir", default=".")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--paper-scale", action="store_true")
        sp.add_argument("--assert", action="store_true", dest="do_assert")

    p = suba.add_parser("hist", help="pooled histograms of the zoomed orbit")
    common(p)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--mu", default="4")
    p.add_argument("--seeds", type=int, default=None)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--bins", type=int, default=analysis.DEFAULT_BINS)
    p.add_argument("--transient", type=int, default=1000)
    p.add_argument("--precision", default="binary64")
    p.set_defaults(func=cmd_hist)

    p = suba.add_parser("bif", help="occupation grid over a mu sweep")
    common(p)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--mu-lo", type=float, default=3.6)
    p.add_argument("--mu-hi", type=float, default=4.0)
    p.add_argument("--mu-steps", type=int, default=200)
    p.add_argument("--x-bins", type=int, default=250)
    p.add_argument("--iters", type=int, default=None)
    p.add_argument("--transient", type=int, default=200)
    p.add_argument("--x0", default="0.1234")
    p.set_defaults(func=cmd_bif)

    p = suba.add_parser("retmap", help="first return map of the observable")
    common(p)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--mu", default="4")
    p.add_argument("--x0", default="0.1234")
    p.add_argument("--n", type=int, default=10_000)
    p.add_argument("--transient", type=int, default=200)
    p.add_argument("--dims", type=int, choices=[2, 3], default=2)
    p.set_defaults(func=cmd_retmap)

    p = suba.add_parser("cipherdist", help="ciphertext count distributions")
    common(p)
    p.add_argument("--k-set", default="0,4")
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--external", default=None)
    p.add_argument("--plaintexts", type=int, default=None)
    p.add_argument("--letters", type=int, default=None)
    p.set_defaults(func=cmd_cipherdist)

    p = suba.add_parser("kac", help="mean return time against the prediction")
    common(p)
    p.add_argument("--site", type=int, default=104)
    p.add_argument("--k", type=int, default=0)
    p.add_argument("--mu", default="4")
    p.add_argument("--x0", default="0.232323")
    p.add_argument("--sites", type=int, default=cipher.DEFAULT_SITES)
    p.add_argument("--x-min", default="0.2")
    p.add_argument("--x-max", default="0.8")
    p.add_argument("--min-returns", type=int, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--transient", type=int, default=1000)
    p.set_defaults(func=cmd_kac)

    p = suba.add_parser("battery", help="bit-level tests on a word stream")
    common(p)
    p.add_argument("--input", default=None)
    p.add_argument("--words", type=int, default=None)
    p.add_argument("--x0", default=None)
    p.add_argument("--mu", default=prng.DEFAULT_STREAM_MU)
    p.add_argument("--k", type=int, default=4)
    p.add_argument("--precision", default="binary64")
    p.add_argument("--transient", type=int, default=1000)
    p.add_argument("--alpha", type=float, default=prng.DEFAULT_ALPHA)
    p.add_argument("--block-m", type=int, default=prng.DEFAULT_BLOCK_M)
    p.add_argument("--byte-order", choices=["little", "big"], default="little")
    p.set_defaults(func=cmd_battery)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit_ as exc:
        if exc.message:
            print(exc.message, file=sys.stderr)
        return exc.code
    except SystemExit as exc:  # --help and friends
        return int(exc.code or 0)
    try:
        return args.func(args)
    except InvalidCiphertext as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CIPHERTEXT
    except _GENERATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except _CONFIG_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KZoomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
