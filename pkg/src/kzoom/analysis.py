"""Statistical experiments over orbits, streams, and ciphertexts.

Each experiment is a plain function returning a frozen result object;
export_csv knows how to serialize every result type with full-precision
numbers so reruns diff cleanly. Experiments draw their randomness (initial
conditions, plaintexts) from seeded meta-generators, so a master seed pins
the entire run, threads or not.
"""

from __future__ import annotations

import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .chaos import OrbitParams, arcsine_cdf, arcsine_measure, orbit_values
from .cipher import (
    BaselinePRNGSource,
    CipherKey,
    EncryptSession,
    ExternalFileSource,
    KLogisticSource,
    build_partition,
)
from .errors import (
    DegenerateOrbit,
    DomainError,
    ExpectedTooSmall,
    ExternalFileExhausted,
    InsufficientReturns,
    ReturnExhausted,
    ZeroVariance,
    ZoomExhausted,
)
from .precision import PrecisionSpec, random_unit_string

DEFAULT_BINS = 500
DIST_BINS = 50


# ---------------------------------------------------------------------------
# goodness-of-fit helpers

def ks_against_arcsine(values) -> tuple[float, float]:
    """Kolmogorov-Smirnov distance and p-value against the arcsine law."""
    arr = np.sort(np.asarray(values, dtype=np.float64))
    n = arr.size
    if n == 0:
        raise DomainError("need at least one value")
    if arr[0] <= 0.0 or arr[-1] >= 1.0:
        raise DomainError("values must lie strictly inside (0, 1)")
    cdf = arcsine_cdf(arr)
    i = np.arange(1, n + 1, dtype=np.float64)
    d_plus = float(np.max(i / n - cdf))
    d_minus = float(np.max(cdf - (i - 1.0) / n))
    d = max(d_plus, d_minus)
    return d, float(stats.kstwo.sf(d, n))


def ks_against_uniform(values) -> tuple[float, float]:
    """Same statistic against the uniform law on [0, 1]."""
    arr = np.sort(np.asarray(values, dtype=np.float64))
    n = arr.size
    if n == 0:
        raise DomainError("need at least one value")
    if arr[0] < 0.0 or arr[-1] > 1.0:
        raise DomainError("values must lie in [0, 1]")
    i = np.arange(1, n + 1, dtype=np.float64)
    d_plus = float(np.max(i / n - arr))
    d_minus = float(np.max(arr - (i - 1.0) / n))
    d = max(d_plus, d_minus)
    return d, float(stats.kstwo.sf(d, n))


def chi_square_uniform(counts) -> tuple[float, float]:
    """Chi-square statistic and p-value of bin counts against uniformity.

    Raises ExpectedTooSmall when the per-bin expectation drops below 5,
    where the chi-square approximation stops being trustworthy.
    """
    arr = np.asarray(counts, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 2:
        raise DomainError("need a one-dimensional array of at least 2 bins")
    if np.any(arr < 0):
        raise DomainError("counts cannot be negative")
    expected = float(arr.sum()) / arr.size
    if expected < 5.0:
        raise ExpectedTooSmall(
            f"expected count per bin is {expected:.3f}, below the validity floor of 5"
        )
    chi2 = float(np.sum((arr - expected) ** 2) / expected)
    return chi2, float(stats.chi2.sf(chi2, arr.size - 1))


def lag_autocorrelation(values, lag: int = 1) -> float:
    """Pearson correlation between the series and itself shifted by lag."""
    arr = np.asarray(values, dtype=np.float64)
    if lag < 1 or lag >= arr.size:
        raise DomainError(f"lag must lie in [1, {arr.size - 1}], got {lag}")
    a, b = arr[:-lag], arr[lag:]
    # ptp rather than std: the std of a constant array picks up summation
    # noise and can miss zero, letting garbage correlations through
    if np.ptp(a) == 0.0 or np.ptp(b) == 0.0:
        raise ZeroVariance("series is constant over the compared windows")
    return float(np.corrcoef(a, b)[0, 1])


# ---------------------------------------------------------------------------
# invariant-density histograms

@dataclass(frozen=True)
class HistogramResult:
    mu: str
    k: int
    edges: np.ndarray       # bins + 1
    counts: np.ndarray      # seeds x bins, int64
    samples_per_seed: int
    transient: int
    redrawn: int

    @property
    def mean(self) -> np.ndarray:
        return self.counts.mean(axis=0)

    @property
    def std(self) -> np.ndarray:
        return self.counts.std(axis=0)


def _histogram_one(args):
    mu, x0, k, precision, samples, transient, bins = args
    params = OrbitParams(mu=mu, x0=x0, k=k, precision=precision)
    try:
        vals = orbit_values(params, samples, transient)
    except (DegenerateOrbit, ZoomExhausted):
        return None
    counts, _ = np.histogram(vals, bins=bins, range=(0.0, 1.0))
    return counts.astype(np.int64)


def histogram_experiment(
    mu: str = "4",
    k: int = 0,
    seeds: int = 100,
    samples: int = 10_000,
    transient: int = 1_000,
    bins: int = DEFAULT_BINS,
    precision: PrecisionSpec | None = None,
    master_seed: int = 0,
    threads: int = 1,
) -> HistogramResult:
    """Pool zoomed-orbit histograms over seeded random initial conditions.

    Initial conditions come from one meta-generator in seed order, so the
    result is identical at any thread count. The rare orbit that degenerates
    is redrawn from the same meta-generator (reported in `redrawn`).
    """
    if seeds < 1:
        raise DomainError("need at least one seed")
    precision = precision or PrecisionSpec.binary64()
    meta = random.Random(master_seed)
    x0s = [random_unit_string(meta, precision) for _ in range(seeds)]
    jobs = [(mu, x0, k, precision, samples, transient, bins) for x0 in x0s]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_histogram_one, jobs, chunksize=1))
    else:
        rows = [_histogram_one(j) for j in jobs]
    redrawn = 0
    for i, row in enumerate(rows):
        attempts = 0
        while row is None:
            attempts += 1
            redrawn += 1
            if attempts > 10:
                raise DegenerateOrbit(f"seed slot {i} kept degenerating")
            x0 = random_unit_string(meta, precision)
            row = _histogram_one((mu, x0, k, precision, samples, transient, bins))
        rows[i] = row
    counts = np.stack(rows)
    edges = np.linspace(0.0, 1.0, bins + 1)
    return HistogramResult(
        mu=str(mu), k=k, edges=edges, counts=counts,
        samples_per_seed=samples, transient=transient, redrawn=redrawn,
    )


# ---------------------------------------------------------------------------
# bifurcation diagram

@dataclass(frozen=True)
class BifurcationGrid:
    mu_values: np.ndarray   # mu_steps
    x_edges: np.ndarray     # x_bins + 1
    counts: np.ndarray      # x_bins x mu_steps, int64
    degenerate: np.ndarray  # mu_steps, bool
    iters: int
    transient: int
    k: int


def bifurcation_grid(
    mu_lo: float = 3.6,
    mu_hi: float = 4.0,
    mu_steps: int = 200,
    x_bins: int = 250,
    iters: int = 10_000,
    transient: int = 200,
    k: int = 0,
    x0: str = "0.1234",
    precision: PrecisionSpec | None = None,
) -> BifurcationGrid:
    """Occupation counts of the zoomed observable across a mu sweep.

    Each column histograms iters - transient post-transient values from the
    same x0. Columns whose orbit hits an absorbing value are flagged
    degenerate and left empty rather than redrawn. mu_lo == mu_hi is legal
    and fixes every column at the same mu (a single-parameter slice).
    """
    if mu_steps < 1 or x_bins < 1:
        raise DomainError("mu_steps and x_bins must be positive")
    if iters <= transient:
        raise DomainError("iters must exceed transient (empty grid otherwise)")
    if not (0.0 <= mu_lo <= mu_hi <= 4.0):
        raise DomainError("need 0 <= mu_lo <= mu_hi <= 4")
    precision = precision or PrecisionSpec.binary64()
    mu_values = np.linspace(mu_lo, mu_hi, mu_steps)
    counts = np.zeros((x_bins, mu_steps), dtype=np.int64)
    degenerate = np.zeros(mu_steps, dtype=bool)
    n = iters - transient
    for j, mu in enumerate(mu_values):
        params = OrbitParams(mu=repr(float(mu)), x0=x0, k=k, precision=precision)
        try:
            vals = orbit_values(params, n, transient)
        except (DegenerateOrbit, ZoomExhausted):
            degenerate[j] = True
            continue
        col, _ = np.histogram(vals, bins=x_bins, range=(0.0, 1.0))
        counts[:, j] = col
    return BifurcationGrid(
        mu_values=mu_values, x_edges=np.linspace(0.0, 1.0, x_bins + 1),
        counts=counts, degenerate=degenerate, iters=iters,
        transient=transient, k=k,
    )


# ---------------------------------------------------------------------------
# return maps

@dataclass(frozen=True)
class ReturnMapData:
    mu: str
    k: int
    dims: int
    y: np.ndarray

    def pairs(self) -> np.ndarray:
        return np.column_stack([self.y[:-1], self.y[1:]])

    def triples(self) -> np.ndarray:
        if self.dims < 3:
            raise DomainError("triples need dims=3")
        return np.column_stack([self.y[:-2], self.y[1:-1], self.y[2:]])


def return_map_data(
    mu: str = "4",
    x0: str = "0.1234",
    k: int = 0,
    n: int = 10_000,
    transient: int = 200,
    dims: int = 2,
    precision: PrecisionSpec | None = None,
) -> ReturnMapData:
    """Successive zoomed values for delay-embedding plots."""
    if dims not in (2, 3):
        raise DomainError(f"dims must be 2 or 3, got {dims}")
    if n < dims:
        raise DomainError(f"need at least {dims} points")
    precision = precision or PrecisionSpec.binary64()
    params = OrbitParams(mu=str(mu), x0=x0, k=k, precision=precision)
    y = orbit_values(params, n, transient)
    return ReturnMapData(mu=str(mu), k=k, dims=dims, y=y)


def parabola_deviation(data: ReturnMapData) -> float:
    """Largest distance of the pair cloud from the raw map's parabola.

    Zero means the observable is still the bare map (k=0); deep zooms
    scatter the cloud and push this toward order one.
    """
    mu = float(data.mu)
    a, b = data.y[:-1], data.y[1:]
    return float(np.max(np.abs(b - (mu * a) * (1.0 - a))))


# ---------------------------------------------------------------------------
# return-time (Kac) measurements

@dataclass(frozen=True)
class KacReport:
    site: int
    predicted_measure: float
    predicted_mean_return: float
    empirical_mean_return: float
    relative_error: float
    n_returns: int
    basis: str = "arcsine"
    k: int = 0


def kac_report(
    mu: str = "4",
    x0: str = "0.232323",
    k: int = 0,
    site: int = 104,
    S: int = 256,
    x_min: str = "0.2",
    x_max: str = "0.8",
    min_returns: int = 2_000,
    max_iters: int = 5_000_000,
    transient: int = 1_000,
    precision: PrecisionSpec | None = None,
) -> KacReport:
    """Mean return time to one site against the ergodic prediction.

    The prediction is the reciprocal invariant measure of the site cell:
    arcsine measure at k=0, plain interval length for zoomed observables
    (exact for a uniform law; treat small k as approximate). Return times
    are gaps between consecutive visits; the first passage is not a return.
    S=1 with the whole interval as the window degenerates to "every step
    is a return": both means are exactly 1.
    """
    precision = precision or PrecisionSpec.binary64()
    partition = build_partition(precision, x_min, x_max, S)
    backend = precision.backend()
    lo_raw, hi_raw = partition.bounds_raw(site)
    lo_f, hi_f = backend.to_float(lo_raw), backend.to_float(hi_raw)
    if k == 0:
        measure = arcsine_measure(lo_f, hi_f)
        basis = "arcsine"
    else:
        measure = hi_f - lo_f
        basis = "uniform"
    predicted = 1.0 / measure

    params = OrbitParams(mu=str(mu), x0=x0, k=k, precision=precision)
    mu_raw = params.raw_mu()
    x = params.raw_x0()
    gaps_total = 0
    n_returns = 0
    last_visit = None
    if precision.mode == "binary64":
        p10 = 10.0 ** k
        for _ in range(transient):
            x = (mu_raw * x) * (1.0 - x)
        for t in range(1, max_iters + 1):
            x = (mu_raw * x) * (1.0 - x)
            if x == 0.0 or x == 1.0:
                raise DegenerateOrbit("orbit became degenerate", iteration=t)
            if k:
                z = x * p10
                y = z - int(z)
            else:
                y = x
            if lo_raw <= y < hi_raw:
                if last_visit is not None:
                    gaps_total += t - last_visit
                    n_returns += 1
                    if n_returns >= min_returns:
                        break
                last_visit = t
    else:
        scale = backend.scale
        p10 = 10 ** k
        for _ in range(transient):
            v = (mu_raw * x) // scale
            x = (v * (scale - x)) // scale
        for t in range(1, max_iters + 1):
            v = (mu_raw * x) // scale
            x = (v * (scale - x)) // scale
            if x == 0 or x == scale:
                raise DegenerateOrbit("orbit became degenerate", iteration=t)
            y = (x * p10) % scale if k else x
            if lo_raw <= y < hi_raw:
                if last_visit is not None:
                    gaps_total += t - last_visit
                    n_returns += 1
                    if n_returns >= min_returns:
                        break
                last_visit = t
    if n_returns < min_returns:
        raise InsufficientReturns(
            f"only {n_returns} returns to site {site} within {max_iters} iterations"
        )
    empirical = gaps_total / n_returns
    return KacReport(
        site=site,
        predicted_measure=measure,
        predicted_mean_return=predicted,
        empirical_mean_return=empirical,
        relative_error=abs(empirical - predicted) / predicted,
        n_returns=n_returns,
        basis=basis,
        k=k,
    )


# ---------------------------------------------------------------------------
# ciphertext count distributions

@dataclass(frozen=True)
class SourceSpec:
    """Picklable description of a trajectory source for experiment workers.

    kind is "klogistic", "baseline", or "external"; arg carries the file
    path for external sources.
    """

    kind: str = "klogistic"
    arg: str = ""

    def build(self, key: CipherKey, seed: int):
        if self.kind == "klogistic":
            return KLogisticSource(key)
        if self.kind == "baseline":
            return BaselinePRNGSource(seed, key.precision)
        if self.kind == "external":
            return ExternalFileSource(self.arg, key.precision)
        raise DomainError(f"unknown source kind {self.kind!r}")


@dataclass(frozen=True)
class CipherDistResult:
    label: str
    bin_edges: np.ndarray    # DIST_BINS + 1, logarithmic over (N0, N_max]
    bin_counts: np.ndarray   # pooled over completed runs
    totals: np.ndarray       # one total per completed run
    excluded: int
    plaintexts: int
    letters: int
    N0: int
    N_max: int

    @property
    def mean_count(self) -> float:
        n = int(self.bin_counts.sum())
        if n == 0:
            raise DomainError("no completed runs to average")
        return float(self.totals.sum()) / n

    @property
    def mean_total(self) -> float:
        if self.totals.size == 0:
            raise DomainError("no completed runs to average")
        return float(self.totals.mean())


def _dist_run(args):
    key, spec, letters, plain_seed, source_seed = args
    rng = random.Random(plain_seed)
    source = spec.build(key, source_seed)
    session = EncryptSession(key, aux_seed=source_seed, source=source)
    counts = np.empty(letters, dtype=np.int64)
    try:
        for i in range(letters):
            counts[i], _ = session.encrypt_unit(rng.randrange(key.S))
    except (ReturnExhausted, DegenerateOrbit, ExternalFileExhausted):
        return None
    return counts


def cipher_distribution_experiment(
    key: CipherKey,
    source: SourceSpec | None = None,
    plaintexts: int = 10,
    letters: int = 1_000,
    master_seed: int = 0,
    threads: int = 1,
    label: str | None = None,
) -> CipherDistResult:
    """Distribution of iteration counts over random plaintexts.

    Each run encrypts a fresh random plaintext with a fresh session (the
    chain restarts, the source is rebuilt per run except external files,
    which are consumed across runs). Runs that exhaust the source or the
    count ceiling are excluded and reported.
    """
    spec = source or SourceSpec()
    meta = random.Random(master_seed)
    run_seeds = [(meta.randrange(2 ** 63), meta.randrange(2 ** 63))
                 for _ in range(plaintexts)]
    if spec.kind == "external":
        # one shared cursor across runs; inherently serial
        shared = ExternalFileSource(spec.arg, key.precision)
        rows = []
        for plain_seed, source_seed in run_seeds:
            rng = random.Random(plain_seed)
            session = EncryptSession(key, aux_seed=source_seed, source=shared)
            counts = np.empty(letters, dtype=np.int64)
            try:
                for i in range(letters):
                    counts[i], _ = session.encrypt_unit(rng.randrange(key.S))
            except (ReturnExhausted, ExternalFileExhausted):
                rows.append(None)
                continue
            rows.append(counts)
        label = label or shared.label
    else:
        jobs = [(key, spec, letters, ps, ss) for ps, ss in run_seeds]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                rows = list(pool.map(_dist_run, jobs, chunksize=1))
        else:
            rows = [_dist_run(j) for j in jobs]
        if label is None:
            label = (f"k-logistic k={key.k}" if spec.kind == "klogistic"
                     else "mt19937")
    completed = [r for r in rows if r is not None]
    excluded = len(rows) - len(completed)
    edges = np.logspace(np.log10(key.N0 + 1), np.log10(key.N_max), DIST_BINS + 1)
    if completed:
        pooled = np.concatenate(completed)
        bin_counts, _ = np.histogram(pooled, bins=edges)
        totals = np.array([int(r.sum()) for r in completed], dtype=np.int64)
    else:
        bin_counts = np.zeros(DIST_BINS, dtype=np.int64)
        totals = np.zeros(0, dtype=np.int64)
    return CipherDistResult(
        label=label, bin_edges=edges, bin_counts=bin_counts.astype(np.int64),
        totals=totals, excluded=excluded, plaintexts=plaintexts,
        letters=letters, N0=key.N0, N_max=key.N_max,
    )


# ---------------------------------------------------------------------------
# CSV export

def _fmt(v) -> str:
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    return str(v)


def export_csv(result, path) -> None:
    """Write any experiment result as CSV; layout documented per type below.

    HistogramResult: bin_lo,bin_hi,mean_count,std_count
    BifurcationGrid: mu,x_lo,x_hi,count (nonzero cells, column-major)
    ReturnMapData:   y_t,y_t1[,y_t2]
    KacReport:       the six report columns, one data row
    CipherDistResult: record,a,b,value with bin rows then run_total rows
    BatteryReport (from prng): test,n_bits,statistic,p_value,alpha,passed
    """
    lines: list[str] = []
    if isinstance(result, HistogramResult):
        lines.append("bin_lo,bin_hi,mean_count,std_count")
        mean, std = result.mean, result.std
        for i in range(mean.size):
            lines.append(
                f"{_fmt(result.edges[i])},{_fmt(result.edges[i + 1])},"
                f"{_fmt(mean[i])},{_fmt(std[i])}"
            )
    elif isinstance(result, BifurcationGrid):
        lines.append("mu,x_lo,x_hi,count")
        for j, mu in enumerate(result.mu_values):
            col = result.counts[:, j]
            for i in np.nonzero(col)[0]:
                lines.append(
                    f"{_fmt(mu)},{_fmt(result.x_edges[i])},"
                    f"{_fmt(result.x_edges[i + 1])},{col[i]}"
                )
    elif isinstance(result, ReturnMapData):
        if result.dims == 3:
            lines.append("y_t,y_t1,y_t2")
            for a, b, c in result.triples():
                lines.append(f"{_fmt(a)},{_fmt(b)},{_fmt(c)}")
        else:
            lines.append("y_t,y_t1")
            for a, b in result.pairs():
                lines.append(f"{_fmt(a)},{_fmt(b)}")
    elif isinstance(result, KacReport):
        lines.append(
            "site,predicted_measure,predicted_mean_return,"
            "empirical_mean_return,relative_error,n_returns"
        )
        lines.append(
            f"{result.site},{_fmt(result.predicted_measure)},"
            f"{_fmt(result.predicted_mean_return)},"
            f"{_fmt(result.empirical_mean_return)},"
            f"{_fmt(result.relative_error)},{result.n_returns}"
        )
    elif isinstance(result, CipherDistResult):
        lines.append("record,a,b,value")
        for i in range(result.bin_counts.size):
            lines.append(
                f"bin,{_fmt(result.bin_edges[i])},{_fmt(result.bin_edges[i + 1])},"
                f"{result.bin_counts[i]}"
            )
        for i, total in enumerate(result.totals):
            lines.append(f"run_total,{i},,{total}")
    elif hasattr(result, "csv_rows"):
        lines.extend(result.csv_rows())
    else:
        raise DomainError(f"no CSV layout for {type(result).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
