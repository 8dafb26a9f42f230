"""Statistical experiments: histograms, sweeps, return times, count laws."""

import random

import numpy as np
import pytest

from kzoom import (
    OrbitParams,
    PrecisionSpec,
    StreamConfig,
    arcsine_cdf,
    bifurcation_grid,
    chi_square_uniform,
    cipher_distribution_experiment,
    export_csv,
    generate_stream,
    histogram_experiment,
    kac_report,
    keygen,
    ks_against_arcsine,
    ks_against_uniform,
    lag_autocorrelation,
    orbit_values,
    parabola_deviation,
    return_map_data,
    run_battery,
    words_to_bytes,
)
from kzoom.analysis import SourceSpec, _histogram_one
from kzoom.errors import (
    DomainError,
    ExpectedTooSmall,
    InsufficientReturns,
    ZeroVariance,
)

B64 = PrecisionSpec.binary64()
D64 = PrecisionSpec.decimal(64)


# --- scalar statistics ------------------------------------------------------

def test_ks_arcsine_accepts_inverse_transform_samples():
    # sin^2(pi u / 2) maps uniform u to the arcsine law exactly.
    u = np.random.default_rng(1).random(100_000)
    d, p = ks_against_arcsine(np.sin(np.pi * u / 2.0) ** 2)
    assert d < 0.01
    assert p > 0.01


def test_ks_arcsine_rejects_uniform_samples():
    u = np.random.default_rng(2).random(10_000)
    d, p = ks_against_arcsine(np.clip(u, 1e-9, 1 - 1e-9))
    assert d > 0.1 and p < 1e-10


def test_ks_input_validation():
    with pytest.raises(DomainError):
        ks_against_arcsine([])
    with pytest.raises(DomainError):
        ks_against_arcsine([0.0, 0.5])
    with pytest.raises(DomainError):
        ks_against_arcsine([0.5, 1.0])
    ks_against_uniform([0.0, 0.5, 1.0])  # closed interval is fine here
    with pytest.raises(DomainError):
        ks_against_uniform([0.5, 1.1])


def test_ks_uniform_accepts_uniform():
    u = np.random.default_rng(3).random(50_000)
    d, _ = ks_against_uniform(u)
    assert d < 0.01


def test_chi_square_uniform():
    assert chi_square_uniform([10, 10, 10, 10]) == (0.0, 1.0)
    chi2, p = chi_square_uniform([100, 50, 150, 100])
    assert chi2 == pytest.approx(50.0) and p < 1e-9
    with pytest.raises(ExpectedTooSmall):
        chi_square_uniform([1, 2, 3])
    with pytest.raises(DomainError):
        chi_square_uniform([10, -1, 10])
    with pytest.raises(DomainError):
        chi_square_uniform([100])


def test_chi_square_flags_raw_orbit():
    vals = orbit_values(OrbitParams(mu="4", x0="0.1234"), 10_000, 1000)
    counts, _ = np.histogram(vals, bins=100, range=(0.0, 1.0))
    _, p = chi_square_uniform(counts)
    assert p < 1e-10


def test_lag_autocorrelation():
    assert lag_autocorrelation(np.arange(100.0)) > 0.99
    with pytest.raises(ZeroVariance):
        lag_autocorrelation(np.full(50, 0.3))
    with pytest.raises(DomainError):
        lag_autocorrelation(np.arange(10.0), lag=0)
    with pytest.raises(DomainError):
        lag_autocorrelation(np.arange(10.0), lag=10)


# --- pooled histograms ------------------------------------------------------

def test_histogram_conserves_samples():
    h = histogram_experiment(seeds=4, samples=2_000, bins=50, master_seed=3)
    assert h.counts.shape == (4, 50)
    assert np.all(h.counts.sum(axis=1) == 2_000)
    assert h.redrawn == 0


def test_histogram_deterministic_and_thread_invariant():
    kw = dict(seeds=4, samples=2_000, bins=50, master_seed=3)
    a = histogram_experiment(**kw)
    b = histogram_experiment(**kw)
    c = histogram_experiment(threads=2, **kw)
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.counts, c.counts)


def test_histogram_single_bin():
    h = histogram_experiment(seeds=2, samples=500, bins=1, master_seed=0)
    assert np.all(h.counts == 500)


def test_histogram_raw_orbit_piles_at_the_edges():
    h = histogram_experiment(seeds=3, samples=10_000, bins=100, master_seed=1)
    m = h.mean
    assert m[0] / m[50] > 5.0
    assert m[99] / m[50] > 5.0


def test_histogram_worker_reports_degenerate_start():
    assert _histogram_one(("4", "0.5", 0, B64, 100, 0, 10)) is None


def test_histogram_matches_arcsine_within_counting_noise():
    # Single long orbits against the predicted bin masses: at least 95 of
    # 100 bins inside three sigma, for several unrelated starting points.
    for x0 in ("0.1234", "0.232323", "0.5551212", "0.87431"):
        vals = orbit_values(OrbitParams(mu="4", x0=x0), 100_000, 1000)
        counts, edges = np.histogram(vals, bins=100, range=(0.0, 1.0))
        pred = 100_000 * (arcsine_cdf(edges[1:]) - arcsine_cdf(edges[:-1]))
        within = np.sum(np.abs(counts - pred) <= 3.0 * np.sqrt(pred))
        assert within >= 95


def test_histogram_validation():
    with pytest.raises(DomainError):
        histogram_experiment(seeds=0)


# --- bifurcation sweep ------------------------------------------------------

def test_bifurcation_periodic_window_has_two_branches():
    g = bifurcation_grid(3.2, 3.2, mu_steps=1, x_bins=250, iters=1500, transient=500)
    col = g.counts[:, 0]
    assert np.count_nonzero(col) == 2
    assert col.sum() == 1000
    assert not g.degenerate[0]


def test_bifurcation_zoom_fills_more_bins():
    occ = {}
    for k in (0, 3):
        g = bifurcation_grid(4.0, 4.0, mu_steps=1, x_bins=250,
                             iters=1200, transient=200, k=k)
        occ[k] = np.count_nonzero(g.counts[:, 0]) / 250
    assert occ[3] > occ[0]


def test_bifurcation_flags_degenerate_columns():
    g = bifurcation_grid(4.0, 4.0, mu_steps=1, iters=500, transient=100, x0="0.5")
    assert g.degenerate[0]
    assert g.counts.sum() == 0


def test_bifurcation_grid_shape_and_validation():
    g = bifurcation_grid(mu_steps=5, x_bins=20, iters=300, transient=100)
    assert g.counts.shape == (20, 5)
    assert g.mu_values[0] == 3.6 and g.mu_values[-1] == 4.0
    with pytest.raises(DomainError):
        bifurcation_grid(3.9, 3.6, mu_steps=5)
    with pytest.raises(DomainError):
        bifurcation_grid(3.6, 4.2, mu_steps=5)
    with pytest.raises(DomainError):
        bifurcation_grid(mu_steps=5, iters=200, transient=200)


# --- return maps ------------------------------------------------------------

def test_return_map_k0_sits_on_the_parabola():
    data = return_map_data(k=0, n=10_000)
    assert parabola_deviation(data) == 0.0
    assert abs(lag_autocorrelation(data.y)) < 0.05


def test_return_map_shallow_zoom_still_structured():
    assert parabola_deviation(return_map_data(k=1, n=10_000)) > 0.1


def test_return_map_deep_zoom_decorrelates():
    for k in (3, 4):
        data = return_map_data(k=k, n=10_000)
        assert parabola_deviation(data) > 0.1
        assert abs(lag_autocorrelation(data.y)) < 0.05


def test_return_map_embedding_shapes():
    data = return_map_data(n=500, dims=3)
    assert data.pairs().shape == (499, 2)
    assert data.triples().shape == (498, 3)
    flat = return_map_data(n=500, dims=2)
    with pytest.raises(DomainError):
        flat.triples()
    with pytest.raises(DomainError):
        return_map_data(dims=4)
    with pytest.raises(DomainError):
        return_map_data(n=1)


# --- return times -----------------------------------------------------------

def test_kac_whole_interval_is_exact():
    for spec in (B64, D64):
        rep = kac_report(S=1, site=1, x_min="0", x_max="1",
                         min_returns=100, precision=spec)
        assert rep.empirical_mean_return == 1.0
        assert rep.predicted_mean_return == 1.0
        assert rep.relative_error == 0.0


def test_kac_site_predictions():
    rep = kac_report(min_returns=2_000)
    assert rep.basis == "arcsine"
    assert rep.predicted_mean_return == pytest.approx(665.77, abs=0.01)
    assert rep.n_returns >= 2_000
    assert rep.relative_error < 0.10

    deep = kac_report(k=4, min_returns=2_000)
    assert deep.basis == "uniform"
    assert deep.predicted_mean_return == pytest.approx(426.666, abs=0.01)
    assert deep.relative_error < 0.10


def test_kac_insufficient_returns():
    with pytest.raises(InsufficientReturns):
        kac_report(min_returns=2_000, max_iters=10_000)


# --- ciphertext count distributions -----------------------------------------

def test_cipher_distribution_totals_invariant():
    key = keygen(31, k=0, precision=B64, mu="4")
    r = cipher_distribution_experiment(key, plaintexts=4, letters=100,
                                       master_seed=11)
    assert r.excluded == 0
    assert int(r.bin_counts.sum()) == 4 * 100
    assert r.totals.size == 4
    assert r.mean_total == pytest.approx(r.totals.mean())
    assert r.mean_count == pytest.approx(r.totals.sum() / 400)
    assert r.bin_edges.size == 51
    assert r.bin_edges[0] == pytest.approx(key.N0 + 1)
    assert r.bin_edges[-1] == pytest.approx(key.N_max)


def test_cipher_distribution_deterministic_and_thread_invariant():
    key = keygen(31, k=4, precision=B64, mu="4")
    kw = dict(plaintexts=4, letters=50, master_seed=7)
    a = cipher_distribution_experiment(key, **kw)
    b = cipher_distribution_experiment(key, **kw)
    c = cipher_distribution_experiment(key, threads=2, **kw)
    assert np.array_equal(a.bin_counts, b.bin_counts)
    assert np.array_equal(a.totals, c.totals)
    assert a.label == "k-logistic k=4"


def test_cipher_distribution_baseline_label():
    key = keygen(31, k=0, precision=B64, mu="4")
    r = cipher_distribution_experiment(key, SourceSpec("baseline"),
                                       plaintexts=2, letters=30, master_seed=7)
    assert r.label == "mt19937"
    assert int(r.bin_counts.sum()) == 60


def test_cipher_distribution_unknown_source():
    key = keygen(31)
    with pytest.raises(DomainError):
        cipher_distribution_experiment(key, SourceSpec("hamster"),
                                       plaintexts=1, letters=1)


def test_cipher_distribution_external_exhaustion(tmp_path):
    path = tmp_path / "tiny.bin"
    path.write_bytes(random.Random(5).randbytes(4 * 4_000))
    key = keygen(31, k=0, precision=B64, mu="4")
    r = cipher_distribution_experiment(key, SourceSpec("external", str(path)),
                                       plaintexts=3, letters=5, master_seed=11)
    assert r.excluded >= 1
    assert r.totals.size == 3 - r.excluded
    assert int(r.bin_counts.sum()) == 5 * (3 - r.excluded)


def test_cipher_distribution_empty_result_guards():
    key = keygen(31, k=0, precision=B64, mu="4")
    r = cipher_distribution_experiment(key, plaintexts=1, letters=0,
                                       master_seed=1)
    with pytest.raises(DomainError):
        r.mean_count
    assert r.totals.size == 1 and r.totals[0] == 0


def test_deep_zoom_counts_track_an_unstructured_source(tmp_path):
    # Dual route: the count law of the deep-zoom source against the same
    # counting loop driven by an external word file. The shallow orbit's
    # law sits much farther from the reference than the zoomed one.
    path = tmp_path / "ref_words.bin"
    path.write_bytes(random.Random(777).randbytes(4 * 1_200_000))
    k0 = keygen(31, k=0, precision=B64, mu="4")
    k9 = keygen(31, k=9, precision=B64, mu="4")
    kw = dict(plaintexts=5, letters=300, master_seed=11)
    ext = cipher_distribution_experiment(k0, SourceSpec("external", str(path)), **kw)
    assert ext.excluded == 0 and ext.label == "external:ref_words.bin"

    def law(r):
        return r.bin_counts / r.bin_counts.sum()

    l1_shallow = float(np.abs(law(cipher_distribution_experiment(k0, **kw)) - law(ext)).sum())
    l1_deep = float(np.abs(law(cipher_distribution_experiment(k9, **kw)) - law(ext)).sum())
    assert l1_deep + 0.05 < l1_shallow


# --- CSV export -------------------------------------------------------------

def test_export_histogram_csv(tmp_path):
    h = histogram_experiment(seeds=2, samples=1_000, master_seed=0)
    path = tmp_path / "h.csv"
    export_csv(h, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "bin_lo,bin_hi,mean_count,std_count"
    assert len(lines) == 501
    export_csv(h, tmp_path / "h2.csv")
    assert (tmp_path / "h2.csv").read_bytes() == path.read_bytes()


def test_export_kac_csv(tmp_path):
    rep = kac_report(S=1, site=1, x_min="0", x_max="1", min_returns=50)
    path = tmp_path / "k.csv"
    export_csv(rep, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert lines[0].startswith("site,predicted_measure")
    assert lines[1].split(",")[0] == "1"


def test_export_return_map_csv(tmp_path):
    data = return_map_data(n=100, dims=3)
    export_csv(data, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "y_t,y_t1,y_t2"
    assert len(lines) == 99


def test_export_bifurcation_csv(tmp_path):
    g = bifurcation_grid(3.2, 3.2, mu_steps=1, x_bins=50, iters=400, transient=200)
    export_csv(g, tmp_path / "b.csv")
    lines = (tmp_path / "b.csv").read_text().splitlines()
    assert lines[0] == "mu,x_lo,x_hi,count"
    total = sum(int(line.rsplit(",", 1)[1]) for line in lines[1:])
    assert total == g.counts.sum() == 200


def test_export_cipher_dist_csv(tmp_path):
    key = keygen(31, k=0, precision=B64, mu="4")
    r = cipher_distribution_experiment(key, plaintexts=2, letters=20, master_seed=3)
    export_csv(r, tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "record,a,b,value"
    assert sum(1 for l in lines if l.startswith("bin,")) == 50
    assert sum(1 for l in lines if l.startswith("run_total,")) == 2


def test_export_battery_csv(tmp_path):
    rep = run_battery(generate_stream(StreamConfig(x0="0.1234", n_words=500)))
    export_csv(rep, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "test,n_bits,statistic,p_value,alpha,passed"
    assert len(lines) == 4


def test_export_rejects_unknown_type(tmp_path):
    with pytest.raises(DomainError):
        export_csv(42, tmp_path / "x.csv")
