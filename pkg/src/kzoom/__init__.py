"""Deep-zoom logistic PRNG and ergodic cipher with an analysis harness.

The short version: iterate x_{t+1} = mu x_t (1 - x_t), read out the digits
k places down via phi_k(x) = frac(x 10^k), and the resulting observable is
flat, decorrelated, and usable both as a 32-bit word stream and as the
search target of a Baptista-style counting cipher. The analysis module
measures those claims (histograms, return maps, return times, count
distributions, bit tests) at desk scale.
"""

from .precision import (
    DEFAULT_DECIMAL_DIGITS,
    MIN_DECIMAL_DIGITS,
    PrecisionSpec,
    RealValue,
    random_unit_string,
)
from .chaos import (
    LyapunovEstimate,
    OrbitParams,
    OrbitPoint,
    arcsine_cdf,
    arcsine_measure,
    deep_zoom,
    invariant_density,
    logistic_step,
    lyapunov_estimate,
    lyapunov_time,
    orbit,
    orbit_values,
)
from .prng import (
    BatteryReport,
    StreamConfig,
    TestResult,
    bits_from_words,
    block_frequency_test,
    extract_word32,
    generate_stream,
    monobit_test,
    read_stream_file,
    run_battery,
    runs_test,
    words_to_bytes,
)
from .analysis import (
    BifurcationGrid,
    CipherDistResult,
    HistogramResult,
    KacReport,
    ReturnMapData,
    SourceSpec,
    bifurcation_grid,
    chi_square_uniform,
    cipher_distribution_experiment,
    export_csv,
    histogram_experiment,
    kac_report,
    ks_against_arcsine,
    ks_against_uniform,
    lag_autocorrelation,
    parabola_deviation,
    return_map_data,
)
from .cipher import (
    BaselinePRNGSource,
    CipherKey,
    EncryptSession,
    ExternalFileSource,
    KLogisticSource,
    TrajectorySource,
    build_partition,
    decrypt,
    decrypt_unit,
    direct_association,
    encrypt,
    key_fingerprint,
    key_parse,
    key_serialize,
    keygen,
    random_association,
    read_ciphertext,
    read_key,
    site_bounds,
    site_of,
    write_ciphertext,
    write_key,
)
from . import errors

__version__ = "0.1.0"
