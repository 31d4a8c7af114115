"""Speech quality assessment toolkit: oracle metrics, a multi-task quality
network and its training CLI, backed by a C++ core."""

from ._core import (
    SAMPLE_RATE,
    ConfigError,
    DegenerateError,
    Error,
    InputTooShortError,
    IoError,
    Model,
    ShapeError,
    average_ranks,
    degrade,
    file_digest,
    huber,
    huber_derivative,
    lcc,
    mse,
    pq_proxy,
    proxy_truth,
    read_wav,
    resample_poly,
    run_cli,
    sdi,
    srcc,
    stoi,
    synth_clean,
    write_wav,
)

__all__ = [name for name in dir() if not name.startswith("_")]
