"""Sign-asymmetric multifractal detrended fluctuation analysis."""

__version__ = "0.1.0"

from .engine import (  # noqa: E402
    EngineConfig,
    FluctuationSurface,
    HurstSpectrum,
    MFDFAResult,
    detrended_variance,
    fluctuation_function,
    hurst_exponents,
    run_mfdfa,
    segment,
    sign_profiles,
)
from .series import (  # noqa: E402
    PriceSeries,
    ReturnSeries,
    SessionCalendar,
    filter_overnight,
    log_returns,
    read_series_csv,
    shuffle,
    write_series_csv,
)
from .spectrum import (  # noqa: E402
    SingularitySpectrum,
    TauFunction,
    compare_channels,
    legendre,
    spectrum_metrics,
    tau_from_hurst,
)
from .synth import (  # noqa: E402
    CascadeSpec,
    FgnSpec,
    analytic_binomial_hurst,
    binomial_cascade,
    fgn,
    sign_randomize,
)
