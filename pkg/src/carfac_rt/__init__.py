"""Real-time CARFAC cochlea model: float reference, division-free
approximations, a bit-exact fixed-point engine, and streaming I/O."""

from . import _backend
from .approx import (ErrorSweep, GainFit, SWEEP_LIMITS, check_sweeps, fit_gain_quadratic,
                     gain_quadratic, ihc_approx, ohc_approx, ohc_nlf_approx, sweep_ihc,
                     sweep_ohc)
from .errors import (CarfacError, ConfigError, ContractError, DatapathError, FitError,
                     FramingError, LayoutError, NumericFault, ParseError, SingularityError,
                     UnsupportedFormat)
from .exact import g_exact, ihc_exact, ohc_exact
from .fixedpoint import (EngineFormats, FixedCarfac, FxSpec, FxValue, audit_datapath,
                         fx_add, fx_carfac_sample, fx_const, fx_mul, fx_quantize,
                         quantize_coeffs)
from .model import (Carfac, CarfacState, agc_step, car_step, carfac_sample, design_carfac,
                    highpass_step, init_state, run_linear_cascade, spatial_smooth,
                    transfer_function)
from .params import CarfacCoeffs, CarfacParams
from .qbound import QuantizationBound, quantization_bound, snr_db
from .schedule import ScheduleReport, analyze_schedule
from .streamio import (CochleagramSink, FrameQueue, FrameStream, read_cochleagram,
                       read_raw_i24, read_wav, run_pipeline, synchronize, write_cochleagram,
                       write_raw_i24, write_wav)

__version__ = "0.1.0"
backend = _backend.name
