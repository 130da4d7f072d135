"""Fixed-point arithmetic primitives and the division-free CARFAC datapath.

Signals live in wide accumulators (48-bit, DSP-slice style). Every multiply
takes two 18-bit operands: a coefficient stored as an 18-bit mantissa plus a
per-constant shift, and a signal operand sliced out of an accumulator.
Multiplications by powers of two become shifts. Additions grow by one bit.
"""

import csv
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigError, ContractError, DatapathError
from .params import CarfacCoeffs

ROUNDING = ("truncate", "nearest")
OVERFLOW = ("saturate", "wrap")
MUL_OPERAND_BITS = 18
ACC_BITS = 48
OP_KINDS = ("mul", "add", "shift", "compare", "clamp", "lookup", "div")


@dataclass(frozen=True)
class FxSpec:
    word_bits: int
    frac_bits: int
    rounding: str = "nearest"
    overflow: str = "saturate"

    def __post_init__(self):
        if not 1 <= self.word_bits <= ACC_BITS:
            raise ConfigError(f"word_bits must lie in [1, {ACC_BITS}], got {self.word_bits}")
        if not 0 <= self.frac_bits < self.word_bits:
            raise ConfigError(f"need 0 <= frac_bits < word_bits, got {self.frac_bits}")
        if self.rounding not in ROUNDING:
            raise ConfigError(f"rounding must be one of {ROUNDING}")
        if self.overflow not in OVERFLOW:
            raise ConfigError(f"overflow must be one of {OVERFLOW}")

    @property
    def max_raw(self):
        return (1 << (self.word_bits - 1)) - 1

    @property
    def min_raw(self):
        return -(1 << (self.word_bits - 1))

    @property
    def lsb(self):
        return 2.0 ** -self.frac_bits

    def __str__(self):
        return f"Q{self.word_bits - self.frac_bits}.{self.frac_bits}"


@dataclass(frozen=True)
class FxValue:
    raw: int
    spec: FxSpec

    def __post_init__(self):
        if not self.spec.min_raw <= self.raw <= self.spec.max_raw:
            raise ContractError(f"raw {self.raw} not representable in {self.spec}")

    @property
    def value(self):
        return self.raw * 2.0 ** -self.spec.frac_bits

    def __float__(self):
        return self.value


def _shift_right(raw, n, rounding):
    if n <= 0:
        return raw << -n
    if rounding == "nearest":
        raw += 1 << (n - 1)
    return raw >> n


def _fit(raw, spec, ops=None):
    if spec.min_raw <= raw <= spec.max_raw:
        return raw
    if ops is not None:
        ops["saturation"] += 1
    if spec.overflow == "saturate":
        return spec.max_raw if raw > 0 else spec.min_raw
    span = 1 << spec.word_bits
    return (raw - spec.min_raw) % span + spec.min_raw


def fx_quantize(x, spec):
    """Quantize a real number, applying the spec's rounding and overflow policy."""
    scaled = float(x) * (1 << spec.frac_bits)
    if not math.isfinite(scaled):
        raise ContractError(f"cannot quantize non-finite value {x!r}")
    raw = math.floor(scaled + 0.5) if spec.rounding == "nearest" else math.floor(scaled)
    return FxValue(_fit(int(raw), spec), spec)


def _requantize(raw, frac, spec, ops=None):
    return FxValue(_fit(_shift_right(raw, frac - spec.frac_bits, spec.rounding), spec, ops), spec)


def _power_of_two_exponent(raw):
    """log2(|raw|) when |raw| is a power of two, else None."""
    m = abs(raw)
    if m and not m & (m - 1):
        return m.bit_length() - 1
    return None


def fx_mul(a, b, out_spec, hardware_strict=True, ops=None):
    """Full-precision product requantized to ``out_spec``.

    A power-of-two operand takes the shift path; the result is identical to
    the multiplier path. With ``hardware_strict`` both operands must fit the
    18-bit multiplier ports.
    """
    frac = a.spec.frac_bits + b.spec.frac_bits
    for p, q in ((a, b), (b, a)):
        j = _power_of_two_exponent(p.raw)
        if j is not None:
            if ops is not None:
                ops["shift"] += 1
            raw = q.raw << j
            return _requantize(raw if p.raw > 0 else -raw, frac, out_spec, ops)
    if hardware_strict and (a.spec.word_bits > MUL_OPERAND_BITS
                            or b.spec.word_bits > MUL_OPERAND_BITS):
        raise DatapathError(
            f"multiplier operands {a.spec} x {b.spec} exceed {MUL_OPERAND_BITS} bits")
    if ops is not None:
        ops["mul"] += 1
    return _requantize(a.raw * b.raw, frac, out_spec, ops)


def fx_add(a, b, ops=None):
    """Exact sum; the result carries one growth bit over the wider aligned operand."""
    frac = max(a.spec.frac_bits, b.spec.frac_bits)
    wa = a.spec.word_bits + frac - a.spec.frac_bits
    wb = b.spec.word_bits + frac - b.spec.frac_bits
    word = max(wa, wb) + 1
    if word > ACC_BITS:
        raise DatapathError(f"sum needs {word} bits, beyond the {ACC_BITS}-bit accumulator")
    if ops is not None:
        ops["add"] += 1
    raw = (a.raw << (frac - a.spec.frac_bits)) + (b.raw << (frac - b.spec.frac_bits))
    return FxValue(raw, FxSpec(word, frac, a.spec.rounding, a.spec.overflow))


def fx_const(value, bits=MUL_OPERAND_BITS):
    """Mantissa/shift pair with ``value ~= mantissa * 2**-shift``.

    The mantissa is normalized to use the full ``bits``-bit signed range, so
    small coefficients keep their relative precision.
    """
    if value == 0:
        return 0, 0
    top = 1 << (bits - 2)
    shift = (bits - 2) - math.floor(math.log2(abs(value)))
    m = round(value * 2.0 ** shift)
    if abs(m) >= 2 * top:
        shift -= 1
        m = round(value * 2.0 ** shift)
    return int(m), int(shift)


def const_value(m, s):
    return m * 2.0 ** -s


# ---------------------------------------------------------------------------
# engine


@dataclass(frozen=True)
class EngineFormats:
    """Binary-point positions used by the fixed datapath.

    ``input`` is the 24-bit input word. ``acc_frac`` is the fraction length
    of 48-bit accumulators; ``coef_frac`` that of the wide registers used in
    the coefficient update. ``signal_frac`` places the binary point of
    18-bit signal operands sliced from accumulators; ``unit_frac`` that of
    bounded quantities (u, NLF, g, IHC output); ``mid_frac`` that of
    mid-range operands (OHC affine term, AGC differences).
    """

    input: FxSpec = FxSpec(24, 23)
    acc_frac: int = 32
    coef_frac: int = 40
    signal_frac: int = 13
    unit_frac: int = 16
    mid_frac: int = 15
    rounding: str = "nearest"

    def __post_init__(self):
        if self.rounding not in ROUNDING:
            raise ConfigError(f"rounding must be one of {ROUNDING}")
        if self.input.word_bits > 24:
            raise ConfigError("input is limited to 24 bits")
        for name in ("signal_frac", "unit_frac", "mid_frac"):
            if not 0 <= getattr(self, name) < MUL_OPERAND_BITS:
                raise ConfigError(f"{name} must leave room for a sign bit in 18 bits")
        if not self.unit_frac <= MUL_OPERAND_BITS - 2:
            raise ConfigError("unit_frac must represent 1.0 in an 18-bit operand")

    def operand(self, frac):
        return FxSpec(MUL_OPERAND_BITS, frac, self.rounding, "saturate")


# integer coefficient table rows
ICOEF_ROWS = ("k", "hk_m", "hk_s", "hpf_m", "hpf_s", "K0w", "K1_m", "K1_s", "sA",
              "L0w", "L1_m", "L1_s", "sC", "A_m", "A_s", "Bw", "sT", "Cw")
# integer state rows
IROWS = ("Z0", "Z1", "LP", "KA", "KC", "G", "U", "V", "NLF", "B", "BM", "VM")
# scalar slots
ISCAL = ("FA", "FS", "FU", "FC", "FM", "nearest", "in_frac", "ihc_off", "rest",
         "ohc_scale_m", "ohc_scale_s", "ohc_off", "q75_m", "q75_s",
         "ct0_m", "ct0_s", "ct1_m", "ct1_s", "ct2_m", "ct2_s", "ct3_m", "ct3_s",
         "s1_m", "s1_s", "s2_m", "s2_s",
         "w0_m", "w0_s", "w1_m", "w1_s", "w2_m", "w2_s", "w3_m", "w3_s",
         "lg0", "lg1", "lg2", "lg3")
STAT_SLOTS = ("saturation",) + OP_KINDS


def _norm_shift(maxabs, bits=MUL_OPERAND_BITS):
    """Shift that normalizes values of magnitude <= maxabs into an 18-bit mantissa."""
    if maxabs == 0:
        return 0
    return (bits - 2) - math.floor(math.log2(maxabs))


@dataclass
class FixedCoeffs:
    coeffs: CarfacCoeffs
    formats: EngineFormats
    icoef: np.ndarray
    iscal: np.ndarray
    intervals: np.ndarray
    info: dict = field(default_factory=dict)


def quantize_coeffs(coeffs, formats=None):
    """Turn designed float coefficients into integer tables for the engine."""
    fm = formats or EngineFormats()
    p = coeffs.params
    n = coeffs.n_channels
    FA, FC, FU = fm.acc_frac, fm.coef_frac, fm.unit_frac
    intervals = np.array(coeffs.agc_intervals, dtype=np.int64)
    if any(iv & (iv - 1) for iv in coeffs.agc_intervals):
        raise ConfigError("the fixed engine needs power-of-two AGC intervals")

    icoef = np.zeros((len(ICOEF_ROWS), n), dtype=np.int64)
    rows = {name: icoef[i] for i, name in enumerate(ICOEF_ROWS)}
    for ch in range(n):
        a0, c0, h = coeffs.a0[ch], coeffs.c0[ch], coeffs.h[ch]
        r1, drz = coeffs.r1[ch], coeffs.d_rz[ch]
        A, B, C = coeffs.gain_A[ch], coeffs.gain_B[ch], coeffs.gain_C[ch]
        # states carry W * 2**-k so low channels keep headroom comparable to y
        k = max(0, int(round(-math.log2(h)))) if h > 0 else 0
        rows["k"][ch] = k
        rows["hk_m"][ch], rows["hk_s"][ch] = fx_const(h * 2.0 ** k)
        rows["hpf_m"][ch], rows["hpf_s"][ch] = fx_const(coeffs.hpf_coeff)
        # a0*r - 1 and c0*r are affine in u through r = r1 + d_rz*u
        K0, K1 = a0 * r1 - 1.0, a0 * drz
        L0, L1 = c0 * r1, c0 * drz
        rows["K0w"][ch] = round(K0 * 2.0 ** FC)
        rows["K1_m"][ch], rows["K1_s"][ch] = fx_const(K1)
        rows["sA"][ch] = _norm_shift(max(abs(K0), abs(K0 + K1)))
        rows["L0w"][ch] = round(L0 * 2.0 ** FC)
        rows["L1_m"][ch], rows["L1_s"][ch] = fx_const(L1)
        rows["sC"][ch] = _norm_shift(max(abs(L0), abs(L0 + L1)))
        rows["A_m"][ch], rows["A_s"][ch] = fx_const(A)
        rows["Bw"][ch] = round(B * 2.0 ** FC)
        rows["sT"][ch] = _norm_shift(max(abs(B), abs(A + B)))
        rows["Cw"][ch] = round(C * 2.0 ** FC)
    if np.any(rows["sA"] > FC) or np.any(rows["sC"] > FC) or np.any(rows["sT"] > FC):
        raise ConfigError("coefficient dynamic range exceeds coef_frac")

    s = {}
    s["FA"], s["FS"], s["FU"], s["FC"], s["FM"] = FA, fm.signal_frac, FU, FC, fm.mid_frac
    s["nearest"] = int(fm.rounding == "nearest")
    s["in_frac"] = fm.input.frac_bits
    s["ihc_off"] = round(p.ihc_approx_offset * 2.0 ** FA)
    s["rest"] = round(coeffs.ihc_rest_approx * 2.0 ** FU)
    s["ohc_scale_m"], s["ohc_scale_s"] = fx_const(p.ohc_scale)
    s["ohc_off"] = round(p.ohc_offset * 2.0 ** FA)
    s["q75_m"], s["q75_s"] = fx_const(0.75)
    for k in range(4):
        s[f"ct{k}_m"], s[f"ct{k}_s"] = fx_const(coeffs.agc_ct[k])
        s[f"w{k}_m"], s[f"w{k}_s"] = fx_const(p.agc_stage_gains[k])
        s[f"lg{k}"] = int(coeffs.agc_intervals[k]).bit_length() - 1
    s["s1_m"], s["s1_s"] = fx_const(p.agc_spatial_s1)
    s["s2_m"], s["s2_s"] = fx_const(p.agc_spatial_s2)
    iscal = np.array([s[name] for name in ISCAL], dtype=np.int64)
    return FixedCoeffs(coeffs, fm, icoef, iscal, intervals)


class FixedCarfac:
    """Bit-deterministic fixed-point engine running the approx-mode chain.

    Channels are processed in cascade order by one shared routine, the way a
    time-multiplexed datapath reuses a single CAR/IHC/OHC/AGC circuit. The
    r and g values produced by the feedback path at sample t are applied at
    sample t+1.
    """

    def __init__(self, coeffs, formats=None, backend=None):
        self.fixed = quantize_coeffs(coeffs, formats)
        self.coeffs = coeffs
        self.formats = self.fixed.formats
        self.kernels = _backend.get(backend)
        self.stats = np.zeros(len(STAT_SLOTS), dtype=np.int64)
        self.reset()

    @property
    def n_channels(self):
        return self.coeffs.n_channels

    def reset(self):
        n = self.n_channels
        self.ibuf = np.zeros((len(IROWS), n), dtype=np.int64)
        self.imem = np.zeros((4, n), dtype=np.int64)
        self.iacc = np.zeros((4, n), dtype=np.int64)
        self.count = np.zeros(4, dtype=np.int64)
        self.stats[:] = 0
        self.kernels.fixed_init(self.fixed.icoef, self.fixed.iscal, self.ibuf)
        self.stats[:] = 0

    @property
    def saturation_events(self):
        return int(self.stats[0])

    def op_histogram(self):
        return {k: int(v) for k, v in zip(OP_KINDS, self.stats[1:])}

    def quantize_input(self, x):
        spec = self.formats.input
        x = np.asarray(x, dtype=np.float64)
        if not np.all(np.isfinite(x)):
            raise ContractError("input contains non-finite samples")
        scaled = x * float(1 << spec.frac_bits)
        raw = np.floor(scaled + 0.5) if spec.rounding == "nearest" else np.floor(scaled)
        return np.clip(raw, spec.min_raw, spec.max_raw).astype(np.int64)

    def process_raw(self, x_raw, out=None):
        """Process 24-bit input words; returns accumulator-format outputs."""
        x_raw = np.ascontiguousarray(x_raw, dtype=np.int64)
        spec = self.formats.input
        if x_raw.size and (x_raw.min() < spec.min_raw or x_raw.max() > spec.max_raw):
            raise ContractError(f"input words exceed {spec.word_bits} bits")
        if out is None:
            out = np.empty((len(x_raw), self.n_channels), dtype=np.int64)
        self.kernels.run_fixed(x_raw, out, self.fixed.icoef, self.fixed.iscal,
                               self.fixed.intervals, self.ibuf, self.imem, self.iacc,
                               self.count, self.stats)
        return out

    def process(self, x):
        """Quantize a float block, run it, and return float outputs."""
        raw = self.process_raw(self.quantize_input(x))
        return raw * 2.0 ** -self.formats.acc_frac

    def state_value(self, row):
        """Float view of an integer state row, e.g. 'U' or 'G'."""
        fm = self.formats
        frac = {"Z0": fm.acc_frac, "Z1": fm.acc_frac, "LP": fm.acc_frac, "V": fm.acc_frac,
                "B": fm.acc_frac, "BM": fm.acc_frac, "G": fm.unit_frac, "U": fm.unit_frac,
                "NLF": fm.unit_frac, "VM": fm.unit_frac}[row]
        return self.ibuf[IROWS.index(row)] * 2.0 ** -frac


def fx_carfac_sample(engine, x):
    """Run one sample through a FixedCarfac; ``x`` is an FxValue or a float."""
    if isinstance(x, FxValue):
        spec = engine.formats.input
        if x.spec.word_bits > spec.word_bits:
            raise ContractError("input is limited to 24 bits")
        raw = _shift_right(x.raw, x.spec.frac_bits - spec.frac_bits, spec.rounding)
        raw = np.array([_fit(raw, spec)], dtype=np.int64)
    else:
        raw = engine.quantize_input([x])
    out = engine.process_raw(raw)[0]
    acc = FxSpec(ACC_BITS, engine.formats.acc_frac)
    return [FxValue(int(v), acc) for v in out]


def audit_datapath(engine, n_samples=10_000, amplitude=0.1, freq_hz=1000.0):
    """Run a tone and return the op-kind histogram (including 'div')."""
    engine.reset()
    fs = engine.coeffs.sample_rate_hz
    t = np.arange(n_samples) / fs
    engine.process(amplitude * np.sin(2 * np.pi * freq_hz * t))
    return engine.op_histogram()


def write_histogram_csv(hist, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["op", "count"])
        for k in OP_KINDS:
            w.writerow([k, hist.get(k, 0)])


def op_counter():
    return Counter()
