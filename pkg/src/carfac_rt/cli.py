"""Command-line entry point: design, run, verify, schedule.

Exit codes: 0 ok, 1 I/O problem, 2 usage or configuration error,
3 verification failure, 4 infeasible schedule, 5 engine fault.

Every long flag can also come from a config file of ``key = value`` lines
(``--config PATH`` or the CARFAC_RT_CONFIG environment variable). Flags on
the command line win over the file.
"""

import argparse
import csv
import os
import sys
from pathlib import Path

import numpy as np

from . import streamio
from .approx import check_sweeps, sweep_ihc, sweep_ohc
from .errors import (CarfacError, ConfigError, FramingError, LayoutError, ParseError,
                     UnsupportedFormat)
from .exact import g_exact
from .fixedpoint import EngineFormats, FixedCarfac
from .model import Carfac, design_carfac
from .params import CarfacParams
from .qbound import snr_db
from .schedule import analyze_schedule

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_VERIFY, EXIT_INFEASIBLE, EXIT_ENGINE = 0, 1, 2, 3, 4, 5
CONFIG_ENV = "CARFAC_RT_CONFIG"
GAIN_FIT_BOUND = 0.006


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def read_config(path):
    """Parse flat ``key = value`` lines; '#' starts a comment."""
    conf = {}
    with open(path) as fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, val = line.partition("=")
            if not sep:
                raise ConfigError(f"{path}:{n}: expected key = value")
            conf[key.strip().replace("-", "_")] = val.strip()
    return conf


def _apply_config(parser, conf):
    """Install config values as defaults on a subparser; return unused keys."""
    used = set()
    for action in parser._actions:
        if action.dest in conf:
            raw = conf[action.dest]
            if isinstance(action, argparse._StoreTrueAction):
                val = raw.lower() in ("1", "true", "yes", "on")
            elif action.type is not None:
                try:
                    val = action.type(raw)
                except ValueError as exc:
                    raise ConfigError(f"config key {action.dest}: {exc}") from None
            else:
                val = raw
            if action.choices is not None and val not in action.choices:
                raise ConfigError(f"config key {action.dest}: {val!r} not in {action.choices}")
            parser.set_defaults(**{action.dest: val})
            used.add(action.dest)
    return used


def _design_args(p):
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--fs", type=float, default=256000.0, help="sample rate in Hz")
    p.add_argument("--min-pole", type=float, default=30.0)
    p.add_argument("--max-pole", type=float, default=None)
    p.add_argument("--erb-per-step", type=float, default=None)


def build_parser():
    parser = _Parser(prog="carfac-rt", description=__doc__.splitlines()[0])
    parser.add_argument("--config", default=None, help="key = value config file")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("design", help="print the per-channel coefficient table")
    _design_args(p)
    p.add_argument("--output", default=None, help="CSV path (default stdout)")

    p = sub.add_parser("run", help="stream audio through an engine")
    _design_args(p)
    p.set_defaults(fs=None)
    p.add_argument("--mode", choices=("exact", "approx", "fixed"), default="approx")
    p.add_argument("--input", default=None, help="WAV file")
    p.add_argument("--raw", default=None, help="raw interleaved signed 24-bit file")
    p.add_argument("--raw-sensors", type=int, default=1)
    p.add_argument("--endianness", choices=("little", "big"), default="little")
    p.add_argument("--lenient", action="store_true", help="drop a trailing partial frame")
    p.add_argument("--tone", type=float, default=None, help="synthetic tone frequency (Hz)")
    p.add_argument("--level", type=float, default=-20.0, help="tone level in dBFS")
    p.add_argument("--duration", type=float, default=1.0, help="tone length in seconds")
    p.add_argument("--output", default=None)
    p.add_argument("--format", choices=streamio.FORMATS, default="binary-le-float32")
    p.add_argument("--normalize", choices=streamio.NORMALIZATIONS, default="none")
    p.add_argument("--header", action="store_true", help="prefix binary output with CGRM header")
    p.add_argument("--block", type=int, default=4096)
    p.add_argument("--queue-depth", type=int, default=streamio.DEFAULT_QUEUE_DEPTH)
    p.add_argument("--instances", type=int, default=1)
    p.add_argument("--single-thread", action="store_true")
    p.add_argument("--compare", choices=("exact", "approx", "fixed"), default=None,
                   help="rerun in another mode and report SNR")
    p.add_argument("--rounding", choices=("truncate", "nearest"), default="nearest")

    p = sub.add_parser("verify", help="approximation sweeps and gain-fit check")
    p.add_argument("which", nargs="?", choices=("ihc", "ohc", "gain", "all"), default="all")
    p.add_argument("--outdir", default=".")
    _design_args(p)
    p.add_argument("--corrupt-a", type=float, default=None, help=argparse.SUPPRESS)

    p = sub.add_parser("schedule", help="clock budget for the time-multiplexed datapath")
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--fs", type=float, default=256000.0)
    p.add_argument("--clock", type=float, default=100e6)
    p.add_argument("--util", type=float, default=0.135)
    p.add_argument("--depth", type=int, default=100)
    p.add_argument("--ii", type=int, default=1, help="cycles per channel")
    return parser, sub


def _params(args, fs=None):
    kw = dict(n_channels=args.channels, sample_rate_hz=fs or args.fs,
              min_pole_hz=args.min_pole, max_pole_hz=args.max_pole,
              erb_per_step=args.erb_per_step)
    return CarfacParams(**kw)


# ---------------------------------------------------------------------------


def cmd_design(args, out):
    coeffs = design_carfac(_params(args))
    fh = open(args.output, "w", newline="") if args.output else out
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["channel", "pole_hz", "a0", "c0", "h", "r1", "d_rz",
                    "A", "B", "C", "fit_max_rel_error"])
        for n in range(coeffs.n_channels):
            w.writerow([n] + [repr(float(v[n])) for v in (
                coeffs.pole_hz, coeffs.a0, coeffs.c0, coeffs.h, coeffs.r1, coeffs.d_rz,
                coeffs.gain_A, coeffs.gain_B, coeffs.gain_C, coeffs.gain_max_rel_error)])
    finally:
        if args.output:
            fh.close()
    return EXIT_OK


def _load_stream(args):
    sources = [s for s in (args.input, args.raw, args.tone) if s is not None]
    if len(sources) != 1:
        raise UsageError("run needs exactly one of --input, --raw, --tone")
    if args.input is not None:
        return streamio.read_wav(args.input)
    if args.raw is not None:
        if args.fs is None:
            raise UsageError("--raw needs --fs")
        return streamio.read_raw_i24(args.raw, args.fs, args.raw_sensors, args.endianness,
                                     strict=not args.lenient)
    fs = args.fs or 256000.0
    n = int(round(args.duration * fs))
    amp = 10.0 ** (args.level / 20.0)
    x = amp * np.sin(2.0 * np.pi * args.tone * np.arange(n) / fs)
    return streamio.FrameStream(fs, x)


def _engine(mode, coeffs, rounding):
    if mode == "fixed":
        return FixedCarfac(coeffs, EngineFormats(rounding=rounding))
    return Carfac(coeffs, mode)


def _output_path(path, i, n):
    if n == 1:
        return path
    p = Path(path)
    return str(p.with_name(f"{p.stem}.{i}{p.suffix}"))


def cmd_run(args, out):
    if args.instances < 1:
        raise UsageError("--instances must be at least 1")
    stream = _load_stream(args)
    if args.fs is not None and args.input is not None and args.fs != stream.sample_rate_hz:
        raise ConfigError(f"--fs {args.fs:g} does not match the file rate "
                          f"{stream.sample_rate_hz:g}")
    coeffs = design_carfac(_params(args, fs=stream.sample_rate_hz))
    bindings = [(_engine(args.mode, coeffs, args.rounding), i % stream.n_sensors)
                for i in range(args.instances)]

    sinks, closers, encoders = [], [], []
    for i in range(args.instances):
        enc = streamio.CochleagramSink(coeffs.n_channels, format=args.format,
                                       normalization=args.normalize, header=args.header,
                                       sample_rate_hz=stream.sample_rate_hz)
        encoders.append(enc)
        if args.output:
            write, close = streamio.file_sink(enc, _output_path(args.output, i, args.instances))
        else:
            write, close = (lambda b, e=enc: e.encode(b)), (lambda: None)
        sinks.append(write)
        closers.append(close)
    try:
        stats = streamio.run_pipeline(stream, bindings, sinks, block=args.block,
                                      threaded=not args.single_thread,
                                      depth=args.queue_depth)
    finally:
        for close in closers:
            close()

    print(f"mode: {args.mode}", file=out)
    print(f"channels: {coeffs.n_channels}", file=out)
    print(f"sample_rate_hz: {stream.sample_rate_hz:g}", file=out)
    print(f"instances: {args.instances}", file=out)
    print(f"frames_in: {stats.frames_in}", file=out)
    print(f"frames_out: {stats.frames_out}", file=out)
    print(f"bytes_written: {sum(e.bytes_written for e in encoders)}", file=out)
    if args.mode == "fixed":
        sat = sum(eng.saturation_events for eng, _ in bindings)
        print(f"saturation_events: {sat}", file=out)
    print(f"elapsed_s: {stats.elapsed_s:.4f}", file=out)
    print(f"throughput_samples_per_s: {stats.throughput * args.instances:.1f}", file=out)
    print(f"realtime_factor: {stats.realtime_factor:.3f}", file=out)

    if args.compare:
        x = np.ascontiguousarray(stream.samples[stream.valid][:, 0])
        a = _engine(args.mode, coeffs, args.rounding).process(x)
        b = _engine(args.compare, coeffs, args.rounding).process(x)
        print(f"snr_db: {snr_db(b, a):.2f} ({args.mode} vs {args.compare})", file=out)
    return EXIT_OK


def cmd_verify(args, out):
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    failures = []
    ihc = ohc = None
    if args.which in ("ihc", "all"):
        ihc = sweep_ihc()
        ihc.to_csv(outdir / "ihc.csv")
        print(f"ihc max_abs_error: {ihc.max_abs_error:.6g}", file=out)
    if args.which in ("ohc", "all"):
        ohc = sweep_ohc()
        ohc.to_csv(outdir / "ohc.csv")
        print(f"ohc max_abs_error: {ohc.max_abs_error:.6g}", file=out)
    if ihc is not None or ohc is not None:
        found = check_sweeps(ihc, ohc)
        if ihc is None:
            found = [f for f in found if not f.startswith("ihc")]
        if ohc is None:
            found = [f for f in found if not f.startswith("ohc")]
        failures += found
    if args.which in ("gain", "all"):
        coeffs = design_carfac(_params(args))
        A = coeffs.gain_A * (args.corrupt_a if args.corrupt_a is not None else 1.0)
        u = np.linspace(0.0, 1.0, 4096)
        worst = 0.0
        with open(outdir / "gainfit.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["channel", "A", "B", "C", "max_rel_error"])
            for n in range(coeffs.n_channels):
                ref = g_exact(coeffs.a0[n], coeffs.c0[n], coeffs.h[n],
                              coeffs.r1[n] + coeffs.d_rz[n] * u)
                fit = (A[n] * u + coeffs.gain_B[n]) * u + coeffs.gain_C[n]
                err = float(np.max(np.abs(fit - ref) / np.abs(ref)))
                worst = max(worst, err)
                w.writerow([n, repr(float(A[n])), repr(float(coeffs.gain_B[n])),
                            repr(float(coeffs.gain_C[n])), repr(err)])
        print(f"gain max_rel_error: {worst:.6g}", file=out)
        if worst > GAIN_FIT_BOUND:
            failures.append(f"gain fit error {worst:.6g} > {GAIN_FIT_BOUND}")
    for f in failures:
        print(f"FAIL: {f}", file=out)
    print("verify: " + ("fail" if failures else "pass"), file=out)
    return EXIT_VERIFY if failures else EXIT_OK


def cmd_schedule(args, out):
    if min(args.channels, args.fs, args.clock, args.util) <= 0:
        raise UsageError("schedule arguments must be positive")
    rep = analyze_schedule(args.channels, args.fs, args.clock, stage_depths=args.depth,
                           initiation_interval=args.ii, util_fraction=args.util)
    out.write(rep.to_text())
    return EXIT_OK if rep.feasible else EXIT_INFEASIBLE


COMMANDS = {"design": cmd_design, "run": cmd_run, "verify": cmd_verify,
            "schedule": cmd_schedule}


def main(argv=None, out=None, err=None):
    out = out or sys.stdout
    err = err or sys.stderr
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, sub = build_parser()
    try:
        pre, _ = parser.parse_known_args(argv)
        conf_path = pre.config or os.environ.get(CONFIG_ENV)
        if conf_path:
            try:
                conf = read_config(conf_path)
            except OSError as exc:
                print(f"error: cannot read config {conf_path}: {exc.strerror}", file=err)
                return EXIT_IO
            used = set()
            for sp in sub.choices.values():
                used |= _apply_config(sp, conf)
            unknown = sorted(set(conf) - used)
            if unknown:
                raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        return COMMANDS[args.command](args, out)
    except UsageError as exc:
        print(f"usage error: {exc}", file=err)
        return EXIT_USAGE
    except (ConfigError, LayoutError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_USAGE
    except FileNotFoundError as exc:
        print(f"error: no such file: {exc.filename}", file=err)
        return EXIT_IO
    except (ParseError, UnsupportedFormat, FramingError) as exc:
        print(f"error: {exc}", file=err)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc.filename or ''}: {exc.strerror}", file=err)
        return EXIT_IO
    except CarfacError as exc:
        print(f"engine error: {exc}", file=err)
        return EXIT_ENGINE


if __name__ == "__main__":
    sys.exit(main())
