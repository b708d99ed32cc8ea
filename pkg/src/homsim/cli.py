"""Command-line interface.

Subcommands:
    simulate         generate time-tag streams from a run config
    analyze          histogram tag files and compute interference metrics
    curve            write the analytic correlation curves
    fit-spectrum     fit an instrument-broadened Lorentzian line
    fit-decay        fit an IRF-convolved (bi)exponential decay
    hbt              simulate a single-emitter HBT run and report purity
    reproduce-paper  run the built-in reference experiment report

Exit codes: 0 success, 2 configuration error, 3 file I/O or format
error, 4 a reproduce-paper quantity fell outside its tolerance.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import analysis, correlation, fitting, io, montecarlo, reproduce

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_TOLERANCE = 4

OUTPUT_DIR_ENV = "HOMSIM_OUT"


class _CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _out_dir(args) -> Path:
    out = args.out or os.environ.get(OUTPUT_DIR_ENV) or "."
    return Path(out)


def _load_config(args) -> io.RunConfig:
    if not args.config:
        raise _CliError("a run config is required (--config PATH)", EXIT_CONFIG)
    try:
        cfg = io.load_config(args.config)
    except io.ConfigError as exc:
        raise _CliError(str(exc), EXIT_CONFIG) from exc
    except OSError as exc:
        raise _CliError(f"cannot read config: {exc}", EXIT_IO) from exc
    if args.seed is not None:
        cfg = dataclasses.replace(
            cfg, simulation=dataclasses.replace(cfg.simulation, seed=args.seed)
        )
    if getattr(args, "n_pulses", None) is not None:
        cfg = dataclasses.replace(
            cfg,
            simulation=dataclasses.replace(cfg.simulation, n_pulses=args.n_pulses),
        )
    if getattr(args, "bin_width_ps", None) is not None:
        cfg = dataclasses.replace(
            cfg,
            analysis=dataclasses.replace(cfg.analysis, bin_width=args.bin_width_ps),
        )
    if getattr(args, "window_ps", None) is not None:
        cfg = dataclasses.replace(
            cfg, analysis=dataclasses.replace(cfg.analysis, window=args.window_ps)
        )
    return cfg


def _read_tags(path, fmt=None):
    try:
        return io.read_tags(path, fmt)
    except io.FileFormatError as exc:
        raise _CliError(str(exc), EXIT_IO) from exc
    except OSError as exc:
        raise _CliError(f"cannot read {path}: {exc}", EXIT_IO) from exc


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    e1, e2 = cfg.emitters
    s3, s4 = montecarlo.generate_streams(
        cfg.simulation.n_pulses, e1, e2, cfg.setup, cfg.detector,
        seed=cfg.simulation.seed, n_workers=args.workers,
    )
    ext = args.format
    io.write_tags(s3, out / f"tags_d3.{ext}", ext)
    io.write_tags(s4, out / f"tags_d4.{ext}", ext)
    io.write_json(out / "simulate_summary.json", io.stream_summary((s3, s4), cfg))
    print(f"wrote {s3.tags.size} D3 tags and {s4.tags.size} D4 tags to {out}")
    return EXIT_OK


def _analyze_pair(f3, f4, bin_width, max_tau, fmt):
    s3 = _read_tags(f3, fmt)
    s4 = _read_tags(f4, fmt)
    if s3.channel == s4.channel:
        raise _CliError(
            f"both inputs are channel {s3.channel}; need one file per channel",
            EXIT_CONFIG,
        )
    if s3.channel == "D4":
        s3, s4 = s4, s3
    return analysis.correlate(s3, s4, bin_width, max_tau)


def cmd_analyze(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    window = cfg.effective_window()
    max_tau = cfg.max_tau()
    bw = cfg.analysis.bin_width
    if len(args.tags) == 2:
        h = _analyze_pair(args.tags[0], args.tags[1], bw, max_tau, args.format)
        areas = analysis.integrate_peaks(h, cfg.setup.rep_period, window)
        ratio = correlation.coincidence_ratio(areas)
        io.write_histogram_csv(h, out / "histogram.csv")
        result = {
            "ratio_center_b": {"value": ratio.value, "sigma": ratio.sigma},
            "a_center": areas.a_center,
            "b_side_mean": areas.b_side_mean,
            "note": "coalescence metrics need both polarization runs "
            "(pass 4 tag files: perp D3 D4 par D3 D4)",
        }
        io.write_json(out / "metrics.json", result)
        print(json.dumps(result, indent=2))
        return EXIT_OK
    h_perp = _analyze_pair(args.tags[0], args.tags[1], bw, max_tau, args.format)
    h_par = _analyze_pair(args.tags[2], args.tags[3], bw, max_tau, args.format)
    areas_perp = analysis.integrate_peaks(
        h_perp, cfg.setup.rep_period, window, label="orthogonal"
    )
    areas_par = analysis.integrate_peaks(
        h_par, cfg.setup.rep_period, window, label="parallel"
    )
    m = analysis.metrics(
        areas_perp, areas_par, h_perp, h_par,
        post_window=cfg.effective_post_window(), window=window,
    )
    io.write_histogram_csv(h_perp, out / "histogram_perp.csv")
    io.write_histogram_csv(h_par, out / "histogram_par.csv")
    io.write_json(out / "metrics.json", io.metrics_to_dict(m))
    print(json.dumps(io.metrics_to_dict(m), indent=2))
    return EXIT_OK


def cmd_curve(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    e1, e2 = cfg.emitters
    spacing = min(e1.t2, e2.t2) / (2.0 * correlation.GRID_SPACING_T2_FACTOR)
    if cfg.detector.irf_shape != "delta":
        spacing = min(
            spacing,
            cfg.detector.combined_fwhm / (2.0 * correlation.GRID_SPACING_IRF_FACTOR),
        )
    tau_max = cfg.max_tau()
    n = cfg.analysis.n_side_peaks
    par = correlation.full_correlation(
        e1, e2, dataclasses.replace(cfg.setup, polarization="parallel"),
        tau_max, spacing, n,
    )
    perp = correlation.full_correlation(
        e1, e2, dataclasses.replace(cfg.setup, polarization="orthogonal"),
        tau_max, spacing, n,
    )
    par_c = correlation.convolve_with_irf(par, cfg.detector)
    perp_c = correlation.convolve_with_irf(perp, cfg.detector)
    io.write_curve_csv(perp, par, perp_c, par_c, out / "curves.csv")
    pc_post = correlation.postselected_coalescence(perp, par, window=spacing)
    print(f"wrote {out / 'curves.csv'}; ideal postselected Pc = {pc_post:.4f}")
    return EXIT_OK


def _fit_common(args, runner) -> int:
    try:
        curve = io.read_sampled_curve_csv(args.data)
    except io.FileFormatError as exc:
        raise _CliError(str(exc), EXIT_IO) from exc
    except OSError as exc:
        raise _CliError(f"cannot read {args.data}: {exc}", EXIT_IO) from exc
    try:
        fr = runner(curve)
    except (fitting.FitError, ValueError) as exc:
        raise _CliError(f"fit failed: {exc}", EXIT_CONFIG) from exc
    result = io.fit_result_to_dict(fr)
    io.write_json(_out_dir(args) / f"fit_{fr.model}.json", result)
    print(json.dumps(result, indent=2))
    return EXIT_OK


def cmd_fit_spectrum(args) -> int:
    return _fit_common(
        args,
        lambda c: fitting.fit_lorentzian(
            c, instrument_fwhm=args.instrument_fwhm_ghz,
            instrument_shape=args.instrument_shape,
        ),
    )


def cmd_fit_decay(args) -> int:
    from .params import DetectorParams

    if args.irf_fwhm_ps > 0:
        det = DetectorParams(irf_fwhm=args.irf_fwhm_ps, irf_shape=args.irf_shape)
    else:
        det = DetectorParams()
    return _fit_common(args, lambda c: fitting.fit_decay(c, args.model, det))


def cmd_hbt(args) -> int:
    cfg = _load_config(args)
    out = _out_dir(args)
    if args.emitter not in (1, 2):
        raise _CliError("--emitter must be 1 or 2", EXIT_CONFIG)
    e = cfg.emitters[args.emitter - 1]
    src, off = montecarlo.hbt_emitter_pair(e)
    setup = dataclasses.replace(cfg.setup, polarization="orthogonal")
    s3, s4 = montecarlo.generate_streams(
        cfg.simulation.n_pulses, src, off, setup, cfg.detector,
        seed=cfg.simulation.seed, n_workers=args.workers,
    )
    h = analysis.correlate(s3, s4, cfg.analysis.bin_width, cfg.max_tau())
    purity = analysis.hbt_purity(h, cfg.setup.rep_period, cfg.effective_window())
    io.write_histogram_csv(h, out / f"hbt_emitter{args.emitter}.csv")
    result = {
        "emitter": args.emitter,
        "center_to_side_ratio": {"value": purity.value, "sigma": purity.sigma},
        "configured_residual": e.multiphoton_residual,
    }
    io.write_json(out / f"hbt_emitter{args.emitter}.json", result)
    print(json.dumps(result, indent=2))
    return EXIT_OK


def cmd_reproduce(args) -> int:
    report = reproduce.run_report(
        n_pulses=args.n_pulses, seed=args.seed if args.seed is not None else 20260824,
        fast=args.fast,
    )
    out = _out_dir(args)
    io.write_json(out / "reproduction_report.json", report.to_dict())
    print(report.table())
    if not report.all_within:
        print("one or more quantities fell outside tolerance", file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="homsim",
        description="Two-photon interference simulator and analysis toolkit",
    )
    p.add_argument(
        "--out", default=None,
        help=f"output directory (default ${OUTPUT_DIR_ENV} or .)",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config=True):
        sp.add_argument(
            "--out", default=None,
            help=f"output directory (default ${OUTPUT_DIR_ENV} or .)",
        )
        if config:
            sp.add_argument("--config", help="run config JSON")
        sp.add_argument("--seed", type=int, default=None, help="override RNG seed")

    sp = sub.add_parser("simulate", help="generate time-tag streams")
    common(sp)
    sp.add_argument("--n-pulses", type=int, default=None)
    sp.add_argument("--format", choices=("csv", "bin"), default="csv")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("analyze", help="histogram tag files, compute metrics")
    common(sp)
    sp.add_argument(
        "tags", nargs="+",
        help="2 tag files (D3 D4: histogram + center/side ratio) or "
        "4 (perp D3 D4, par D3 D4: full metrics)",
    )
    sp.add_argument("--bin-width-ps", type=float, default=None)
    sp.add_argument("--window-ps", type=float, default=None)
    sp.add_argument("--format", choices=("csv", "bin"), default=None)
    sp.set_defaults(func=cmd_analyze)

    sp = sub.add_parser("curve", help="write analytic correlation curves")
    common(sp)
    sp.set_defaults(func=cmd_curve)

    sp = sub.add_parser("fit-spectrum", help="fit a Lorentzian line (x in GHz)")
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("data", help="CSV with columns x,y[,y_err]")
    sp.add_argument("--instrument-fwhm-ghz", type=float, default=0.0)
    sp.add_argument(
        "--instrument-shape", choices=("lorentzian", "gaussian"), default="lorentzian"
    )
    sp.set_defaults(func=cmd_fit_spectrum)

    sp = sub.add_parser("fit-decay", help="fit an exponential decay (x in ps)")
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("data", help="CSV with columns t,counts[,err]")
    sp.add_argument("--model", choices=("single_exp", "biexp"), default="single_exp")
    sp.add_argument("--irf-fwhm-ps", type=float, default=0.0)
    sp.add_argument(
        "--irf-shape", choices=("gaussian", "two_sided_exponential"), default="gaussian"
    )
    sp.set_defaults(func=cmd_fit_decay)

    sp = sub.add_parser("hbt", help="single-emitter HBT purity run")
    common(sp)
    sp.add_argument("--emitter", type=int, default=1, help="1 or 2")
    sp.add_argument("--n-pulses", type=int, default=None)
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_hbt)

    sp = sub.add_parser("reproduce-paper", help="run the reference report")
    sp.add_argument("--out", default=None, help="output directory")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--n-pulses", type=int, default=10_000_000)
    sp.add_argument("--fast", action="store_true", help="trimmed event counts")
    sp.set_defaults(func=cmd_reproduce)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (io.ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
