"""Command-line interface for the recovery pipeline.

Subcommands: gen, measure, recover, certify, sweep, invert, plot.  All
outputs are byte-stable for identical inputs: JSON is emitted with
sorted keys and %.17g floats, CSV floats use %.17g.  Exit codes: 0 on
success, 1 on recoverable failure (e.g. recovery did not produce an
estimate), 2 on usage errors or malformed input files.

A config file of ``key = value`` lines can preload any flag default
(explicit flags still win); the log level comes from the
STFT_SUPERRES_LOG environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import bench, certificate, gabor, measure
from .recover import (
    RecoveryConfig,
    RecoveryResult,
    RecoveryStatus,
    default_sigma,
    recover as run_recovery,
    recover_fourier_baseline,
)
from .serde import dump_canonical_json, format_float

log = logging.getLogger("stft_superres")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class CliError(Exception):
    """Usage-level error: bad flags or malformed inputs (exit code 2)."""


def _parse_config_value(text: str):
    text = text.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if (text.startswith('"') and text.endswith('"')) or (
        text.startswith("'") and text.endswith("'")
    ):
        return text[1:-1]
    if "," in text:
        return [_parse_config_value(tok) for tok in text.split(",") if tok.strip()]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def load_config_file(path: str) -> dict:
    """TOML-like ``key = value`` lines; '#' starts a comment."""
    out = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(f"{path}:{lineno}: expected 'key = value'")
                key, value = line.split("=", 1)
                out[key.strip().replace("-", "_")] = _parse_config_value(value)
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from exc
    return out


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read JSON file {path}: {exc}") from exc


def _spike_train(path: str) -> measure.SpikeTrain:
    try:
        return measure.spike_train_from_json(_load_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"invalid spike-train file {path}: {exc}") from exc


def _measurements(path: str) -> gabor.Measurements:
    try:
        return gabor.measurements_from_json(_load_json(path))
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"invalid measurements file {path}: {exc}") from exc


def _result_json(result: RecoveryResult) -> dict:
    sol = result.solver
    return {
        "estimate": measure.spike_train_to_json(result.estimate),
        "status": result.status.value,
        "dual_poly": [[float(v.real), float(v.imag)] for v in result.dual_poly.x],
        "solver": {
            "objective": float(sol.objective),
            "primal_residual": float(sol.primal_residual),
            "dual_residual": float(sol.dual_residual),
            "iterations": int(sol.iterations),
            "status": sol.status.value,
            "grid_sup": float(sol.grid_sup),
        },
        "diagnostics": {
            k: v for k, v in result.diagnostics.items()
            if isinstance(v, (int, float, str, list))
        },
    }


# ---------------------------------------------------------------------------
# subcommands

def cmd_gen(args) -> int:
    spec = measure.InstanceSpec(
        delta=args.delta,
        amplitude_range=(args.amp_lo, args.amp_hi),
        rng_seed=args.seed,
    )
    train = measure.random_instance(spec)
    measure.write_spike_train(train, args.out)
    print(f"wrote {len(train)} spikes to {args.out}")
    return EXIT_OK


def cmd_measure(args) -> int:
    train = _spike_train(args.infile)
    sigma = args.sigma if args.sigma is not None else default_sigma(args.K)
    if args.fourier:
        w = gabor.WindowSpec(sigma=sigma, truncation=0)
        meas = gabor.forward_stft(train, w, args.K, g=np.ones(1))
    else:
        N = args.N if args.N is not None else gabor.default_truncation(sigma)
        w = gabor.WindowSpec(sigma=sigma, truncation=N)
        meas = gabor.forward_stft(train, w, args.K)
    gabor.write_measurements(meas, args.out)
    print(f"wrote {meas.Y.shape[0]}x{meas.Y.shape[1]} measurements to {args.out}")
    return EXIT_OK


def cmd_recover(args) -> int:
    meas = _measurements(args.infile)
    sigma = args.sigma if args.sigma is not None else default_sigma(meas.K)
    if args.baseline_fourier:
        if meas.N != 0:
            raise CliError("baseline recovery expects measurements with N = 0")
        cfg = RecoveryConfig(K=meas.K, N=0, sigma=sigma)
        result = recover_fourier_baseline(meas.Y[:, 0], cfg, trace_path=args.trace)
    else:
        cfg = RecoveryConfig(K=meas.K, N=meas.N, sigma=sigma)
        result = run_recovery(meas, cfg, trace_path=args.trace)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(dump_canonical_json(_result_json(result)))
    print(f"status: {result.status.value}  spikes: {len(result.estimate)}  "
          f"objective: {format_float(result.solver.objective)}")
    if args.truth:
        truth = _spike_train(args.truth)
        err = measure.support_error(result.estimate, truth)
        print(f"support_error: {format_float(err) if np.isfinite(err) else 'inf'}")
    return EXIT_OK if result.status is RecoveryStatus.SUCCESS else EXIT_FAILURE


def _parse_signs(text: str, count: int) -> np.ndarray:
    parts = [tok for tok in text.split(",") if tok.strip()]
    if len(parts) != count:
        raise CliError(f"expected {count} signs, got {len(parts)}")
    try:
        vals = np.asarray([complex(tok) for tok in parts])
    except ValueError as exc:
        raise CliError(f"invalid sign value: {exc}") from exc
    return vals


def cmd_certify(args) -> int:
    ks = certificate.KernelSpec(
        sigma=args.sigma if args.sigma is not None else 1.0 / (4.0 * args.fc),
        fc=args.fc,
        periodized=args.torus,
    )
    try:
        if os.path.exists(args.support):
            train = _spike_train(args.support)
            signs = None
            if args.signs:
                signs = _parse_signs(args.signs, len(train))
            prob = certificate.CertificateProblem.from_spike_train(train, ks, signs=signs)
        else:
            try:
                pts = np.asarray(
                    [float(tok) for tok in args.support.split(",") if tok.strip()]
                )
            except ValueError as exc:
                raise CliError(f"invalid support list: {exc}") from exc
            signs = (_parse_signs(args.signs, pts.size) if args.signs
                     else np.ones(pts.size, dtype=complex))
            prob = certificate.CertificateProblem(support=pts, signs=signs, kernel=ks)
        report = certificate.solve_certificate(prob)
    except (ValueError, certificate.CertificateBoundError) as exc:
        print(f"certificate construction failed: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    summary = certificate.verify_certificate(
        report, prob, grid_size=args.grid, guard_radius=args.guard
    )
    payload = {
        "alpha": [[float(v.real), float(v.imag)] for v in report.alpha],
        "beta": [[float(v.real), float(v.imag)] for v in report.beta],
        "interp_residual": report.interp_residual,
        "deriv_residual": report.deriv_residual,
        "off_support_max": summary.off_support_max,
        "far_region_max": summary.far_region_max,
        "concave_near_spikes": summary.concave_near_spikes,
        "valid": summary.valid,
        "bound_chain": {k: float(v) for k, v in report.bound_chain.items()},
    }
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(dump_canonical_json(payload))
    print(f"interp_residual: {report.interp_residual:.3e}")
    print(f"deriv_residual:  {report.deriv_residual:.3e}")
    print(f"off_support_max: {summary.off_support_max:.9f}")
    if report.bound_chain:
        print("bound chain:")
        for key in sorted(report.bound_chain):
            print(f"  {key:24s} {report.bound_chain[key]:.6e}")
    if args.samples_csv:
        t = (np.arange(args.grid) / args.grid if args.torus
             else np.linspace(prob.support.min() - 0.1, prob.support.max() + 0.1, args.grid))
        q = certificate.certificate_values(prob, report.alpha, report.beta, t)
        with open(args.samples_csv, "w") as fh:
            fh.write("t,re,im,abs\n")
            for ti, qi in zip(t, q):
                fh.write(f"{format_float(ti)},{format_float(qi.real)},"
                         f"{format_float(qi.imag)},{format_float(abs(qi))}\n")
    return EXIT_OK if summary.valid else EXIT_FAILURE


def cmd_sweep(args) -> int:
    cfg = load_config_file(args.spec)
    known = {
        "K", "N_values", "sigma_values", "delta_grid", "trials_per_cell",
        "seed", "workers", "include_fourier",
    }
    unknown = set(cfg) - known
    if unknown:
        raise CliError(f"unknown sweep keys: {sorted(unknown)}")
    if "K" not in cfg:
        raise CliError("sweep spec must define K")

    def listify(v):
        return tuple(v) if isinstance(v, list) else (v,)

    spec = bench.SweepSpec(
        K=int(cfg["K"]),
        N_values=listify(cfg.get("N_values", ())),
        sigma_values=listify(cfg.get("sigma_values", ())),
        delta_grid=listify(cfg.get("delta_grid", ())),
        trials_per_cell=int(cfg.get("trials_per_cell", 100)),
        seed=int(cfg.get("seed", 0)),
        workers=int(cfg.get("workers", 1)),
        include_fourier=bool(cfg.get("include_fourier", True)),
    )
    records = bench.run_sweep(spec)
    if args.out_csv:
        bench.write_results(records, args.out_csv)
    if args.out_svg:
        bench.render_success_curve(records, args.out_svg)
    for key, curve in sorted(bench.success_rates(records).items()):
        label = key[0] if key[0] == "Fourier" else f"{key[0]} sigma={key[1]:g} N={key[2]}"
        rates = " ".join(f"{d:.5f}:{rate:.2f}" for d, rate in curve)
        print(f"{label}: {rates}")
    return EXIT_OK


def cmd_invert(args) -> int:
    train = _spike_train(args.infile)
    sigma = args.sigma if args.sigma is not None else default_sigma(args.K)
    w = gabor.WindowSpec(sigma=sigma, truncation=gabor.default_truncation(sigma))
    val = gabor.full_inversion_partial_sum(train, w, args.K, args.t,
                                           normalize=args.normalize)
    print(f"value at t={format_float(args.t)}: "
          f"{format_float(val.real)} + {format_float(val.imag)}i  "
          f"(modulus {format_float(abs(val))})")
    return EXIT_OK


def cmd_plot(args) -> int:
    obj = _load_json(args.dual_poly)
    coeffs = obj.get("dual_poly")
    if coeffs is None:
        raise CliError(f"{args.dual_poly} does not contain a 'dual_poly' field")
    try:
        poly = gabor.DualPolynomial(np.asarray([complex(re, im) for re, im in coeffs]))
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid dual polynomial: {exc}") from exc
    vals = gabor.eval_dual_poly_grid(poly, args.grid)
    with open(args.out_csv, "w") as fh:
        fh.write("t,re,im,abs\n")
        for j, v in enumerate(vals):
            fh.write(f"{format_float(j / args.grid)},{format_float(v.real)},"
                     f"{format_float(v.imag)},{format_float(abs(v))}\n")
    print(f"wrote {args.grid} samples to {args.out_csv}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stft-superres",
        description="Spike-train super-resolution from band-limited STFT measurements",
    )
    parser.add_argument("--config", help="key = value file preloading flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a random well-separated spike train")
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--amp-lo", type=float, default=0.0)
    p.add_argument("--amp-hi", type=float, default=1000.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("measure", help="STFT (or pure Fourier) coefficients of a train")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--N", type=int, default=None)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--fourier", action="store_true",
                   help="unit window, N = 0: pure Fourier coefficients")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_measure)

    p = sub.add_parser("recover", help="recover a spike train from measurements")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--baseline-fourier", action="store_true")
    p.add_argument("--truth", help="spike-train JSON to score support error against")
    p.add_argument("--trace", help="iteration-trace CSV path")
    p.add_argument("--out")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("certify", help="build and verify a dual certificate")
    p.add_argument("--support", required=True,
                   help="comma-separated locations, or a spike-train JSON path")
    p.add_argument("--signs", help="comma-separated unit complex numbers")
    p.add_argument("--fc", type=float, required=True)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--torus", action="store_true", help="periodized kernels, fc = K+1/2")
    p.add_argument("--grid", type=int, default=1 << 16)
    p.add_argument("--guard", type=float, default=1e-3)
    p.add_argument("--samples-csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("sweep", help="Monte-Carlo success-rate sweep")
    p.add_argument("--spec", required=True, help="key = value sweep description")
    p.add_argument("--out-csv")
    p.add_argument("--out-svg")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("invert", help="full-measurement inversion partial sum")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--normalize", action="store_true")
    p.set_defaults(func=cmd_invert)

    p = sub.add_parser("plot", help="sample a recovered dual polynomial to CSV")
    p.add_argument("--dual-poly", required=True, help="recover --out JSON file")
    p.add_argument("--grid", type=int, default=1 << 12)
    p.add_argument("--out-csv", required=True)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("STFT_SUPERRES_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    argv = list(sys.argv[1:] if argv is None else argv)

    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)

    parser = build_parser()
    try:
        if known.config:
            overrides = load_config_file(known.config)
            # config values become subparser defaults (satisfying required
            # flags); explicit flags still win
            for sub in parser._subparsers._group_actions[0].choices.values():
                for sub_action in sub._actions:
                    if sub_action.dest in overrides:
                        sub_action.default = overrides[sub_action.dest]
                        sub_action.required = False
        args = parser.parse_args(argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
