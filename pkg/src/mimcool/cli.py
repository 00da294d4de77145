"""Command-line interface.

Subcommands cover the full pipeline: `report`, `limits`, `loop`,
`sweep-gain`, `simulate`, `fit-lorentzian`, `calibrate`, `fit-loop`,
`fit-dip`, `fit-qp`, `fit-heating`, `cal-freqnoise`, `tin`, `backaction`.
JSON goes to stdout (stable key order); CSV data files are plot-ready.
Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import backaction as ba
from . import limits as lim
from . import specfit, tin
from .config import load_config
from .constants import TWO_PI
from .errors import (CalibrationError, ConfigError, FitError, MimcoolError,
                     ParameterError, StabilityError, UnitsError)
from .feedback import loop_stability_scan, occupancy_vs_gain_model
from .lsq import FitResult
from .report import (build_report, desk_sim_config, effective_loop_model,
                     report_to_json)
from .sim import occupancy_vs_gain_sweep, simulate, welch_psd
from .spectrum import Spectrum

EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _emit(payload, output=None):
    text = (report_to_json(payload) if not isinstance(payload, FitResult)
            else report_to_json(payload.to_dict()))
    if output:
        with open(output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _load_points(path, min_cols=2):
    data = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    if data.shape[1] < min_cols:
        raise ParameterError(
            f"{path}: expected at least {min_cols} comma-separated columns")
    return data


def _write_csv(path, header_cols, rows, comments=()):
    with open(path, "w", encoding="utf-8") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write("# columns=" + ",".join(header_cols) + "\n")
        for row in rows:
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")


# ---------------------------------------------------------------------------
# subcommand handlers

def cmd_report(args):
    config = load_config(args.config)
    _emit(build_report(config, include_gain_sweep=not args.no_sweep),
          args.output)


def cmd_limits(args):
    config = load_config(args.config)
    report = build_report(config, include_gain_sweep=False)
    payload = {k: report[k] for k in
               ("derived", "cavity", "sideband", "detection", "imprecision",
                "feedback", "tin", "loop") if k in report}
    rows = []
    for section, entries in payload.items():
        for key, value in sorted(entries.items()):
            if isinstance(value, dict):
                value = value.get("value", value)
            if isinstance(value, (int, float)):
                rows.append((f"{section}.{key}", f"{value:.6g}"))
    width = max(len(name) for name, _ in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}", file=sys.stderr)
    _emit(payload, args.output)


def cmd_loop(args):
    config = load_config(args.config)
    model, _ = effective_loop_model(config)
    gains = np.geomspace(args.gain_min, args.gain_max, args.gains)
    occ = occupancy_vs_gain_model(model, gains,
                                  span_linewidths=args.span_linewidths,
                                  points=args.points)
    stable = loop_stability_scan(model, gains)
    path = args.output or "loop_sweep.csv"
    _write_csv(path, ("gain", "n_bar", "stable"),
               [(g, n, float(s)) for g, n, s in zip(gains, occ, stable)],
               comments=("closed-loop occupancy vs controller gain",))
    print(json.dumps({"written": path, "minimum_occupancy": float(np.min(occ)),
                      "at_gain": float(gains[int(np.argmin(occ))])},
                     sort_keys=True))


def cmd_sweep_gain(args):
    config = load_config(args.config)
    sim_cfg = desk_sim_config(config)
    gains = np.geomspace(args.gain_min, args.gain_max, args.gains)
    rows = []
    if args.no_sim:
        model = sim_cfg.loop_model()
        occ = occupancy_vs_gain_model(model, gains)
        stable = loop_stability_scan(model, gains)
        rows = [(g, float("nan"), n, float(s))
                for g, n, s in zip(gains, occ, stable)]
    else:
        stable = loop_stability_scan(sim_cfg.loop_model(), gains)
        swept = occupancy_vs_gain_sweep(sim_cfg, gains)
        rows = [(g, n_sim, n_model, float(s))
                for (g, n_sim, n_model), s in zip(swept, stable)]
    path = args.output or "gain_sweep.csv"
    _write_csv(path, ("gain", "n_sim", "n_model", "stable"), rows,
               comments=("desk-scale simulated and modeled occupancy vs gain",))
    print(json.dumps({"written": path}, sort_keys=True))


def cmd_simulate(args):
    config = load_config(args.config)
    sim_cfg = desk_sim_config(config, gain=args.gain, seed=args.seed,
                              duration=args.duration)
    ts = simulate(sim_cfg)
    prefix = args.output or "sim"
    if args.binary:
        np.savez_compressed(f"{prefix}_timeseries.npz", x=ts.x, y=ts.y,
                            dt=ts.dt)
        written = [f"{prefix}_timeseries.npz"]
    else:
        stride = max(1, args.decimate)
        t = np.arange(ts.x.size) * ts.dt
        _write_csv(f"{prefix}_timeseries.csv", ("time_s", "x_m", "y_m"),
                   zip(t[::stride], ts.x[::stride], ts.y[::stride]),
                   comments=(f"dt={ts.dt!r}", f"decimation={stride}"))
        written = [f"{prefix}_timeseries.csv"]
    nperseg = min(args.segment, ts.x.size)
    for label, data in (("x", ts.x), ("y", ts.y)):
        spec = welch_psd(data, ts.dt, nperseg)
        spec.write_csv(f"{prefix}_psd_{label}.csv")
        written.append(f"{prefix}_psd_{label}.csv")
    print(json.dumps({"written": written, "samples": int(ts.x.size)},
                     sort_keys=True))


def cmd_fit_lorentzian(args):
    spec = Spectrum.read_csv(args.spectrum)
    _emit(specfit.fit_lorentzian(spec), args.output)


def cmd_calibrate(args):
    config = load_config(args.config)
    spec = Spectrum.read_csv(args.spectrum)
    if args.occupancy is not None:
        n_anchor = args.occupancy
    else:
        _, info = effective_loop_model(config)
        n_anchor = info["anchor_occupancy"]
    cal = specfit.calibrate_anchor(spec, n_anchor, config.mechanical)
    if args.write_calibrated:
        specfit.calibrated_displacement(spec, cal).write_csv(args.write_calibrated)
    _emit({"k_m2_per_V2": cal.k, "anchor_occupancy": cal.anchor_occupancy,
           "floor_V2_per_Hz": cal.floor_vv}, args.output)


def cmd_fit_loop(args):
    config = load_config(args.config)
    spec = Spectrum.read_csv(args.spectrum)
    model, _ = effective_loop_model(config)
    p0 = {}
    if args.gain0 is not None:
        p0["gain"] = args.gain0
    if args.phase0 is not None:
        p0["phase"] = args.phase0
    result = specfit.fit_closed_loop(spec, model, p0=p0 or None)
    payload = result.to_dict()
    payload["params"]["n_imp"] = lim.n_imp_from_sxx(
        result["s_xx_imp"], config.mechanical)
    _emit(payload, args.output)


def cmd_fit_dip(args):
    data = _load_points(args.curve)
    detunings = TWO_PI * data[:, 0]
    result = specfit.fit_reflection_dip(detunings, data[:, 1], args.eta_r)
    payload = result.to_dict()
    payload["params"]["kappa_hz"] = result["kappa"] / TWO_PI
    if args.length is not None:
        fsr = 299792458.0 / (2.0 * args.length)
        payload["params"]["finesse"] = fsr / (result["kappa"] / TWO_PI)
    _emit(payload, args.output)


def cmd_fit_qp(args):
    config = load_config(args.config)
    data = _load_points(args.points)
    material = specfit.GasMaterial(
        density=args.density, thickness=args.thickness,
        molar_mass=args.molar_mass,
        temperature=config.mechanical.temperature)
    model = specfit.fit_q_vs_pressure(data[:, :2], material,
                                      config.mechanical.omega_m)
    _emit({"q0": model.q0, "a_q": model.a_q}, args.output)


def cmd_fit_heating(args):
    data = _load_points(args.points)
    result = specfit.fit_inverse_area(data[:, :2], TWO_PI * args.gamma0,
                                      model=args.model)
    _emit(result, args.output)


def cmd_cal_freqnoise(args):
    config = load_config(args.config)
    spec = Spectrum.read_csv(args.spectrum)
    cal = specfit.frequency_noise_calibration(
        args.ratio, args.phi_mod, TWO_PI * args.freq_mod, config.cavity.kappa)
    mode = config.mechanical
    freq_pull = config.coupling.g0 / mode.x_zpf
    converted = specfit.voltage_to_noise_spectra(
        spec, cal, freq_pull, args.tone_halfwidth)
    written = []
    prefix = args.output or "freqnoise"
    for label, sp in converted.items():
        path = f"{prefix}_{label}.csv"
        sp.write_csv(path)
        written.append(path)
    print(json.dumps({"lambda_roots": list(cal.lambda_roots),
                      "lambda_used": cal.lambda_param, "written": written},
                     sort_keys=True))


def cmd_tin(args):
    config = load_config(args.config)
    spec = Spectrum.read_csv(args.spectrum)
    mode = config.mechanical
    budget = tin.tin_budget(config.coupling.g0, config.cavity.kappa,
                            mode.n_thermal)
    cubic = tin.cubic_correlation_spectrum(spec)
    triple = tin.triple_convolution_spectrum(spec)
    prefix = args.output or "tin"
    cubic.write_csv(f"{prefix}_cubic.csv")
    triple.write_csv(f"{prefix}_triple.csv")
    print(json.dumps({
        "first_order_scaling": budget.first_order_scaling,
        "second_order_scaling": budget.second_order_scaling,
        "rms_detuning": budget.rms_detuning,
        "written": [f"{prefix}_cubic.csv", f"{prefix}_triple.csv"],
    }, sort_keys=True))


def cmd_backaction(args):
    config = load_config(args.config)
    data = _load_points(args.points)
    cavity = config.cavity
    mode = config.mechanical
    errors = TWO_PI * data[:, 2] if data.shape[1] > 2 else None
    if args.what == "spring":
        points = np.column_stack([data[:, 0], TWO_PI * data[:, 1]])
        detuning = TWO_PI * args.detuning if args.detuning is not None \
            else config.cooling.detuning
        out = ba.fit_spring_vs_power(points, cavity, detuning, mode.omega_m,
                                     errors=errors)
        payload = {"slope_rad_per_sW": out["slope"],
                   "g0_estimate_hz": out["g0_estimate"] / TWO_PI,
                   "slope_stderr": out["slope_stderr"]}
    else:
        points = TWO_PI * data[:, :2]
        detuning = TWO_PI * args.detuning if args.detuning is not None \
            else config.cooling.detuning
        out = ba.fit_damping_offset(points, cavity.kappa, detuning,
                                    mode.omega_m, mode.gamma_m, errors=errors)
        payload = {"gamma_probe_offset_hz": out["gamma_probe_offset"] / TWO_PI,
                   "offset_stderr_hz": out["offset_stderr"] / TWO_PI}
    _emit(payload, args.output)


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimcool",
        description="Membrane-in-the-middle laser-cooling analysis toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, handler, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(handler=handler)
        p.add_argument("--output", help="write JSON/CSV here instead of stdout")
        return p

    p = add("report", cmd_report, help="full analysis report as JSON")
    p.add_argument("config")
    p.add_argument("--no-sweep", action="store_true",
                   help="skip the gain-sweep minimum-occupancy prediction")

    p = add("limits", cmd_limits, help="cooling limits and noise budget")
    p.add_argument("config")

    p = add("loop", cmd_loop, help="model gain sweep to CSV (gain,n_bar,stable)")
    p.add_argument("config")
    p.add_argument("--gain-min", type=float, default=1.0)
    p.add_argument("--gain-max", type=float, default=1e4)
    p.add_argument("--gains", type=int, default=25)
    p.add_argument("--span-linewidths", type=float, default=80.0)
    p.add_argument("--points", type=int, default=8001)

    p = add("sweep-gain", cmd_sweep_gain,
            help="desk-scale simulated + model gain sweep CSV")
    p.add_argument("config")
    p.add_argument("--gain-min", type=float, default=2.0)
    p.add_argument("--gain-max", type=float, default=500.0)
    p.add_argument("--gains", type=int, default=7)
    p.add_argument("--no-sim", action="store_true")

    p = add("simulate", cmd_simulate, help="run the Langevin simulation")
    p.add_argument("config")
    p.add_argument("--gain", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--segment", type=int, default=1 << 18)
    p.add_argument("--decimate", type=int, default=64,
                   help="time-series CSV decimation stride")
    p.add_argument("--binary", action="store_true",
                   help="write the time series as .npz instead of CSV")

    p = add("fit-lorentzian", cmd_fit_lorentzian, help="Lorentzian line fit")
    p.add_argument("spectrum")

    p = add("calibrate", cmd_calibrate, help="anchor calibration of a V^2/Hz PSD")
    p.add_argument("spectrum")
    p.add_argument("config")
    p.add_argument("--occupancy", type=float, default=None)
    p.add_argument("--write-calibrated", help="write the calibrated m^2/Hz CSV")

    p = add("fit-loop", cmd_fit_loop, help="closed-loop spectrum fit")
    p.add_argument("spectrum")
    p.add_argument("config")
    p.add_argument("--gain0", type=float, default=None)
    p.add_argument("--phase0", type=float, default=None)

    p = add("fit-dip", cmd_fit_dip, help="fiber-cavity reflection dip fit")
    p.add_argument("curve", help="CSV: detuning_Hz, reflected power ratio")
    p.add_argument("--eta-r", type=float, required=True)
    p.add_argument("--length", type=float, default=None,
                   help="cavity length (m) to also report the finesse")

    p = add("fit-qp", cmd_fit_qp, help="quality factor vs pressure fit")
    p.add_argument("points", help="CSV: pressure_Pa, Q")
    p.add_argument("config")
    p.add_argument("--density", type=float, default=3170.0)
    p.add_argument("--thickness", type=float, default=15e-9)
    p.add_argument("--molar-mass", type=float, default=28.97e-3)

    p = add("fit-heating", cmd_fit_heating, help="inverse-area vs power fit")
    p.add_argument("points", help="CSV: power, area")
    p.add_argument("--gamma0", type=float, required=True,
                   help="zero-power linewidth (Hz)")
    p.add_argument("--model", choices=("dba", "dba+heating"), default="dba+heating")

    p = add("cal-freqnoise", cmd_cal_freqnoise,
            help="cavity frequency-noise calibration")
    p.add_argument("spectrum")
    p.add_argument("config")
    p.add_argument("--ratio", type=float, required=True,
                   help="locked/unlocked tone power ratio")
    p.add_argument("--phi-mod", type=float, required=True,
                   help="calibration tone modulation depth (rad)")
    p.add_argument("--freq-mod", type=float, required=True,
                   help="calibration tone frequency (Hz)")
    p.add_argument("--tone-halfwidth", type=float, default=1e3)

    p = add("tin", cmd_tin, help="thermal intermodulation noise estimates")
    p.add_argument("spectrum", help="CSV of the linear detuning-fluctuation PSD")
    p.add_argument("config")

    p = add("backaction", cmd_backaction, help="fit spring/damping data")
    p.add_argument("points")
    p.add_argument("config")
    p.add_argument("--what", choices=("spring", "damping"), required=True)
    p.add_argument("--detuning", type=float, default=None,
                   help="override beam detuning (Hz)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses code 2 for usage errors already
        return int(exc.code or 0)
    try:
        args.handler(args)
    except (ConfigError, ParameterError, UnitsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (FitError, StabilityError, CalibrationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except MimcoolError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
