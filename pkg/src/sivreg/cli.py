"""Command line front end.

Dispatches exactly one experiment per invocation and writes a CSV artifact
whose header comment block records the fully resolved configuration and the
seed, so identical invocations produce byte-identical files.

Configuration is resolved in three layers (later wins):

    built-in defaults  <  flat JSON config file (--config)  <  command flags

The config file is a single flat JSON object holding strings, numbers and
booleans only.  Keys mirror the field names of the underlying module types;
unknown or ill-typed keys are rejected with the key name.  Exit codes:
0 success, 2 configuration error, 3 experiment error.

The environment variable SIVREG_OUTPUT_DIR sets the directory for relative
output paths (default: current directory).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import electronic, fitting, optics, readout, sequences
from .register import DephasingModel, RegisterParams, measure
from .sequences import GateSpec, T_PI_DEFAULT

TWO_PI = 2.0 * math.pi

UNITS_LINE = ("frequencies in Hz (plain, not angular); times in s; "
              "magnetic field in T; angles in degrees unless a column "
              "states otherwise")


class ConfigError(ValueError):
    """Missing, unknown or ill-typed configuration key."""


class ExperimentError(RuntimeError):
    """Failure propagated from a physics/analysis module."""


# ---------------------------------------------------------------------------
# configuration schema and resolution


@dataclass(frozen=True)
class RunConfig:
    """One resolved experiment invocation: name + flat key/value document."""

    experiment: str
    values: dict

    @property
    def seed(self):
        return self.values.get("seed", 0)

    @property
    def output(self):
        return self.values.get("output", "")


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    group: str            # "" for top-level subcommands, "run" for run group
    required: dict        # key -> type (no default exists; must be provided)
    defaults: dict        # key -> default value (type inferred)
    runner: object        # cfg values dict -> (columns, rows, extras)
    help: str = ""

    def schema(self):
        keys = dict(self.required)
        for k, v in self.defaults.items():
            keys[k] = type(v)
        return keys


_COMMON = {"seed": 0, "output": ""}

_REGISTER_DEFAULTS = {
    "delta": 0.0,              # electron detuning (Hz)
    "a_par": 621.75027e3,      # secular hyperfine, nucleus 1 (Hz)
    "a_perp": 140.1041e3,      # transverse hyperfine, nucleus 1 (Hz)
    "a_par2": 50.0e3,          # nucleus 2 (used when n_nuclei = 2)
    "a_perp2": 101.19309e3,
    "n_nuclei": 1,
    "t_c": 0.0,                # electron coherence time (s); 0 disables dephasing
    "beta_deph": 2.0,          # stretching exponent of the dephasing envelope
    "f_ie": 1.0,               # electron initialization fidelity
    "t_pi": T_PI_DEFAULT,      # electron pi time (s), sets the default Rabi rate
}


def _sweep_defaults(start, stop, points):
    return {"sweep_start": float(start), "sweep_stop": float(stop),
            "sweep_points": int(points), "sweep_scale": "linear"}


def _coerce(key, value, expected):
    """Coerce a JSON config value to the expected scalar type."""
    if isinstance(value, bool) and expected is not bool:
        raise ConfigError(f"ill-typed value for key '{key}' (expected {expected.__name__})")
    if expected is float:
        if isinstance(value, (int, float)):
            return float(value)
    elif expected is int:
        if isinstance(value, int):
            return int(value)
        if isinstance(value, float) and value == int(value):
            return int(value)
    elif expected is str:
        if isinstance(value, str):
            return value
    elif expected is bool:
        if isinstance(value, bool):
            return value
    raise ConfigError(f"ill-typed value for key '{key}' (expected {expected.__name__})")


def resolve_config(spec: ExperimentSpec, config_path, flag_values: dict) -> RunConfig:
    """defaults < config file < flags; validate presence, types and sweeps."""
    schema = spec.schema()
    values = dict(spec.defaults)

    if config_path:
        try:
            with open(config_path) as fh:
                document = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}")
        if not isinstance(document, dict):
            raise ConfigError("config file must hold a flat JSON object")
        for key, raw in document.items():
            if key not in schema:
                raise ConfigError(f"unknown config key '{key}' for experiment '{spec.name}'")
            values[key] = _coerce(key, raw, schema[key])

    for key, val in flag_values.items():
        if key in schema:
            values[key] = val

    for key in spec.required:
        if key not in values:
            raise ConfigError(f"missing required key '{key}' for experiment '{spec.name}'")

    if "sweep_points" in values:
        if values["sweep_points"] < 2:
            raise ConfigError("sweep_points must be >= 2")
        if values["sweep_scale"] not in ("linear", "log"):
            raise ConfigError("ill-typed value for key 'sweep_scale' (expected 'linear' or 'log')")
        if values["sweep_scale"] == "log" and (
                values["sweep_start"] <= 0 or values["sweep_stop"] <= 0):
            raise ConfigError("log sweep requires positive sweep_start and sweep_stop")
    if values.get("n_nuclei") not in (None, 1, 2):
        raise ConfigError("ill-typed value for key 'n_nuclei' (expected 1 or 2)")
    return RunConfig(spec.name, values)


def _sweep_axis(v):
    if v["sweep_scale"] == "log":
        return np.geomspace(v["sweep_start"], v["sweep_stop"], v["sweep_points"])
    return np.linspace(v["sweep_start"], v["sweep_stop"], v["sweep_points"])


def _int_axis(v):
    axis = np.unique(np.rint(_sweep_axis(v)).astype(int))
    return axis[axis >= 0]


def _register_params(v):
    hyperfine = [(v["a_par"], v["a_perp"])]
    if v["n_nuclei"] == 2:
        hyperfine.append((v["a_par2"], v["a_perp2"]))
    return RegisterParams(detuning=v["delta"], hyperfine=tuple(hyperfine),
                          n_nuclei=v["n_nuclei"], larmor_n=v["larmor_n"])


def _dephasing(v):
    if v["t_c"] <= 0.0:
        return None
    return DephasingModel(t_c=v["t_c"], beta=v["beta_deph"])


def _pulse_rabi(v):
    return 1.0 / (2.0 * v["t_pi"])


# ---------------------------------------------------------------------------
# runners: values dict -> (columns, rows, extras)


def _sweep_table(sweep):
    cols = [sweep.axis_label or "axis", "signal"]
    arrays = [np.asarray(sweep.axis, float), np.asarray(sweep.signal, float)]
    for key in sorted(sweep.aux or {}):
        cols.append(key)
        arrays.append(np.asarray(sweep.aux[key], float))
    return cols, list(zip(*arrays))


def _run_structure(v):
    obs = electronic.observables_at(v["epsilon"], v["alpha"], v["btheta"], v["b"])
    cols = ["omega_l_e_hz", "delta_ss_hz", "delta_gs_hz", "cyclicity"]
    return cols, [obs.as_tuple()], {}


def _run_estimate(v):
    targets = (v["wl"], v["dss"], v["dgs"], v["eta"])
    b_field = v["b"] if v["b"] > 0 else None
    res = electronic.estimate_parameters(targets, b_field=b_field,
                                         larmor_n=v["larmor_n"])
    cols = ["epsilon_hz", "alpha", "btheta_deg", "cost",
            "omega_l_e_hz", "delta_ss_hz", "delta_gs_hz", "cyclicity"]
    row = (res.strain.epsilon, res.strain.alpha, res.theta, res.cost,
           *res.observables.as_tuple())
    return cols, [row], {"converged": res.converged}


def _run_rabi(v):
    sweep = sequences.run_rabi(_register_params(v), _dephasing(v), v["omega"],
                               _sweep_axis(v), f_ie=v["f_ie"])
    cols, rows = _sweep_table(sweep)
    return cols, rows, {}


def _run_ramsey(v):
    sweep = sequences.run_ramsey(_register_params(v), _dephasing(v), v["delta_ramsey"],
                                 _sweep_axis(v), target=v["target"],
                                 f_ie=v["f_ie"], pulse_rabi=_pulse_rabi(v))
    cols, rows = _sweep_table(sweep)
    return cols, rows, {}


def _run_dd(v):
    sweep = sequences.run_dd(_register_params(v), _dephasing(v), v["kind"],
                             v["n_pulses"], _sweep_axis(v), f_ie=v["f_ie"],
                             pulse_rabi=_pulse_rabi(v))
    cols, rows = _sweep_table(sweep)
    return cols, rows, {}


def _run_spinlock(v):
    kwargs = {"f_ie": v["f_ie"], "pulse_rabi": _pulse_rabi(v)}
    if v["mode"] == "tau":
        kwargs["tau_sl"] = _sweep_axis(v)
    elif v["mode"] == "amplitude":
        kwargs["amplitudes"] = _sweep_axis(v)
        kwargs["tau_fixed"] = v["tau_fixed"]
    else:
        raise ConfigError("ill-typed value for key 'mode' (expected 'tau' or 'amplitude')")
    sweep = sequences.run_spin_lock(_register_params(v), _dephasing(v),
                                    v["omega_sl"], **kwargs)
    cols, rows = _sweep_table(sweep)
    return cols, rows, {}


def _run_nucrot(v):
    tau_rot = v["tau_rot"]
    if tau_rot <= 0.0:   # default: half a nuclear Larmor period minus the pi time
        tau_rot = 0.5 / v["larmor_n"] - v["t_pi"]
    sweep = sequences.run_nuclear_rotation(_register_params(v), _dephasing(v),
                                           tau_rot, _int_axis(v), f_ie=v["f_ie"],
                                           pulse_rabi=_pulse_rabi(v),
                                           pi_duration=v["t_pi"])
    cols, rows = _sweep_table(sweep)
    return cols, rows, {"tau_rot": tau_rot}


def _run_gates(v):
    p = _register_params(v)
    dephasing = _dephasing(v)
    gate = v["gate"].lower()
    if gate == "ui":
        wait = v["wait"] if v["wait"] >= 0 else None
        g = GateSpec(kind="UI", tau=v["tau"], n_pulses=v["n_pulses"],
                     pi_duration=v["t_pi"], wait=wait)
        if g.wait is None:
            g = GateSpec(kind="UI", tau=g.tau, n_pulses=g.n_pulses,
                         pi_duration=g.pi_duration,
                         wait=sequences.calibrate_transfer_wait(p, g))
        state = sequences.nuclear_init_gate(p, dephasing, g, v["f_ie"])
        rows = [(i, measure(state, "nuclear_sigma_z", i)) for i in range(p.n_nuclei)]
        extras = {"wait": g.wait,
                  "probe_signal": sequences.ui_probe_signal(p, dephasing, g, v["f_ie"])}
        return ["nucleus", "sigma_z"], rows, extras
    if gate == "cenotn":
        g = sequences.calibrate_cenotn(p, pi_duration=v["t_pi"])
        extras = {"tau": g.tau, "n_pulses": g.n_pulses,
                  "uncond_tau": g.uncond_tau, "uncond_n": g.uncond_n}
    elif gate == "cnnote":
        g = sequences.calibrate_cnnote(p, pi_duration=v["t_pi"])
        extras = {"rabi": g.rabi}
    elif gate == "identity":
        g = GateSpec(kind="identity")
        extras = {}
    else:
        raise ConfigError("ill-typed value for key 'gate' "
                          "(expected 'UI', 'CeNOTn', 'CnNOTe' or 'identity')")
    tm = sequences.transfer_matrix(p, dephasing, g, v["f_ie"], v["f_in"])
    cols = ["output_state"] + ["in_" + lab for lab in tm.labels]
    rows = [(tm.labels[i], *tm.matrix[i]) for i in range(4)]
    return cols, rows, extras


def _run_rb(v):
    res = sequences.run_randomized_benchmarking(
        _register_params(v), _dephasing(v), _int_axis(v),
        n_random=v["n_random"], gate_fidelity_noise=v["q"], seed=v["seed"],
        f_ie=v["f_ie"], pulse_rabi=_pulse_rabi(v))
    cols, rows = _sweep_table(res.sweep)
    extras = {"gate_fidelity": res.gate_fidelity,
              "decay_base": res.fit["f_g"],
              "decay_base_sigma": res.fit.error("f_g"),
              "fit_converged": res.fit.converged}
    return cols, rows, extras


def _run_ssr(v):
    cfg = readout.SsrConfig(n_blocks=v["n_blocks"], t_block=v["t_block"],
                            mean_bright=v["mean_bright"], mean_dark=v["mean_dark"],
                            p_offres=v["p_offres"], t_pol_n=v["t_pol_n"],
                            threshold=v["threshold"], seed=v["seed"])
    record = readout.simulate_ssr(cfg, initial_nuclear=v["initial"],
                                  n_shots=v["n_shots"])
    res = readout.classify_threshold(record, cfg.threshold)
    bright0 = record.initial_state == "bright"
    loss = float(np.mean(record.final_state[bright0] == "dark")) if bright0.any() else 0.0
    cols = ["shot", "counts", "initial_state", "final_state", "label"]
    rows = [(i, int(record.counts[i]), record.initial_state[i],
             record.final_state[i], res.labels[i]) for i in range(len(record))]
    extras = {"fidelity_bright": res.fidelity_bright,
              "fidelity_dark": res.fidelity_dark,
              "posterior_bright": res.posterior_bright,
              "posterior_dark": res.posterior_dark,
              "equal_threshold": res.equal_threshold,
              "bright_survival_loss": loss}
    return cols, rows, extras


def _run_optical(v):
    p = optics.OpticalParams(rabi_per_volt=v["rabi_per_volt"], detuning=v["detuning"],
                             t1=v["t1"], gamma_phi=v["gamma_phi"])
    mode = v["mode"]
    if mode == "rabi":
        sweep = optics.run_optical_rabi(p, v["amplitude"], _sweep_axis(v))
        cols, rows = _sweep_table(sweep)
        return cols, rows, {}
    if mode == "phase":
        t_pulse = v["t_pulse"]
        if t_pulse <= 0.0:   # default: a pi/2 area at the configured amplitude
            t_pulse = 0.25 / (p.rabi_per_volt * v["amplitude"])
        train = optics.OpticalPulseTrain(
            segments=((v["amplitude"], 0.0, t_pulse), (v["amplitude"], 0.0, t_pulse)),
            buffer=v["buffer"])
        sweep = optics.run_phase_control(p, train, _sweep_axis(v))
        cols, rows = _sweep_table(sweep)
        return cols, rows, {"t_pulse": t_pulse}
    if mode == "decay":
        times = _sweep_axis(v)
        trace = optics.fluorescence_decay(p, times, p_e0=v["p_e0"])
        t1_fit, amp_fit = optics.extract_lifetime((times, trace))
        rows = list(zip(times, trace))
        return ["time (s)", "excited_population"], rows, {
            "t1_fit": t1_fit, "amplitude_fit": amp_fit}
    raise ConfigError("ill-typed value for key 'mode' "
                      "(expected 'rabi', 'phase' or 'decay')")


def _read_xy(path, x_col, y_col):
    """Read two numeric columns from a CSV, skipping comments and one header."""
    xs, ys = [], []
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split(",")
                try:
                    x, y = float(parts[x_col]), float(parts[y_col])
                except IndexError:
                    raise ExperimentError(
                        f"data file lacks column {max(x_col, y_col)}: {path}")
                except ValueError:
                    if xs:
                        raise ExperimentError(f"non-numeric data row in {path}")
                    continue   # column-name header line
                xs.append(x)
                ys.append(y)
    except OSError as exc:
        raise ExperimentError(f"cannot read data file: {exc}")
    if len(xs) < 2:
        raise ExperimentError(f"fewer than two data rows in {path}")
    return np.asarray(xs), np.asarray(ys)


def _run_fit(v):
    model = fitting.get_model(v["model"])
    x, y = _read_xy(v["data"], v["x_col"], v["y_col"])
    res = fitting.least_squares(model, x, y)
    cols = ["parameter", "value", "sigma"]
    rows = [(name, res.params[i], res.sigma[i])
            for i, name in enumerate(res.param_names)]
    extras = {"residual_norm": res.residual_norm, "converged": res.converged,
              "n_points": len(x)}
    return cols, rows, extras


# ---------------------------------------------------------------------------
# experiment table

EXPERIMENTS = {}


def _register(spec: ExperimentSpec):
    EXPERIMENTS[spec.name] = spec


_register(ExperimentSpec(
    "structure", "",
    required={"epsilon": float, "alpha": float, "btheta": float, "b": float},
    defaults={**_COMMON},
    runner=_run_structure,
    help="derived observables of the 8-level electronic model at one working point"))

_register(ExperimentSpec(
    "estimate", "",
    required={},
    defaults={**_COMMON, "wl": 9.431e9, "dss": 254.654e6, "dgs": 1110.755e9,
              "eta": 816.285, "b": 0.0, "larmor_n": 3.5857929e6},
    runner=_run_estimate,
    help="fit (epsilon, alpha, btheta) to measured observables"))

_register(ExperimentSpec(
    "rabi", "run",
    required={"larmor_n": float},
    defaults={**_COMMON, **_REGISTER_DEFAULTS, "omega": 5.0e6,
              **_sweep_defaults(0.0, 1.0e-6, 201)},
    runner=_run_rabi,
    help="electron Rabi oscillation vs pulse duration"))

_register(ExperimentSpec(
    "ramsey", "run",
    required={"larmor_n": float},
    defaults={**_COMMON, **_REGISTER_DEFAULTS, "delta_ramsey": 1.0e6,
              "target": "electron", **_sweep_defaults(0.0, 5.0e-6, 201)},
    runner=_run_ramsey,
    help="electron or nuclear Ramsey fringes vs free-evolution time"))

_register(ExperimentSpec(
    "dd", "run",
    required={"larmor_n": float},
    defaults={**_COMMON, **_REGISTER_DEFAULTS, "kind": "XY", "n_pulses": 8,
              **_sweep_defaults(1.0e-7, 1.0e-5, 101)},
    runner=_run_dd,
    help="dynamical-decoupling signal vs inter-pulse spacing"))

_register(ExperimentSpec(
    "spinlock", "run",
    required={"larmor_n": float},
    defaults={**_COMMON, **_REGISTER_DEFAULTS, "omega_sl": 3.5857929e6,
              "mode": "tau", "tau_fixed": 2.0e-5,
              **_sweep_defaults(0.0, 5.0e-5, 101)},
    runner=_run_spinlock,
    help="spin-locking sweep over lock duration or drive amplitude"))

_register(ExperimentSpec(
    "nucrot", "run",
    required={"larmor_n": float},
    defaults={**_COMMON, **_REGISTER_DEFAULTS, "tau_rot": 0.0,
              **_sweep_defaults(0.0, 200.0, 201)},
    runner=_run_nucrot,
    help="conditional nuclear rotation vs pulse number"))

_register(ExperimentSpec(
    "gates", "run",
    required={"larmor_n": float},
    defaults={**_COMMON, **_REGISTER_DEFAULTS, "gate": "UI", "tau": 81.5e-9,
              "n_pulses": 42, "wait": -1.0, "f_in": 1.0},
    runner=_run_gates,
    help="nuclear initialization or two-qubit gate characterization"))

_register(ExperimentSpec(
    "rb", "run",
    required={"larmor_n": float},
    defaults={**_COMMON, **{**_REGISTER_DEFAULTS, "a_par": 0.0, "a_perp": 0.0},
              "n_random": 20, "q": 0.0, **_sweep_defaults(1.0, 100.0, 8)},
    runner=_run_rb,
    help="randomized benchmarking of the electron Clifford set"))

_register(ExperimentSpec(
    "ssr", "",
    required={},
    defaults={**_COMMON, "n_blocks": 280, "t_block": 3.0e-3 / 280,
              "mean_bright": 32.0, "mean_dark": 10.0, "p_offres": 0.07,
              "t_pol_n": 41.6178057e-3, "threshold": 21, "n_shots": 1000,
              "initial": "alternate"},
    runner=_run_ssr,
    help="Monte-Carlo single-shot readout windows and threshold classification"))

_register(ExperimentSpec(
    "optical", "",
    required={},
    defaults={**_COMMON, "mode": "rabi", "amplitude": 0.5, "detuning": 0.0,
              "t1": 1.6535e-9, "gamma_phi": 0.0,
              "rabi_per_volt": optics.RABI_MAX, "t_pulse": 0.0,
              "buffer": 0.8e-9, "p_e0": 1.0,
              **_sweep_defaults(0.0, 5.0e-9, 201)},
    runner=_run_optical,
    help="driven-dissipative optical dynamics: Rabi, phase control or decay"))

_register(ExperimentSpec(
    "fit", "",
    required={"model": str, "data": str},
    defaults={**_COMMON, "x_col": 0, "y_col": 1},
    runner=_run_fit,
    help="least-squares fit of a registry model to a two-column CSV"))


# ---------------------------------------------------------------------------
# CSV emission


def _fmt(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _output_path(cfg: RunConfig):
    name = cfg.output or (cfg.experiment + ".csv")
    if not os.path.isabs(name):
        name = os.path.join(os.environ.get("SIVREG_OUTPUT_DIR", "."), name)
    return name


def write_csv(path, cfg: RunConfig, columns, rows, extras):
    lines = ["# sivreg %s" % cfg.experiment,
             "# units: %s" % UNITS_LINE]
    for key in sorted(cfg.values):
        lines.append("# config %s=%s" % (key, _fmt(cfg.values[key])))
    for key in sorted(extras):
        lines.append("# result %s=%s" % (key, _fmt(extras[key])))
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def dispatch(cfg: RunConfig):
    """Run the configured experiment and write its CSV artifact."""
    spec = EXPERIMENTS[cfg.experiment]
    try:
        columns, rows, extras = spec.runner(cfg.values)
    except ConfigError:
        raise
    except (ValueError, KeyError, RuntimeError, ArithmeticError) as exc:
        raise ExperimentError("%s: %s" % (type(exc).__name__, exc))
    path = _output_path(cfg)
    write_csv(path, cfg, columns, rows, extras)
    for key in sorted(extras):
        print("%s = %s" % (key, _fmt(extras[key])))
    print("wrote %s" % path)
    return path


# ---------------------------------------------------------------------------
# argument parsing

_HELP = {
    "epsilon": "orbital strain splitting parameter (Hz)",
    "alpha": "excited/ground strain susceptibility ratio",
    "btheta": "magnetic field polar angle (deg)",
    "b": "magnetic field magnitude (T)",
    "larmor_n": "nuclear Larmor frequency (Hz)",
    "seed": "64-bit seed for stochastic experiments",
    "output": "output CSV path (relative paths land in SIVREG_OUTPUT_DIR)",
    "sweep_start": "sweep axis start",
    "sweep_stop": "sweep axis stop",
    "sweep_points": "number of sweep points (>= 2)",
    "sweep_scale": "sweep spacing: linear | log",
}


def _add_flags(parser, spec: ExperimentSpec):
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="flat JSON config file (flags override it)")
    for key, typ in sorted(spec.schema().items()):
        note = _HELP.get(key, "")
        if key in spec.required:
            note = (note + " " if note else "") + "(required)"
        else:
            note = (note + " " if note else "") + \
                "(default: %s)" % _fmt(spec.defaults[key])
        parser.add_argument("--" + key.replace("_", "-"), dest=key, type=typ,
                            default=argparse.SUPPRESS, help=note)
    parser.set_defaults(experiment=spec.name)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sivreg",
        description="simulation and estimation toolkit for a strained "
                    "electron-nuclear spin register")
    top = parser.add_subparsers(dest="command", required=True)
    run_parser = None
    for name, spec in EXPERIMENTS.items():
        if spec.group == "run":
            if run_parser is None:
                run_parser = top.add_parser("run", help="pulse-sequence experiments")
                run_sub = run_parser.add_subparsers(dest="run_experiment", required=True)
            sub = run_sub.add_parser(name, help=spec.help)
        else:
            sub = top.add_parser(name, help=spec.help)
        _add_flags(sub, spec)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    flag_values = {k: v for k, v in vars(args).items()
                   if k not in ("command", "run_experiment", "experiment", "config")}
    spec = EXPERIMENTS[args.experiment]
    try:
        cfg = resolve_config(spec, args.config, flag_values)
        dispatch(cfg)
    except ConfigError as exc:
        print("config error: %s" % exc, file=sys.stderr)
        return 2
    except ExperimentError as exc:
        print("experiment error: %s" % exc, file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
