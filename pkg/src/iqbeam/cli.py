"""``iqbeam`` command line: config parsing, sweep dispatch and result files."""

import argparse
import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone
import io
import json
import math
from pathlib import Path
import sys

import numpy as np

from . import __version__
from .airlink import LinkBudget
from .impairments import IqiDelta
from .montecarlo import (
    AXES,
    DEFAULT_AXIS_VALUES,
    SCHEMES,
    ExperimentConfig,
    dbm_to_w,
    default_workers,
    gain_summary,
    run_point,
    run_sweep,
    to_db,
    to_dbm,
)

CSV_COLUMNS = ("sweep_axis", "sweep_value", "scheme", "metric", "mean", "std_err",
               "trials", "singular_trials", "seed")

AXIS_KEYS = {"snr": "snr_db_values", "antennas": "antennas_values",
             "ce_time": "ce_time_values", "iqi": "iqi_values"}

SUBCOMMANDS = {"sweep-snr": "snr", "sweep-antennas": "antennas",
               "sweep-ce-time": "ce_time", "sweep-iqi": "iqi"}

INF = math.inf

# key -> (type, default, lower, upper); bounds are inclusive
CONFIG_KEYS = {
    "N": (int, 10, 1, INF),
    "K": (int, 1, 1, INF),
    "trials": (int, 10_000, 1, INF),
    "seed": (int, 1, 0, 2 ** 64 - 1),
    "delta": (float, 0.4, 0.0, 0.5),
    "delta_g": (float, None, 0.0, 0.5),
    "delta_phi": (float, None, 0.0, 0.5),
    "cap_g": (float, None, 0.0, 0.5),
    "cap_phi": (float, None, 0.0, 0.5),
    "f_hz": (float, 915e6, 0.0, INF),
    "d_m": (float, 100.0, 0.0, INF),
    "rho": (float, 2.5, 0.0, INF),
    "sigma1_sq": (float, 1e-17, 0.0, INF),
    "sigma2_sq": (float, 1e-17, 0.0, INF),
    "p_c_dbm": (float, -30.0, -INF, INF),
    "p_i_dbm": (float, 30.0, -INF, INF),
    "tau_s": (float, 10e-3, 0.0, INF),
    "tau_c_s": (float, 1e-4, 0.0, INF),
    "pilot_phase": (float, 0.0, -INF, INF),
    "snr_db_values": (list, list(DEFAULT_AXIS_VALUES["snr"]), -INF, INF),
    "antennas_values": (list, list(DEFAULT_AXIS_VALUES["antennas"]), 1, INF),
    "ce_time_values": (list, list(DEFAULT_AXIS_VALUES["ce_time"]), 0.0, 1.0),
    "iqi_values": (list, list(DEFAULT_AXIS_VALUES["iqi"]), 0.0, 0.5),
    "schemes": (list, list(SCHEMES), None, None),
}

# strictly positive keys; zero is rejected even though the bound above is 0
POSITIVE = {"f_hz", "d_m", "sigma1_sq", "sigma2_sq", "tau_s", "tau_c_s"}


class ConfigError(ValueError):
    pass


def _range_text(key, lo, hi):
    left = "(" if key in POSITIVE or lo == -INF else "["
    right = ")" if hi == INF else "]"
    return f"{left}{lo}, {hi}{right}"


def _check_value(key, value):
    typ, _, lo, hi = CONFIG_KEYS[key]
    if typ is list:
        if not isinstance(value, (list, tuple)) or not value:
            raise ConfigError(f"{key}: expected a non-empty list, got {value!r}")
        if key == "schemes":
            bad = [s for s in value if s not in SCHEMES]
            if bad:
                raise ConfigError(f"schemes: unknown scheme(s) {bad}; valid: {list(SCHEMES)}")
            return list(value)
        out = []
        for v in value:
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{key}: entries must be finite numbers, got {v!r}")
            if key == "antennas_values" and int(v) != v:
                raise ConfigError(f"antennas_values: entries must be integers, got {v!r}")
            if not lo <= v <= hi or (key == "ce_time_values" and v <= 0):
                rng = "(0, 1]" if key == "ce_time_values" else _range_text(key, lo, hi)
                raise ConfigError(f"{key}: value {v} outside valid range {rng}")
            out.append(int(v) if key == "antennas_values" else float(v))
        return out
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if typ is int:
        if int(value) != value:
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
        if not math.isfinite(value):
            raise ConfigError(f"{key}: value must be finite, got {value}")
    if not lo <= value <= hi or (key in POSITIVE and value <= 0):
        raise ConfigError(f"{key}: value {value} outside valid range {_range_text(key, lo, hi)}")
    return value


def parse_range(text):
    """Expand ``A:STEP:B`` (inclusive of ``B``) or a comma list into floats."""
    if ":" not in text:
        return [float(t) for t in text.split(",") if t.strip()]
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"range must look like A:STEP:B, got {text!r}")
    a, step, b = (float(p) for p in parts)
    if step <= 0 or b < a:
        raise ConfigError(f"range {text!r} needs STEP > 0 and B >= A")
    n = int(math.floor((b - a) / step + 1e-9))
    return [a + i * step for i in range(n + 1)]


def resolve_settings(path=None, overrides=None):
    """Merge defaults, a JSON config file and flag overrides into a flat dict."""
    raw = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a JSON object")
    raw.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {unknown}; valid keys: {sorted(CONFIG_KEYS)}")
    settings = {k: (list(d) if isinstance(d, list) else d) for k, (_, d, _, _) in CONFIG_KEYS.items()}
    for key, value in raw.items():
        settings[key] = _check_value(key, value)
    for key in ("delta_g", "delta_phi", "cap_g", "cap_phi"):
        if settings[key] is None:
            settings[key] = settings["delta"]
    if settings["tau_c_s"] > settings["tau_s"]:
        raise ConfigError(f"tau_c_s: value {settings['tau_c_s']} outside valid range "
                          f"(0, tau_s = {settings['tau_s']}]")
    return settings


def config_from_settings(s, axis="snr"):
    link = LinkBudget(f=s["f_hz"], d=s["d_m"], rho=s["rho"], sigma1_sq=s["sigma1_sq"],
                      sigma2_sq=s["sigma2_sq"], p_c=dbm_to_w(s["p_c_dbm"]),
                      p_i=dbm_to_w(s["p_i_dbm"]), tau=s["tau_s"], tau_c=s["tau_c_s"])
    delta = IqiDelta(s["delta_g"], s["delta_phi"], s["cap_g"], s["cap_phi"])
    return ExperimentConfig(N=s["N"], K=s["K"], trials=s["trials"], seed=s["seed"], delta=delta,
                            link=link, pilot_phase=s["pilot_phase"], axis=axis,
                            values=tuple(s[AXIS_KEYS[axis]]), schemes=tuple(s["schemes"]))


def parse_config(path=None, overrides=None, axis="snr"):
    """Build an :class:`ExperimentConfig` for one sweep axis.

    Raises
    ------
    ConfigError
        On unknown keys or out-of-range values; the message names the key and
        its valid range.
    """
    if axis not in AXES:
        raise ConfigError(f"axis must be one of {AXES}, got {axis!r}")
    return config_from_settings(resolve_settings(path, overrides), axis)


def config_to_dict(cfg):
    """Flat config echo; ``parse_config`` of this dict reproduces ``cfg``."""
    link, d = cfg.link, cfg.delta
    out = {
        "N": cfg.N, "K": cfg.K, "trials": cfg.trials, "seed": cfg.seed,
        "delta_g": d.delta_g, "delta_phi": d.delta_phi, "cap_g": d.cap_g, "cap_phi": d.cap_phi,
        "f_hz": link.f, "d_m": link.d, "rho": link.rho,
        "sigma1_sq": link.sigma1_sq, "sigma2_sq": link.sigma2_sq,
        "p_c_dbm": float(to_dbm(link.p_c)), "p_i_dbm": float(to_dbm(link.p_i)),
        "tau_s": link.tau, "tau_c_s": link.tau_c, "pilot_phase": cfg.pilot_phase,
        AXIS_KEYS[cfg.axis]: list(cfg.values), "schemes": list(cfg.schemes),
    }
    if len({d.delta_g, d.delta_phi, d.cap_g, d.cap_phi}) == 1:
        out["delta"] = d.delta_g
    return out


def derived_quantities(cfg):
    link = cfg.link
    return {"varpi": link.varpi, "beta": link.beta, "pilot_energy_J": link.pilot_energy,
            "snr_train_db": float(to_db(link.snr))}


@dataclass
class RunManifest:
    config: dict
    seed: int
    version: str = __version__
    started: str = ""
    finished: str = ""
    outputs: list = field(default_factory=list)
    derived: dict = field(default_factory=dict)


def _fmt(v):
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def series_csv(series):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in series.rows():
        w.writerow([_fmt(row[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return None
        return float(format(obj, ".17g"))
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.generic):
        return _json_safe(obj.item())
    return obj


def write_outputs(series, manifest, out_dir, stem=None):
    """Write ``<stem>.csv`` and ``<stem>.json``; returns their paths."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    stem = stem or f"sweep_{series.axis}"
    csv_path, json_path = out_dir / f"{stem}.csv", out_dir / f"{stem}.json"
    csv_path.write_text(series_csv(series))
    manifest.outputs = sorted(set(manifest.outputs) | {str(csv_path), str(json_path)})
    doc = {"columns": list(CSV_COLUMNS), "rows": series.rows(), "manifest": vars(manifest)}
    json_path.write_text(json.dumps(_json_safe(doc), indent=2) + "\n")
    return csv_path, json_path


def _now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def verify_point(cfg, series, workers=1):
    """Re-run one sampled axis point and compare with the emitted rows."""
    i = cfg.seed % len(cfg.values)
    out = run_point(cfg.point(cfg.values[i]), cfg.trials, cfg.seed, cfg.schemes, workers)
    ok = ~out.singular_flag
    mismatches = []
    for scheme in cfg.schemes:
        expect = series.power[scheme][i][0]
        got = math.fsum(out.power_w[scheme][ok]) / ok.sum()
        if got != expect:
            mismatches.append(f"{scheme}: {got!r} != {expect!r}")
    return i, mismatches


def print_series(series, stream=sys.stdout):
    head = f"{series.axis:>10}" + "".join(f"{s:>14}" for s in series.schemes)
    print(f"mean signal power (dBm), {series.trials} trials, seed {series.seed}", file=stream)
    print(head, file=stream)
    for i, v in enumerate(series.values):
        print(f"{v:>10.4g}" + "".join(f"{series.power_dbm(s)[i]:>14.4f}" for s in series.schemes),
              file=stream)
    print("mean NMSE (dB)", file=stream)
    for i, v in enumerate(series.values):
        print(f"{v:>10.4g}" + "".join(f"{series.nmse_db(s)[i]:>14.4f}" for s in ("benchmark", "opt_lse")),
              file=stream)


def run_sweep_command(settings, axis, args, workers):
    cfg = config_from_settings(settings, axis)
    manifest = RunManifest(config_to_dict(cfg), cfg.seed, started=_now(), derived=derived_quantities(cfg))
    series = run_sweep(cfg, workers)
    manifest.finished = _now()
    paths = write_outputs(series, manifest, args.out)
    print_series(series)
    print("wrote " + ", ".join(str(p) for p in paths))
    if args.verify:
        i, bad = verify_point(cfg, series, workers)
        if bad:
            print(f"verify FAILED at {axis}={cfg.values[i]}: " + "; ".join(bad))
            return 1, series
        print(f"verify ok at {axis}={cfg.values[i]}")
    return 0, series


def execute(subcommand, args):
    """Run one subcommand; returns the process exit code."""
    overrides = {
        "seed": args.seed, "trials": args.trials, "delta": args.delta, "N": args.antennas,
        "K": args.users, "p_c_dbm": args.pilot_dbm,
        "snr_db_values": parse_range(args.snr_db) if args.snr_db else None,
    }
    try:
        settings = resolve_settings(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    workers = args.threads or default_workers()

    if subcommand == "validate":
        from .checks import run_checks

        results = run_checks(delta=settings["delta"], seed=settings["seed"])
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
        failed = sum(not r.passed for r in results)
        print(f"{len(results) - failed}/{len(results)} checks passed")
        return 0 if failed == 0 else 1

    try:
        if subcommand in SUBCOMMANDS:
            return run_sweep_command(settings, SUBCOMMANDS[subcommand], args, workers)[0]
        if subcommand == "gains-summary":
            series, code = {}, 0
            for axis in AXES:
                rc, series[axis] = run_sweep_command(settings, axis, args, workers)
                code = code or rc
            summary = gain_summary(series)
            for axis in AXES:
                print(f"{axis:>10}: " + ", ".join(f"{k} {100 * v:+.1f}%"
                                                  for k, v in summary["per_sweep"][axis].items()))
            print(f"{'overall':>10}: " + ", ".join(f"{k} {100 * v:+.1f}%" for k, v in summary["overall"].items()))
            path = Path(args.out) / "gains_summary.json"
            path.write_text(json.dumps(_json_safe(summary), indent=2) + "\n")
            print(f"wrote {path}")
            return code
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"unknown subcommand {subcommand!r}", file=sys.stderr)
    return 2


def build_parser():
    p = argparse.ArgumentParser(prog="iqbeam", description="IQ-imbalance-aware LS estimation and "
                                "energy beamforming simulator.")
    p.add_argument("subcommand", choices=[*SUBCOMMANDS, "gains-summary", "validate"])
    p.add_argument("--config", help="JSON file with flat config keys")
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--delta", type=float, help="sets all four IQI constants")
    p.add_argument("--antennas", type=int)
    p.add_argument("--users", type=int)
    p.add_argument("--snr-db", help="training SNR sweep as A:STEP:B or a comma list")
    p.add_argument("--pilot-dbm", type=float, help="pilot power p_c in dBm")
    p.add_argument("--out", default="results")
    p.add_argument("--threads", type=int, help="worker processes (default: IQBEAM_THREADS or all cores)")
    p.add_argument("--verify", action="store_true", help="re-run one sampled point and diff")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return execute(args.subcommand, args)


if __name__ == "__main__":
    sys.exit(main())
