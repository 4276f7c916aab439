"""Seedable Monte Carlo engine for the estimation and precoding experiments.

Every trial owns a random stream seeded by ``(master_seed, trial_index)``.
From it the trial draws, in this order, the uniform IQI variates
``(2K + 2N, 2)``, the unit Rayleigh channel ``(K, N)`` and the unit uplink
noise ``(K, N)``.  Sweep-point parameters only rescale these raw variates, so
all schemes and all points of a sweep see the same randomness (common random
numbers).  Trials are evaluated in vectorized batches; batch boundaries do
not change any per-trial value, and sums use ``math.fsum`` so means do not
depend on evaluation order.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
import math
import os

import numpy as np

from .airlink import LinkBudget, Pilot, complex_normal, observe_uplink
from .estimators import lse_benchmark, build_normal_system, solve_normal_system
from .impairments import IqiDelta, ideal_profile, profile_from_uniforms
from .precoders import downlink_coupling, mrt, optimal_precoder, received_signal_power

SCHEMES = ("benchmark", "opt_lse", "opt_precoder", "joint")
ESTIMATOR_OF = {"benchmark": "benchmark", "opt_lse": "optimal",
                "opt_precoder": "benchmark", "joint": "optimal"}
NMSE_SCHEMES = ("benchmark", "opt_lse")
AXES = ("snr", "antennas", "ce_time", "iqi")

DEFAULT_AXIS_VALUES = {
    "snr": (0.0, 10.0, 20.0, 30.0, 40.0),  # training SNR, dB
    "antennas": (4, 8, 12, 16, 20),
    "ce_time": (1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1),  # tau_c / tau
    "iqi": (0.0, 0.1, 0.2, 0.3, 0.4, 0.5),
}

BATCH = 1024


def to_db(x):
    if not np.all(np.asarray(x) > 0):
        raise ValueError(f"dB conversion needs positive input, got {x}")
    return 10 * np.log10(x)


def to_dbm(p_w):
    return to_db(np.asarray(p_w) / 1e-3)


def dbm_to_w(p_dbm):
    return 1e-3 * 10 ** (p_dbm / 10)


def default_link():
    return LinkBudget(p_c=dbm_to_w(-30.0), p_i=dbm_to_w(30.0), tau=10e-3, tau_c=1e-4)


@dataclass(frozen=True)
class TrialPoint:
    """Everything a trial needs besides its random stream."""

    N: int = 10
    K: int = 1
    delta: IqiDelta = field(default_factory=lambda: IqiDelta.uniform(0.4))
    link: LinkBudget = field(default_factory=default_link)
    pilot_phase: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    N: int = 10
    K: int = 1
    trials: int = 10_000
    seed: int = 1
    delta: IqiDelta = field(default_factory=lambda: IqiDelta.uniform(0.4))
    link: LinkBudget = field(default_factory=default_link)
    pilot_phase: float = 0.0
    axis: str = "snr"
    values: tuple = DEFAULT_AXIS_VALUES["snr"]
    schemes: tuple = SCHEMES

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if self.N < 1 or self.K < 1:
            raise ValueError(f"need N >= 1 and K >= 1, got N={self.N}, K={self.K}")
        if self.axis not in AXES:
            raise ValueError(f"axis must be one of {AXES}, got {self.axis!r}")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed}")
        unknown = set(self.schemes) - set(SCHEMES)
        if unknown or not self.schemes:
            raise ValueError(f"schemes must be a non-empty subset of {SCHEMES}, got {self.schemes}")
        for v in self.values:
            self.point(v)

    def base_point(self):
        return TrialPoint(self.N, self.K, self.delta, self.link, self.pilot_phase)

    def point(self, value):
        """Trial parameters at one sweep-axis value."""
        p = self.base_point()
        if self.axis == "snr":
            return replace(p, link=p.link.with_snr(10 ** (value / 10)))
        if self.axis == "antennas":
            if int(value) != value or value < 1:
                raise ValueError(f"antenna count must be a positive integer, got {value}")
            return replace(p, N=int(value))
        if self.axis == "ce_time":
            if not 0 < value <= 1:
                raise ValueError(f"tau_c / tau must lie in (0, 1], got {value}")
            return replace(p, link=replace(p.link, tau_c=value * p.link.tau))
        if not 0 <= value <= 0.5:
            raise ValueError(f"IQI severity must lie in [0, 0.5], got {value}")
        return replace(p, delta=IqiDelta.uniform(value))


@dataclass(frozen=True)
class RawDraws:
    u: np.ndarray  # (T, 2K + 2N, 2) uniforms on [-1/2, 1/2)
    h: np.ndarray  # (T, K, N) unit CN(0, 1)
    n: np.ndarray  # (T, K, N) unit CN(0, 1)


def trial_rng(master_seed, trial_index):
    return np.random.default_rng([int(master_seed), int(trial_index)])


def draw_raw(master_seed, indices, N, K):
    u, h, n = [], [], []
    for i in indices:
        rng = trial_rng(master_seed, i)
        u.append(rng.uniform(-0.5, 0.5, size=(2 * K + 2 * N, 2)))
        h.append(complex_normal(rng, (K, N)))
        n.append(complex_normal(rng, (K, N)))
    return RawDraws(np.array(u), np.array(h), np.array(n))


@dataclass(frozen=True)
class TrialOutcome:
    """Per-trial metrics.  Arrays carry one entry per trial when batched."""

    nmse_benchmark: np.ndarray
    nmse_optimal: np.ndarray
    power_w: dict
    lambda_joint: np.ndarray
    singular_flag: np.ndarray


def _first_user(x):
    return x[..., 0, :]


def _iqi_unaware_precoder(h_hat, p_i):
    if h_hat.shape[-2] == 1:
        return mrt(_first_user(h_hat), p_i).x
    # sum-power beamformer that assumes ideal hardware; MRT when K = 1
    batch = h_hat.shape[:-2]
    prof = ideal_profile(h_hat.shape[-1], h_hat.shape[-2], batch)
    return optimal_precoder(downlink_coupling(h_hat, prof), p_i)[0].x


def evaluate(point, raw, schemes=SCHEMES):
    """Evaluate a batch of trials at one sweep point."""
    N, K, link = point.N, point.K, point.link
    prof = profile_from_uniforms(raw.u, N, K, point.delta)
    beta = link.beta
    h = math.sqrt(beta) * raw.h
    pilot = Pilot.from_budget(link, point.pilot_phase)
    h_A = np.empty_like(h)
    h_opt = np.empty_like(h)
    singular = np.zeros(h.shape[0], dtype=bool)
    for k in range(K):
        obs = observe_uplink(h[:, k], prof, pilot, noise=math.sqrt(link.sigma1_sq) * raw.n[:, k], user=k)
        h_A[:, k] = lse_benchmark(obs.y_J, pilot).h_hat
        sol, sing = solve_normal_system(build_normal_system(obs.y_J, pilot, prof, user=k))
        singular |= sing.any(axis=-1)
        h_opt[:, k] = sol
    # singular trials are excluded downstream; keep their arithmetic finite
    h_opt[singular] = h_A[singular]

    scale = 1.0 / (N * K * beta)
    nmse_b = np.sum(np.abs(h_A - h) ** 2, axis=(-2, -1)) * scale
    nmse_o = np.sum(np.abs(h_opt - h) ** 2, axis=(-2, -1)) * scale

    estimates = {"benchmark": h_A, "optimal": h_opt}
    power = {}
    lam_joint = np.full(h.shape[0], np.nan)
    for scheme in schemes:
        est = estimates[ESTIMATOR_OF[scheme]]
        if scheme in ("benchmark", "opt_lse"):
            x = _iqi_unaware_precoder(est, link.p_i)
        else:
            x, lam = optimal_precoder(downlink_coupling(est, prof), link.p_i)
            x = x.x
            if scheme == "joint":
                lam_joint = lam
        power[scheme] = received_signal_power(h, prof, x)
    return TrialOutcome(nmse_b, nmse_o, power, lam_joint, singular)


def run_trial(point, trial_index, master_seed, schemes=SCHEMES):
    """One trial as a deterministic function of ``(master_seed, trial_index, point)``."""
    raw = draw_raw(master_seed, [trial_index], point.N, point.K)
    out = evaluate(point, raw, schemes)
    return TrialOutcome(
        float(out.nmse_benchmark[0]), float(out.nmse_optimal[0]),
        {k: float(v[0]) for k, v in out.power_w.items()},
        float(out.lambda_joint[0]), bool(out.singular_flag[0]))


def _concat(outcomes):
    return TrialOutcome(
        np.concatenate([o.nmse_benchmark for o in outcomes]),
        np.concatenate([o.nmse_optimal for o in outcomes]),
        {k: np.concatenate([o.power_w[k] for o in outcomes]) for k in outcomes[0].power_w},
        np.concatenate([o.lambda_joint for o in outcomes]),
        np.concatenate([o.singular_flag for o in outcomes]))


def _run_chunk(args):
    point, seed, start, stop, schemes = args
    raw = draw_raw(seed, range(start, stop), point.N, point.K)
    return evaluate(point, raw, schemes)


def run_point(point, trials, seed, schemes=SCHEMES, workers=1, batch=BATCH):
    """All trials at one point, in trial-index order."""
    chunks = [(point, seed, a, min(a + batch, trials), schemes) for a in range(0, trials, batch)]
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(_run_chunk, chunks))
    else:
        outs = [_run_chunk(c) for c in chunks]
    return _concat(outs)


def _mean_se(x):
    n = len(x)
    if n == 0:
        return math.nan, math.nan
    mean = math.fsum(x) / n
    if n < 2:
        return mean, math.nan
    var = math.fsum((np.asarray(x) - mean) ** 2) / (n - 1)
    return mean, math.sqrt(var / n)


@dataclass
class MetricSeries:
    """Aggregated results of one sweep (linear means; dB views are derived)."""

    axis: str
    values: tuple
    seed: int
    trials: int
    schemes: tuple
    nmse: dict  # estimator scheme -> list of (mean, se), linear
    power: dict  # scheme -> list of (mean, se), watts
    eff_factor: list  # (1 - tau_c / tau) per point
    singular: list
    valid: list

    def nmse_db(self, scheme):
        return np.array([float(to_db(m)) for m, _ in self.nmse[scheme]])

    def power_dbm(self, scheme):
        return np.array([float(to_dbm(m)) for m, _ in self.power[scheme]])

    def eff_power_dbm(self, scheme):
        return np.array([float(to_dbm(f * m)) for f, (m, _) in zip(self.eff_factor, self.power[scheme])])

    def gains(self, scheme, reference="benchmark"):
        """Per-point linear power gain ``(P - P_ref) / P_ref``."""
        return np.array([(p - r) / r for (p, _), (r, _) in zip(self.power[scheme], self.power[reference])])

    def rows(self):
        """Flat records in CSV column order."""
        out = []
        db = 10 / math.log(10)
        for i, v in enumerate(self.values):
            common = {"trials": self.valid[i], "singular_trials": self.singular[i], "seed": self.seed}
            for scheme in NMSE_SCHEMES:
                if scheme in self.nmse:
                    m, se = self.nmse[scheme][i]
                    out.append({"sweep_axis": self.axis, "sweep_value": v, "scheme": scheme,
                                "metric": "nmse_db", "mean": float(to_db(m)), "std_err": db * se / m, **common})
            for scheme in self.schemes:
                m, se = self.power[scheme][i]
                f = self.eff_factor[i]
                out.append({"sweep_axis": self.axis, "sweep_value": v, "scheme": scheme,
                            "metric": "power_dbm", "mean": float(to_dbm(m)), "std_err": db * se / m, **common})
                out.append({"sweep_axis": self.axis, "sweep_value": v, "scheme": scheme,
                            "metric": "eff_power_dbm", "mean": float(to_dbm(f * m)), "std_err": db * se / m,
                            **common})
        return out


def default_workers():
    env = os.environ.get("IQBEAM_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def run_sweep(cfg, workers=1):
    nmse = {s: [] for s in NMSE_SCHEMES}
    power = {s: [] for s in cfg.schemes}
    eff, singular, valid = [], [], []
    for value in cfg.values:
        point = cfg.point(value)
        out = run_point(point, cfg.trials, cfg.seed, cfg.schemes, workers)
        ok = ~out.singular_flag
        nmse["benchmark"].append(_mean_se(out.nmse_benchmark[ok]))
        nmse["opt_lse"].append(_mean_se(out.nmse_optimal[ok]))
        for s in cfg.schemes:
            power[s].append(_mean_se(out.power_w[s][ok]))
        eff.append(1 - point.link.tau_c / point.link.tau)
        singular.append(int(out.singular_flag.sum()))
        valid.append(int(ok.sum()))
    return MetricSeries(cfg.axis, tuple(cfg.values), cfg.seed, cfg.trials, tuple(cfg.schemes),
                        nmse, power, eff, singular, valid)


def gain_summary(series):
    """Average linear power gain of each scheme over the benchmark.

    ``series`` maps each of the four sweep axes to its :class:`MetricSeries`.
    Gains are averaged over the points of each sweep, then over sweeps.
    Returns ``{"per_sweep": {axis: {scheme: gain}}, "overall": {scheme: gain}}``
    with gains as fractions.
    """
    missing = set(AXES) - set(series)
    if missing:
        raise ValueError(f"missing sweeps: {sorted(missing)}")
    schemes = None
    per_sweep = {}
    for axis in AXES:
        s = series[axis]
        if "benchmark" not in s.power:
            raise ValueError(f"sweep {axis!r} lacks the benchmark scheme")
        names = [k for k in SCHEMES if k in s.power]
        schemes = names if schemes is None else [k for k in schemes if k in names]
        per_sweep[axis] = {k: float(np.mean(s.gains(k))) for k in names}
    overall = {k: float(np.mean([per_sweep[a][k] for a in AXES])) for k in schemes}
    return {"per_sweep": per_sweep, "overall": overall}
