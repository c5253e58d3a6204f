"""Seeded parallel Monte Carlo experiments.

Every trial derives its randomness from (master seed, experiment tag, grid
index, trial index), so results are identical for any worker count and any
scheduling.  Workers only simulate statistics; thresholds and decisions are
applied in the parent, which keeps the decision logic in one place.

Theorem-style power statements come with unspecified constants; those are
estimated once on pilot configurations, pinned into a versioned fixture
shipped with the package, and never re-fitted inside verification runs.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np

from . import rng
from .adaptive import simulate_statistics, u_gamma_search
from .channel import ChannelSpec, cell_indices
from .dyadic import PiecewiseConstantDensity, ProbabilityVector, embed_multinomial, project
from .gof import (
    ConfigError,
    quantile_order_index,
    sample_from_density,
    select_resolution,
    statistic,
)
from .rates import AlternativeSpec, RateQuery, continuous_rate_bounds, generate_alternative

KINDS = ("level", "power-curve", "rate-regression", "discrete", "adaptive")
_TAG = {kind: i + 1 for i, kind in enumerate(KINDS)}
_CAL, _TRIAL = 1, 2

CSV_COLUMNS = (
    "n", "alpha", "gamma", "beta", "s", "R", "d", "L",
    "epsilon", "rate", "se", "trials", "label",
)

WORKERS_ENV = "LDPGOF_WORKERS"


def binomial_se(rate: float, trials: int) -> float:
    return math.sqrt(rate * (1.0 - rate) / trials)


def loglog_slope(xs, ys) -> float:
    """OLS slope of log y against log x."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    dx = lx - lx.mean()
    return float(np.sum(dx * (ly - ly.mean())) / np.sum(dx * dx))


@dataclass(frozen=True)
class ExperimentConfig:
    """Grid and budgets of one experiment."""

    kind: str
    ns: tuple[int, ...]
    alphas: tuple[float, ...]
    gammas: tuple[float, ...] = (0.05,)
    beta: float = 0.1
    s: float = 1.0
    radius: float = 1.0
    ds: tuple[int, ...] = ()
    levels: tuple[int, ...] = ()          # fixed resolutions; empty selects from (n, alpha, s)
    f0_cells: tuple[float, ...] = ()      # null density cell values; empty means uniform
    trials: int = 1000
    replicates: int = 999
    calibrations: int = 1                 # independent threshold calibrations cycled over trials
    probe_trials: int = 600
    bisect_iters: int = 12
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}")
        if not self.ns or any(n < 2 for n in self.ns):
            raise ConfigError("ns must be nonempty with n >= 2")
        if not self.alphas or any(a <= 0 for a in self.alphas):
            raise ConfigError("alphas must be nonempty and positive")
        if any(not 0 < g < 1 for g in self.gammas) or not self.gammas:
            raise ConfigError("gammas must lie in (0,1)")
        if not 0 < self.beta < 1:
            raise ConfigError("beta must lie in (0,1)")
        if self.trials < 100:
            raise ConfigError("trials must be at least 100")
        if self.replicates < 1 or self.calibrations < 1:
            raise ConfigError("replicates and calibrations must be positive")
        if self.kind == "discrete" and not self.ds:
            raise ConfigError("discrete experiments need ds")
        if self.kind == "rate-regression" and len(self.alphas) not in (1, len(self.ns)):
            raise ConfigError("rate-regression needs one alpha or one per n")

    def f0(self) -> PiecewiseConstantDensity:
        if self.f0_cells:
            return PiecewiseConstantDensity(len(self.f0_cells), np.asarray(self.f0_cells))
        return PiecewiseConstantDensity.uniform()

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        obj = json.loads(text)
        for key in ("ns", "alphas", "gammas", "ds", "levels", "f0_cells"):
            if key in obj and obj[key] is not None:
                obj[key] = tuple(obj[key])
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass
class ExperimentResult:
    """Per-grid-point records plus derived summaries and full provenance."""

    kind: str
    records: list[dict]
    derived: dict
    config: dict
    seed: int

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentResult":
        return cls(**json.loads(text))

    def to_csv(self) -> str:
        lines = [",".join(CSV_COLUMNS)]
        for rec in self.records:
            cells = []
            for col in CSV_COLUMNS:
                v = rec.get(col)
                cells.append("" if v is None else (repr(v) if isinstance(v, float) else str(v)))
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"


def emit(result: ExperimentResult, fmt: str, out_dir: str, basename: str | None = None) -> list[str]:
    """Write CSV and/or JSON files; returns the paths written."""
    os.makedirs(out_dir, exist_ok=True)
    base = basename or result.kind
    paths = []
    if fmt in ("csv", "both"):
        path = os.path.join(out_dir, f"{base}.csv")
        with open(path, "w") as fh:
            fh.write(result.to_csv())
        paths.append(path)
    if fmt in ("json", "both"):
        path = os.path.join(out_dir, f"{base}.json")
        with open(path, "w") as fh:
            fh.write(result.to_json())
        paths.append(path)
    if not paths:
        raise ConfigError(f"unknown format {fmt!r}")
    return paths


def effective_workers(requested: int) -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{WORKERS_ENV}={env!r} is not an integer") from None
    return max(1, requested)


# ---------------------------------------------------------------------------
# worker side: pure statistic simulation


def _spec_from_job(job: dict) -> ChannelSpec:
    if job["family"]:
        return ChannelSpec.adaptive_family(job["alpha"], job["n"])
    return ChannelSpec.single_level(job["alpha"], job["level"])


def _simulate_block(args) -> np.ndarray:
    """Statistics for trials [t0, t1) of one job.

    Fixed-resolution jobs return shape (t1-t0,); family jobs return
    (t1-t0, #resolutions).  Trial t draws its sample from stream
    (*path, t, 0) and its noise from (*path, t, 1), independent of blocking.
    """
    job, t0, t1 = args
    spec = _spec_from_job(job)
    f0 = PiecewiseConstantDensity(len(job["f0_values"]), np.asarray(job["f0_values"]))
    sampler = PiecewiseConstantDensity(len(job["sample_values"]), np.asarray(job["sample_values"]))
    alpha0s = [project(f0, L).coeffs for L in spec.levels]
    path = tuple(job["path"])
    n = job["n"]
    if job["family"]:
        out = np.empty((t1 - t0, len(spec.levels)))
    else:
        out = np.empty(t1 - t0)
    for t in range(t0, t1):
        xs = sample_from_density(sampler, n, rng.stream(path, t, 0))
        if job["family"]:
            out[t - t0] = simulate_statistics(xs, spec, alpha0s, path + (t, 1))
        else:
            Z = spec.noise_scales[0] * rng.laplace_unit(rng.stream(path + (t, 1), 0), (n, spec.level))
            Z[np.arange(n), cell_indices(xs, spec.level)] += math.sqrt(spec.level)
            out[t - t0] = statistic(Z, alpha0s[0])
    return out


class _Runner:
    """Deterministic fan-out of simulation blocks over a process pool."""

    def __init__(self, workers: int):
        self.workers = workers
        self._pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def simulate(self, job: dict, trials: int) -> np.ndarray:
        blocks = 1 if self._pool is None else min(trials, self.workers * 4)
        edges = np.linspace(0, trials, blocks + 1).astype(int)
        tasks = [(job, int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if a < b]
        if self._pool is None:
            parts = [_simulate_block(t) for t in tasks]
        else:
            parts = list(self._pool.map(_simulate_block, tasks))
        return np.concatenate(parts)


def _job(cfg: ExperimentConfig, path: tuple[int, ...], n: int, alpha: float,
         level: int | None, sampler: PiecewiseConstantDensity,
         f0: PiecewiseConstantDensity) -> dict:
    return {
        "n": n,
        "alpha": alpha,
        "level": level,
        "family": level is None,
        "path": (cfg.seed,) + path,
        "f0_values": f0.values.tolist(),
        "sample_values": sampler.values.tolist(),
    }


# ---------------------------------------------------------------------------
# calibration helpers (null thresholds), shared by the experiment kinds


def _fixed_thresholds(runner, cfg, path, n, alpha, level, f0, gamma) -> np.ndarray:
    """cfg.calibrations independent conservative null quantiles."""
    idx = quantile_order_index(cfg.replicates, gamma)
    out = np.empty(cfg.calibrations)
    for r in range(cfg.calibrations):
        job = _job(cfg, path + (_CAL, r), n, alpha, level, f0, f0)
        stats = runner.simulate(job, cfg.replicates)
        out[r] = np.sort(stats)[idx - 1]
    return out


def _adaptive_thresholds(runner, cfg, path, n, alpha, f0, gamma):
    """Per-calibration (u, threshold-vector) pairs for the aggregated test."""
    out = []
    for r in range(cfg.calibrations):
        job = _job(cfg, path + (_CAL, r), n, alpha, None, f0, f0)
        stats = runner.simulate(job, cfg.replicates)
        out.append(u_gamma_search(stats, gamma))
    return out


# ---------------------------------------------------------------------------
# experiment kinds


def _base_record(cfg: ExperimentConfig, **kw) -> dict:
    rec = {c: None for c in CSV_COLUMNS}
    rec.update({"beta": cfg.beta, "s": cfg.s, "R": cfg.radius, "trials": cfg.trials})
    rec.update(kw)
    return rec


def run_level_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """First-kind error rates under f = f0 (fixed-resolution or adaptive test)."""
    if cfg.kind not in ("level", "adaptive"):
        raise ConfigError(f"kind {cfg.kind!r} is not a level experiment")
    f0 = cfg.f0()
    records = []
    t_start = time.perf_counter()
    with _Runner(effective_workers(cfg.workers)) as runner:
        gi = 0
        for n in cfg.ns:
            for alpha in cfg.alphas:
                levels = (cfg.levels or (None,)) if cfg.kind == "level" else (None,)
                for level in levels:
                    L = level
                    if cfg.kind == "level" and L is None:
                        _, L = select_resolution(n, alpha, cfg.s)
                    base = (_TAG[cfg.kind], gi)
                    trial_job = _job(cfg, base + (_TRIAL,), n, alpha,
                                     L if cfg.kind == "level" else None, f0, f0)
                    stats = runner.simulate(trial_job, cfg.trials)
                    for gamma in cfg.gammas:
                        if cfg.kind == "level":
                            thr = _fixed_thresholds(runner, cfg, base, n, alpha, L, f0, gamma)
                            reject = stats > thr[np.arange(cfg.trials) % cfg.calibrations]
                        else:
                            cals = _adaptive_thresholds(runner, cfg, base, n, alpha, f0, gamma)
                            thr_mat = np.stack([t for _, t in cals])
                            reject = (
                                stats > thr_mat[np.arange(cfg.trials) % cfg.calibrations]
                            ).any(axis=1)
                        rate = float(np.mean(reject))
                        records.append(_base_record(
                            cfg, n=n, alpha=alpha, gamma=gamma,
                            L=L if cfg.kind == "level" else None,
                            epsilon=0.0, rate=rate, se=binomial_se(rate, cfg.trials),
                            label=cfg.kind,
                        ))
                    gi += 1
    derived = {"runtime_s": time.perf_counter() - t_start}
    return ExperimentResult(cfg.kind, records, derived, json.loads(cfg.to_json()), cfg.seed)


def _coerce_alternative(entry, cfg) -> tuple[PiecewiseConstantDensity | None, float | None, str | None]:
    """(density, epsilon-like amplitude, skip reason)."""
    if isinstance(entry, PiecewiseConstantDensity):
        return entry, None, None
    if isinstance(entry, AlternativeSpec):
        return generate_alternative(entry), entry.epsilon, None
    if isinstance(entry, dict):
        signs = tuple(entry.get("signs", [1] * entry["level"]))
        try:
            spec = AlternativeSpec(entry["level"], entry["epsilon"], signs)
        except ValueError as exc:
            return None, entry["epsilon"], str(exc)
        return generate_alternative(spec), spec.epsilon, None
    raise ConfigError(f"unsupported alternative {entry!r}")


def run_power_curve(cfg: ExperimentConfig, alternatives) -> ExperimentResult:
    """Rejection rate per alternative at one (n, alpha, gamma) point.

    Trials share random-number paths across alternatives, so the estimated
    power curve is monotone up to Monte Carlo noise when the alternatives
    are nested.  Infeasible alternatives are recorded and skipped.
    """
    if cfg.kind not in ("power-curve", "adaptive"):
        raise ConfigError(f"kind {cfg.kind!r} is not a power experiment")
    adaptive = cfg.kind == "adaptive"
    f0 = cfg.f0()
    n, alpha, gamma = cfg.ns[0], cfg.alphas[0], cfg.gammas[0]
    L = None
    if not adaptive:
        L = cfg.levels[0] if cfg.levels else select_resolution(n, alpha, cfg.s)[1]
    records, skipped = [], []
    t_start = time.perf_counter()
    with _Runner(effective_workers(cfg.workers)) as runner:
        base = (_TAG[cfg.kind], 0)
        if adaptive:
            cals = _adaptive_thresholds(runner, cfg, base, n, alpha, f0, gamma)
            thr_mat = np.stack([t for _, t in cals])
        else:
            thr = _fixed_thresholds(runner, cfg, base, n, alpha, L, f0, gamma)
        for density, eps, reason in map(lambda e: _coerce_alternative(e, cfg), alternatives):
            if density is None:
                skipped.append({"epsilon": eps, "reason": reason})
                records.append(_base_record(cfg, n=n, alpha=alpha, gamma=gamma, L=L,
                                            epsilon=eps, rate=None, se=None, label="skipped"))
                continue
            job = _job(cfg, base + (_TRIAL,), n, alpha, L, density, f0)
            stats = runner.simulate(job, cfg.trials)
            if adaptive:
                reject = (stats > thr_mat[np.arange(cfg.trials) % cfg.calibrations]).any(axis=1)
            else:
                reject = stats > thr[np.arange(cfg.trials) % cfg.calibrations]
            rate = float(np.mean(reject))
            records.append(_base_record(cfg, n=n, alpha=alpha, gamma=gamma, L=L,
                                        epsilon=eps, rate=rate,
                                        se=binomial_se(rate, cfg.trials), label="power"))
    rates = [r["rate"] for r in records if r["rate"] is not None]
    ses = [r["se"] for r in records if r["rate"] is not None]
    monotone = all(
        rates[i + 1] >= rates[i] - math.hypot(ses[i], ses[i + 1])
        for i in range(len(rates) - 1)
    )
    derived = {
        "monotone": monotone,
        "skipped": skipped,
        "runtime_s": time.perf_counter() - t_start,
    }
    return ExperimentResult(cfg.kind, records, derived, json.loads(cfg.to_json()), cfg.seed)


def _power_at(runner, cfg, base, n, alpha, L, f0, density, thresholds, trials) -> float:
    """Estimated rejection rate; L=None runs the aggregated (family) test,
    in which case ``thresholds`` is a list of (u, vector) calibrations."""
    job = _job(cfg, base + (_TRIAL,), n, alpha, L, density, f0)
    stats = runner.simulate(job, trials)
    if L is None:
        thr_mat = np.stack([t for _, t in thresholds])
        reject = (stats > thr_mat[np.arange(trials) % len(thresholds)]).any(axis=1)
    else:
        reject = stats > thresholds[np.arange(trials) % len(thresholds)]
    return float(np.mean(reject))


def _bisect_amplitude(runner, cfg, base, n, alpha, L, f0, density_of, lo, hi, target):
    """Smallest amplitude with estimated power >= target, or None.

    Requires power(lo) < target < power(hi) (checked first, as brackets).
    """
    if L is None:
        thr = _adaptive_thresholds(runner, cfg, base, n, alpha, f0, cfg.gammas[0])
    else:
        thr = _fixed_thresholds(runner, cfg, base, n, alpha, L, f0, cfg.gammas[0])
    p_lo = _power_at(runner, cfg, base, n, alpha, L, f0, density_of(lo), thr, cfg.probe_trials)
    p_hi = _power_at(runner, cfg, base, n, alpha, L, f0, density_of(hi), thr, cfg.probe_trials)
    if not (p_lo < target < p_hi):
        return None, p_lo, p_hi
    for _ in range(cfg.bisect_iters):
        mid = 0.5 * (lo + hi)
        if _power_at(runner, cfg, base, n, alpha, L, f0, density_of(mid), thr, cfg.probe_trials) >= target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi), p_lo, p_hi


def run_rate_regression(cfg: ExperimentConfig) -> ExperimentResult:
    """Critical detail-perturbation amplitude per n, with log-log slope fits.

    For each n the test runs at the selected optimal resolution L*(n); the
    probed alternatives are signed-detail perturbations at level L*/2, the
    finest family fully visible inside the resolution-L* projection space
    (a detail at level L* itself is orthogonal to that space).  The
    amplitude where power crosses 1 - beta is located by bisection, and the
    fitted slope of log(amplitude) against log(n) is compared with the
    slope predicted by the constant-free upper rate kernel mapped through
    the same staircase (prediction amplitude = kernel(n) / (L*(n)/2)).
    """
    if cfg.kind != "rate-regression":
        raise ConfigError("kind must be rate-regression")
    if len(cfg.ns) < 4:
        raise ConfigError("rate regression needs at least 4 sample sizes")
    f0 = cfg.f0()
    target = 1.0 - cfg.beta
    alphas = cfg.alphas if len(cfg.alphas) == len(cfg.ns) else cfg.alphas * len(cfg.ns)
    records = []
    eps_star, kernel_eps, fitted_ns = [], [], []
    t_start = time.perf_counter()
    with _Runner(effective_workers(cfg.workers)) as runner:
        for gi, (n, alpha) in enumerate(zip(cfg.ns, alphas)):
            _, L = select_resolution(n, alpha, cfg.s)
            base = (_TAG[cfg.kind], gi)
            if L < 2:
                records.append(_base_record(
                    cfg, n=n, alpha=alpha, gamma=cfg.gammas[0], L=L,
                    epsilon=None, rate=None, se=None, label="no_bracket",
                ))
                continue
            lvl = L // 2

            def density_of(eps, lvl=lvl):
                return generate_alternative(AlternativeSpec(lvl, eps, (1,) * lvl))

            hi = 0.98 / lvl  # nonnegativity cap on the detail amplitude
            star, p_lo, p_hi = _bisect_amplitude(
                runner, cfg, base, n, alpha, L, f0, density_of, hi / 64.0, hi, target
            )
            upper = continuous_rate_bounds(RateQuery(n=n, alpha=alpha, s=cfg.s))[1]
            records.append(_base_record(
                cfg, n=n, alpha=alpha, gamma=cfg.gammas[0], L=L,
                epsilon=star, rate=p_hi, se=binomial_se(min(max(p_hi, 1e-9), 1 - 1e-9), cfg.probe_trials),
                label="epsilon_star" if star is not None else "no_bracket",
            ))
            if star is not None:
                eps_star.append(star)
                kernel_eps.append(upper / lvl)
                fitted_ns.append(n)
    derived = {"runtime_s": time.perf_counter() - t_start, "ns_fitted": fitted_ns}
    if len(fitted_ns) >= 2:
        derived["slope_empirical"] = loglog_slope(fitted_ns, eps_star)
        derived["slope_kernel"] = loglog_slope(fitted_ns, kernel_eps)
        derived["kernel_epsilons"] = kernel_eps
        derived["epsilon_stars"] = eps_star
    return ExperimentResult(cfg.kind, records, derived, json.loads(cfg.to_json()), cfg.seed)


def run_discrete_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Level control and critical l2 separation across class counts.

    Observations are embedded in [0,1) (labels spread uniformly over their
    cells) and released through the d-cell channel; alternatives are
    single-class bumps of the null probability vector.
    """
    if cfg.kind != "discrete":
        raise ConfigError("kind must be discrete")
    from .rates import probability_bump

    records = []
    stars = []
    target = 1.0 - cfg.beta
    t_start = time.perf_counter()
    with _Runner(effective_workers(cfg.workers)) as runner:
        gi = 0
        for n in cfg.ns:
            for alpha in cfg.alphas:
                for d in cfg.ds:
                    if cfg.f0_cells:
                        if len(cfg.f0_cells) != d:
                            raise ConfigError("f0_cells must have d entries")
                        p0 = ProbabilityVector(d, np.asarray(cfg.f0_cells) / np.sum(cfg.f0_cells))
                    else:
                        p0 = ProbabilityVector.uniform(d)
                    f0 = embed_multinomial(p0)
                    base = (_TAG[cfg.kind], gi)
                    gamma = cfg.gammas[0]
                    thr = _fixed_thresholds(runner, cfg, base, n, alpha, d, f0, gamma)
                    job = _job(cfg, base + (_TRIAL,), n, alpha, d, f0, f0)
                    stats = runner.simulate(job, cfg.trials)
                    reject = stats > thr[np.arange(cfg.trials) % cfg.calibrations]
                    rate = float(np.mean(reject))
                    records.append(_base_record(
                        cfg, n=n, alpha=alpha, gamma=gamma, d=d, L=d, epsilon=0.0,
                        rate=rate, se=binomial_se(rate, cfg.trials), label="level",
                    ))

                    def density_of(sep, d=d, p0=p0):
                        # shift p0 by a class-0 bump of exact l2 size sep
                        shift = probability_bump(d, sep).probs - 1.0 / d
                        return embed_multinomial(ProbabilityVector(d, p0.probs + shift))

                    # keep every class probability inside [0,1] at the bracket top
                    sep_flat = float(p0.probs.min()) * math.sqrt(d * (d - 1.0))
                    sep_peak = (1.0 - float(p0.probs[0])) * math.sqrt(d / (d - 1.0))
                    hi = 0.95 * min(sep_flat, sep_peak)
                    star, p_lo, p_hi = _bisect_amplitude(
                        runner, cfg, base + (9,), n, alpha, d, f0, density_of, hi / 256.0, hi, target
                    )
                    records.append(_base_record(
                        cfg, n=n, alpha=alpha, gamma=gamma, d=d, L=d, epsilon=star,
                        rate=p_hi, se=None, label="separation_star" if star else "no_bracket",
                    ))
                    stars.append({"n": n, "alpha": alpha, "d": d, "separation_star": star})
                    gi += 1
    derived = {"runtime_s": time.perf_counter() - t_start, "separation_stars": stars}
    return ExperimentResult(cfg.kind, records, derived, json.loads(cfg.to_json()), cfg.seed)


def run_experiment(cfg: ExperimentConfig, alternatives=None) -> ExperimentResult:
    if cfg.kind in ("level",):
        return run_level_experiment(cfg)
    if cfg.kind == "adaptive" and alternatives is None:
        return run_level_experiment(cfg)
    if cfg.kind in ("power-curve", "adaptive"):
        if alternatives is None:
            raise ConfigError("power experiments need alternatives")
        return run_power_curve(cfg, alternatives)
    if cfg.kind == "rate-regression":
        return run_rate_regression(cfg)
    if cfg.kind == "discrete":
        return run_discrete_experiment(cfg)
    raise ConfigError(f"unknown kind {cfg.kind!r}")


# ---------------------------------------------------------------------------
# pinned power constants


def pinned_constants() -> dict:
    with resources.files("ldpgof").joinpath("fixtures/calibrated_constants.json").open() as fh:
        return json.load(fh)


def pinned_constant(name: str) -> float:
    return float(pinned_constants()[name]["value"])


def continuous_separation_sq(c: float, n: int, alpha: float, L: int,
                             f0_norm: float = 1.0) -> float:
    """Projected squared separation c*(||f|| + ||f0|| + sigma^2) sqrt(L)/n,
    solved for alternatives orthogonal to a uniform null (||f||^2 = 1 + x)."""
    sigma_sq = 8.0 * L / alpha**2
    x = 0.0
    for _ in range(60):
        x_new = c * (math.sqrt(f0_norm**2 + x) + f0_norm + sigma_sq) * math.sqrt(L) / n
        if abs(x_new - x) < 1e-14 * max(1.0, x_new):
            x = x_new
            break
        x = x_new
    return x


def discrete_separation(c: float, n: int, alpha: float, d: int) -> float:
    """l2 separation c * n^(-1/2) * (1 v d^(1/4)/alpha)."""
    return c * n ** (-0.5) * max(1.0, d**0.25 / alpha)


def adaptive_separation_sq(c: float, n: int, alpha: float, s: float) -> float:
    """Squared separation from the aggregated-test rate
    c * [ (n alpha^2 / log^(5/2) n)^(-2s/(4s+3)) v (n/sqrt(log n))^(-2s/(4s+1)) ]."""
    ln = math.log(n)
    priv = (n * alpha**2 / ln**2.5) ** (-2.0 * s / (4.0 * s + 3.0))
    classic = (n / math.sqrt(ln)) ** (-2.0 * s / (4.0 * s + 1.0))
    return (c * max(priv, classic)) ** 2


# ---------------------------------------------------------------------------
# pilot calibration of the pinned constants (run once; results are shipped
# as a fixture and reused -- never re-fitted inside verification runs)

_PILOT_POWER = 0.95


def _pilot_cfg(kind, n, alpha, gamma, seed, trials, replicates, workers, **kw) -> ExperimentConfig:
    return ExperimentConfig(
        kind=kind, ns=(n,), alphas=(alpha,), gammas=(gamma,), trials=trials,
        replicates=replicates, probe_trials=trials, seed=seed, workers=workers, **kw
    )


def _calibrate_constant(cfg, n, alpha, L, f0, density_of, c_lo, c_hi) -> dict:
    """Bisect the rate constant until pilot power crosses the target."""
    with _Runner(effective_workers(cfg.workers)) as runner:
        base = (9, 0)
        star, p_lo, p_hi = _bisect_amplitude(
            runner, cfg, base, n, alpha, L, f0, density_of, c_lo, c_hi, _PILOT_POWER
        )
    if star is None:
        raise ConfigError(
            f"pilot bracket failed: power({c_lo})={p_lo}, power({c_hi})={p_hi}"
        )
    return {"value": star, "power_lo": p_lo, "power_hi": p_hi}


def calibrate_continuous_power_constant(seed=1000003, n=1000, alpha=1.0, s=1.0,
                                        gamma=0.05, trials=1500, replicates=999,
                                        workers=2) -> dict:
    _, L = select_resolution(n, alpha, s)
    from .rates import bump_for_separation

    cfg = _pilot_cfg("power-curve", n, alpha, gamma, seed, trials, replicates, workers)

    def density_of(c):
        return bump_for_separation(L, continuous_separation_sq(c, n, alpha, L))

    out = _calibrate_constant(cfg, n, alpha, L, cfg.f0(), density_of, 0.5, 30.0)
    out.update({"pilot": {"n": n, "alpha": alpha, "s": s, "L": L, "gamma": gamma,
                          "beta": 1 - _PILOT_POWER, "trials": trials, "seed": seed}})
    return out


def calibrate_discrete_power_constant(seed=1000033, n=1000, d=16, alpha=1.0,
                                      gamma=0.05, trials=1500, replicates=999,
                                      workers=2) -> dict:
    from .rates import probability_bump

    cfg = _pilot_cfg("power-curve", n, alpha, gamma, seed, trials, replicates, workers)
    f0 = embed_multinomial(ProbabilityVector.uniform(d))

    def density_of(c):
        return embed_multinomial(probability_bump(d, discrete_separation(c, n, alpha, d)))

    out = _calibrate_constant(cfg, n, alpha, d, f0, density_of, 0.5, 14.0)
    out.update({"pilot": {"n": n, "alpha": alpha, "d": d, "gamma": gamma,
                          "beta": 1 - _PILOT_POWER, "trials": trials, "seed": seed}})
    return out


def calibrate_adaptive_power_constant(seed=1000211, n=100, alpha=30.0, s=1.0,
                                      bump_level=8, gamma=0.05, trials=500,
                                      replicates=1280, workers=2) -> dict:
    """Aggregated-test pilot.  The family's noise scales carry a |set|*2^(J/2)
    factor, so at desk-scale n only a generous budget alpha leaves any
    density-bounded alternative detectable; the pilot runs in that regime."""
    from .rates import bump_for_separation

    cfg = _pilot_cfg("adaptive", n, alpha, gamma, seed, trials, replicates, workers)

    def density_of(c):
        return bump_for_separation(bump_level, adaptive_separation_sq(c, n, alpha, s))

    out = _calibrate_constant(cfg, n, alpha, None, cfg.f0(), density_of, 0.5, 12.0)
    out.update({"pilot": {"n": n, "alpha": alpha, "s": s, "bump_level": bump_level,
                          "gamma": gamma, "beta": 1 - _PILOT_POWER, "trials": trials,
                          "seed": seed}})
    return out


def calibrate_pinned_constants(workers=2, out_path=None) -> dict:
    """Run all pilots; optionally write the fixture file."""
    constants = {
        "continuous_power": calibrate_continuous_power_constant(workers=workers),
        "discrete_power": calibrate_discrete_power_constant(workers=workers),
        "adaptive_power": calibrate_adaptive_power_constant(workers=workers),
    }
    if out_path:
        with open(out_path, "w") as fh:
            json.dump(constants, fh, sort_keys=True, indent=1)
    return constants
