"""Monte Carlo MSE estimation and the parameter sweeps behind the figures.

Randomness is organised in fixed blocks of ``BLOCK`` trials. Block ``b`` draws
its datasets from the stream ``SeedSequence(seed, spawn_key=(0, b))`` and each
mechanism kind draws its noise from ``(1 + kind index, b)``. Results therefore
do not depend on the number of worker threads, and running a mechanism alone
or next to others gives the same numbers (common random numbers across
mechanisms and across sweep points).
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from hdp_mean import bounds
from hdp_mean.estimators import KINDS, AnalyticMse, MechanismSpec, build
from hdp_mean.privacy import DOMAIN_HIGH, DOMAIN_LOW, DomainError
from hdp_mean.weights import InfeasibleError, TwoGroupProfile, solve_two_group

BLOCK = 500
MIN_TRIALS = 100
FULL_TRIALS = 200_000
CI_TRIALS = 20_000
TABLE2_TRIALS = 20_000

_DATA_STREAM = 0
_EPS_STREAM = 100

DIST_KINDS = ("UNIFORM", "RADEMACHER_HALF", "BETA23_SHIFTED", "POINT_MASS", "LECAM")


@dataclass(frozen=True)
class DistributionSpec:
    kind: str
    value: float = 0.0
    delta: float = 0.0
    sign: int = 1

    def __post_init__(self):
        kind = self.kind.upper()
        if kind not in DIST_KINDS:
            raise ValueError(f"unknown distribution {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == "POINT_MASS" and not DOMAIN_LOW <= self.value <= DOMAIN_HIGH:
            raise DomainError("point mass must lie in [-0.5, 0.5]")
        if kind == "LECAM":
            if not 0 <= self.delta <= 1:
                raise DomainError("delta must lie in [0, 1]")
            if self.sign not in (1, -1):
                raise DomainError("sign must be +1 or -1")

    @property
    def label(self) -> str:
        if self.kind == "POINT_MASS":
            return f"point_mass({self.value:g})"
        if self.kind == "LECAM":
            return f"lecam({self.delta:g},{self.sign:+d})"
        return self.kind.lower()

    @property
    def true_mean(self) -> float:
        return {
            "UNIFORM": 0.0,
            "RADEMACHER_HALF": 0.0,
            "BETA23_SHIFTED": -0.1,
            "POINT_MASS": self.value,
            "LECAM": self.sign * self.delta / 2.0,
        }[self.kind]

    @property
    def true_variance(self) -> float:
        return {
            "UNIFORM": 1.0 / 12.0,
            "RADEMACHER_HALF": 0.25,
            "BETA23_SHIFTED": 0.04,
            "POINT_MASS": 0.0,
            "LECAM": (1.0 - self.delta ** 2) / 4.0,
        }[self.kind]

    def sample(self, rng, size):
        if self.kind == "UNIFORM":
            return rng.random(size) - 0.5
        if self.kind == "RADEMACHER_HALF":
            return np.where(rng.random(size) < 0.5, 0.5, -0.5)
        if self.kind == "BETA23_SHIFTED":
            return rng.beta(2.0, 3.0, size) - 0.5
        if self.kind == "POINT_MASS":
            return np.full(size, float(self.value))
        p_high = (1.0 + self.sign * self.delta) / 2.0
        return np.where(rng.random(size) < p_high, 0.5, -0.5)


UNIFORM = DistributionSpec("UNIFORM")
RADEMACHER_HALF = DistributionSpec("RADEMACHER_HALF")
BETA23_SHIFTED = DistributionSpec("BETA23_SHIFTED")


def sample_dataset(dist: DistributionSpec, n: int, rng) -> np.ndarray:
    if n < 1:
        raise DomainError("n must be >= 1")
    return dist.sample(rng, n)


@dataclass(frozen=True)
class SimResult:
    mechanism: str
    mse: float
    stderr: float
    trials: int
    seed: int
    analytic_ref: AnalyticMse
    realized_f: float
    reason: str = ""

    @property
    def infeasible(self) -> bool:
        return bool(self.reason)

    def within(self, target, k=3.0) -> bool:
        return abs(self.mse - target) <= k * self.stderr


def _stream(seed, key, block):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(key, block))))


def _kind_key(kind):
    return 1 + KINDS.index(kind)


def _blocks(trials):
    sizes = [BLOCK] * (trials // BLOCK)
    if trials % BLOCK:
        sizes.append(trials % BLOCK)
    return sizes


def _realized_f(spec):
    if spec.profile is None:
        return math.nan
    n1, _ = spec.profile.group_sizes
    return n1 / int(round(spec.profile.n))


def estimate_mse_many(specs, dist: DistributionSpec, trials: int, seed: int, threads: int = 1):
    """Monte Carlo MSE of several mechanisms on shared datasets.

    All specs must describe the same number of users.
    """
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials")
    specs = list(specs)
    mechs, results = [], [None] * len(specs)
    n = None
    for i, spec in enumerate(specs):
        if n is None:
            n = spec.privacy_vector.shape[0]
        elif spec.privacy_vector.shape[0] != n:
            raise ValueError("all mechanisms in one run must share n")
        try:
            mechs.append((i, build(spec)))
        except InfeasibleError as exc:
            results[i] = SimResult(spec.kind, math.inf, math.nan, trials, seed,
                                   AnalyticMse.infeasible(str(exc)), _realized_f(spec), str(exc))

    sizes = _blocks(trials)

    def run_block(b):
        X = dist.sample(_stream(seed, _DATA_STREAM, b), (sizes[b], n))
        return [m.release_batch(X, _stream(seed, _kind_key(m.spec.kind), b)) for _, m in mechs]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            outs = list(pool.map(run_block, range(len(sizes))))
    else:
        outs = [run_block(b) for b in range(len(sizes))]

    mu = dist.true_mean
    for j, (i, mech) in enumerate(mechs):
        est = np.concatenate([o[j] for o in outs])
        sq = (est - mu) ** 2
        mse = math.fsum(sq) / trials
        dev = sq.astype(np.longdouble) - np.longdouble(mse)
        var = float(np.sum(dev * dev) / (trials - 1))
        results[i] = SimResult(mech.kind, mse, math.sqrt(var / trials), trials, seed,
                               mech.analytic_mse(dist.true_variance, mu), _realized_f(mech.spec))
    return results


def estimate_mse(spec: MechanismSpec, dist: DistributionSpec, trials: int, seed: int, threads: int = 1) -> SimResult:
    return estimate_mse_many([spec], dist, trials, seed, threads)[0]


def _two_group(eps1, eps2, n, f):
    return TwoGroupProfile(eps1, eps2, n, f).realized()


def sweep_n(eps1, eps2, f, dist, n_values, trials, seed, kinds=("ADPM", "UNI", "SM", "PROPDPM", "LDPE"), threads=1):
    """MSE and the second-order transform ``(MSE - 1/(12 n)) n^2`` per n."""
    rows = []
    for n in n_values:
        prof = _two_group(eps1, eps2, n, f)
        res = estimate_mse_many([MechanismSpec(k, prof) for k in kinds], dist, trials, seed, threads)
        for r in res:
            n_ = int(prof.n)
            rows.append({
                "mechanism": r.mechanism, "n": n_, "f": prof.f, "eps1": prof.eps1, "eps2": prof.eps2,
                "mse": r.mse, "stderr": r.stderr, "analytic_mse": r.analytic_ref.total,
                "transform": (r.mse - 1.0 / (12.0 * n_)) * n_ * n_,
                "transform_se": r.stderr * n_ * n_,
                "reason": r.reason,
            })
    return rows


def weight_ratio(prof: TwoGroupProfile) -> float:
    sol = solve_two_group(prof)
    return sol.weights[1] / sol.weights[0]


def sweep_eps2(eps1, n, f, dist, eps2_values, trials, seed, kinds=("ADPM", "UNI", "SM", "PROPDPM", "LDPE"), threads=1):
    """MSE x 1e4 against eps2, with the saturation marker and ADPM weight ratio."""
    rows = []
    for eps2 in eps2_values:
        if eps2 < eps1:
            raise DomainError("eps2 values must be >= eps1")
        prof = _two_group(eps1, eps2, n, f)
        res = estimate_mse_many([MechanismSpec(k, prof) for k in kinds], dist, trials, seed, threads)
        ratio = weight_ratio(prof)
        for r in res:
            rows.append({
                "mechanism": r.mechanism, "n": int(prof.n), "f": prof.f, "eps1": prof.eps1, "eps2": prof.eps2,
                "mse": r.mse, "stderr": r.stderr, "analytic_mse": r.analytic_ref.total,
                "mse_x1e4": r.mse * 1e4, "stderr_x1e4": r.stderr * 1e4,
                "saturation_eps2": prof.saturation_eps2, "weight_ratio": ratio,
                "upper_bound": bounds.upper_bound(prof), "reason": r.reason,
            })
    return rows


def weight_ratio_table(eps1, n, f, eps2_values):
    rows = []
    for eps2 in eps2_values:
        prof = TwoGroupProfile(eps1, eps2, n, f)
        rows.append({
            "eps1": prof.eps1, "eps2": prof.eps2, "n": prof.n, "f": prof.f,
            "r": prof.r, "R": prof.R, "weight_ratio": weight_ratio(prof),
            "min_r_R": min(prof.r, prof.R),
        })
    return rows


TABLE2_KINDS = ("ADPM", "PROPDPM", "LDPE", "SM", "UNI", "STRETCH")


def draw_log_uniform_eps(n, log_range, seed, regime_index):
    """Privacy levels with natural-log uniform on ``log_range``."""
    rng = _stream(seed, _EPS_STREAM, regime_index)
    lo, hi = log_range
    return np.exp(rng.uniform(lo, hi, n))


def table2_experiment(n=1000, low_range=(-3.0, -2.0), high_range=(-4.0, 2.0), trials=TABLE2_TRIALS, seed=0,
                      dist=BETA23_SHIFTED, kinds=TABLE2_KINDS, threads=1):
    """ln MSE of every mechanism for a low- and a high-spread privacy vector."""
    rows = []
    for idx, (label, rng_) in enumerate((("high", high_range), ("low", low_range))):
        eps = draw_log_uniform_eps(n, rng_, seed, idx)
        res = estimate_mse_many([MechanismSpec(k, eps) for k in kinds], dist, trials, seed, threads)
        for r in res:
            rows.append({
                "regime": label, "mechanism": r.mechanism, "n": n, "trials": trials,
                "ln_mse": math.log(r.mse) if r.mse > 0 and math.isfinite(r.mse) else math.nan,
                "mse": r.mse, "stderr": r.stderr, "analytic_mse": r.analytic_ref.total,
                "eps_min": float(eps.min()), "eps_max": float(eps.max()), "reason": r.reason,
            })
    return rows
