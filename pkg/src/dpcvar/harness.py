"""Monte Carlo verification harness: excess-risk sweeps, slope fits, audits.

A sweep walks a parameter grid, runs one of the private release paths against
the matching calibrated instance family many times per cell, and records the
mean excess risk with its standard error. Experiments never compare constants,
only scaling exponents and ratio laws; the constants hidden in the analytic
rates are not reproducible and the reports say so.

Determinism contract: replicate r of a cell keys its random stream by a stable
hash of (kind, cell parameters, r), so results are independent of execution
order and byte-identical across runs for a fixed base seed. Wall times are
recorded per cell but never serialized.

Regime labels compare the privacy term against the statistical fluctuation the
instance family actually realizes (the calibrated tail mass p shrinks with
eps*n, so the generic 1/sqrt(n*tau) yardstick would mislabel exactly the cells
the exponent fits need). A cell is "privacy" when the realized privacy term is
at least 3x the realized statistical term, "statistical" in the mirrored case,
and "mixed" otherwise; convex cells compare injected noise sigma*sqrt(d+1)
against the subgradient scale L with threshold 1.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Sequence

import numpy as np

from .estimators import (
    ConvexLearnerConfig,
    ConvexProblem,
    FiniteClassInstance,
    private_convex_cvar,
    private_finite_class,
    private_scalar_cvar,
)
from .instances import (
    EmbeddedInstance,
    make_linear_family,
    make_packing,
    make_scalar_pair,
)
from .mechanisms import (
    PrivacyBudget,
    RandomStream,
    SensitivityValue,
    exponential_mechanism,
    exponential_mechanism_probs,
    gaussian_sigma_for_budget,
    stable_stream_id,
)
from .risk import (
    BoundedLossVector,
    LossBound,
    TailMass,
    empirical_cvar,
    lifted_gradient_bound,
)

SWEEP_KINDS = ("scalar", "finite", "convex")
AUDIT_KINDS = ("sensitivity-audit", "mech-audit", "embed-check")

RATE_COLUMNS = (
    "kind", "n", "tau", "eps", "delta", "M", "d",
    "B", "G", "D", "reps", "mean_excess", "stderr", "regime", "seed",
)
SLOPE_COLUMNS = ("variable", "exponent", "intercept", "r2", "n_points")

_SWEEP_VARIABLES = ("n", "tau", "eps", "M", "d")


@dataclass(frozen=True)
class SweepConfig:
    """Grid, replication, and constant settings for one experiment.

    `pair_eps` decouples the hard-instance construction budget from the
    mechanism budget; by default the instance is calibrated at the mechanism's
    own epsilon. `deltas = None` means pure DP for scalar/finite cells and the
    per-cell default delta = n^-2 for convex cells.
    """

    kind: str
    ns: tuple[int, ...] = (1000,)
    taus: tuple[float, ...] = (0.1,)
    epsilons: tuple[float, ...] = (1.0,)
    deltas: tuple[float, ...] | None = None
    Ms: tuple[int, ...] = (2,)
    ds: tuple[int, ...] = (1,)
    replicates: int = 100
    base_seed: int = 0
    bound: float = 1.0
    lipschitz: float = 1.0
    diameter: float = 1.0
    c0: float = 0.125
    c1: float = 0.125
    pair_eps: float | None = None
    gamma: float = 1.0
    iterations: int | None = None
    step_rule: str = "noise_aware"
    threads: int = 1
    allow_capped: bool = False
    # audit knobs
    n_max: int = 6
    value_levels: int = 5
    draws: int = 100_000
    trials: int = 100

    def validate(self) -> None:
        if self.kind not in SWEEP_KINDS + AUDIT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be >= 1, got {self.replicates}")
        if self.threads < 1:
            raise ValueError(f"threads must be >= 1, got {self.threads}")
        for name, grid in (("n", self.ns), ("tau", self.taus), ("eps", self.epsilons),
                           ("M", self.Ms), ("d", self.ds)):
            if len(grid) == 0:
                raise ValueError(f"{name} grid must be nonempty")
        if any(n < 1 for n in self.ns):
            raise ValueError("sample sizes must be >= 1")
        if any(not 0.0 < t <= 1.0 for t in self.taus):
            raise ValueError("tail masses must lie in (0, 1]")
        if any(e <= 0.0 for e in self.epsilons):
            raise ValueError("epsilons must be positive")
        if any(m < 2 for m in self.Ms) and self.kind == "finite":
            raise ValueError("finite sweeps need M >= 2")
        if any(d < 1 for d in self.ds):
            raise ValueError("dimensions must be >= 1")
        if not 0.0 < self.c0 <= 1.0 or not 0.0 < self.c1 <= 1.0:
            raise ValueError("c0 and c1 must lie in (0, 1]")
        if abs(self.gamma) > 1.0:
            raise ValueError("gamma must lie in [-1, 1]")
        if self.bound < 0.0 or self.lipschitz < 0.0 or self.diameter < 0.0:
            raise ValueError("B, G, D must be nonnegative")
        if self.kind in SWEEP_KINDS and not self.allow_capped:
            for n, t in product(self.ns, self.taus):
                if n * t < 1.0:
                    raise ValueError(
                        f"cell n={n}, tau={t} has n*tau < 1; pass allow_capped to run it"
                    )
        if self.deltas is not None:
            if self.kind in ("scalar", "finite") and any(dl != 0.0 for dl in self.deltas):
                raise ValueError(f"{self.kind} sweeps are pure DP; delta must be 0")
            if self.kind == "convex":
                for dl, n in product(self.deltas, self.ns):
                    if not 0.0 < dl <= 1.0 / (n * n):
                        raise ValueError(
                            f"convex delta {dl} outside (0, n^-2] at n={n}"
                        )


@dataclass(frozen=True)
class RateRow:
    """One parameter cell of a rate table; wall_time stays out of the CSV."""

    kind: str
    n: int
    tau: float
    eps: float
    delta: float
    M: int
    d: int
    B: float
    G: float
    D: float
    reps: int
    mean_excess: float
    stderr: float
    regime: str
    seed: int
    wall_time: float = 0.0


@dataclass
class RateTable:
    rows: list[RateRow] = field(default_factory=list)

    def filter(self, regime: str | None = None, **fixed) -> "RateTable":
        """Rows matching a regime label and exact values of named fields."""
        out = []
        for row in self.rows:
            if regime is not None and row.regime != regime:
                continue
            if all(getattr(row, k) == v for k, v in fixed.items()):
                out.append(row)
        return RateTable(out)


@dataclass(frozen=True)
class SlopeFit:
    """OLS fit of log mean excess against the log of one swept variable."""

    variable: str
    exponent: float
    intercept: float
    r_squared: float
    n_points: int


def _fmt(value: float) -> str:
    return f"{float(value):.17g}"


def rate_csv_text(table: RateTable) -> str:
    """Render a rate table in the canonical CSV layout (17 significant digits)."""
    lines = [",".join(RATE_COLUMNS)]
    for r in table.rows:
        lines.append(",".join((
            r.kind, str(r.n), _fmt(r.tau), _fmt(r.eps), _fmt(r.delta),
            str(r.M), str(r.d), _fmt(r.B), _fmt(r.G), _fmt(r.D),
            str(r.reps), _fmt(r.mean_excess), _fmt(r.stderr), r.regime, str(r.seed),
        )))
    return "\n".join(lines) + "\n"


def slope_csv_text(fits: Sequence[SlopeFit]) -> str:
    lines = [",".join(SLOPE_COLUMNS)]
    for f in fits:
        lines.append(",".join((
            f.variable, _fmt(f.exponent), _fmt(f.intercept),
            _fmt(f.r_squared), str(f.n_points),
        )))
    return "\n".join(lines) + "\n"


def write_rate_csv(table: RateTable, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(rate_csv_text(table))


def write_slope_csv(fits: Sequence[SlopeFit], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(slope_csv_text(fits))


def fit_loglog_slope(table: RateTable, variable: str) -> SlopeFit:
    """Least squares on (log x, log mean excess) for one swept variable.

    Requires at least 3 rows with distinct values of `variable`, all other
    sweep variables held fixed across the rows, and strictly positive means.
    Natural logarithms are used, so the intercept is ln(prefactor).
    """
    if variable not in _SWEEP_VARIABLES:
        raise ValueError(f"unknown sweep variable {variable!r}")
    rows = table.rows
    if len(rows) < 3:
        raise ValueError(f"need >= 3 rows to fit, got {len(rows)}")
    for other in _SWEEP_VARIABLES:
        if other == variable:
            continue
        vals = {getattr(r, other) for r in rows}
        if len(vals) != 1:
            raise ValueError(f"rows vary in {other} as well as {variable}")
    xs = np.array([float(getattr(r, variable)) for r in rows])
    ys = np.array([r.mean_excess for r in rows])
    if len(set(xs.tolist())) < 3:
        raise ValueError("need >= 3 distinct values of the swept variable")
    if ys.min() <= 0.0:
        raise ValueError("all mean excess values must be positive for a log fit")
    lx, ly = np.log(xs), np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    residual = ly - (slope * lx + intercept)
    ss_res = float(residual @ residual)
    centered = ly - ly.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-20 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    r2 = min(max(r2, 0.0), 1.0)
    return SlopeFit(
        variable=variable,
        exponent=float(slope),
        intercept=float(intercept),
        r_squared=r2,
        n_points=len(rows),
    )


def fit_all_slopes(table: RateTable) -> list[SlopeFit]:
    """Fit every variable that moves, within groups of otherwise-fixed rows.

    Rows are grouped by the values of the non-swept variables plus the regime
    label, so exponent fits never mix regimes; groups with fewer than 3
    distinct values or a nonpositive mean are skipped. delta is excluded from
    grouping because the convex default ties it to n.
    """
    fits: list[SlopeFit] = []
    for variable in _SWEEP_VARIABLES:
        groups: dict[tuple, list[RateRow]] = {}
        for row in table.rows:
            key = tuple(
                getattr(row, other) for other in _SWEEP_VARIABLES if other != variable
            ) + (row.kind, row.regime)
            groups.setdefault(key, []).append(row)
        for key in sorted(groups, key=repr):
            rows = groups[key]
            values = {getattr(r, variable) for r in rows}
            if len(values) < 3 or any(r.mean_excess <= 0.0 for r in rows):
                continue
            fits.append(fit_loglog_slope(RateTable(rows), variable))
    return fits


def _stderr(errors: np.ndarray) -> float:
    if errors.size < 2:
        return 0.0
    return float(errors.std(ddof=1) / math.sqrt(errors.size))


def _three_way(privacy_term: float, statistical_term: float) -> str:
    if privacy_term >= 3.0 * statistical_term:
        return "privacy"
    if statistical_term >= 3.0 * privacy_term:
        return "statistical"
    return "mixed"


def _scalar_cell(config: SweepConfig, n: int, tau_v: float, eps: float) -> RateRow:
    start = time.perf_counter()
    tau = TailMass(tau_v)
    bound = LossBound(config.bound)
    construction_eps = config.pair_eps if config.pair_eps is not None else eps
    pair = make_scalar_pair(n, tau, PrivacyBudget(construction_eps), bound, config.c1)
    budget = PrivacyBudget(eps)
    errors = np.empty((2, config.replicates))
    for which, dist in ((0, pair.p0), (1, pair.p1)):
        truth = pair.true_cvar(which)
        for rep in range(config.replicates):
            stream = RandomStream(
                config.base_seed, stable_stream_id("scalar", n, tau_v, eps, which, rep)
            )
            sample = BoundedLossVector(dist.sample(n, stream.generator), bound)
            report = private_scalar_cvar(sample, tau, budget, stream)
            errors[which, rep] = abs(report.output - truth)
    means = errors.mean(axis=1)
    worst = int(np.argmax(means))
    privacy_term = config.bound * min(1.0, 1.0 / (n * tau_v)) / eps
    statistical_term = config.bound * math.sqrt(pair.p * (1.0 - pair.p) / n) / tau_v
    return RateRow(
        kind="scalar", n=n, tau=tau_v, eps=eps, delta=0.0, M=0, d=0,
        B=config.bound, G=0.0, D=0.0, reps=config.replicates,
        mean_excess=float(means[worst]), stderr=_stderr(errors[worst]),
        regime=_three_way(privacy_term, statistical_term),
        seed=config.base_seed, wall_time=time.perf_counter() - start,
    )


def _finite_cell(config: SweepConfig, n: int, tau_v: float, eps: float, m: int) -> RateRow:
    start = time.perf_counter()
    tau = TailMass(tau_v)
    bound = LossBound(config.bound)
    construction_eps = config.pair_eps if config.pair_eps is not None else eps
    inst = make_packing(m, n, tau, PrivacyBudget(construction_eps), bound, config.c0)
    cls = FiniteClassInstance(num_predictors=m, loss_of=inst.loss_of, bound=bound)
    budget = PrivacyBudget(eps)
    excess = np.empty(config.replicates)
    for rep in range(config.replicates):
        stream = RandomStream(
            config.base_seed, stable_stream_id("finite", n, tau_v, eps, m, rep)
        )
        j = int(stream.generator.integers(m))
        pts = inst.distribution(j).sample(n, stream.generator)
        report = private_finite_class(cls, pts, tau, budget, stream)
        excess[rep] = inst.excess_of(report.output, j)
    log2m = math.log(2 * m)
    privacy_term = 2.0 * config.bound * log2m / (eps * n * tau_v)
    statistical_term = config.bound * math.sqrt(inst.p * log2m / n) / tau_v
    return RateRow(
        kind="finite", n=n, tau=tau_v, eps=eps, delta=0.0, M=m, d=0,
        B=config.bound, G=0.0, D=0.0, reps=config.replicates,
        mean_excess=float(excess.mean()), stderr=_stderr(excess),
        regime=_three_way(privacy_term, statistical_term),
        seed=config.base_seed, wall_time=time.perf_counter() - start,
    )


def _convex_cell(
    config: SweepConfig, n: int, tau_v: float, eps: float, d: int, delta: float | None
) -> RateRow:
    start = time.perf_counter()
    tau = TailMass(tau_v)
    bound = LossBound(config.bound)
    if delta is None:
        delta = 1.0 / (n * n)
    budget = PrivacyBudget(eps, delta)
    fam = make_linear_family(d, config.diameter, config.lipschitz, bound)
    mu = np.full(d, config.gamma)
    coef = fam.g0 / math.sqrt(d)
    shift = fam.shift

    def loss_batch(w: np.ndarray, zs: np.ndarray) -> np.ndarray:
        return zs[:, 0] * (coef * (zs[:, 1:] @ w) + shift)

    def subgrad_batch(w: np.ndarray, zs: np.ndarray) -> np.ndarray:
        return (coef * zs[:, 0])[:, None] * zs[:, 1:]

    problem = ConvexProblem(
        dim=d,
        diameter=config.diameter,
        lipschitz=config.lipschitz,
        bound=bound,
        project=fam.project,
        loss_at=lambda w, z: float(z[0] * (coef * (z[1:] @ w) + shift)),
        subgrad_at=lambda w, z: coef * z[0] * z[1:],
        loss_batch=loss_batch,
        subgrad_batch=subgrad_batch,
    )
    learner = ConvexLearnerConfig(
        iterations=config.iterations, step_size_rule=config.step_rule
    )
    excess = np.empty(config.replicates)
    for rep in range(config.replicates):
        stream = RandomStream(
            config.base_seed,
            stable_stream_id("convex", n, tau_v, eps, d, delta, rep),
        )
        gen = stream.generator
        active = (gen.random(n) < tau_v).astype(np.float64)
        signs = fam.sample_sign_vectors(mu, n, gen)
        data = np.concatenate((active[:, None], signs), axis=1)
        report = private_convex_cvar(problem, data, tau, budget, stream, learner)
        excess[rep] = fam.population_excess(report.output, mu)
    iterations = config.iterations if config.iterations is not None else n
    lam = math.sqrt(config.lipschitz * config.bound / config.diameter) \
        if config.lipschitz > 0.0 and config.bound > 0.0 else 1.0
    l_lift = lifted_gradient_bound(config.lipschitz, lam, tau)
    sigma = gaussian_sigma_for_budget(2.0 * l_lift / n, budget, iterations)
    noise_ratio = sigma * math.sqrt(d + 1) / l_lift
    regime = "privacy" if noise_ratio >= 1.0 else (
        "statistical" if noise_ratio <= 1.0 / 3.0 else "mixed"
    )
    return RateRow(
        kind="convex", n=n, tau=tau_v, eps=eps, delta=delta, M=0, d=d,
        B=config.bound, G=config.lipschitz, D=config.diameter,
        reps=config.replicates,
        mean_excess=float(excess.mean()), stderr=_stderr(excess),
        regime=regime, seed=config.base_seed,
        wall_time=time.perf_counter() - start,
    )


def _run_cells(config: SweepConfig, jobs: list[Callable[[], RateRow]]) -> RateTable:
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            rows = list(pool.map(lambda job: job(), jobs))
    else:
        rows = [job() for job in jobs]
    return RateTable(rows)


def run_scalar_sweep(config: SweepConfig) -> RateTable:
    """Mean |private estimate - true CVaR| on the worse of the two-point pair.

    Both pair members are run per cell; the reported mean is the larger of the
    two per-distribution means (the empirical stand-in for the sup over
    distributions) with the standard error of the attaining member.
    """
    if config.kind != "scalar":
        raise ValueError(f"scalar sweep got kind {config.kind!r}")
    config.validate()
    jobs = [
        (lambda n=n, t=t, e=e: _scalar_cell(config, n, t, e))
        for n, t, e in product(config.ns, config.taus, config.epsilons)
    ]
    return _run_cells(config, jobs)


def run_finite_sweep(config: SweepConfig) -> RateTable:
    """Mean exact population excess of exponential-mechanism selection.

    Per replicate a packing distribution index j is drawn uniformly, a sample
    is taken from P_j, and the selector's excess is 0 on a correct pick and
    exactly the packing gap otherwise, so the cell mean equals
    gap * (misselection frequency).
    """
    if config.kind != "finite":
        raise ValueError(f"finite sweep got kind {config.kind!r}")
    config.validate()
    jobs = [
        (lambda n=n, t=t, e=e, m=m: _finite_cell(config, n, t, e, m))
        for n, t, e, m in product(config.ns, config.taus, config.epsilons, config.Ms)
    ]
    return _run_cells(config, jobs)


def run_convex_sweep(config: SweepConfig) -> RateTable:
    """Mean exact population excess CVaR of the private convex learner.

    Cells draw tail-embedded linear-family data, so the population excess of
    the averaged iterate is available in closed form through the embedding
    identity; no surrogate evaluation error enters the measurement.
    """
    if config.kind != "convex":
        raise ValueError(f"convex sweep got kind {config.kind!r}")
    config.validate()
    deltas: tuple[float | None, ...] = (
        config.deltas if config.deltas is not None else (None,)
    )
    jobs = [
        (lambda n=n, t=t, e=e, d=d, dl=dl: _convex_cell(config, n, t, e, d, dl))
        for n, t, e, d, dl in product(
            config.ns, config.taus, config.epsilons, config.ds, deltas
        )
    ]
    return _run_cells(config, jobs)


def run_sweep(config: SweepConfig) -> RateTable:
    runner = {
        "scalar": run_scalar_sweep,
        "finite": run_finite_sweep,
        "convex": run_convex_sweep,
    }.get(config.kind)
    if runner is None:
        raise ValueError(f"not a sweep kind: {config.kind!r}")
    return runner(config)


@dataclass(frozen=True)
class AuditReport:
    """Outcome of one audit: pass/fail, ordered metrics, optional witness."""

    kind: str
    passed: bool
    metrics: tuple[tuple[str, float], ...]
    witness: str | None = None

    def result_line(self) -> str:
        status = "pass" if self.passed else "fail"
        details = " ".join(f"{k}={v:.6g}" for k, v in self.metrics)
        return f"RESULT {status} {details}".rstrip()


def _enumerate_samples(levels: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    # all levels^n samples as rows, plus their base-`levels` digit matrix
    base = levels.size
    count = base**n
    idx = np.arange(count)
    digits = np.empty((count, n), dtype=np.int64)
    for pos in range(n):
        digits[:, n - 1 - pos] = (idx // base**pos) % base
    return levels[digits], digits


def _cvar_rows(values: np.ndarray, n_tau: float) -> np.ndarray:
    n = values.shape[1]
    if n_tau >= n:
        return values.mean(axis=1)
    k = int(math.floor(n_tau))
    ordered = np.sort(values, axis=1)
    top = ordered[:, n - k:].sum(axis=1) if k > 0 else np.zeros(values.shape[0])
    nxt = ordered[:, n - k - 1]
    return (top + (n_tau - k) * nxt) / n_tau


def run_sensitivity_audit(config: SweepConfig) -> AuditReport:
    """Exhaustive one-record sensitivity check of the empirical CVaR.

    Enumerates every sample over an evenly spaced value grid for each n up to
    n_max and each tau, computes all one-record substitutions by base-grid
    index arithmetic, and compares the observed maximum change against
    B * min{1, 1/(n*tau)}. The formula is exact, so pass requires agreement
    within 1e-10 in every cell, with the maximizing pair as witness.
    """
    b = config.bound
    levels = np.linspace(0.0, b, config.value_levels)
    tol = 1e-10
    worst_dev = 0.0
    top_change = 0.0
    top_bound = 0.0
    witness = None
    passed = True
    for tau_v in config.taus:
        for n in range(1, config.n_max + 1):
            values, digits = _enumerate_samples(levels, n)
            cv = _cvar_rows(values, n * tau_v)
            base = levels.size
            cell_max = 0.0
            cell_arg = (0, 0, 0)
            for pos in range(n):
                stride = base ** (n - 1 - pos)
                for lvl in range(base):
                    nbr = np.arange(cv.size) + (lvl - digits[:, pos]) * stride
                    diff = np.abs(cv - cv[nbr])
                    k = int(np.argmax(diff))
                    if diff[k] > cell_max:
                        cell_max = float(diff[k])
                        cell_arg = (k, pos, lvl)
            bound_val = b * min(1.0, 1.0 / (n * tau_v))
            dev = abs(cell_max - bound_val)
            if dev > worst_dev:
                worst_dev = dev
            if cell_max > top_change:
                top_change = cell_max
                top_bound = bound_val
                k, pos, lvl = cell_arg
                witness = (
                    f"n={n} tau={tau_v} sample={values[k].tolist()} "
                    f"record={pos} new_value={levels[lvl]}"
                )
            if dev > tol:
                passed = False
    return AuditReport(
        kind="sensitivity-audit",
        passed=passed,
        metrics=(
            ("max_change", top_change),
            ("bound", top_bound),
            ("max_dev", worst_dev),
        ),
        witness=witness,
    )


def run_mech_audit(config: SweepConfig) -> AuditReport:
    """Selection-distribution and utility checks for the exponential mechanism.

    For each M: total variation between the empirical selection frequencies
    (config.draws draws on a fixed random score vector) and the closed-form
    softmax must stay within 0.02, and the mean realized score shortfall of
    private selection on a packing instance must respect the analytic envelope
    2*sens*(ln M + 1)/eps over config.trials replicates.
    """
    eps = config.epsilons[0]
    budget = PrivacyBudget(eps)
    tau = TailMass(config.taus[0])
    n = config.ns[0]
    bound = LossBound(config.bound)
    max_tv = 0.0
    max_shortfall_ratio = 0.0
    passed = True
    witness = None
    for m in config.Ms:
        stream = RandomStream(config.base_seed, stable_stream_id("mech-tv", m))
        scores = stream.generator.random(m)
        sens = SensitivityValue(1.0)
        probs = exponential_mechanism_probs(scores, sens, budget)
        counts = np.zeros(m)
        for _ in range(config.draws):
            counts[exponential_mechanism(scores, sens, budget, stream)] += 1
        tv = 0.5 * float(np.abs(counts / config.draws - probs).sum())
        if tv > max_tv:
            max_tv = tv
        if tv > 0.02:
            passed = False
            witness = f"M={m} tv={tv}"
        inst = make_packing(m, n, tau, budget, bound, config.c0)
        cls = FiniteClassInstance(num_predictors=m, loss_of=inst.loss_of, bound=bound)
        shortfalls = np.empty(config.trials)
        for rep in range(config.trials):
            rep_stream = RandomStream(
                config.base_seed, stable_stream_id("mech-shortfall", m, rep)
            )
            j = int(rep_stream.generator.integers(m))
            pts = inst.distribution(j).sample(n, rep_stream.generator)
            values = np.array([
                -empirical_cvar(BoundedLossVector(inst.loss_of(r, pts), bound), tau)
                for r in range(m)
            ])
            picked = private_finite_class(cls, pts, tau, budget, rep_stream).output
            shortfalls[rep] = float(values.max() - values[picked])
        envelope = 2.0 * (config.bound / (n * tau.tau)) * (math.log(m) + 1.0) / eps
        ratio = float(shortfalls.mean()) / envelope
        if ratio > max_shortfall_ratio:
            max_shortfall_ratio = ratio
        if shortfalls.mean() > envelope:
            passed = False
            witness = f"M={m} shortfall={shortfalls.mean()} envelope={envelope}"
    return AuditReport(
        kind="mech-audit",
        passed=passed,
        metrics=(
            ("max_tv", max_tv),
            ("tv_limit", 0.02),
            ("max_shortfall_ratio", max_shortfall_ratio),
        ),
        witness=witness,
    )


def run_embed_check(config: SweepConfig) -> AuditReport:
    """Exactness of the tail embedding on random finite tables.

    Draws config.trials random base tables, embeds them at each configured
    tau, and verifies population CVaR == base expected loss within 1e-12.
    """
    stream = RandomStream(config.base_seed, stable_stream_id("embed-check"))
    gen = stream.generator
    bound = LossBound(config.bound)
    max_gap = 0.0
    witness = None
    for trial in range(config.trials):
        k = int(gen.integers(1, 7))
        probs = gen.random(k)
        probs /= probs.sum()
        probs[-1] = 1.0 - float(probs[:-1].sum())
        values = gen.random(k) * config.bound
        for tau_v in config.taus:
            emb = EmbeddedInstance.from_table(values, probs, TailMass(tau_v), bound)
            gap = abs(emb.population_cvar(None) - emb.base_expectation(None))
            if gap > max_gap:
                max_gap = gap
                witness = f"trial={trial} tau={tau_v} gap={gap}"
    passed = max_gap <= 1e-12
    return AuditReport(
        kind="embed-check",
        passed=passed,
        metrics=(("max_abs_gap", max_gap), ("trials", float(config.trials))),
        witness=None if passed else witness,
    )


def run_audits(config: SweepConfig) -> AuditReport:
    runner = {
        "sensitivity-audit": run_sensitivity_audit,
        "mech-audit": run_mech_audit,
        "embed-check": run_embed_check,
    }.get(config.kind)
    if runner is None:
        raise ValueError(f"not an audit kind: {config.kind!r}")
    config.validate()
    return runner(config)
