"""Viewpoint search over the discretized sphere and the benchmark protocol.

Greedy search floods outward from seeded random cells, always expanding the
neighborhoods of the best cells seen so far.  Bayesian search fits a Gaussian
surrogate over the 5-parameter camera space and proposes the pose with the
highest expected improvement; proposals snap to the nearest cell for scoring.
A run counts as solved once any scored cell lies within two rings of the
gold cell.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.special import ndtr

from .camera import SHAPENET, canonical_direction
from .polysphere import PolySphere
from .scorer import Query, resolve_scorer

__all__ = [
    "BayesConfig",
    "BenchmarkCell",
    "BenchmarkResult",
    "CameraBounds",
    "GaussianSurrogate",
    "GreedyConfig",
    "RunRecord",
    "SearchTrace",
    "SurrogateNumericsError",
    "TraceEntry",
    "bayesian_search",
    "expected_improvement",
    "greedy_search",
    "is_solved",
    "run_benchmark",
]

SOLVED_RING = 2


class SurrogateNumericsError(RuntimeError):
    """Kernel matrix could not be factorized even after jitter escalation."""


@dataclass(frozen=True)
class GreedyConfig:
    """k random starts, top-c cutoff (count or fraction), ring range n, max iterations i."""

    k: int = 6
    c: float = 3
    n: int = 1
    i: int = 100

    def __post_init__(self):
        if self.k < 1 or self.n < 1 or self.i < 1:
            raise ValueError("k, n, and i must be >= 1")
        if isinstance(self.c, float) and not self.c.is_integer():
            if not 0.0 < self.c <= 1.0:
                raise ValueError("fractional cutoff must lie in (0, 1]")
        elif self.c < 1:
            raise ValueError("absolute cutoff must be >= 1")

    def cutoff_count(self, scored: int) -> int:
        if isinstance(self.c, float) and not self.c.is_integer():
            return max(1, math.ceil(self.c * scored))
        return int(self.c)


@dataclass(frozen=True)
class CameraBounds:
    """Per-parameter (low, high) bounds for (r, theta, phi, x, y).

    Degenerate bounds (low == high) pin a parameter; theta and phi distances
    wrap inside the surrogate kernel.
    """

    r: tuple[float, float] = (5.0, 5.0)
    theta: tuple[float, float] = (0.0, math.pi)
    phi: tuple[float, float] = (0.0, 2.0 * math.pi)
    x: tuple[float, float] = (0.0, 0.0)
    y: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        lo, hi = self.low, self.high
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if np.any(hi < lo):
            raise ValueError("bounds must satisfy high >= low")
        if lo[0] <= 0:
            raise ValueError("radius bound must be positive")

    @property
    def low(self) -> np.ndarray:
        return np.array([self.r[0], self.theta[0], self.phi[0], self.x[0], self.y[0]])

    @property
    def high(self) -> np.ndarray:
        return np.array([self.r[1], self.theta[1], self.phi[1], self.x[1], self.y[1]])

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        u = rng.random((count, 5))
        return self.low + u * (self.high - self.low)


@dataclass(frozen=True)
class BayesConfig:
    initial_samples: int = 8
    length_scales: tuple[float, ...] = (2.0, 0.45, 0.45, 0.5, 0.5)
    signal_variance: float = 1.0
    noise: float = 1e-4
    xi: float = 0.01
    candidate_pool: int = 256
    local_candidates: int = 32
    local_scale: float = 0.08
    optimize_hyperparams: bool = False

    def __post_init__(self):
        if self.initial_samples < 1:
            raise ValueError("initial_samples must be >= 1")
        if len(self.length_scales) != 5 or any(l <= 0 for l in self.length_scales):
            raise ValueError("length_scales must be five positive values")
        if self.noise <= 0:
            raise ValueError("observation noise must be > 0")
        if self.signal_variance <= 0:
            raise ValueError("signal variance must be > 0")
        if self.candidate_pool < 1:
            raise ValueError("candidate_pool must be >= 1")


# distance wrapping mask for (r, theta, phi, x, y)
_WRAP = np.array([False, True, True, False, False])


class GaussianSurrogate:
    """Squared-exponential GP over camera poses with wrapped angular distances."""

    def __init__(self, length_scales, signal_variance: float, noise: float):
        self.length_scales = np.asarray(length_scales, dtype=float)
        self.signal_variance = float(signal_variance)
        self.noise = float(noise)
        self.x_train: np.ndarray | None = None
        self._alpha = None
        self._chol = None
        self._y_mean = 0.0

    def kernel(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        diff = a[:, None, :] - b[None, :, :]
        wrapped = diff[..., _WRAP]
        diff[..., _WRAP] = np.mod(wrapped + math.pi, 2.0 * math.pi) - math.pi
        sq = np.sum((diff / self.length_scales) ** 2, axis=-1)
        return self.signal_variance * np.exp(-0.5 * sq)

    def fit(self, x: np.ndarray, y: np.ndarray, *, optimize: bool = False) -> None:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if optimize and x.shape[0] >= 4:
            self._optimize_hyperparams(x, y)
        self._factorize(x, y)

    def _factorize(self, x: np.ndarray, y: np.ndarray) -> None:
        n = x.shape[0]
        self._y_mean = float(y.mean())
        centered = y - self._y_mean
        base = self.kernel(x, x) + self.noise * np.eye(n)
        jitter = 0.0
        for _ in range(8):
            try:
                chol = cho_factor(base + jitter * np.eye(n), lower=True)
                break
            except np.linalg.LinAlgError:
                jitter = 1e-10 * self.signal_variance if jitter == 0.0 else jitter * 10.0
        else:
            raise SurrogateNumericsError(
                f"kernel factorization failed for {n} observations (jitter up to {jitter:g})"
            )
        self.x_train = x
        self._chol = chol
        self._alpha = cho_solve(chol, centered)

    def predict(self, candidates: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        if self.x_train is None:
            raise RuntimeError("surrogate is not fitted")
        ks = self.kernel(self.x_train, np.asarray(candidates, dtype=float))
        mean = self._y_mean + ks.T @ self._alpha
        v = solve_triangular(self._chol[0], ks, lower=True)
        var = self.signal_variance - np.sum(v * v, axis=0)
        return mean, np.sqrt(np.clip(var, 0.0, None))

    def log_marginal_likelihood(self, x: np.ndarray, y: np.ndarray) -> float:
        n = x.shape[0]
        k = self.kernel(x, x) + self.noise * np.eye(n)
        try:
            chol = cho_factor(k, lower=True)
        except np.linalg.LinAlgError:
            return -np.inf
        centered = y - y.mean()
        alpha = cho_solve(chol, centered)
        logdet = 2.0 * float(np.sum(np.log(np.diag(chol[0]))))
        return float(-0.5 * centered @ alpha - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi))

    def _optimize_hyperparams(self, x: np.ndarray, y: np.ndarray) -> None:
        from scipy.optimize import minimize

        init = np.log(np.concatenate([self.length_scales, [self.signal_variance]]))

        def objective(log_params):
            trial = GaussianSurrogate(
                np.exp(log_params[:5]), float(np.exp(log_params[5])), self.noise
            )
            return -trial.log_marginal_likelihood(x, y)

        result = minimize(objective, init, method="L-BFGS-B", options={"maxiter": 25})
        if np.isfinite(result.fun):
            self.length_scales = np.exp(result.x[:5])
            self.signal_variance = float(np.exp(result.x[5]))


def expected_improvement(mean: np.ndarray, std: np.ndarray, best: float, xi: float = 0.01) -> np.ndarray:
    """EI for maximization; exactly zero where the posterior is certain and
    not better than the incumbent."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    improvement = mean - best - xi
    ei = np.where(improvement > 0, improvement, 0.0)
    active = std > 1e-12
    z = np.zeros_like(mean)
    np.divide(improvement, std, out=z, where=active)
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    ei = np.where(active, improvement * ndtr(z) + std * pdf, ei)
    return np.clip(ei, 0.0, None)


@dataclass(frozen=True)
class TraceEntry:
    index: int
    cell: int
    score: float
    pose: tuple[float, float, float, float, float] | None = None

    def to_dict(self) -> dict:
        out = {"call": self.index, "cell": self.cell, "score": self.score}
        out["pose"] = list(self.pose) if self.pose is not None else None
        return out


@dataclass(frozen=True)
class SearchTrace:
    """Ordered record of every scorer call in one search run."""

    entries: tuple[TraceEntry, ...]
    reason: str  # solved | budget | stalled
    budget: int

    def __post_init__(self):
        if self.reason not in ("solved", "budget", "stalled"):
            raise ValueError(f"unknown termination reason {self.reason!r}")
        if len(self.entries) > self.budget:
            raise ValueError("trace exceeds its budget")

    @property
    def calls(self) -> int:
        return len(self.entries)

    @property
    def best_cell(self) -> int:
        best = max(self.entries, key=lambda e: e.score)
        return best.cell

    def visited_cells(self) -> list[int]:
        return [e.cell for e in self.entries]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_dict(), sort_keys=True) + "\n" for e in self.entries)


def is_solved(trace: SearchTrace, sphere: PolySphere, gold_cell: int) -> bool:
    """True iff any visited cell lies within two rings of the gold cell."""
    if not trace.entries:
        raise ValueError("trace is empty")
    near = sphere.disk(gold_cell, SOLVED_RING)
    return any(e.cell in near for e in trace.entries)


def _first_solved_call(trace: SearchTrace, near: set[int]) -> int | None:
    for e in trace.entries:
        if e.cell in near:
            return e.index + 1
    return None


class _TraceRecorder:
    def __init__(self, scorer, query: Query, radius: float, budget: int, success=None):
        self.scorer = scorer
        self.query = query
        self.radius = radius
        self.budget = budget
        self.success = success
        self.entries: list[TraceEntry] = []
        self.solved = False

    @property
    def calls(self) -> int:
        return len(self.entries)

    @property
    def exhausted(self) -> bool:
        return self.calls >= self.budget

    def score(self, cell: int, pose=None) -> float:
        if self.exhausted:
            raise RuntimeError("budget exhausted")  # guarded by callers
        value = float(self.scorer.score_cell(self.query, cell, self.radius))
        self.entries.append(TraceEntry(self.calls, cell, value, pose))
        if self.success is not None and self.success(cell):
            self.solved = True
        return value

    def finish(self, fallback_reason: str) -> SearchTrace:
        if self.solved:
            reason = "solved"
        elif self.exhausted:
            reason = "budget"
        else:
            reason = fallback_reason
        return SearchTrace(entries=tuple(self.entries), reason=reason, budget=self.budget)


def greedy_search(sphere: PolySphere, scorer, query: Query, config: GreedyConfig,
                  budget: int, seed: int, *, radius: float = 5.0, success=None) -> SearchTrace:
    """Seeded greedy flood: expand ring-<=n neighborhoods of the top-c cells.

    Never scores a cell twice; terminates on budget, success, the iteration
    cap, or when the frontier adds no new cells (reason "stalled").
    """
    if budget < config.k:
        raise ValueError(f"budget {budget} is below the {config.k} starting points")
    rng = np.random.default_rng(seed)
    rec = _TraceRecorder(scorer, query, radius, budget, success)
    scored: dict[int, float] = {}

    starts = rng.choice(sphere.n_cells, size=config.k, replace=False)
    for cell in starts:
        scored[int(cell)] = rec.score(int(cell))
        if rec.solved:
            return rec.finish("solved")
    for _ in range(config.i):
        if rec.exhausted:
            return rec.finish("budget")
        count = config.cutoff_count(len(scored))
        top = sorted(scored.items(), key=lambda kv: (-kv[1], kv[0]))[:count]
        frontier: set[int] = set()
        for cell, _ in top:
            frontier |= sphere.disk(cell, config.n)
        frontier -= scored.keys()
        if not frontier:
            return rec.finish("stalled")
        for cell in sorted(frontier):
            scored[cell] = rec.score(cell)
            if rec.solved or rec.exhausted:
                return rec.finish("budget")
    return rec.finish("stalled")


def _pose_to_cell(sphere: PolySphere, pose: np.ndarray) -> tuple[int, float]:
    theta, phi = pose[1], pose[2]
    direction = np.array([
        math.sin(theta) * math.cos(phi),
        math.cos(theta),
        math.sin(theta) * math.sin(phi),
    ])
    return sphere.nearest_cell(direction), float(pose[0])


def bayesian_search(bounds: CameraBounds, sphere: PolySphere, scorer, query: Query,
                    config: BayesConfig, budget: int, seed: int, *,
                    radii=(5.0,), success=None) -> SearchTrace:
    """GP + expected-improvement search over the camera parameter space.

    Poses snap to the nearest cell (and nearest configured radius) for
    scoring.  When EI is flat (a constant or fully explained scorer) the
    proposal falls back to seeded random sampling.
    """
    if budget <= config.initial_samples:
        raise ValueError("budget must exceed the initial sample count")
    radii = sorted(float(r) for r in radii)
    rng = np.random.default_rng(seed)
    rec = _TraceRecorder(scorer, query, radii[0], budget, success)

    def evaluate(pose: np.ndarray) -> float:
        cell, r = _pose_to_cell(sphere, pose)
        rec.radius = min(radii, key=lambda cand: (abs(cand - r), cand))
        return rec.score(cell, pose=tuple(float(v) for v in pose))

    observations: list[np.ndarray] = []
    values: list[float] = []
    for pose in bounds.sample(rng, config.initial_samples):
        observations.append(pose)
        values.append(evaluate(pose))
        if rec.solved:
            return rec.finish("solved")

    surrogate = GaussianSurrogate(config.length_scales, config.signal_variance, config.noise)
    while not rec.exhausted:
        x = np.vstack(observations)
        y = np.asarray(values)
        surrogate.fit(x, y, optimize=config.optimize_hyperparams)

        candidates = bounds.sample(rng, config.candidate_pool)
        if config.local_candidates:
            incumbent = observations[int(np.argmax(y))]
            local = incumbent + rng.standard_normal(
                (config.local_candidates, 5)
            ) * (config.local_scale * (bounds.high - bounds.low))
            local = np.clip(local, bounds.low, bounds.high)
            candidates = np.vstack([candidates, local])

        mean, std = surrogate.predict(candidates)
        ei = expected_improvement(mean, std, best=float(y.max()), xi=config.xi)
        if float(ei.max()) > 1e-12:
            pose = candidates[int(np.argmax(ei))]
        else:
            # no informative acquisition anywhere: sample blindly
            pose = bounds.sample(rng, 1)[0]
        observations.append(pose)
        values.append(evaluate(pose))
        if rec.solved:
            return rec.finish("solved")
    return rec.finish("budget")


@dataclass(frozen=True)
class RunRecord:
    seed: int
    solved: bool
    calls_to_solve: int
    trace: SearchTrace = field(repr=False)


@dataclass(frozen=True)
class BenchmarkCell:
    algorithm: str
    scorer_spec: str
    category: str
    view: str
    gold_cell: int
    mean_calls: float
    solve_rate: float
    runs: tuple[RunRecord, ...] = field(repr=False)


@dataclass(frozen=True)
class BenchmarkResult:
    """Benchmark table: per (algorithm, scorer) row, one cell per view."""

    n_runs: int
    c_max: int
    master_seed: int
    radius: float
    cells: tuple[BenchmarkCell, ...]

    def mean_calls(self, algorithm: str, scorer_spec: str, view: str | None = None) -> float:
        picked = [
            c for c in self.cells
            if c.algorithm == algorithm and c.scorer_spec == scorer_spec
            and (view is None or c.view == view)
        ]
        if not picked:
            raise KeyError(f"no benchmark cell for ({algorithm}, {scorer_spec}, {view})")
        return float(np.mean([c.mean_calls for c in picked]))

    def solve_rate(self, algorithm: str, scorer_spec: str, view: str | None = None) -> float:
        picked = [
            c for c in self.cells
            if c.algorithm == algorithm and c.scorer_spec == scorer_spec
            and (view is None or c.view == view)
        ]
        return float(np.mean([c.solve_rate for c in picked]))

    def to_dict(self) -> dict:
        rows: dict[tuple[str, str], dict] = {}
        for c in self.cells:
            row = rows.setdefault(
                (c.algorithm, c.scorer_spec),
                {"algorithm": c.algorithm, "scorer": c.scorer_spec, "views": {}},
            )
            row["views"][c.view] = {
                "category": c.category,
                "gold_cell": c.gold_cell,
                "mean_calls": c.mean_calls,
                "solve_rate": c.solve_rate,
                "calls": [r.calls_to_solve for r in c.runs],
            }
        return {
            "n_runs": self.n_runs,
            "c_max": self.c_max,
            "master_seed": self.master_seed,
            "radius": self.radius,
            "rows": [rows[k] for k in sorted(rows)],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        views = sorted({c.view for c in self.cells})
        rows = sorted({(c.algorithm, c.scorer_spec) for c in self.cells})
        algo_w = max(len("algorithm"), *(len(a) for a, _ in rows))
        scorer_w = max(len("scorer"), *(len(s) for _, s in rows))
        lines = [
            f"mean scorer calls to solve (n={self.n_runs}, c_max={self.c_max}, "
            f"seed={self.master_seed})",
            " ".join(
                ["algorithm".ljust(algo_w), "scorer".ljust(scorer_w)]
                + [v.rjust(8) for v in views]
            ),
        ]
        by_key = {(c.algorithm, c.scorer_spec, c.view): c for c in self.cells}
        for algo, spec in rows:
            cols = []
            for v in views:
                cell = by_key.get((algo, spec, v))
                cols.append(("-" if cell is None else f"{cell.mean_calls:.1f}").rjust(8))
            lines.append(" ".join([algo.ljust(algo_w), spec.ljust(scorer_w)] + cols))
        return "\n".join(lines) + "\n"

    def traces_jsonl(self) -> str:
        out = []
        for c in self.cells:
            for run in c.runs:
                for e in run.trace.entries:
                    record = e.to_dict()
                    record.update(
                        algorithm=c.algorithm, scorer=c.scorer_spec,
                        category=c.category, view=c.view, run_seed=run.seed,
                    )
                    out.append(json.dumps(record, sort_keys=True))
        return "\n".join(out) + ("\n" if out else "")


def _derive_seed(master_seed: int, *parts) -> int:
    material = json.dumps([master_seed, *parts]).encode()
    return int.from_bytes(hashlib.sha256(material).digest()[:8], "big")


def run_benchmark(sphere: PolySphere, algorithms, scorer_specs, queries, *,
                  n_runs: int = 10, c_max: int = 300, master_seed: int,
                  convention=SHAPENET, radius: float = 5.0,
                  greedy_config: GreedyConfig | None = None,
                  bayes_config: BayesConfig | None = None,
                  bounds: CameraBounds | None = None,
                  oracle_seed: int = 1234, oracle_amplitude: float = 0.25,
                  oracle_bumps: int = 6, oracle_bump_height: float = 0.6) -> BenchmarkResult:
    """n seeded runs per (algorithm, scorer, query); unsolved runs count c_max.

    Identical master seeds produce bit-identical results for deterministic
    scorers.
    """
    greedy_config = greedy_config or GreedyConfig()
    bayes_config = bayes_config or BayesConfig()
    bounds = bounds or CameraBounds(r=(radius, radius))
    cells: list[BenchmarkCell] = []
    for spec in scorer_specs:
        for query in queries:
            gold = sphere.nearest_cell(canonical_direction(convention, query.view))
            near = sphere.disk(gold, SOLVED_RING)
            if callable(spec):
                scorer = spec(sphere, query)
                spec_name = getattr(scorer, "scorer_id", "custom")
            else:
                spec_name = spec
                scorer = resolve_scorer(
                    spec, sphere, query, convention=convention,
                    oracle_seed=oracle_seed, oracle_amplitude=oracle_amplitude,
                    oracle_bumps=oracle_bumps, oracle_bump_height=oracle_bump_height,
                )
            for algorithm in algorithms:
                runs = []
                for run_idx in range(n_runs):
                    run_seed = _derive_seed(
                        master_seed, algorithm, spec_name, query.category, query.view, run_idx
                    )
                    if algorithm == "greedy":
                        trace = greedy_search(
                            sphere, scorer, query, greedy_config, c_max, run_seed,
                            radius=radius, success=near.__contains__,
                        )
                    elif algorithm == "bayes":
                        trace = bayesian_search(
                            bounds, sphere, scorer, query, bayes_config, c_max, run_seed,
                            radii=(radius,), success=near.__contains__,
                        )
                    else:
                        raise ValueError(f"unknown algorithm {algorithm!r}")
                    solved_at = _first_solved_call(trace, near)
                    runs.append(RunRecord(
                        seed=run_seed,
                        solved=solved_at is not None,
                        calls_to_solve=solved_at if solved_at is not None else c_max,
                        trace=trace,
                    ))
                cells.append(BenchmarkCell(
                    algorithm=algorithm,
                    scorer_spec=spec_name,
                    category=query.category,
                    view=query.view,
                    gold_cell=gold,
                    mean_calls=float(np.mean([r.calls_to_solve for r in runs])),
                    solve_rate=float(np.mean([1.0 if r.solved else 0.0 for r in runs])),
                    runs=tuple(runs),
                ))
    return BenchmarkResult(
        n_runs=n_runs, c_max=c_max, master_seed=master_seed, radius=radius,
        cells=tuple(cells),
    )
