"""Sequential design loop for bi-objective optimization over a candidate grid.

Each iteration rebuilds the quantile-based Pareto front at the current design
locations, scores every grid candidate with the Euclidean expected quantile
improvement under a conservative future-noise assumption, evaluates the best
candidate with a fresh Monte Carlo batch, and either adds it as a new design
point or pools it into an existing one. A plug-in comparator that estimates
the front from posterior means and ignores future noise is available for
benchmarking, as are distance-to-truth metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .acquisition import future_noise, merge_replicate
from .gp import GpDataset, GpEmulator, NoisyObservation, std_normal_quantile
from .pareto import (
    ConstraintSpec,
    FrontPoint,
    ImprovementMode,
    ParetoFront,
    build_front,
    feasible_mask,
    moeeqi_scores,
)
from .problems import ProblemSpec, candidate_grid, initial_design, mc_aggregate, sample_environment

__all__ = [
    "RunConfig",
    "IterationRecord",
    "RunState",
    "Metrics",
    "run",
    "select_next",
    "moeei_select",
    "evaluate_metrics",
    "front_metrics",
]

_COMPARATORS = ("moeeqi", "moeei")


@dataclass
class RunConfig:
    """Settings for one optimization run; see README for field meanings."""

    beta: float = 0.7
    n_mc: int = 10
    n_iter: int = 9
    grid_resolution: int = 100
    initial_design_size: int = 5
    seed: int = 0
    mode_schedule: tuple = None  # ((mode, count), ...); default all-aggressive
    comparator: str = "moeeqi"
    refit_hyperparameters: bool = True
    literal_constraint_formula: bool = False
    fit_restarts: int = 3
    min_score: float = None  # optional early-stop threshold on the best score
    fixed_coords: dict = None  # {coordinate index: frozen value}

    def __post_init__(self):
        if not 0.5 <= self.beta < 1.0:
            raise ValueError(f"beta must lie in [0.5, 1), got {self.beta}")
        if self.n_mc < 2:
            raise ValueError("n_mc must be at least 2")
        if self.n_iter < 0:
            raise ValueError("n_iter must be non-negative")
        if self.grid_resolution < 2:
            raise ValueError("grid_resolution must be at least 2")
        if self.initial_design_size < 2:
            raise ValueError("initial_design_size must be at least 2")
        if self.comparator not in _COMPARATORS:
            raise ValueError(f"comparator must be one of {_COMPARATORS}")
        if self.mode_schedule is None:
            self.mode_schedule = ((ImprovementMode.AGGRESSIVE, self.n_iter),)
        schedule = []
        for mode, count in self.mode_schedule:
            if isinstance(mode, str):
                mode = ImprovementMode(mode)
            schedule.append((mode, int(count)))
        self.mode_schedule = tuple(schedule)
        if sum(c for _, c in self.mode_schedule) != self.n_iter:
            raise ValueError("mode schedule counts must sum to n_iter")

    def iteration_modes(self) -> list:
        modes = []
        for mode, count in self.mode_schedule:
            modes.extend([mode] * count)
        return modes


@dataclass
class IterationRecord:
    """One sequential-design step: the chosen point, its score, and the front
    after incorporating the new batch."""

    iteration: int
    point: np.ndarray
    score: float
    mode: ImprovementMode
    replicate: bool
    fallback: bool
    front: ParetoFront


@dataclass
class RunState:
    """Everything produced by a run: aligned per-objective datasets, fitted
    emulators, the per-iteration history, and the final quantile front."""

    problem: ProblemSpec
    config: RunConfig
    datasets: tuple
    emulators: tuple
    iteration: int
    initial_front: ParetoFront
    front: ParetoFront
    history: list = field(default_factory=list)
    stopped_early: bool = False


@dataclass
class Metrics:
    """Distance-to-truth summary of a front plus the run's score trace."""

    mean_distance: float
    penalized: dict
    front_size: int
    moeeqi_trace: list


# ---------------------------------------------------------------------------
# Scoring pipeline
# ---------------------------------------------------------------------------


def _quantile_posterior_arrays(mean, var, sigma2_new: float, beta: float):
    """Vectorized one-step-ahead quantile posterior over candidate arrays."""
    mean = np.asarray(mean, float)
    var = np.asarray(var, float)
    total = var + sigma2_new
    safe = np.where(total > 0.0, total, 1.0)
    shift = float(std_normal_quantile(beta)) * np.sqrt(sigma2_new * var / safe)
    sd = var / np.sqrt(safe)
    zero = total <= 0.0
    return np.where(zero, mean, mean + shift), np.where(zero, 0.0, sd)


def _design_front(
    emulators,
    locations: np.ndarray,
    constraints: ConstraintSpec | None,
    beta: float,
    sigma2_future,
    literal: bool,
) -> ParetoFront:
    """Front of current-emulator quantiles at the design locations, with the
    noise-adjusted constraint filter applied."""
    z = float(std_normal_quantile(beta)) if beta > 0.5 else 0.0
    quantiles = np.empty((locations.shape[0], 2))
    adj_sd = np.empty_like(quantiles)
    for i, em in enumerate(emulators):
        m, s2 = em.posterior(locations)
        quantiles[:, i] = m + z * np.sqrt(s2)
        _, sd_q = _quantile_posterior_arrays(m, s2, sigma2_future[i], beta)
        adj_sd[:, i] = sd_q
    points = [
        FrontPoint(float(q1), float(q2), source=locations[j])
        for j, (q1, q2) in enumerate(quantiles)
    ]
    return build_front(points, constraints, noise_sd=adj_sd, beta=beta, literal_formula=literal)


def _score_candidates(
    emulators,
    front: ParetoFront,
    grid: np.ndarray,
    sigma2_future,
    beta: float,
    mode: ImprovementMode,
    constraints: ConstraintSpec | None,
    literal: bool,
):
    """Criterion value for every grid candidate, plus the summed posterior
    variance used by the exploration fallback."""
    mq = np.empty((grid.shape[0], 2))
    sq = np.empty_like(mq)
    var_sum = np.zeros(grid.shape[0])
    for i, em in enumerate(emulators):
        m, s2 = em.posterior(grid)
        mq[:, i], sq[:, i] = _quantile_posterior_arrays(m, s2, sigma2_future[i], beta)
        var_sum += s2
    if len(front) == 0:
        scores = np.zeros(grid.shape[0])
    else:
        scores = moeeqi_scores(front, mq[:, 0], sq[:, 0], mq[:, 1], sq[:, 1], mode)
    keep = feasible_mask(mq, sq, constraints, beta, literal)
    scores = np.where(keep, scores, 0.0)
    return scores, var_sum


def _pick(scores: np.ndarray, var_sum: np.ndarray, grid: np.ndarray):
    best = int(np.argmax(scores))
    if scores[best] > 0.0:
        return grid[best], float(scores[best]), False
    explore = int(np.argmax(var_sum))
    return grid[explore], 0.0, True


def _select(state: "RunState", grid: np.ndarray, mode: ImprovementMode, beta: float, future: bool):
    """Shared selection path: quantile front at design locations, criterion
    scores over the grid, argmax with the exploration fallback."""
    sigma2 = future_noise(state.datasets) if future else [0.0, 0.0]
    front = _design_front(
        state.emulators, state.datasets[0].locations(), state.problem.constraints,
        beta, sigma2, state.config.literal_constraint_formula,
    )
    scores, var_sum = _score_candidates(
        state.emulators, front, grid, sigma2, beta, mode,
        state.problem.constraints, state.config.literal_constraint_formula,
    )
    point, score, fallback = _pick(scores, var_sum, grid)
    return point, score, fallback


def select_next(state: RunState, grid: np.ndarray, mode: ImprovementMode, beta: float):
    """Grid point maximizing the expected quantile improvement criterion under
    the conservative (maximum observed) future-noise rule. Lexicographically
    first on ties; falls back to the maximum-variance point when every
    candidate scores zero.
    """
    point, score, _ = _select(state, grid, mode, beta, future=True)
    return point, score


def moeei_select(state: RunState, grid: np.ndarray, mode: ImprovementMode = ImprovementMode.AGGRESSIVE):
    """Plug-in comparator: front built from posterior means and the future
    observation treated as exact (zero variance), i.e. the same pipeline with
    the quantile level pinned at one half."""
    point, score, _ = _select(state, grid, mode, 0.5, future=False)
    return point, score


# ---------------------------------------------------------------------------
# The sequential-design loop
# ---------------------------------------------------------------------------


def _build_grid(problem: ProblemSpec, config: RunConfig) -> np.ndarray:
    bounds = problem.control_bounds.copy()
    if config.fixed_coords:
        for k, value in config.fixed_coords.items():
            bounds[k] = (value, value)
        axes = []
        for k, (lo, hi) in enumerate(bounds):
            if lo == hi:
                axes.append(np.array([lo]))
            else:
                axes.append(np.linspace(lo, hi, config.grid_resolution))
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)
    return candidate_grid(bounds, config.grid_resolution)


def _fit_emulators(datasets, problem, config, rng, warm=None):
    # Cold fits get extra restarts; warm-started refits converge quickly.
    restarts = config.fit_restarts if warm else config.fit_restarts + 2
    emulators = []
    for i, ds in enumerate(datasets):
        seed = int(rng.integers(2**31 - 1))
        emulators.append(
            GpEmulator.fit(
                ds,
                control_bounds=problem.control_bounds,
                restarts=restarts,
                rng=seed,
                warm_start=warm[i] if warm else None,
            )
        )
    return tuple(emulators)


def run(problem: ProblemSpec, config: RunConfig) -> RunState:
    """Execute the full sequential-design loop and return the final state.

    Starts from a space-filling design evaluated on a shared batch of
    environmental draws, then iterates: rebuild the quantile front, score the
    grid, evaluate the winning point on fresh draws, and merge it into the
    design (pooling when the point repeats an existing location). Emulators
    are refit each iteration unless frozen in the config. Deterministic for a
    fixed seed.
    """
    rng = np.random.default_rng(config.seed)
    beta_eff = config.beta if config.comparator == "moeeqi" else 0.5
    grid = _build_grid(problem, config)

    design = initial_design(config.initial_design_size, problem.control_bounds, rng)
    if config.fixed_coords:
        for k, value in config.fixed_coords.items():
            design[:, k] = value
    env0 = sample_environment(problem.env, config.n_mc, rng)
    obs = {0: [], 1: []}
    for xc in design:
        values = np.asarray(problem.evaluator(xc, env0), dtype=float)
        batch = mc_aggregate(values.T)
        for i in range(2):
            obs[i].append(NoisyObservation(xc, batch.means[i], batch.variances[i]))
    datasets = (GpDataset(obs[0]), GpDataset(obs[1]))
    emulators = _fit_emulators(datasets, problem, config, rng)

    def current_front(dsets, emus):
        sigma2 = future_noise(dsets) if config.comparator == "moeeqi" else [0.0, 0.0]
        return _design_front(
            emus, dsets[0].locations(), problem.constraints,
            beta_eff, sigma2, config.literal_constraint_formula,
        )

    initial_front = current_front(datasets, emulators)
    state = RunState(
        problem=problem,
        config=config,
        datasets=datasets,
        emulators=emulators,
        iteration=0,
        initial_front=initial_front,
        front=initial_front,
    )

    for it, mode in enumerate(config.iteration_modes(), start=1):
        point, score, fallback = _select(
            state, grid, mode, beta_eff, future=config.comparator == "moeeqi"
        )
        if config.min_score is not None and not fallback and score < config.min_score:
            state.stopped_early = True
            break

        draws = sample_environment(problem.env, config.n_mc, rng)
        values = np.asarray(problem.evaluator(point, draws), dtype=float)
        batch = mc_aggregate(values.T)
        existing = state.datasets[0].index_of(point)
        if existing is None:
            state.datasets = tuple(
                ds.with_observation(NoisyObservation(point, batch.means[i], batch.variances[i]))
                for i, ds in enumerate(state.datasets)
            )
        else:
            state.datasets = tuple(
                ds.with_replaced(
                    existing,
                    merge_replicate(ds[existing], batch.means[i], batch.variances[i], config.n_mc),
                )
                for i, ds in enumerate(state.datasets)
            )
        if config.refit_hyperparameters:
            state.emulators = _fit_emulators(
                state.datasets, problem, config, rng, warm=[em.params for em in state.emulators]
            )
        else:
            state.emulators = tuple(
                GpEmulator(ds, em.params, control_bounds=problem.control_bounds)
                for ds, em in zip(state.datasets, state.emulators)
            )
        state.front = current_front(state.datasets, state.emulators)
        state.iteration = it
        state.history.append(
            IterationRecord(
                iteration=it,
                point=np.array(point, dtype=float),
                score=score,
                mode=mode,
                replicate=existing is not None,
                fallback=fallback,
                front=state.front,
            )
        )
    return state


# ---------------------------------------------------------------------------
# Metrics against a reference front
# ---------------------------------------------------------------------------


def _overestimates(q1: float, q2: float, truth: ParetoFront) -> bool:
    # True when no truth point dominates-or-equals (q1, q2): the point claims
    # objective values on the better side of the attainable front.
    tq1, tq2 = truth.q1s(), truth.q2s()
    idx = int(np.searchsorted(tq1, q1, side="right")) - 1
    return idx < 0 or tq2[idx] > q2


def front_metrics(front: ParetoFront, truth: ParetoFront, penalty_factors=(5.0, 10.0)):
    """Mean distance from front points to their nearest truth points, plus
    penalized variants multiplying the distance of overestimating points."""
    if len(truth) == 0:
        raise ValueError("truth front is empty")
    if len(front) == 0:
        return math.nan, {float(f): math.nan for f in penalty_factors}, 0
    tq1, tq2 = truth.q1s(), truth.q2s()
    dists = np.empty(len(front))
    overs = np.empty(len(front), dtype=bool)
    for j, p in enumerate(front):
        dists[j] = math.sqrt(float(np.min((tq1 - p.q1) ** 2 + (tq2 - p.q2) ** 2)))
        overs[j] = _overestimates(p.q1, p.q2, truth)
    penalized = {}
    for f in penalty_factors:
        penalized[float(f)] = float(np.mean(np.where(overs, float(f) * dists, dists)))
    return float(np.mean(dists)), penalized, len(front)


def evaluate_metrics(state: RunState, truth: ParetoFront, penalty_factors=(5.0, 10.0)) -> Metrics:
    """Summarize a finished run against a reference front."""
    mean_dist, penalized, size = front_metrics(state.front, truth, penalty_factors)
    return Metrics(
        mean_distance=mean_dist,
        penalized=penalized,
        front_size=size,
        moeeqi_trace=[rec.score for rec in state.history],
    )
