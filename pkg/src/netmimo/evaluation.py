"""Monte-Carlo evaluation: per-trial rates, ergodic rate points and curves,
high-SNR slope fits, and precoder-deviation statistics.

All policies in a run are evaluated on coupled draws: trial t uses one
channel draw and one estimation-noise tensor, each policy scaling the same
noise by its own bit counts. A trial is accepted only if the true channel
and every policy's estimates pass the conditioning threshold; rejected
trials are replaced by fresh trial indices and counted. Per-trial results
depend only on (seed, trial index), so worker scheduling cannot change any
output.
"""

from __future__ import annotations

import multiprocessing
from dataclasses import dataclass, field

import numpy as np

from .allocation import PolicySpec, build_allocation
from .channel import (
    PURPOSE_CHANNEL,
    PURPOSE_ESTIMATE,
    complex_gaussian,
    pathloss_matrix,
    trial_rng,
)
from .precoding import DEFAULT_COND_THRESHOLD, Precoder, mask_from_sets
from .topology import NodeLayout, data_sharing_sets, interference_levels, pairwise_distance

__all__ = [
    "RejectionRateError",
    "RateSample",
    "RatePoint",
    "RateCurve",
    "DofEstimate",
    "DeviationPoint",
    "PointResult",
    "ExperimentResult",
    "instantaneous_rates",
    "ergodic_rates",
    "evaluate_point",
    "evaluate_curves",
    "precoder_deviation",
    "dof_slope",
    "db_to_linear",
    "linear_to_db",
]

LN2 = float(np.log(2.0))


def db_to_linear(snr_db: float) -> float:
    return float(10.0 ** (snr_db / 10.0))


def linear_to_db(p: float) -> float:
    return float(10.0 * np.log10(p))


class RejectionRateError(RuntimeError):
    """Too many trials were rejected for ill conditioning."""

    def __init__(self, rejected: int, attempted: int, max_rate: float, cond_stats: str):
        super().__init__(
            f"{rejected} of {attempted} trials rejected "
            f"(limit {max_rate:.2%}); condition stats: {cond_stats}"
        )
        self.rejected = int(rejected)
        self.attempted = int(attempted)


@dataclass(frozen=True)
class RateSample:
    """Per-user rates of one realization plus their signal/interference split."""

    rates: np.ndarray
    signal: np.ndarray
    interference: np.ndarray


@dataclass(frozen=True)
class RatePoint:
    """Ergodic rates at one SNR point, averaged over accepted trials."""

    snr_db: float
    p: float
    mean_per_user: np.ndarray
    stderr_per_user: np.ndarray
    mean_avg: float
    stderr_avg: float
    trials: int
    rejections: int


@dataclass(frozen=True)
class DeviationPoint:
    """Distance of the distributed precoder from the perfect-CSIT one.

    mean and median summarize ||T - T*||_F^2 over accepted trials;
    per_row_median holds the median squared deviation of each TX's row.
    """

    snr_db: float
    p: float
    mean: float
    median: float
    per_row_median: np.ndarray
    trials: int
    rejections: int


@dataclass
class RateCurve:
    """One policy's rate points across an SNR grid."""

    policy: PolicySpec
    points: list[RatePoint] = field(default_factory=list)


@dataclass(frozen=True)
class DofEstimate:
    """Least-squares slope of mean rate against log2(P) over the fit window."""

    slope: float
    fit_snr_db: tuple[float, ...]
    residual: float


@dataclass
class PointResult:
    """Coupled evaluation of several policies at one SNR point."""

    rates: dict[PolicySpec, RatePoint]
    deviations: dict[PolicySpec, DeviationPoint]
    samples: dict[PolicySpec, np.ndarray] | None = None


@dataclass
class ExperimentResult:
    """Curves and deviation tracks for every policy of a run."""

    curves: dict[PolicySpec, RateCurve]
    deviations: dict[PolicySpec, list[DeviationPoint]]


def instantaneous_rates(h: np.ndarray, precoder: Precoder | np.ndarray) -> RateSample:
    """Per-user rates log2(1 + S_i / (1 + I_i)) for one channel and precoder.

    Row i of h is receiver i's channel, column i of the precoding matrix is
    user i's beamformer; the unit noise floor is the 1 in the denominator.
    """
    t = precoder.T if isinstance(precoder, Precoder) else np.asarray(precoder, dtype=complex)
    g = np.asarray(h, dtype=complex) @ t
    gains = np.abs(g) ** 2
    signal = np.diagonal(gains).copy()
    cross = gains.copy()
    np.fill_diagonal(cross, 0.0)
    interference = cross.sum(axis=1)
    rates = np.log1p(signal / (1.0 + interference)) / LN2
    return RateSample(rates=rates, signal=signal, interference=interference)


# ---------------------------------------------------------------------------
# trial engine
# ---------------------------------------------------------------------------

def _simulate_trials(
    positions: np.ndarray,
    gamma: float,
    p: float,
    bits_list: list[np.ndarray | None],
    seed: int,
    trial_indices: np.ndarray,
    cond_threshold: float,
    mask: np.ndarray | None,
):
    """Evaluate the given trial indices for all policies on shared draws.

    bits_list entries are (K, K, K) bit tensors, or None for perfect CSIT
    (whose precoder is the reference T* itself). Returns per-trial rates,
    squared precoder deviations (total and per TX row), acceptance flags and
    the worst condition estimate seen per trial; rejected trials carry NaNs.
    """
    layout = NodeLayout(positions)
    k = layout.K
    model = pathloss_matrix(interference_levels(pairwise_distance(layout), gamma), p)
    sigma = model.sigma
    sqrt_p = np.sqrt(p)
    eye = np.eye(k, dtype=complex)
    diag = np.arange(k)
    err_scale = [
        None if b is None else sigma[None, :, :] * np.exp2(-0.5 * np.asarray(b, dtype=float))
        for b in bits_list
    ]
    need_noise = any(s is not None for s in err_scale)

    n = len(trial_indices)
    n_pol = len(bits_list)
    rates = np.full((n, n_pol, k), np.nan)
    dev = np.full((n, n_pol), np.nan)
    row_dev = np.full((n, n_pol, k), np.nan)
    accepted = np.zeros(n, dtype=bool)
    worst_cond = np.zeros(n)

    for row, trial in enumerate(trial_indices):
        h = sigma * complex_gaussian(trial_rng(seed, int(trial), PURPOSE_CHANNEL), (k, k))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            worst = float(np.linalg.cond(h))
        ok = np.isfinite(worst) and worst <= cond_threshold
        estimates: list[np.ndarray | None] = []
        if ok and need_noise:
            noise = complex_gaussian(trial_rng(seed, int(trial), PURPOSE_ESTIMATE), (k, k, k))
        if ok:
            for scale in err_scale:
                if scale is None:
                    estimates.append(None)
                    continue
                est = h[None, :, :] + scale * noise
                with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
                    c = float(np.linalg.cond(est).max())
                worst = max(worst, c)
                if not np.isfinite(c) or c > cond_threshold:
                    ok = False
                    break
                estimates.append(est)
        worst_cond[row] = worst
        if not ok:
            continue

        inv_cols = np.linalg.solve(h, eye)
        t_star = sqrt_p * inv_cols / np.linalg.norm(inv_cols, axis=0, keepdims=True)
        for pol, est in enumerate(estimates):
            if est is None:
                t = t_star
            else:
                inv_stack = np.linalg.solve(est, eye)
                col_norms = np.linalg.norm(inv_stack, axis=1)
                t = sqrt_p * inv_stack[diag, diag, :] / col_norms
            diff2 = np.abs(t - t_star) ** 2
            row_dev[row, pol] = diff2.sum(axis=1)
            dev[row, pol] = row_dev[row, pol].sum()
            if mask is not None:
                t = t * mask
            gains = np.abs(h @ t) ** 2
            signal = np.diagonal(gains).copy()
            np.fill_diagonal(gains, 0.0)
            rates[row, pol] = np.log1p(signal / (1.0 + gains.sum(axis=1))) / LN2
        accepted[row] = True

    return rates, dev, row_dev, accepted, worst_cond


def _block_call(payload):
    args, idx = payload
    positions, gamma, p, bits_list, seed, cond_threshold, mask = args
    return _simulate_trials(positions, gamma, p, bits_list, seed, idx, cond_threshold, mask)


def _map_trials(args: tuple, idx: np.ndarray, workers: int):
    """Run _simulate_trials over idx, split across workers, results in index order."""
    if workers <= 1 or len(idx) < 2 * workers:
        return [_block_call((args, idx))]
    chunks = [c for c in np.array_split(idx, workers) if len(c)]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(processes=workers) as pool:
        return pool.map(_block_call, [(args, c) for c in chunks])


def _run_point(
    layout: NodeLayout,
    gamma: float,
    p: float,
    bits_list: list[np.ndarray | None],
    seed: int,
    trials: int,
    cond_threshold: float,
    max_rejection_rate: float,
    mask: np.ndarray | None,
    workers: int,
):
    """Collect exactly `trials` accepted trials, topping up rejected indices."""
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    args = (layout.positions, gamma, p, bits_list, seed, cond_threshold, mask)
    blocks = []
    accepted_total = 0
    next_idx = 0
    extra_budget = max(20, trials // 10)
    while accepted_total < trials:
        need = trials - accepted_total
        if next_idx + need > trials + extra_budget:
            stats = _cond_stats(blocks)
            raise RejectionRateError(next_idx - accepted_total, next_idx, max_rejection_rate, stats)
        idx = np.arange(next_idx, next_idx + need)
        blocks.extend(_map_trials(args, idx, workers))
        next_idx += need
        accepted_total = int(sum(b[3].sum() for b in blocks))

    rates = np.concatenate([b[0] for b in blocks], axis=0)
    dev = np.concatenate([b[1] for b in blocks], axis=0)
    row_dev = np.concatenate([b[2] for b in blocks], axis=0)
    accepted = np.concatenate([b[3] for b in blocks], axis=0)
    rejections = int(next_idx - trials)
    if rejections / next_idx > max_rejection_rate:
        raise RejectionRateError(rejections, next_idx, max_rejection_rate, _cond_stats(blocks))
    keep = np.flatnonzero(accepted)
    return rates[keep], dev[keep], row_dev[keep], rejections


def _cond_stats(blocks) -> str:
    if not blocks:
        return "none"
    conds = np.concatenate([b[4] for b in blocks])
    return (
        f"median {np.median(conds):.3e}, p99 {np.percentile(conds, 99):.3e}, "
        f"max {conds.max():.3e}"
    )


def _stderr(samples: np.ndarray) -> np.ndarray | float:
    n = samples.shape[0]
    if n < 2:
        return np.zeros(samples.shape[1:]) if samples.ndim > 1 else 0.0
    return samples.std(axis=0, ddof=1) / np.sqrt(n)


def evaluate_point(
    layout: NodeLayout,
    gamma: float,
    policies: list[PolicySpec],
    p: float,
    trials: int,
    seed: int,
    *,
    cond_threshold: float = DEFAULT_COND_THRESHOLD,
    max_rejection_rate: float = 0.01,
    data_mask: bool = False,
    workers: int = 1,
    keep_samples: bool = False,
) -> PointResult:
    """Coupled Monte-Carlo evaluation of several policies at one SNR point.

    Every policy sees the same channel and the same estimation-noise draws
    (scaled by its own bit counts), so cross-policy comparisons share their
    randomness. Means and standard errors run over accepted trials only.
    """
    if len(policies) != len(set(policies)):
        raise ValueError("duplicate policy specs in one run")
    allocs = [build_allocation(spec, layout, gamma, p) for spec in policies]
    bits_list = [None if spec.kind == "perfect" else alloc.bits for spec, alloc in zip(policies, allocs)]
    mask = None
    if data_mask:
        mask = mask_from_sets(data_sharing_sets(layout, gamma), layout.K)
    rates, dev, row_dev, rejections = _run_point(
        layout, gamma, p, bits_list, seed, trials, cond_threshold, max_rejection_rate, mask, workers
    )
    snr_db = linear_to_db(p)
    rate_points: dict[PolicySpec, RatePoint] = {}
    dev_points: dict[PolicySpec, DeviationPoint] = {}
    samples: dict[PolicySpec, np.ndarray] = {}
    for i, spec in enumerate(policies):
        per_user = rates[:, i, :]
        avg_series = per_user.mean(axis=1)
        rate_points[spec] = RatePoint(
            snr_db=snr_db,
            p=p,
            mean_per_user=per_user.mean(axis=0),
            stderr_per_user=np.asarray(_stderr(per_user)),
            mean_avg=float(avg_series.mean()),
            stderr_avg=float(_stderr(avg_series)),
            trials=per_user.shape[0],
            rejections=rejections,
        )
        dev_points[spec] = DeviationPoint(
            snr_db=snr_db,
            p=p,
            mean=float(dev[:, i].mean()),
            median=float(np.median(dev[:, i])),
            per_row_median=np.median(row_dev[:, i, :], axis=0),
            trials=dev.shape[0],
            rejections=rejections,
        )
        if keep_samples:
            samples[spec] = per_user
    return PointResult(rates=rate_points, deviations=dev_points, samples=samples or None)


def evaluate_curves(
    layout: NodeLayout,
    gamma: float,
    policies: list[PolicySpec],
    snr_db: list[float],
    trials: int,
    seed: int,
    **opts,
) -> ExperimentResult:
    """Sweep evaluate_point over an SNR grid, one coupled run per point."""
    curves = {spec: RateCurve(policy=spec) for spec in policies}
    deviations: dict[PolicySpec, list[DeviationPoint]] = {spec: [] for spec in policies}
    for db in snr_db:
        point = evaluate_point(layout, gamma, policies, db_to_linear(db), trials, seed, **opts)
        for spec in policies:
            curves[spec].points.append(point.rates[spec])
            deviations[spec].append(point.deviations[spec])
    return ExperimentResult(curves=curves, deviations=deviations)


def ergodic_rates(
    layout: NodeLayout,
    gamma: float,
    policy: PolicySpec,
    p: float,
    trials: int,
    seed: int,
    **opts,
) -> RatePoint:
    """Mean and standard error of per-user rates for one policy at one SNR."""
    return evaluate_point(layout, gamma, [policy], p, trials, seed, **opts).rates[policy]


def precoder_deviation(
    layout: NodeLayout,
    gamma: float,
    policy: PolicySpec,
    p: float,
    trials: int,
    seed: int,
    **opts,
) -> DeviationPoint:
    """Deviation statistics ||T - T*||_F^2 for one policy at one SNR."""
    return evaluate_point(layout, gamma, [policy], p, trials, seed, **opts).deviations[policy]


def dof_slope(curve: RateCurve, fit_points: int = 4) -> DofEstimate:
    """Slope of mean rate per user against log2(P) over the top fit_points SNRs.

    This is the generalized-DoF estimate of the curve; residual is the RMS
    misfit of the regression line over the window.
    """
    if fit_points < 2:
        raise ValueError(f"fit_points must be >= 2, got {fit_points}")
    pts = sorted(curve.points, key=lambda q: q.snr_db)
    if len(pts) < fit_points:
        raise ValueError(f"curve has {len(pts)} points, need at least {fit_points}")
    window = pts[-fit_points:]
    x = np.log2([q.p for q in window])
    y = np.array([q.mean_avg for q in window])
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return DofEstimate(
        slope=float(slope), fit_snr_db=tuple(q.snr_db for q in window), residual=resid
    )
