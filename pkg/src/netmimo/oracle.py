"""Numerical verification of the asymptotics behind the allocation formulas.

Four independent cross-checks back the distance-based policy: the resolvent
identity used to bound precoder deviations, the diagonal-anchored Neumann
expansion of the channel inverse, the distance-driven decay of the inverse's
off-diagonal entries, and the case-by-case exponent bookkeeping that must
reproduce the policy formula entry by entry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .allocation import distance_exponents
from .channel import PURPOSE_CHANNEL, complex_gaussian, pathloss_matrix, trial_rng
from .topology import NodeLayout, interference_levels, pairwise_distance

__all__ = [
    "DivergentSeriesError",
    "TruncationOrder",
    "DecayCheck",
    "CheckResult",
    "truncation_order",
    "resolvent_check",
    "resolvent_max_error",
    "neumann_term_matrix",
    "neumann_partial_sum",
    "term_decay_check",
    "inverse_decay_estimate",
    "truncation_tail_check",
    "proof_exponent_table",
    "run_verification",
]


class DivergentSeriesError(RuntimeError):
    """The expansion's iteration matrix has spectral radius >= 1."""


@dataclass(frozen=True)
class TruncationOrder:
    """Smallest expansion order whose tail is asymptotically negligible.

    gamma_min is the interference level of the strongest cross link; the
    expansion can be cut at n0 = ceil(1 / (1 - gamma_min)) terms.
    """

    gamma_min: float
    n0: int


@dataclass(frozen=True)
class DecayCheck:
    """Per-pair log-log slopes of a Monte-Carlo decay experiment.

    slopes[j, i] is the fitted slope of the median squared magnitude against
    log2(P); NaN marks pairs whose medians are identically zero. passed is
    True when every defined slope stays below its bound.
    """

    slopes: np.ndarray
    bounds: np.ndarray
    passed: bool


@dataclass(frozen=True)
class CheckResult:
    name: str
    measured: float
    bound: float
    passed: bool
    note: str = ""


def truncation_order(distances: np.ndarray, gamma: float) -> TruncationOrder:
    d = np.asarray(distances, dtype=float)
    k = d.shape[0]
    if k < 2:
        raise ValueError("need at least two nodes to define a cross link")
    off = d[~np.eye(k, dtype=bool)]
    d_min = float(off.min())
    if d_min <= 0.0:
        raise ValueError("coincident nodes leave a cross link as strong as a direct one")
    gamma_min = 1.0 + (gamma - 1.0) * d_min
    if gamma_min >= 1.0:
        raise ValueError(f"no finite truncation order for gamma_min = {gamma_min}")
    return TruncationOrder(gamma_min=gamma_min, n0=max(int(np.ceil(1.0 / (1.0 - gamma_min))), 1))


def resolvent_check(a: np.ndarray, b: np.ndarray) -> float:
    """Max entrywise error of inv(a) - inv(b) = inv(b) (b - a) inv(a)."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    a_inv = np.linalg.inv(a)
    b_inv = np.linalg.inv(b)
    err = a_inv - b_inv - b_inv @ (b - a) @ a_inv
    return float(np.max(np.abs(err)))


def resolvent_max_error(
    pairs: int, size: int, seed: int, cond_limit: float = 100.0
) -> float:
    """Worst resolvent_check over random well-conditioned complex pairs."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    done = 0
    while done < pairs:
        a = complex_gaussian(rng, (size, size))
        b = complex_gaussian(rng, (size, size))
        if np.linalg.cond(a) > cond_limit or np.linalg.cond(b) > cond_limit:
            continue
        worst = max(worst, resolvent_check(a, b))
        done += 1
    return worst


def _iteration_matrix(h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    h = np.asarray(h, dtype=complex)
    d = np.diagonal(h)
    if np.any(d == 0):
        raise np.linalg.LinAlgError("zero diagonal entry, expansion undefined")
    return (np.diag(d) - h) / d[:, None], d


def neumann_term_matrix(h: np.ndarray, n: int) -> np.ndarray:
    """All (j, i) entries of the order-n expansion term of inv(h).

    Term n is (Dinv (D - h))^n Dinv with D = diag(h); order 0 is Dinv itself
    and every term with n >= 1 has an exactly zero diagonal at n = 1.
    """
    if n < 0:
        raise ValueError(f"term order must be >= 0, got {n}")
    m, d = _iteration_matrix(h)
    return np.linalg.matrix_power(m, n) / d[None, :]


def neumann_partial_sum(h: np.ndarray, n_max: int) -> tuple[np.ndarray, float]:
    """Partial sum of the expansion up to order n_max and its Frobenius residual.

    Raises DivergentSeriesError when the spectral radius of the iteration
    matrix reaches 1; the residual is measured against a direct solve.
    """
    if n_max < 0:
        raise ValueError(f"n_max must be >= 0, got {n_max}")
    m, d = _iteration_matrix(h)
    radius = float(np.max(np.abs(np.linalg.eigvals(m))))
    if radius >= 1.0:
        raise DivergentSeriesError(f"spectral radius {radius:.6g} >= 1")
    k = h.shape[0]
    term = np.diag(1.0 / d)
    total = term.copy()
    for _ in range(n_max):
        term = m @ term
        total += term
    h_inv = np.linalg.solve(np.asarray(h, dtype=complex), np.eye(k, dtype=complex))
    return total, float(np.linalg.norm(total - h_inv))


def _median_decay_slopes(
    layout: NodeLayout, gamma: float, p_list, trials: int, seed: int, entry_fn
) -> np.ndarray:
    """Medians of |entry_fn(h)|^2 per link across trials, slope vs log2(P)."""
    k = layout.K
    dist = pairwise_distance(layout)
    p_arr = [float(p) for p in p_list]
    if len(p_arr) < 2:
        raise ValueError("need at least two SNR points for a slope")
    meds = np.empty((len(p_arr), k, k))
    for pi, p in enumerate(p_arr):
        model = pathloss_matrix(interference_levels(dist, gamma), p)
        sigma = model.sigma
        acc = np.empty((trials, k, k))
        for t in range(trials):
            h = sigma * complex_gaussian(trial_rng(seed, t, PURPOSE_CHANNEL), (k, k))
            acc[t] = np.abs(entry_fn(h)) ** 2
        meds[pi] = np.median(acc, axis=0)
    x = np.log2(p_arr)
    slopes = np.full((k, k), np.nan)
    valid = np.all(meds > 0, axis=0)
    if np.any(valid):
        y = np.log2(meds[:, valid])
        slopes[valid] = np.polyfit(x, y.reshape(len(p_arr), -1), 1)[0]
    return slopes


def term_decay_check(
    layout: NodeLayout,
    gamma: float,
    p_list,
    trials: int,
    n: int,
    seed: int,
    slope_margin: float = 0.2,
) -> DecayCheck:
    """Median |term_n[j, i]|^2 must decay at least like P^((gamma_min - 1) n).

    Pairs whose medians vanish identically (the diagonal at n = 1) are
    excluded from the fit.
    """
    if n < 1:
        raise ValueError(f"term order must be >= 1, got {n}")
    slopes = _median_decay_slopes(
        layout, gamma, p_list, trials, seed, lambda h: neumann_term_matrix(h, n)
    )
    order = truncation_order(pairwise_distance(layout), gamma)
    bounds = np.full_like(slopes, (order.gamma_min - 1.0) * n + slope_margin)
    valid = ~np.isnan(slopes)
    return DecayCheck(slopes=slopes, bounds=bounds, passed=bool(np.all(slopes[valid] <= bounds[valid])))


def inverse_decay_estimate(
    layout: NodeLayout,
    gamma: float,
    p_list,
    trials: int,
    seed: int,
    slope_margin: float = 0.2,
) -> DecayCheck:
    """Median |inv(h)[j, i]|^2 must decay at least like P^((gamma - 1) dist(i, j))."""
    k = layout.K
    eye = np.eye(k, dtype=complex)
    slopes = _median_decay_slopes(
        layout, gamma, p_list, trials, seed, lambda h: np.linalg.solve(h, eye)
    )
    bounds = (gamma - 1.0) * pairwise_distance(layout) + slope_margin
    valid = ~np.isnan(slopes)
    return DecayCheck(slopes=slopes, bounds=bounds, passed=bool(np.all(slopes[valid] <= bounds[valid])))


def truncation_tail_check(
    layout: NodeLayout, gamma: float, p: float, trials: int, seed: int, factor: float = 10.0
) -> tuple[float, float]:
    """Median squared residual of the n0-truncated expansion vs its tail bound.

    The tail past order n0 is dominated by the first omitted term, the object
    that carries the P^((gamma_min - 1)(n0 + 1)) scaling (term_decay_check
    pins the exponent itself). The residual must stay within `factor` of the
    median squared Frobenius size of that term. Returns (measured median,
    factor * prediction); rare divergent draws are skipped and replaced.
    """
    dist = pairwise_distance(layout)
    order = truncation_order(dist, gamma)
    model = pathloss_matrix(interference_levels(dist, gamma), p)
    sigma = model.sigma
    k = layout.K
    resid_sq = []
    next_term_sq = []
    t = 0
    budget = trials + max(20, trials // 10)
    while len(resid_sq) < trials and t < budget:
        h = sigma * complex_gaussian(trial_rng(seed, t, PURPOSE_CHANNEL), (k, k))
        t += 1
        try:
            _, resid = neumann_partial_sum(h, order.n0)
        except (DivergentSeriesError, np.linalg.LinAlgError):
            continue
        resid_sq.append(resid**2)
        next_term_sq.append(np.linalg.norm(neumann_term_matrix(h, order.n0 + 1)) ** 2)
    if len(resid_sq) < trials:
        raise RuntimeError(f"only {len(resid_sq)} convergent draws out of {t}")
    predicted = float(np.median(next_term_sq))
    return float(np.median(resid_sq)), float(factor * predicted)


def proof_exponent_table(distances: np.ndarray, gamma: float) -> np.ndarray:
    """Exponents required by the case-by-case deviation bound, per (j, k, i).

    Cases: a TX's own direct link needs a full exponent of 1; links that share
    an index with the pair (j, i) need [1 + (gamma - 1) dist(i, j)]+; generic
    links need [1 + (gamma - 1)(dist(j, k) + dist(k, i))]+. The table must
    reproduce the distance policy's exponent tensor exactly.
    """
    d = np.asarray(distances, dtype=float)
    k = d.shape[0]
    table = np.empty((k, k, k))
    for j in range(k):
        for kk in range(k):
            for i in range(k):
                if j == kk == i:
                    e = 1.0
                elif kk == i or kk == j:
                    e = 1.0 + (gamma - 1.0) * d[i, j]
                else:
                    e = 1.0 + (gamma - 1.0) * (d[j, kk] + d[kk, i])
                table[j, kk, i] = max(e, 0.0)
    return table


# ---------------------------------------------------------------------------
# verification suite
# ---------------------------------------------------------------------------

def _line_layout(n: int) -> NodeLayout:
    return NodeLayout(np.column_stack([np.arange(n, dtype=float), np.zeros(n)]))


def run_verification(
    seed: int = 7,
    trials: int = 800,
    snr_db: tuple[float, ...] = (40.0, 50.0, 60.0, 70.0, 80.0),
) -> list[CheckResult]:
    """Run the full numerical verification suite and return one row per check."""
    from .topology import place_grid  # local import keeps module load light

    results: list[CheckResult] = []
    p_list = [10.0 ** (db / 10.0) for db in snr_db]

    worst = resolvent_max_error(pairs=1000, size=8, seed=seed)
    results.append(
        CheckResult("resolvent_identity", worst, 1e-10, worst < 1e-10, "1000 pairs, 8x8")
    )

    line3 = _line_layout(3)
    gamma = 0.6
    order = truncation_order(pairwise_distance(line3), gamma)
    for n in (1, 2):
        chk = term_decay_check(line3, gamma, p_list, trials, n, seed)
        valid = ~np.isnan(chk.slopes)
        measured = float(chk.slopes[valid].max())
        bound = float(chk.bounds[0, 0])
        results.append(
            CheckResult(
                f"term_decay_n{n}",
                measured,
                bound,
                chk.passed,
                f"colinear triple, gamma_min {order.gamma_min:g}",
            )
        )

    diag_max = 0.0
    sigma = pathloss_matrix(interference_levels(pairwise_distance(line3), gamma), p_list[0]).sigma
    for t in range(min(trials, 200)):
        h = sigma * complex_gaussian(trial_rng(seed, t, PURPOSE_CHANNEL), (3, 3))
        diag_max = max(diag_max, float(np.max(np.abs(np.diagonal(neumann_term_matrix(h, 1))))))
    results.append(
        CheckResult("term_n1_zero_diagonal", diag_max, 0.0, diag_max == 0.0, "exact zeros")
    )

    grid3 = place_grid(3)
    measured, bound = truncation_tail_check(grid3, 0.5, 10.0**6.0, min(trials, 400), seed)
    results.append(
        CheckResult("truncation_tail", measured, bound, measured <= bound, "3x3 grid, 60 dB")
    )

    line4 = _line_layout(4)
    chk = inverse_decay_estimate(line4, gamma, p_list, trials, seed)
    valid = ~np.isnan(chk.slopes)
    excess = float(np.max(chk.slopes[valid] - chk.bounds[valid]))
    results.append(
        CheckResult("inverse_decay", excess, 0.0, chk.passed, "4-node line, worst slope excess")
    )

    rng = np.random.default_rng(seed)
    layout = NodeLayout(rng.uniform(0.0, 6.0, size=(10, 2)))
    dist = pairwise_distance(layout)
    gap = float(np.max(np.abs(proof_exponent_table(dist, 0.7) - distance_exponents(dist, 0.7))))
    results.append(
        CheckResult("proof_exponent_table", gap, 1e-12, gap <= 1e-12, "random 10-node layout")
    )

    return results
