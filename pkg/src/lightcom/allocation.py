"""Importance-aware power allocation across bit-plane sub-channels.

Minimizes the predicted IMSE sum_k gamma_k ber_k(p_k |h_k|^2 / sigma2)
subject to sum_k p_k = P, p_k >= 0. Two waterfilling solvers share one
bisection core; both express the solution as p_k = W_k (H_level - H_k)^+:

  uncoded (relaxed):  W_k = 2 sigma2 / (beta_u^2 |h_k|^2)
                      H_k = ln(sigma2 sqrt(snr~_k) / (gamma_k |h_k|^2)),
                      snr~_k frozen at the importance-proportional split
                      p~_k = gamma_k P / sum(gamma)
  coded (exact):      W_k = -sigma2 / (beta_c |h_k|^2)
                      H_k = ln(sigma2 / (gamma_k |h_k|^2))

The uncoded form is a relaxation: it linearizes a transcendental
stationarity condition around the proportional split, so it is
near-optimal rather than optimal. The coded form is the exact KKT
solution of the convex surrogate objective. Predicted BERs in results
always use the exact uncoded curve, never the relaxation device.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidMode, NonConvergence, TooLarge
from .link_models import ber_uncoded, qam_alpha_beta

BISECTION_EPS = 1e-6
BISECTION_MAX_ITER = 200


@dataclass(frozen=True)
class UncodedMode:
    order: int = 4

    def __post_init__(self) -> None:
        qam_alpha_beta(self.order)   # validates the order

    def ber(self, snr: np.ndarray) -> np.ndarray:
        return np.asarray(ber_uncoded(snr, self.order))


@dataclass(frozen=True)
class CodedMode:
    alpha_c: float
    beta_c: float

    def __post_init__(self) -> None:
        if self.alpha_c < 0:
            raise ValueError(f"alpha_c must be >= 0, got {self.alpha_c}")
        if not self.beta_c < 0:
            raise ValueError(f"coded mode requires beta_c < 0, got {self.beta_c}")

    def ber(self, snr: np.ndarray) -> np.ndarray:
        return self.alpha_c * np.exp(self.beta_c * np.asarray(snr, dtype=np.float64))


@dataclass
class AllocationProblem:
    """K parallel AWGN sub-channels with importance weights."""

    gains_sq: np.ndarray          # |h_k|^2, linear
    noise_var: float
    weights: np.ndarray           # gamma_k > 0
    total_power: float
    mode: UncodedMode | CodedMode

    def __post_init__(self) -> None:
        self.gains_sq = np.asarray(self.gains_sq, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.gains_sq.ndim != 1 or self.gains_sq.size < 1:
            raise ValueError("gains_sq must be a nonempty vector")
        if self.weights.shape != self.gains_sq.shape:
            raise ValueError("weights and gains_sq must have matching length")
        if np.any(self.gains_sq <= 0):
            raise ValueError("all |h_k|^2 must be > 0")
        if np.any(self.weights <= 0):
            raise ValueError("all gamma_k must be > 0")
        if self.noise_var <= 0:
            raise ValueError("noise_var must be > 0")
        if self.total_power <= 0:
            raise ValueError("total_power must be > 0")

    @property
    def n_streams(self) -> int:
        return self.gains_sq.size

    def snr(self, powers: np.ndarray) -> np.ndarray:
        return np.asarray(powers) * self.gains_sq / self.noise_var

    def predicted_imse(self, powers: np.ndarray) -> float:
        return float(np.dot(self.weights, self.mode.ber(self.snr(powers))))


@dataclass
class AllocationResult:
    powers: np.ndarray
    bers: np.ndarray
    imse_pred: float
    method: str
    water_level: float | None = None
    widths: np.ndarray | None = field(default=None, repr=False)
    heights: np.ndarray | None = field(default=None, repr=False)
    iterations: int = 0


def _finish(problem: AllocationProblem, powers: np.ndarray, method: str,
            level: float | None = None, widths: np.ndarray | None = None,
            heights: np.ndarray | None = None, iterations: int = 0) -> AllocationResult:
    bers = problem.mode.ber(problem.snr(powers))
    return AllocationResult(powers=powers, bers=bers,
                            imse_pred=float(np.dot(problem.weights, bers)),
                            method=method, water_level=level, widths=widths,
                            heights=heights, iterations=iterations)


def allocate_equal(problem: AllocationProblem) -> AllocationResult:
    """Equal-power baseline p_k = P / K."""
    k = problem.n_streams
    powers = np.full(k, problem.total_power / k)
    return _finish(problem, powers, "ep")


def _bisect_waterlevel(widths: np.ndarray, heights: np.ndarray, total: float,
                       eps: float, max_iter: int) -> tuple[float, int]:
    """Find H_level with sum_k W_k (H_level - H_k)^+ = total by bisection.

    Bounds from the problem structure: the level is at least min H_k (below
    that nothing is allocated) and at most total/(K min W_k) + max H_k. The
    allocated sum is continuous and nondecreasing in the level, so bisection
    converges; the loop stops once |sum - total| <= eps * total.
    """
    def allocated(level: float) -> float:
        return float(np.sum(widths * np.maximum(level - heights, 0.0)))

    lo = float(heights.min())
    hi = float(total / (widths.size * widths.min()) + heights.max())
    if allocated(hi) < total:   # cannot happen with these bounds
        raise NonConvergence("upper bound allocates less than the budget")
    for it in range(1, max_iter + 1):
        level = 0.5 * (lo + hi)
        s = allocated(level)
        if abs(s - total) <= eps * total:
            return level, it
        if s < total:
            lo = level
        else:
            hi = level
    raise NonConvergence(
        f"bisection did not reach |sum(p) - P| <= {eps:g} * P in {max_iter} iterations")


def _polish_level(widths: np.ndarray, heights: np.ndarray, total: float,
                  level: float) -> float:
    """Exact level for the active set implied by the bisection level.

    On the active set A, sum_A W_k (H - H_k) = total is linear in H:
    H = (total + sum_A W_k H_k) / sum_A W_k. Keeping the bisection level
    when the refined one would change the active set preserves the met
    tolerance; otherwise the polish makes the budget exact to rounding.
    """
    active = level > heights
    if not active.any():
        return level
    w, h = widths[active], heights[active]
    exact = (total + np.dot(w, h)) / w.sum()
    same_set = np.array_equal(exact > heights, active)
    return float(exact) if same_set else level


def _waterfill(problem: AllocationProblem, widths: np.ndarray, heights: np.ndarray,
               method: str, eps: float, max_iter: int) -> AllocationResult:
    level, iters = _bisect_waterlevel(widths, heights, problem.total_power,
                                      eps, max_iter)
    level = _polish_level(widths, heights, problem.total_power, level)
    powers = widths * np.maximum(level - heights, 0.0)
    return _finish(problem, powers, method, level=level, widths=widths,
                   heights=heights, iterations=iters)


def allocate_wf_uncoded(problem: AllocationProblem, eps: float = BISECTION_EPS,
                        max_iter: int = BISECTION_MAX_ITER) -> AllocationResult:
    """Relaxed waterfilling for uncoded M-QAM sub-channels."""
    if not isinstance(problem.mode, UncodedMode):
        raise InvalidMode("allocate_wf_uncoded requires an uncoded problem")
    _, beta_u = qam_alpha_beta(problem.mode.order)
    g, s2 = problem.gains_sq, problem.noise_var
    p_prop = problem.weights * problem.total_power / problem.weights.sum()
    snr_prop = p_prop * g / s2
    widths = 2.0 * s2 / (beta_u ** 2 * g)
    heights = np.log(s2 * np.sqrt(snr_prop) / (problem.weights * g))
    return _waterfill(problem, widths, heights, "wf_uncoded", eps, max_iter)


def allocate_wf_coded(problem: AllocationProblem, eps: float = BISECTION_EPS,
                      max_iter: int = BISECTION_MAX_ITER) -> AllocationResult:
    """Exact waterfilling for the exponential coded BER surrogate."""
    if not isinstance(problem.mode, CodedMode):
        raise InvalidMode("allocate_wf_coded requires a coded problem")
    g, s2 = problem.gains_sq, problem.noise_var
    widths = -s2 / (problem.mode.beta_c * g)
    heights = np.log(s2 / (problem.weights * g))
    return _waterfill(problem, widths, heights, "wf_coded", eps, max_iter)


def allocate(problem: AllocationProblem, allocator: str = "wf",
             eps: float = BISECTION_EPS) -> AllocationResult:
    """Dispatch on allocator name: "ep" or "wf" (mode-appropriate form)."""
    if allocator == "ep":
        return allocate_equal(problem)
    if allocator == "wf":
        if isinstance(problem.mode, CodedMode):
            return allocate_wf_coded(problem, eps)
        return allocate_wf_uncoded(problem, eps)
    raise InvalidMode(f"unknown allocator {allocator!r} (use 'ep' or 'wf')")


MAX_GRID_STREAMS = 4
MAX_GRID_POINTS = 50_000_000


def oracle_grid_search(problem: AllocationProblem, step: float) -> AllocationResult:
    """Exhaustive minimizer of predicted IMSE over the discretized simplex.

    Test oracle only; the simplex {p : sum p = P, p_k in step * N} is
    enumerated outright, so K is capped at 4 and the point count guarded.
    """
    k = problem.n_streams
    if k > MAX_GRID_STREAMS:
        raise TooLarge(f"grid search supports K <= {MAX_GRID_STREAMS}, got {k}")
    if step <= 0:
        raise ValueError("step must be > 0")
    n = int(round(problem.total_power / step))
    if n < 1:
        raise ValueError("step larger than the power budget")
    # number of compositions of n into k parts
    from math import comb
    if comb(n + k - 1, k - 1) > MAX_GRID_POINTS:
        raise TooLarge(f"{comb(n + k - 1, k - 1)} grid points exceed the cap")

    unit = problem.total_power / n
    if k == 1:
        best = np.array([problem.total_power])
        return _finish(problem, best, "grid")

    g, s2, w = problem.gains_sq, problem.noise_var, problem.weights
    mode_ber = problem.mode.ber
    # per-stream ber lookup over all multiples of the step
    levels = np.arange(n + 1) * unit
    ber_tab = np.stack([mode_ber(levels * g[i] / s2) for i in range(k)])  # (k, n+1)
    cost_tail = w[-1] * ber_tab[-1]            # cost of giving j units to stream k-1

    def scan(prefix_cost: float, prefix_units: list[int], remaining: int,
             stream: int, best: tuple[float, list[int]]) -> tuple[float, list[int]]:
        if stream == k - 2:
            j = np.arange(remaining + 1)
            tot = prefix_cost + w[stream] * ber_tab[stream][j] + cost_tail[remaining - j]
            i = int(np.argmin(tot))
            if tot[i] < best[0]:
                best = (float(tot[i]), prefix_units + [i, remaining - i])
            return best
        for j in range(remaining + 1):
            best = scan(prefix_cost + w[stream] * ber_tab[stream][j],
                        prefix_units + [j], remaining - j, stream + 1, best)
        return best

    _, units = scan(0.0, [], n, 0, (np.inf, []))
    powers = np.array(units, dtype=np.float64) * unit
    return _finish(problem, powers, "grid")


def check_dominance(problem: AllocationProblem, wf: AllocationResult,
                    ep: AllocationResult) -> bool:
    """Warn when waterfilling exceeds equal power by more than the expected
    slack (exact coded form: none; relaxed uncoded form: 5%)."""
    exact = isinstance(problem.mode, CodedMode)
    bound = ep.imse_pred + 1e-9 if exact else ep.imse_pred * 1.05
    if wf.imse_pred > bound:
        warnings.warn(
            f"waterfilling predicted IMSE {wf.imse_pred:.6g} exceeds the "
            f"equal-power bound {bound:.6g} ({'exact' if exact else 'relaxed'} mode)")
        return False
    return True


def write_allocation_csv(problem: AllocationProblem, result: AllocationResult,
                         path: str | Path) -> None:
    """CSV rows k,gamma,gain,power,ber_pred plus a trailing summary line."""
    lines = ["k,gamma,gain,power,ber_pred"]
    for i in range(problem.n_streams):
        lines.append(f"{i + 1},{problem.weights[i]:.12g},{problem.gains_sq[i]:.12g},"
                     f"{result.powers[i]:.12g},{result.bers[i]:.12g}")
    level = "nan" if result.water_level is None else f"{result.water_level:.12g}"
    lines.append(f"# H_level={level} imse_pred={result.imse_pred:.12g}")
    Path(path).write_text("\n".join(lines) + "\n")
