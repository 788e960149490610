"""Scaled multi-start least squares shared by the resonance and transient fits."""

from __future__ import annotations

import numpy as np
from joblib import Parallel, delayed

from .lm import ConvergenceError, half_widths, levenberg_marquardt, perturbed_starts, rank_check
from .result import FitResult


def solve(residual, names, units, guess, lower, upper, ref, n_starts=8, seed=0, n_jobs=1,
          max_iter=400, rel_step=1e-7, fixed=None, check_rank=True):
    """Minimize ``|residual(x)|^2`` starting from ``guess`` and perturbed copies.

    The optimizer works on ``z = x / ref``. Every start is clipped into the
    bounds; the start with the lowest final cost wins and ties go to the
    earlier start, so the outcome depends only on ``seed``.
    """
    guess = np.asarray(guess, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if np.any(guess < lower) or np.any(guess > upper):
        bad = [n for n, g, lo, hi in zip(names, guess, lower, upper) if not lo <= g <= hi]
        raise ValueError("initial guess outside bounds for: " + ", ".join(bad))

    def fz(z):
        return residual(z * ref)

    rng = np.random.default_rng(seed)
    positive = (guess > 0) & (lower >= 0)
    starts = [np.clip(s, lower, upper) / ref for s in perturbed_starts(guess, n_starts, rng, positive)]
    run = delayed(levenberg_marquardt)
    kw = dict(lower=lower / ref, upper=upper / ref, max_iter=max_iter, rel_step=rel_step)
    if n_jobs == 1:
        results = [levenberg_marquardt(fz, z0, **kw) for z0 in starts]
    else:
        results = Parallel(n_jobs=n_jobs)(run(fz, z0, **kw) for z0 in starts)

    costs = [r.cost for r in results]
    best = results[int(np.argmin(costs))]
    # a rank-deficient optimum explains non-convergence better than the iteration count
    if check_rank:
        rank_check(best.jac, names)
    if not best.converged:
        raise ConvergenceError(f"no convergence after {best.n_iter} iterations (cost {best.cost:.6g})")
    x = best.x * ref
    hw = half_widths(best.jac, best.cost, best.residuals.size) * np.abs(ref)
    return FitResult(
        names=tuple(names), values=x, units=tuple(units), rss=best.cost, half_widths=hw,
        converged=best.converged, n_iter=best.n_iter, nfev=sum(r.nfev for r in results),
        message=best.message, fixed=dict(fixed or {}), start_costs=tuple(costs),
    )
