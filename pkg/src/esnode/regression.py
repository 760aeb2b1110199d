"""Regularized Gauss-Newton engine with ridge warm start.

The readout weights solve a nonlinear least-squares problem over the stacked
constraint residuals. Each iteration solves the damped normal equations for
a descent step, optionally halving it until the loss stops increasing, and
the iteration ends when the relative loss change falls below tolerance. The
initial guess replicates the trial increments by ridge regression on the
activation features.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np
import scipy.linalg

from .errors import LengthMismatch, NonFinite, SingularSystem
from .reservoir import HiddenSequence
from .trial import Trajectory

Array = np.ndarray

# damping floor that keeps the normal matrix positive definite even when a
# caller asks for effectively zero regularization
LAMBDA_FLOOR = 1e-12


@dataclass(frozen=True)
class GnConfig:
    lam: float
    max_iters: int
    rel_loss_tol: float = 1e-5
    backtracking: bool = True
    backtrack_max_halvings: int = 20

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_loss_tol < 0:
            raise ValueError("rel_loss_tol must be nonnegative")
        if self.backtrack_max_halvings < 0:
            raise ValueError("backtrack_max_halvings must be nonnegative")


@dataclass(frozen=True)
class IterationRecord:
    """One accepted Gauss-Newton iteration."""

    iter: int
    loss: float
    loss_by_family: tuple
    rel_step: float
    rel_loss_change: float
    halvings: int


def _family_losses(e: Array) -> tuple:
    thirds = np.split(e, 3)
    return tuple(float(block @ block) for block in thirds)


def ridge_initial_guess(hs: HiddenSequence, trial: Trajectory, tau: float,
                        lam: float) -> Array:
    """Weights that replicate the trial increments, by ridge regression.

    trial must span one more point than hs has steps so that every
    activation row pairs with the increment it produced.
    """
    if trial.n_points != hs.n_steps + 1:
        raise LengthMismatch(
            f"trial has {trial.n_points} points for {hs.n_steps} steps; "
            f"need exactly one more point than steps"
        )
    targets = np.diff(trial.states, axis=0) / tau
    sig = hs.sig
    gram = sig.T @ sig
    gram[np.diag_indices_from(gram)] += max(lam, LAMBDA_FLOOR)
    try:
        wt = scipy.linalg.solve(gram, sig.T @ targets, assume_a="pos")
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise SingularSystem(f"ridge normal matrix is singular: {exc}") from exc
    return wt.T


def gn_step(j, e: Array, lam: float) -> Array:
    """Damped Gauss-Newton step: solve the regularized normal equations.

    Returns vec(delta) minimizing the linearized loss; the caller reshapes.
    """
    jm = getattr(j, "j", j)
    g = jm.T @ e
    a = jm.T @ jm
    a[np.diag_indices_from(a)] += max(lam, LAMBDA_FLOOR)
    try:
        return -scipy.linalg.solve(a, g, assume_a="pos")
    except (scipy.linalg.LinAlgError, np.linalg.LinAlgError) as exc:
        raise SingularSystem(f"normal equations are singular: {exc}") from exc


def solve_stage(residual_fn: Callable[[Array], Array],
                jacobian_fn: Callable[[Array], object],
                w0: Array, cfg: GnConfig) -> Tuple[Array, List[IterationRecord]]:
    """Iterate damped Gauss-Newton from w0 and return the best weights seen.

    residual_fn maps weights to the stacked residual vector (three equal
    family blocks); jacobian_fn returns the matching Jacobian. With
    backtracking on, a step is halved until the loss stops increasing; if no
    halving helps the step is rejected, which reads as converged.
    """
    w = w0.copy()
    e = residual_fn(w)
    loss = float(e @ e)
    if not np.isfinite(loss):
        raise NonFinite("initial loss is non-finite; no fallback weights exist")
    best_w, best_loss = w.copy(), loss
    history: List[IterationRecord] = []
    for it in range(1, cfg.max_iters + 1):
        delta = gn_step(jacobian_fn(w), e, cfg.lam).reshape(w.shape)
        alpha = 1.0
        halvings = 0
        w_new = w + delta
        e_new = residual_fn(w_new)
        loss_new = float(e_new @ e_new)
        if cfg.backtracking:
            while (not np.isfinite(loss_new) or loss_new > loss) \
                    and halvings < cfg.backtrack_max_halvings:
                alpha *= 0.5
                halvings += 1
                w_new = w + alpha * delta
                e_new = residual_fn(w_new)
                loss_new = float(e_new @ e_new)
            if not np.isfinite(loss_new) or loss_new > loss:
                # no step length helped; keep w and report a stall
                history.append(IterationRecord(
                    iter=it, loss=loss, loss_by_family=_family_losses(e),
                    rel_step=0.0, rel_loss_change=0.0,
                    halvings=halvings))
                break
        elif not np.isfinite(loss_new):
            raise NonFinite(f"loss became non-finite at iteration {it}")
        w_norm = np.linalg.norm(w)
        rel_step = float(np.linalg.norm(alpha * delta) / w_norm) \
            if w_norm > 0 else float(np.linalg.norm(alpha * delta))
        rel_change = abs(loss_new - loss) / loss if loss > 0 else 0.0
        w, e, loss = w_new, e_new, loss_new
        if loss < best_loss:
            best_loss, best_w = loss, w.copy()
        history.append(IterationRecord(
            iter=it, loss=loss, loss_by_family=_family_losses(e),
            rel_step=rel_step, rel_loss_change=float(rel_change),
            halvings=halvings))
        if rel_change < cfg.rel_loss_tol:
            break
    return best_w, history


def history_to_log(history: List[IterationRecord]) -> str:
    """One comma-separated line per iteration, in column order:
    iter, loss, family losses, rel_step, rel_loss_change, halvings."""
    lines = []
    for rec in history:
        fams = ",".join(format(x, ".17g") for x in rec.loss_by_family)
        lines.append(
            f"{rec.iter},{format(rec.loss, '.17g')},{fams},"
            f"{format(rec.rel_step, '.17g')},"
            f"{format(rec.rel_loss_change, '.17g')},{rec.halvings}"
        )
    return "\n".join(lines) + "\n"
