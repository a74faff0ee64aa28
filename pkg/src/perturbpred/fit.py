"""Model fitting: penalized regression and penalized causal interaction fits.

Three fitters live here:

* ``fit_regression`` solves ||X - D R||_F^2 + lambda ||R||_1 exactly
  (normal equations) when lambda = 0 and by per-column coordinate descent
  otherwise.
* ``fit_causal_linear`` minimizes ||X - D B^T (-inv(W))||_F^2 plus an L1
  penalty on the off-diagonal of W by proximal gradient descent with
  backtracking; the loss is nonconvex in W with a singular set at
  det W = 0, so every candidate step is screened for conditioning.
* ``fit_causal_ode`` fits the nonlinear dynamics by gradient descent with
  finite-difference gradients taken through the steady-state solver.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DimensionError, NonConvergenceError, SingularMatrixError
from .linear import _rcond, safe_inverse
from .ode import OdeModel, steady_state
from .types import (
    RCOND_MIN,
    W_FORM,
    ConditionMatrix,
    EdgeMask,
    InteractionMatrix,
    RegressionCoefficients,
    ResponseMatrix,
    TargetMap,
    check_paired,
)


@dataclass(frozen=True)
class FitConfig:
    """Shared fitting knobs.

    step_size "backtracking" (the default) uses Armijo halving on the smooth
    part of the objective; a float requests that fixed step instead.
    """

    lam: float = 0.0
    max_iter: int = 10000
    tol: float = 1e-8
    step_size: Union[str, float] = "backtracking"
    mask: Optional[EdgeMask] = None
    w_init: Optional[InteractionMatrix] = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if isinstance(self.step_size, str) and self.step_size != "backtracking":
            raise ValueError(f"unknown step_size {self.step_size!r}")


@dataclass(frozen=True)
class FitReport:
    """Outcome of one fit: final objective, iteration count, trace, notes."""

    final_objective: float
    iterations: int
    converged: bool
    objective_trace: np.ndarray
    status: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(
            self, "objective_trace", np.asarray(self.objective_trace, dtype=float)
        )

    def to_dict(self):
        return {
            "final_objective": self.final_objective,
            "iterations": self.iterations,
            "converged": self.converged,
            "objective_trace": self.objective_trace.tolist(),
            "status": list(self.status),
        }


def soft_threshold(x, thr):
    """Closed-form proximal operator of thr * |.|: shrink toward 0 by thr."""
    return np.sign(x) * np.maximum(np.abs(x) - thr, 0.0)


# ---------------------------------------------------------------------------
# regression


def _deficient_columns(D, drug_names):
    """Names of columns that make D rank-deficient (all-zero columns first)."""
    zero = [drug_names[j] for j in range(D.shape[1]) if not np.any(D[:, j])]
    if zero:
        return zero
    rank = np.linalg.matrix_rank(D)
    if rank < D.shape[1]:
        return list(drug_names)  # deficiency from collinearity, no single culprit
    return []


def regression_objective(D, X, R, lam):
    resid = X - D @ R
    return float(np.sum(resid * resid) + lam * np.sum(np.abs(R)))


def fit_regression(
    D: ConditionMatrix, X: ResponseMatrix, cfg: FitConfig = FitConfig()
):
    """Penalized multivariate regression of responses on drug doses.

    lambda = 0 solves the normal equations exactly and errors on a
    rank-deficient design (the leave-one-drug-out pathology).  lambda > 0
    runs cyclic coordinate descent independently per response column.
    """
    check_paired(D, X)
    Dv, Xv = D.values, X.values
    q = Dv.shape[1]

    if cfg.lam == 0.0:
        bad = _deficient_columns(Dv, D.drug_names)
        if bad:
            raise SingularMatrixError(
                "unregularized regression has no unique solution; deficient "
                f"design columns: {', '.join(bad)}"
            )
        R = np.linalg.solve(Dv.T @ Dv, Dv.T @ Xv)
        obj = regression_objective(Dv, Xv, R, 0.0)
        report = FitReport(obj, 1, True, [obj])
        return RegressionCoefficients(R), report

    col_sq = np.sum(Dv * Dv, axis=0)
    R = np.zeros((q, Xv.shape[1]))
    trace = [regression_objective(Dv, Xv, R, cfg.lam)]
    converged = True
    total_sweeps = 0
    for col in range(Xv.shape[1]):
        x = Xv[:, col]
        r = R[:, col]
        resid = x - Dv @ r
        for sweep in range(cfg.max_iter):
            max_delta = 0.0
            for k in range(q):
                if col_sq[k] == 0.0:
                    continue
                old = r[k]
                rho = Dv[:, k] @ resid + col_sq[k] * old
                new = soft_threshold(rho, cfg.lam / 2.0) / col_sq[k]
                if new != old:
                    resid += Dv[:, k] * (old - new)
                    r[k] = new
                    max_delta = max(max_delta, abs(new - old))
            if max_delta < cfg.tol * max(1.0, np.max(np.abs(r))):
                total_sweeps += sweep + 1
                break
        else:
            converged = False
            total_sweeps += cfg.max_iter
        R[:, col] = r
    trace.append(regression_objective(Dv, Xv, R, cfg.lam))
    report = FitReport(trace[-1], total_sweeps, converged, trace)
    return RegressionCoefficients(R), report


def fit_regression_lodo(
    D: ConditionMatrix,
    X: ResponseMatrix,
    held_out_drug: int,
    cfg: FitConfig = FitConfig(),
):
    """Unregularized regression with the held-out drug's coefficients forced to 0.

    The held-out drug must be absent from every training condition; its row
    of the coefficient matrix is inserted as zeros after fitting on the
    remaining columns.
    """
    check_paired(D, X)
    q = D.n_drugs
    if not 0 <= held_out_drug < q:
        raise IndexError(f"held_out_drug {held_out_drug} out of range for {q} drugs")
    col = D.values[:, held_out_drug]
    if np.any(col != 0.0):
        raise ValueError(
            f"held-out drug {D.drug_names[held_out_drug]!r} appears in training "
            "conditions; split plan is inconsistent"
        )
    keep = [j for j in range(q) if j != held_out_drug]
    D_red = ConditionMatrix(D.values[:, keep], [D.drug_names[j] for j in keep])
    cfg0 = FitConfig(lam=0.0, max_iter=cfg.max_iter, tol=cfg.tol)
    R_red, report = fit_regression(D_red, X, cfg0)
    R = np.insert(R_red.values, held_out_drug, 0.0, axis=0)
    return RegressionCoefficients(R), report


# ---------------------------------------------------------------------------
# causal linear


def causal_loss_and_gradient(W, D: ConditionMatrix, X: ResponseMatrix, B: TargetMap):
    """Smooth Frobenius loss ||X - D B^T (-inv(W))||_F^2 and its gradient in W.

    With C = D B^T and E = X + C inv(W), matrix calculus through the inverse
    gives  grad = -2 (inv(W) E^T C inv(W))^T.
    """
    W = np.asarray(W, dtype=float)
    if _rcond(W) < RCOND_MIN:
        raise SingularMatrixError("W is singular or ill-conditioned in loss evaluation")
    Winv = np.linalg.inv(W)
    C = D.values @ B.values.T
    E = X.values + C @ Winv
    loss = float(np.sum(E * E))
    grad = -2.0 * (Winv @ E.T @ C @ Winv).T
    return loss, grad


def causal_objective(W, D, X, B, lam):
    loss, _ = causal_loss_and_gradient(W, D, X, B)
    off = W - np.diag(np.diag(W))
    return loss + lam * float(np.sum(np.abs(off)))


def _penalty(W, lam):
    off = W - np.diag(np.diag(W))
    return lam * float(np.sum(np.abs(off)))


def _apply_mask(W, mask):
    if mask is not None:
        W = np.where(mask.allowed, W, 0.0)
    return W


def fit_causal_linear(
    D: ConditionMatrix,
    X: ResponseMatrix,
    B: TargetMap,
    cfg: FitConfig = FitConfig(),
):
    """Fit the interaction matrix W by proximal gradient descent.

    Each iteration takes a gradient step on the smooth loss, soft-thresholds
    the off-diagonal entries by step * lambda (the diagonal is unpenalized),
    zeroes masked-out entries, and backtracks whenever the candidate is
    ill-conditioned or fails the proximal sufficient-decrease test.
    """
    check_paired(D, X)
    p = B.n_responses
    if B.n_drugs != D.n_drugs:
        raise DimensionError(
            f"target map has {B.n_drugs} drugs, conditions have {D.n_drugs}"
        )

    status = []
    C = D.values @ B.values.T
    if cfg.lam == 0.0 and np.linalg.matrix_rank(C) < p:
        status.append(
            "non-unique-solution: rank(D B^T) = "
            f"{np.linalg.matrix_rank(C)} < p = {p}; unregularized W is not identified"
        )

    if cfg.w_init is not None:
        if cfg.w_init.form != W_FORM:
            raise ValueError("w_init must be W-form")
        W = cfg.w_init.values.copy()
        safe_inverse(W, "w_init")
    else:
        W = -np.eye(p)
    W = _apply_mask(W, cfg.mask)

    loss, grad = causal_loss_and_gradient(W, D, X, B)
    obj = loss + _penalty(W, cfg.lam)
    trace = [obj]
    step = 1.0 if cfg.step_size == "backtracking" else float(cfg.step_size)
    backtracking = cfg.step_size == "backtracking"
    converged = False
    it = 0

    for it in range(1, cfg.max_iter + 1):
        accepted = False
        trial = step
        while trial > 1e-20:
            W_new = W - trial * grad
            off_mask = ~np.eye(p, dtype=bool)
            W_new[off_mask] = soft_threshold(W_new[off_mask], trial * cfg.lam)
            W_new = _apply_mask(W_new, cfg.mask)
            if _rcond(W_new) < RCOND_MIN:
                if not backtracking:
                    raise SingularMatrixError(
                        "fixed-step iterate crossed the singular set; use backtracking"
                    )
                trial *= 0.5
                continue
            try:
                loss_new, grad_new = causal_loss_and_gradient(W_new, D, X, B)
            except SingularMatrixError:
                trial *= 0.5
                continue
            diff = W_new - W
            quad = loss + float(np.sum(grad * diff)) + float(np.sum(diff * diff)) / (
                2.0 * trial
            )
            if loss_new <= quad + 1e-12 * max(1.0, abs(loss)) or not backtracking:
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            raise NonConvergenceError(
                "no feasible step found (backtracking exhausted near the "
                "singular set of W)"
            )

        obj_new = loss_new + _penalty(W_new, cfg.lam)
        rel_change = abs(obj - obj_new) / max(1.0, abs(obj))
        W, loss, grad, obj = W_new, loss_new, grad_new, obj_new
        trace.append(obj)
        if backtracking:
            step = trial * 2.0  # cautiously re-grow after a successful step
        if rel_change < cfg.tol:
            converged = True
            break

    report = FitReport(obj, it, converged, trace, tuple(status))
    return InteractionMatrix(W, form=W_FORM), report


def least_squares_w_init(D: ConditionMatrix, X: ResponseMatrix, B: TargetMap):
    """Closed-form warm start for the unpenalized causal fit.

    When D B^T has full column rank, the minimizer over M = -inv(W) of
    ||X - D B^T M||_F^2 is ordinary least squares; inverting it back gives a
    W with zero (or noise-level) loss.  Returns None when the least-squares
    route is unavailable or produces a near-singular M.
    """
    C = D.values @ B.values.T
    p = C.shape[1]
    if np.linalg.matrix_rank(C) < p:
        return None
    M, *_ = np.linalg.lstsq(C, X.values, rcond=None)
    if _rcond(M) < 1e-8:
        return None
    return InteractionMatrix(-np.linalg.inv(M), form=W_FORM)


# ---------------------------------------------------------------------------
# causal ODE


def causal_ode_objective(
    model: OdeModel,
    D: ConditionMatrix,
    X: ResponseMatrix,
    lam: float,
    ss_tol=1e-7,
    t_max=100.0,
    dt=0.05,
):
    """Penalized steady-state squared error, or None on non-convergence."""
    total = 0.0
    for k in range(D.n_conditions):
        res = steady_state(model, D.values[k], tol=ss_tol, t_max=t_max, dt=dt)
        if not res.converged:
            return None
        diff = X.values[k] - res.state
        total += float(diff @ diff)
    return total + _penalty(model.W.values, lam)


def fit_causal_ode(
    D: ConditionMatrix,
    X: ResponseMatrix,
    B: TargetMap,
    model_template: OdeModel,
    cfg: FitConfig = FitConfig(max_iter=200),
    fit_epsilon: bool = False,
    ss_tol: float = 1e-7,
    t_max: float = 100.0,
    dt: float = 0.05,
    fd_step: float = 1e-5,
):
    """Fit the nonlinear dynamics by finite-difference gradient descent.

    The template fixes the envelope; W starts from cfg.w_init (default -I)
    and epsilon from the template, optimized in log space when fit_epsilon
    is set so positivity holds by construction.  Candidates whose
    steady-state integration fails to converge are rejected and the step
    halved.
    """
    check_paired(D, X)
    p = B.n_responses
    mask = cfg.mask
    if cfg.w_init is not None:
        W = cfg.w_init.values.copy()
    else:
        W = -np.eye(p)
    W = _apply_mask(W, mask)
    log_eps = np.log(model_template.epsilon.copy())

    free = mask.allowed.copy() if mask is not None else np.ones((p, p), dtype=bool)
    off_mask = ~np.eye(p, dtype=bool)

    def build(Wv, log_eps_v):
        return OdeModel(
            InteractionMatrix(Wv, form=W_FORM),
            B,
            np.exp(log_eps_v),
            envelope=model_template.envelope,
            clip_bound=model_template.clip_bound,
        )

    def smooth_loss(Wv, log_eps_v):
        obj = causal_ode_objective(
            build(Wv, log_eps_v), D, X, 0.0, ss_tol=ss_tol, t_max=t_max, dt=dt
        )
        return obj

    loss = smooth_loss(W, log_eps)
    if loss is None:
        raise NonConvergenceError("steady state does not converge at initialization")
    obj = loss + _penalty(W, cfg.lam)
    trace = [obj]
    step = 0.1 if cfg.step_size == "backtracking" else float(cfg.step_size)
    converged = False
    it = 0

    for it in range(1, cfg.max_iter + 1):
        # central finite differences on the smooth loss
        gW = np.zeros_like(W)
        idx = np.argwhere(free)
        for i, j in idx:
            Wp = W.copy()
            Wm = W.copy()
            Wp[i, j] += fd_step
            Wm[i, j] -= fd_step
            lp = smooth_loss(Wp, log_eps)
            lm = smooth_loss(Wm, log_eps)
            if lp is None or lm is None:
                lp = lp if lp is not None else loss
                lm = lm if lm is not None else loss
            gW[i, j] = (lp - lm) / (2.0 * fd_step)
        g_eps = np.zeros_like(log_eps)
        if fit_epsilon:
            for i in range(p):
                ep = log_eps.copy()
                em = log_eps.copy()
                ep[i] += fd_step
                em[i] -= fd_step
                lp = smooth_loss(W, ep)
                lm = smooth_loss(W, em)
                if lp is None or lm is None:
                    continue
                g_eps[i] = (lp - lm) / (2.0 * fd_step)

        accepted = False
        trial = step
        while trial > 1e-14:
            W_new = W - trial * gW
            W_new[off_mask] = soft_threshold(W_new[off_mask], trial * cfg.lam)
            W_new = _apply_mask(W_new, mask)
            eps_new = log_eps - trial * g_eps if fit_epsilon else log_eps
            loss_new = smooth_loss(W_new, eps_new)
            if loss_new is None:
                trial *= 0.5
                continue
            obj_new = loss_new + _penalty(W_new, cfg.lam)
            if obj_new <= obj + 1e-10 * max(1.0, abs(obj)):
                accepted = True
                break
            trial *= 0.5
        if not accepted:
            break

        rel_change = abs(obj - obj_new) / max(1.0, abs(obj))
        W, log_eps, loss, obj = W_new, eps_new, loss_new, obj_new
        trace.append(obj)
        step = trial * 2.0
        if rel_change < cfg.tol:
            converged = True
            break

    report = FitReport(obj, it, converged, trace)
    return build(W, log_eps), report


# ---------------------------------------------------------------------------
# lambda selection


def select_lambda_cv(
    D: ConditionMatrix,
    X: ResponseMatrix,
    B: TargetMap,
    grid=None,
    n_folds: int = 5,
    seed: int = 0,
    cfg: FitConfig = FitConfig(max_iter=2000, tol=1e-7),
):
    """Pick lambda for the causal linear fit by k-fold cross-validation.

    Needed when q < p leaves the unregularized fit unidentified.  Returns
    (best_lambda, {lambda: mean held-out SSE}).
    """
    from .linear import predict_causal_linear  # local import avoids cycle at import time

    if grid is None:
        grid = np.logspace(-3, 1, 9)
    n = D.n_conditions
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    folds = np.array_split(perm, n_folds)
    scores = {}
    for lam in grid:
        sse = []
        for fold in folds:
            train = np.setdiff1d(perm, fold)
            Dtr = ConditionMatrix(D.values[train], D.drug_names)
            Xtr = ResponseMatrix(X.values[train], X.response_names)
            Dte = ConditionMatrix(D.values[fold], D.drug_names)
            fold_cfg = FitConfig(
                lam=float(lam),
                max_iter=cfg.max_iter,
                tol=cfg.tol,
                mask=cfg.mask,
                w_init=cfg.w_init,
            )
            try:
                W, _ = fit_causal_linear(Dtr, Xtr, B, fold_cfg)
                pred = predict_causal_linear(W, B, Dte).predicted
            except (SingularMatrixError, NonConvergenceError):
                sse.append(np.inf)
                continue
            diff = X.values[fold] - pred
            sse.append(float(np.sum(diff * diff)))
        scores[float(lam)] = float(np.mean(sse))
    best = min(scores, key=scores.get)
    return best, scores
