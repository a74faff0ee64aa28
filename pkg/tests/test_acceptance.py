"""End-to-end acceptance checks for the whole package.

Each test prints one ``ACCEPTANCE n[letter]: ... PASS/FAIL`` line so the suite
output doubles as a scorecard.  The melanoma reproduction needs the real
dataset and is skipped unless PERTURBPRED_MELANOMA_DIR points at a directory
containing melanoma_conditions.csv and melanoma_responses.csv.
"""

import os
import time

import numpy as np
import pytest

from perturbpred.fit import FitConfig, causal_loss_and_gradient, fit_causal_ode
from perturbpred.linear import (
    dag_to_w,
    predict_causal_dag,
    predict_causal_linear,
    verify_steady_state_limit,
)
from perturbpred.ode import OdeModel, steady_state
from perturbpred.simulate import (
    EDGE_DISPLAY_THRESHOLD,
    RF,
    RF_MISSPECIFIED_B,
    Scenario,
    SimSpec,
    build_design,
    build_targets,
    run_scenario,
    simulate_responses,
)
from perturbpred.types import (
    A_FORM,
    ConditionMatrix,
    InteractionMatrix,
    ResponseMatrix,
    TargetMap,
)
from perturbpred.validate import (
    CausalLinearFamily,
    RegressionFamily,
    averaged_random_fold_eval,
    lodo_eval,
    make_lodo_splits,
    make_random_folds,
)

import conftest
from conftest import random_negdef_w, random_stable_w

N_SEEDS = 20
# fixed evaluation block, disjoint from the seeds used in the unit tests
SEEDS = range(100, 100 + N_SEEDS)
TRUE_EDGES = {(1, 0): 1.6, (2, 0): 1.2, (3, 2): 2.0}


def report_line(label, ok, detail=""):
    verdict = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    line = f"ACCEPTANCE {label}: {verdict}{suffix}"
    print(line)
    conftest.ACCEPTANCE_LINES.append(line)
    assert ok, f"acceptance {label} failed{suffix}"


# ---------------------------------------------------------------------------
# shared 20-seed scenario sweeps


@pytest.fixture(scope="module")
def rf_sweep():
    t0 = time.perf_counter()
    reports = [run_scenario(Scenario(RF), SimSpec(seed=s)) for s in SEEDS]
    return reports, time.perf_counter() - t0


@pytest.fixture(scope="module")
def mis_sweep():
    return [
        run_scenario(Scenario(RF_MISSPECIFIED_B), SimSpec(seed=s))
        for s in SEEDS
    ]


@pytest.fixture(scope="module")
def lodo_sweep():
    D = build_design()
    B = build_targets()
    plans = make_lodo_splits(D)
    causal_means, reg_means = [], []
    for s in SEEDS:
        X = simulate_responses(SimSpec(seed=s), D)
        _, reg_mean = lodo_eval(RegressionFamily(), D, X, plans, jobs=4)
        _, causal_mean = lodo_eval(CausalLinearFamily(B), D, X, plans, jobs=4)
        reg_means.append(reg_mean)
        causal_means.append(causal_mean)
    return np.array(causal_means), np.array(reg_means)


# ---------------------------------------------------------------------------


def test_criterion_1_ode_matches_closed_form():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for k in range(20):
        p = [2, 3, 5][k % 3]
        W = random_stable_w(rng, p)
        B = rng.normal(size=(p, p + 1))
        d = rng.uniform(0, 1, p + 1)
        model = OdeModel(InteractionMatrix(W), TargetMap(B), 1.0)
        res = steady_state(model, d)
        assert res.converged
        closed = -np.linalg.solve(W.T, B @ d)
        worst = max(worst, float(np.max(np.abs(res.state - closed))))
    elapsed = time.perf_counter() - t0
    report_line(
        "1 steady-state vs closed form",
        worst <= 1e-5 and elapsed < 5.0,
        f"worst err {worst:.2e}, {elapsed:.2f}s",
    )


def test_criterion_2_exponential_limit():
    rng = np.random.default_rng(102)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(10):
        Wv = random_negdef_w(rng, 4)
        B = TargetMap(rng.normal(size=(4, 3)))
        slowest = abs(np.linalg.eigvalsh(Wv).max())  # eigenvalue nearest zero
        resid = verify_steady_state_limit(InteractionMatrix(Wv), B, 100.0 / slowest)
        worst = max(worst, resid)
    elapsed = time.perf_counter() - t0
    report_line(
        "2 matrix-exponential limit",
        worst <= 1e-8 and elapsed < 1.0,
        f"worst residual {worst:.2e}, {elapsed:.2f}s",
    )


def test_criterion_3_dag_w_equivalence():
    rng = np.random.default_rng(103)
    worst = 0.0
    done = 0
    while done < 50:
        p = int(rng.integers(2, 7))
        A = 0.6 * rng.normal(size=(p, p))
        np.fill_diagonal(A, 0.0)
        if done % 2 == 0 and p >= 2:
            A[0, p - 1] = 1.0  # force a cycle through the whole chain
            for i in range(p - 1):
                A[i + 1, i] = 0.8
        M = np.eye(p) - A
        s = np.linalg.svd(M, compute_uv=False)
        if s[-1] / s[0] < 1e-2:  # keep instances well-conditioned so the
            continue              # 1e-12 tolerance measures algebra, not cond

        B = TargetMap(rng.normal(size=(p, p + 2)))
        D = ConditionMatrix(rng.uniform(0, 1, (4, p + 2)))
        Aim = InteractionMatrix(A, form=A_FORM)
        dag = predict_causal_dag(Aim, B, D).predicted
        lin = predict_causal_linear(dag_to_w(Aim), B, D).predicted
        worst = max(worst, float(np.max(np.abs(dag - lin))))
        done += 1
    report_line("3 DAG/W-form equivalence", worst <= 1e-12, f"worst err {worst:.2e}")


def test_criterion_4_gradient_check():
    rng = np.random.default_rng(104)
    worst = 0.0
    for k in range(20):
        p = [2, 3, 5][k % 3]
        q, n = p + 2, p + 4
        W = random_stable_w(rng, p)
        D = ConditionMatrix(rng.uniform(0, 1, (n, q)))
        X = ResponseMatrix(rng.normal(size=(n, p)))
        B = TargetMap(rng.normal(size=(p, q)))
        _, grad = causal_loss_and_gradient(W, D, X, B)
        h = 1e-6
        fd = np.zeros_like(W)
        for i in range(p):
            for j in range(p):
                Wp, Wm = W.copy(), W.copy()
                Wp[i, j] += h
                Wm[i, j] -= h
                lp, _ = causal_loss_and_gradient(Wp, D, X, B)
                lm, _ = causal_loss_and_gradient(Wm, D, X, B)
                fd[i, j] = (lp - lm) / (2 * h)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1.0)
        worst = max(worst, float(rel.max()))
    report_line("4 analytic gradient vs finite differences", worst <= 1e-5,
                f"worst rel err {worst:.2e}")


def test_criterion_5_rf_both_models_accurate(rf_sweep):
    reports, elapsed = rf_sweep
    reg = np.array([r.regression.pearson_r for r in reports])
    causal = np.array([r.causal.pearson_r for r in reports])
    ok = (
        bool(np.all(reg >= 0.95))
        and bool(np.all(causal >= 0.95))
        and np.median(reg) >= 0.97
        and np.median(causal) >= 0.97
        and elapsed < 30.0
    )
    report_line(
        "5 random-fold accuracy",
        ok,
        f"reg min {reg.min():.3f} med {np.median(reg):.3f}; "
        f"causal min {causal.min():.3f} med {np.median(causal):.3f}; {elapsed:.1f}s",
    )


def test_criterion_6a_regression_invariant_to_targets(rf_sweep, mis_sweep):
    reports, _ = rf_sweep
    identical = all(
        np.array_equal(rf.regression.predicted, mis.regression.predicted)
        for rf, mis in zip(reports, mis_sweep)
    )
    report_line("6a regression unaffected by target map", identical)


def test_criterion_6b_misspecified_targets_hurt_causal(rf_sweep, mis_sweep):
    reports, _ = rf_sweep
    gaps = np.array(
        [
            rf.regression.pearson_r - mis.causal.pearson_r
            for rf, mis in zip(reports, mis_sweep)
        ]
    )
    median_gap = float(np.median(gaps))
    report_line(
        "6b causal penalty under misspecified targets >= 0.10",
        median_gap >= 0.10,
        f"median gap {median_gap:.3f}",
    )


def test_criterion_7_lodo_causal_beats_regression(lodo_sweep):
    causal_means, reg_means = lodo_sweep
    causal_median = float(np.median(causal_means))
    wins = int(np.sum(reg_means < causal_means))
    ok = causal_median >= 0.9 and wins >= 18
    report_line(
        "7 leave-one-drug-out",
        ok,
        f"causal median mean-r {causal_median:.3f}, regression lower in {wins}/{N_SEEDS}",
    )


def _network_recovered(A_hat):
    for (i, j), v in TRUE_EDGES.items():
        if abs(A_hat[i, j] - v) > 0.15:
            return False
    for i in range(5):
        for j in range(5):
            if i != j and (i, j) not in TRUE_EDGES:
                if abs(A_hat[i, j]) >= EDGE_DISPLAY_THRESHOLD:
                    return False
    return True


def _has_false_edge(A_hat):
    return any(
        abs(A_hat[i, j]) >= EDGE_DISPLAY_THRESHOLD
        for i in range(5)
        for j in range(5)
        if i != j and (i, j) not in TRUE_EDGES
    )


def test_criterion_8a_network_recovery(rf_sweep):
    reports, _ = rf_sweep
    hits = sum(_network_recovered(r.fitted_network) for r in reports)
    report_line(
        "8a network recovery within tolerances",
        hits >= 16,
        f"{hits}/{N_SEEDS} seeds recovered",
    )


def test_criterion_8b_misspecified_targets_create_false_edges(mis_sweep):
    hits = sum(_has_false_edge(r.fitted_network) for r in mis_sweep)
    report_line(
        "8b misspecified targets produce false edges",
        hits >= 16,
        f"{hits}/{N_SEEDS} seeds with a false edge",
    )


# ---------------------------------------------------------------------------
# melanoma reproduction (user-supplied data)


def _melanoma_paths():
    base = os.environ.get("PERTURBPRED_MELANOMA_DIR")
    if not base:
        return None
    cond = os.path.join(base, "melanoma_conditions.csv")
    resp = os.path.join(base, "melanoma_responses.csv")
    if os.path.exists(cond) and os.path.exists(resp):
        return cond, resp
    return None


needs_melanoma = pytest.mark.skipif(
    _melanoma_paths() is None,
    reason="melanoma dataset not provided (set PERTURBPRED_MELANOMA_DIR)",
)


@needs_melanoma
def test_criterion_9_melanoma_reproduction():
    from perturbpred.io import load_condition_matrix, load_response_matrix

    cond_path, resp_path = _melanoma_paths()
    D, _ = load_condition_matrix(cond_path)
    X, _ = load_response_matrix(resp_path)
    t0 = time.perf_counter()

    plan = make_random_folds(D.n_conditions, 0.7, 1000, seed=0)
    rf = averaged_random_fold_eval(RegressionFamily(), D, X, plan, jobs=os.cpu_count() or 1)
    plans = make_lodo_splits(D)
    _, lodo_mean = lodo_eval(RegressionFamily(), D, X, plans, jobs=os.cpu_count() or 1)
    elapsed = time.perf_counter() - t0

    ok = (
        abs(rf.pearson_r - 0.947) <= 0.010
        and abs(rf.mae - 0.093) <= 0.005
        and abs(lodo_mean - 0.784) <= 0.020
        and elapsed < 600.0
    )
    report_line(
        "9 melanoma regression reproduction",
        ok,
        f"rf r {rf.pearson_r:.3f}, mae {rf.mae:.3f}, lodo mean {lodo_mean:.3f}, "
        f"{elapsed:.0f}s",
    )


@needs_melanoma
def test_criterion_9b_melanoma_causal_best_effort():
    # the nonlinear causal fit on the full panel is best-effort: check only
    # that its objective decreases monotonically under a short budget
    from perturbpred.io import load_condition_matrix, load_response_matrix

    from perturbpred.io import load_matrix_csv

    cond_path, resp_path = _melanoma_paths()
    targets_path = os.path.join(
        os.environ["PERTURBPRED_MELANOMA_DIR"], "melanoma_targets.csv"
    )
    if not os.path.exists(targets_path):
        pytest.skip("melanoma_targets.csv not provided")
    D, _ = load_condition_matrix(cond_path)
    X, _ = load_response_matrix(resp_path)
    p = X.n_responses
    B = TargetMap(load_matrix_csv(targets_path)[0])
    template = OdeModel(InteractionMatrix(-np.eye(p)), B, 1.0, envelope="sigmoid")
    _, report = fit_causal_ode(D, X, B, template, FitConfig(max_iter=10))
    trace = report.objective_trace
    ok = bool(np.all(np.diff(trace) <= 1e-8 * np.maximum(1.0, np.abs(trace[:-1]))))
    report_line("9b melanoma causal-ode objective monotone", ok)


def test_criterion_10_property_suites_present():
    # the per-module property suites are the other test files in this
    # directory; make sure they are all collected alongside this one
    here = os.path.dirname(__file__)
    expected = {
        "test_types.py",
        "test_linear.py",
        "test_ode.py",
        "test_fit.py",
        "test_simulate.py",
        "test_validate.py",
        "test_io.py",
        "test_cli.py",
    }
    present = expected.issubset(set(os.listdir(here)))
    report_line("10 module property suites present", present)
