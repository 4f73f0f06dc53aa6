"""Cross-module consistency suite behind ``ruinlab verify``.

Each check returns ``{"name", "passed", ...details}``. Only seeded Monte Carlo and
deterministic numerics are used, so a report depends on (model, seed, paths) alone.
"""

from __future__ import annotations

import numpy as np

from .counting import counts_joint_pmf, enumerate_counts_law
from .model import ModelSpec, Pmf, model_summary, per_event_claim_law
from .ruin import (
    adjustment_coefficient,
    beekman_survival,
    deficit_laws,
    finite_horizon_ruin,
    geometric_representation,
    global_max_series,
    ladder_height_law,
    martingale_residual,
    thinning_equivalence,
)
from .simulate import SimConfig, deficit_check, estimate_ruin, thinning_mc_check

REP_TOL = 1e-8
DP_TOL = 1e-8
EXACT_TOL = 1e-10
MC_K = 4.0


def check_counting(model: ModelSpec, t_max: int = 8) -> dict:
    err = max(
        float(np.max(np.abs(counts_joint_pmf(model, t).table - enumerate_counts_law(model.shock, t))))
        for t in range(t_max + 1)
    )
    return {"name": "counting_exactness", "passed": err < 1e-12, "max_abs_diff": err, "t_max": t_max}


def check_representations(model: ModelSpec, n_max: int = 60) -> dict:
    series = global_max_series(model, n_max)
    out = {"name": "representation_equality", "n_max": n_max}
    worst = float(np.max(np.abs(geometric_representation(model, "A").pmf(n_max) - series)))
    if model_summary(model).mu > 1:
        b = geometric_representation(model, "B").pmf(n_max)
        worst = max(worst, float(np.max(np.abs(b - series))))
    out.update(max_abs_diff=worst, passed=worst < REP_TOL)
    return out


def check_dp_vs_series(model: ModelSpec, u_max: int = 5, horizon: int = 2000) -> dict:
    curve = beekman_survival(model, u_max)
    dp = np.array([finite_horizon_ruin(model, u, horizon) for u in range(u_max + 1)])
    err = float(np.max(np.abs(dp - curve.psi)))
    return {
        "name": "dp_vs_series",
        "passed": err < DP_TOL,
        "max_abs_diff": err,
        "horizon": horizon,
        "psi_series": curve.psi.tolist(),
        "psi_dp": dp.tolist(),
    }


def check_lundberg(model: ModelSpec, u_max: int = 50) -> dict:
    adj = adjustment_coefficient(model)
    # eps this small forces order >= u_max, where the series is exact
    curve = beekman_survival(model, u_max, eps=1e-300)
    if adj is None:
        ok = bool(np.all(curve.psi == 0.0))
        return {"name": "lundberg_inequality", "passed": ok, "z_star": None, "psi_identically_zero": ok}
    bound = adj.z_star ** (-np.arange(u_max + 1, dtype=float))
    slack = float(np.max(curve.psi - bound))
    resid = martingale_residual(model, adj.z_star)
    return {
        "name": "lundberg_inequality",
        "passed": slack <= 1e-12 and resid < 1e-12,
        "z_star": adj.z_star,
        "max_psi_minus_bound": slack,
        "martingale_residual": resid,
    }


def check_deficit(model: ModelSpec, seed: int, paths: int, horizon: int = 500) -> dict:
    rep = deficit_laws(model)
    if not rep.ruin_possible:
        return {"name": "deficit_reconciliation", "passed": True, "ruin_possible": False}
    out = {"name": "deficit_reconciliation", "ruin_possible": True}
    mass = float(rep.lambda_unconditional.total())
    out["recursion_max_abs_diff"] = rep.recursion_max_abs_diff
    out["unconditional_mass_minus_psi0"] = abs(mass - rep.psi0)
    out["mean_deficit"] = rep.mean_deficit
    out["mean_deficit_closed_form"] = rep.mean_deficit_closed_form
    out["pgf_max_abs_diff"] = rep.pgf_max_abs_diff
    exact_ok = (
        rep.recursion_max_abs_diff < 1e-12
        and abs(mass - rep.psi0) < EXACT_TOL
        and abs(rep.mean_deficit - rep.mean_deficit_closed_form) < EXACT_TOL
        and rep.pgf_max_abs_diff < 1e-9
    )
    summary = estimate_ruin(model, SimConfig(seed=seed, n_paths=paths, horizon=horizon))
    mc = deficit_check(summary, rep.lambda_conditional.weights, k=MC_K)
    psi_hat = summary.stat(f"psi_hat(u=0,T={horizon})")
    # the estimator targets psi(0, T) <= psi(0); allow the residual Lundberg bound
    gap = rep.psi0 - psi_hat.estimate
    resid = summary.extras["residual_ruin_bound"] or 0.0
    psi_ok = -MC_K * psi_hat.std_error <= gap <= MC_K * psi_hat.std_error + resid
    out["mc_deficit"] = {k: mc[k] for k in ("n", "max_abs_err", "passed")}
    out["mc_psi_hat"] = {"estimate": psi_hat.estimate, "std_error": psi_hat.std_error, "passed": psi_ok}
    out["passed"] = bool(exact_ok and mc["passed"] and psi_ok)
    return out


def _thinning_cases(model: ModelSpec):
    yield "unit_claims", Pmf.point_mass(1), 0.5, 1.5
    yield "per_event_claims", per_event_claim_law(model), 0.4, 1.6
    if model_summary(model).mu > 1:
        yield "ladder_heights", ladder_height_law(model), 0.3, 2.0


def check_thinning(model: ModelSpec, seed: int, paths: int) -> dict:
    cases = []
    for label, xlaw, pG, c in _thinning_cases(model):
        k_max = max(20, 10 * xlaw.max_value)
        exact = thinning_equivalence(xlaw, pG, c, k_max)
        mc = thinning_mc_check(xlaw, pG, c, SimConfig(seed=seed, n_paths=paths, horizon=1), k_max=k_max, k=MC_K)
        ok = exact.max_abs_diff < EXACT_TOL and mc.extras["left_within_4se"] and mc.extras["right_within_4se"]
        cases.append(
            {
                "case": label,
                "pG": pG,
                "c": c,
                "exact_max_abs_diff": exact.max_abs_diff,
                "mc_left_max_abs_z": mc.extras["left_max_abs_z"],
                "mc_right_max_abs_z": mc.extras["right_max_abs_z"],
                "passed": bool(ok),
            }
        )
    return {"name": "thinning_identity", "passed": all(c["passed"] for c in cases), "cases": cases}


def run_checks(model: ModelSpec, seed: int = 42, paths: int = 200_000) -> list[dict]:
    checks = [check_counting(model)]
    if model_summary(model).net_profit_holds and model.p < 1:
        checks += [
            check_representations(model),
            check_dp_vs_series(model),
            check_lundberg(model),
            check_deficit(model, seed, paths),
        ]
    else:
        checks.append({"name": "ruin_checks", "passed": True, "skipped": "net profit condition fails"})
    checks.append(check_thinning(model, seed, paths))
    return checks
