"""Centralized ground-truth solver for the underlying problem.

Solves min sum_i f_i(x) s.t. h(x) = 0 over the shared variable by damped
Newton on the KKT system with seeded multi-starts, so distributed runs can
be measured against the true minimizer and multipliers.  The lifted
multipliers (mu*, lam* in Range(S)) follow from a least-norm solve of the
lifted stationarity system.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import analysis
from .problem import LiftedProblem, StationaryPoint

KKT_TOL = 1e-10


class OracleError(RuntimeError):
    """No KKT point found within the iteration budget."""


@dataclass(frozen=True)
class OracleSolution:
    x_star: np.ndarray
    psi_star: np.ndarray
    objective: float
    kkt_residual_norm: float
    all_roots: tuple[tuple[np.ndarray, np.ndarray, float], ...]


def _centralized_residual(p: LiftedProblem, x: np.ndarray, psi: np.ndarray) -> np.ndarray:
    grad = np.sum([agent.grad_f(x) for agent in p.agents], axis=0)
    for k, i in enumerate(p.constrained_agents):
        grad = grad + psi[k] * p.agents[i].grad_h(x)
    h = np.array([p.agents[i].h(x) for i in p.constrained_agents])
    return np.concatenate([grad, h])


def _centralized_kkt_jacobian(p: LiftedProblem, x: np.ndarray, psi: np.ndarray) -> np.ndarray:
    n, m = p.n, p.m
    H = np.sum([np.asarray(agent.hess_f(x), dtype=float) for agent in p.agents], axis=0)
    G = np.zeros((n, m))
    for k, i in enumerate(p.constrained_agents):
        H = H + psi[k] * np.asarray(p.agents[i].hess_h(x), dtype=float)
        G[:, k] = p.agents[i].grad_h(x)
    Jac = np.zeros((n + m, n + m))
    Jac[:n, :n] = H
    Jac[:n, n:] = G
    Jac[n:, :n] = G.T
    return Jac


def _initial_psi(p: LiftedProblem, x: np.ndarray) -> np.ndarray:
    if p.m == 0:
        return np.zeros(0)
    G = np.column_stack([p.agents[i].grad_h(x) for i in p.constrained_agents])
    grad = np.sum([agent.grad_f(x) for agent in p.agents], axis=0)
    psi, *_ = np.linalg.lstsq(G, -grad, rcond=None)
    return psi


def _newton_root(p: LiftedProblem, x0: np.ndarray, max_iter: int = 200):
    x = np.array(x0, dtype=float, copy=True)
    psi = _initial_psi(p, x)
    for _ in range(max_iter):
        r = _centralized_residual(p, x, psi)
        norm = np.linalg.norm(r)
        if norm <= 1e-12:
            break
        try:
            step = np.linalg.solve(_centralized_kkt_jacobian(p, x, psi), -r)
        except np.linalg.LinAlgError:
            return None
        # backtracking on the residual norm
        t = 1.0
        for _ in range(40):
            x_trial = x + t * step[: p.n]
            psi_trial = psi + t * step[p.n :]
            if np.linalg.norm(_centralized_residual(p, x_trial, psi_trial)) < norm:
                break
            t *= 0.5
        else:
            return None
        x, psi = x_trial, psi_trial
    r = float(np.linalg.norm(_centralized_residual(p, x, psi)))
    if r > KKT_TOL or not np.all(np.isfinite(x)):
        return None
    return x, psi, r


def _mom_fallback(p: LiftedProblem, x0: np.ndarray):
    """Centralized method of multipliers with a large penalty, for problems
    without Hessian evaluators; inner minimization via BFGS."""
    import scipy.optimize

    x = np.array(x0, dtype=float, copy=True)
    psi = np.zeros(p.m)
    c = 1e4

    def aug(x, psi, c):
        h = np.array([p.agents[i].h(x) for i in p.constrained_agents])
        return (
            sum(agent.f(x) for agent in p.agents) + psi @ h + 0.5 * c * (h @ h)
        )

    def aug_grad(x, psi, c):
        g = np.sum([agent.grad_f(x) for agent in p.agents], axis=0)
        for k, i in enumerate(p.constrained_agents):
            g = g + (psi[k] + c * p.agents[i].h(x)) * p.agents[i].grad_h(x)
        return g

    for _ in range(60):
        res = scipy.optimize.minimize(
            aug, x, args=(psi, c), jac=aug_grad, method="BFGS",
            options={"gtol": 1e-14, "maxiter": 2000},
        )
        x = res.x
        h = np.array([p.agents[i].h(x) for i in p.constrained_agents])
        psi = psi + c * h
        if np.linalg.norm(_centralized_residual(p, x, psi)) <= KKT_TOL:
            return x, psi, float(np.linalg.norm(_centralized_residual(p, x, psi)))
    return None


def solve_centralized(
    p: LiftedProblem,
    x_init: np.ndarray | None = None,
    restarts: int = 8,
    seed: int = 0,
    radius: float = 1.0,
) -> OracleSolution:
    """Find KKT points of the centralized problem; pick the lowest objective.

    Damped Newton on [grad f + grad h psi; h] from ``x_init`` plus
    ``restarts`` seeded perturbations (falls back to a high-penalty
    centralized method of multipliers when Hessians are unavailable).
    Among converged roots, returns the one with the smallest objective,
    ties broken lexicographically in x.
    """
    x0 = np.zeros(p.n) if x_init is None else np.asarray(x_init, dtype=float)
    rng = np.random.default_rng(seed)
    starts = [x0] + [x0 + rng.uniform(-radius, radius, p.n) for _ in range(restarts)]
    roots = []
    for start in starts:
        found = _newton_root(p, start) if p.has_hessians else _mom_fallback(p, start)
        if found is None:
            continue
        x, psi, r = found
        if any(np.linalg.norm(x - other[0]) <= 1e-8 for other in roots):
            continue
        roots.append((x, psi, r))
    if not roots:
        raise OracleError("no KKT point found from any start")
    objectives = [sum(agent.f(x) for agent in p.agents) for x, _, _ in roots]
    order = sorted(range(len(roots)), key=lambda i: (objectives[i], tuple(roots[i][0])))
    best = order[0]
    return OracleSolution(
        x_star=roots[best][0],
        psi_star=roots[best][1],
        objective=float(objectives[best]),
        kkt_residual_norm=roots[best][2],
        all_roots=tuple(roots[i] for i in order),
    )


def lifted_multipliers(p: LiftedProblem, solution: OracleSolution) -> StationaryPoint:
    """Unique lifted multipliers (mu* = psi*, lam* in Range(S)).

    lam* is the least-norm solution of S' lam = -grad F - grad h mu*,
    which is exactly the Range(S) representative.  Raises when the
    stationarity system is inconsistent (x* not a lifted stationary point).
    """
    x_lift = np.tile(solution.x_star, (p.N, 1))
    from .problem import constraint_jacobian, objective_gradient

    rhs = -objective_gradient(p, x_lift)
    if p.m:
        rhs = rhs - constraint_jacobian(p, x_lift) @ solution.psi_star
    lam_flat, *_ = np.linalg.lstsq(p.S_lift.T, rhs, rcond=None)
    residual = float(np.linalg.norm(p.S_lift.T @ lam_flat - rhs))
    if residual > KKT_TOL:
        raise OracleError(
            f"lifted stationarity residual {residual:.3e}: x* is not a lifted "
            "stationary point"
        )
    return StationaryPoint(
        x=solution.x_star.copy(),
        mu=solution.psi_star.copy(),
        lam=lam_flat.reshape(p.num_pairs, p.n),
    )


@dataclass(frozen=True)
class MinimizerReport:
    assumption2_ok: bool
    assumption2_sigma_min: float
    blockwise_pd: bool
    blockwise_min_eigs: tuple[float, ...]
    tangent_cone_pd: bool
    tangent_cone_margin: float
    a1_certified: bool
    a2_a3_certified: bool


def verify_minimizer(p: LiftedProblem, solution: OracleSolution) -> MinimizerReport:
    """Check which convergence hypotheses hold at the oracle solution.

    Blockwise positivity of hess f_i + psi_i* hess h_i certifies the plain
    first-order iteration; tangent-cone positivity (weaker) certifies the
    augmented first-order iteration and the method of multipliers.  This is
    a pure report: violated hypotheses are flagged, never raised.
    """
    x = solution.x_star
    if p.m:
        G = np.column_stack([p.agents[i].grad_h(x) for i in p.constrained_agents])
        sigma_min = float(np.linalg.svd(G, compute_uv=False)[-1])
    else:
        sigma_min = np.inf
    assumption2_ok = sigma_min > 1e-8
    mins = []
    for i, agent in enumerate(p.agents):
        block = np.asarray(agent.hess_f(x), dtype=float)
        if agent.constrained:
            k = p.constrained_agents.index(i)
            block = block + solution.psi_star[k] * np.asarray(agent.hess_h(x), dtype=float)
        mins.append(float(np.min(np.linalg.eigvalsh(block))))
    blockwise = all(v > 0 for v in mins)
    if assumption2_ok:
        point = lifted_multipliers(p, solution)
        second = analysis.second_order_check(p, point)
        tangent_pd, margin = second.passed, second.margin
    else:
        tangent_pd, margin = False, float("nan")
    return MinimizerReport(
        assumption2_ok=assumption2_ok,
        assumption2_sigma_min=sigma_min,
        blockwise_pd=blockwise,
        blockwise_min_eigs=tuple(mins),
        tangent_cone_pd=tangent_pd,
        tangent_cone_margin=margin,
        a1_certified=blockwise and assumption2_ok,
        a2_a3_certified=tangent_pd and assumption2_ok,
    )
