"""Distributed method of multipliers: outer multiplier/penalty loop around
an inner distributed gradient descent on the augmented Lagrangian.

Outer iteration k minimizes L_{c_k}(., mu_k, lam_k) approximately (inner
gradient rounds obey the same locality contract as the first-order
solvers), then updates

    mu_i  += c_k h_i(x_i),        lam_ij += c_k s_ij (x_i - x_j),

with penalties growing as c_{k+1} = min(beta c_k, c_max) and inner
accuracy tightening geometrically, eps_k = eps0 gamma^k.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import analysis
from .problem import (
    CapabilityError,
    LiftedProblem,
    MultiplierState,
    StationaryPoint,
    check_state,
    eval_lifted_objective,
    hess_aug_lagrangian,
    kkt_residual,
)
from .solvers import (
    STATUS_CONVERGED,
    STATUS_ITERATION_CAP,
    make_executor,
)


class InnerDivergenceError(RuntimeError):
    """The inner gradient iteration produced a non-finite iterate."""


@dataclass(frozen=True)
class InnerSchedule:
    """Diminishing inner step sizes alpha_tau = a / (tau + b)."""

    a: float
    b: float

    def __call__(self, tau: int) -> float:
        return self.a / (tau + self.b)


@dataclass(frozen=True)
class MoMConfig:
    init: MultiplierState
    c0: float = 1.0
    beta: float = 2.0
    c_max: float = 16.0
    inner_alpha: float | None = None
    inner_schedule: InnerSchedule | None = None
    eps0: float = 1e-2
    gamma: float = 0.5
    inner_max_iter: int = 20000
    outer_max_iter: int = 30
    tol: float = 1e-9

    def __post_init__(self):
        if not self.c0 > 0:
            raise ValueError("c0 must be > 0")
        if not self.beta > 1:
            raise ValueError("beta must be > 1")
        if self.c_max < self.c0:
            raise ValueError("c_max must be >= c0")
        if not self.eps0 > 0:
            raise ValueError("eps0 must be > 0")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if self.inner_alpha is not None and self.inner_schedule is not None:
            raise ValueError("give either a constant inner alpha or a schedule")


def penalty_schedule(config: MoMConfig, k: int) -> float:
    """c_k under c_{k+1} = min(beta c_k, c_max): non-decreasing, capped."""
    if k < 0:
        raise ValueError("k must be >= 0")
    c = config.c0
    for _ in range(k):
        c = min(config.beta * c, config.c_max)
    return c


def hessian_norm_estimate(H: np.ndarray, iters: int = 200) -> float:
    """Largest-eigenvalue estimate of a symmetric matrix by power iteration."""
    v = np.ones(H.shape[0]) / np.sqrt(H.shape[0])
    lam = 0.0
    for _ in range(iters):
        w = H @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam = float(v @ (H @ v))
    return abs(lam)


def default_inner_alpha(p: LiftedProblem, state: MultiplierState, c: float) -> float:
    """Constant inner step 1/||hess L_c|| estimated at the warm start."""
    if not p.has_hessians:
        raise CapabilityError(
            "no Hessians available to size the inner step; set inner_alpha"
        )
    H = hess_aug_lagrangian(p, state, c)
    norm = hessian_norm_estimate(H)
    if norm <= 0:
        return 1.0
    return 1.0 / norm


def inner_minimize(
    p: LiftedProblem,
    x_init: np.ndarray,
    mu_k: np.ndarray,
    lam_k: np.ndarray,
    c_k: float,
    config: MoMConfig,
    eps_k: float | None = None,
    engine: str = "arrays",
):
    """Gradient descent on x -> L_{c_k}(x, mu_k, lam_k) from a warm start.

    Runs synchronous distributed rounds until ||grad_x L_{c_k}|| <= eps_k,
    or returns the iterate at ``inner_max_iter`` with ``converged=False``.
    Returns ``(x, iterations, converged)``.
    """
    state = MultiplierState(
        x=np.array(x_init, dtype=float, copy=True),
        mu=np.array(mu_k, dtype=float, copy=True),
        lam=np.array(lam_k, dtype=float, copy=True),
    )
    check_state(p, state)
    if eps_k is None:
        eps_k = config.eps0
    executor = make_executor(p, state, engine)
    current = state if engine == "arrays" else executor.state(None)
    if config.inner_schedule is not None:
        step_of = config.inner_schedule
    else:
        alpha = (
            config.inner_alpha
            if config.inner_alpha is not None
            else default_inner_alpha(p, state, c_k)
        )
        step_of = lambda tau: alpha
    tau = 0
    while True:
        with np.errstate(over="ignore", invalid="ignore"):
            new, grad_sq = executor.round(current, step_of(tau), 0.0, c_k, False)
        if np.sqrt(grad_sq) <= eps_k:
            return current.x, tau, True
        if not np.isfinite(grad_sq) or not np.all(np.isfinite(new.x)):
            raise InnerDivergenceError(
                f"non-finite inner iterate at tau = {tau}; "
                "the inner step size is likely too large"
            )
        current = new
        tau += 1
        if tau >= config.inner_max_iter:
            return current.x, tau, False


def outer_step(p: LiftedProblem, state: MultiplierState, c_k: float) -> MultiplierState:
    """Multiplier updates mu_i += c_k h_i(x_i), lam_ij += c_k s_ij (x_i - x_j);
    x is left unchanged (it already holds the inner solution)."""
    check_state(p, state)
    from .solvers import ArrayExecutor

    return ArrayExecutor(p).outer(state, c_k)


@dataclass
class MoMTrace:
    """Per-outer-iteration diagnostics (row k: after inner solve k, before
    the multiplier update)."""

    k: np.ndarray
    c: np.ndarray
    eps: np.ndarray
    inner_iters: np.ndarray
    err_x: np.ndarray
    err_mu: np.ndarray
    dist_lambda: np.ndarray
    kkt: np.ndarray
    objective: np.ndarray
    states: list[MultiplierState] | None = None
    problem_hash: str | None = None

    CSV_HEADER = (
        "k,agent,err_x,err_mu,dist_lambda,kkt_stat,kkt_h,kkt_cons,objective,"
        "c_k,eps_k,inner_iters"
    )

    def __len__(self):
        return len(self.k)

    @property
    def err_eta(self) -> np.ndarray:
        """Joint multiplier error sqrt(err_mu^2 + dist_lambda^2)."""
        return np.hypot(self.err_mu, self.dist_lambda)

    def csv_rows(self):
        num_agents = self.err_x.shape[1]
        for row in range(len(self.k)):
            for agent in range(num_agents):
                yield (
                    int(self.k[row]),
                    agent,
                    self.err_x[row, agent],
                    self.err_mu[row],
                    self.dist_lambda[row],
                    self.kkt[row, 0],
                    self.kkt[row, 1],
                    self.kkt[row, 2],
                    self.objective[row],
                    self.c[row],
                    self.eps[row],
                    int(self.inner_iters[row]),
                )


@dataclass
class MoMResult:
    trace: MoMTrace
    state: MultiplierState
    status: str
    outer_iterations: int


def run_a3(
    p: LiftedProblem,
    config: MoMConfig,
    reference: StationaryPoint | None = None,
    engine: str = "arrays",
    keep_states: bool = False,
    problem_hash: str | None = None,
) -> MoMResult:
    """Alternate inner minimization and multiplier updates until the KKT
    residual of the plain Lagrangian drops below tol."""
    check_state(p, config.init)
    state = config.init.copy()
    rows = []
    states = [] if keep_states else None
    status = STATUS_ITERATION_CAP
    outer_count = config.outer_max_iter
    for k in range(config.outer_max_iter):
        c_k = penalty_schedule(config, k)
        eps_k = config.eps0 * config.gamma**k
        try:
            x_k, inner_iters, _ = inner_minimize(
                p, state.x, state.mu, state.lam, c_k, config, eps_k, engine
            )
        except InnerDivergenceError as err:
            raise InnerDivergenceError(f"outer iteration {k} (c = {c_k}): {err}") from err
        state = state.with_x(x_k)
        res = kkt_residual(p, state)
        if reference is not None:
            err_x = np.linalg.norm(state.x - reference.lifted_x(p.N), axis=1)
            err_mu = float(np.linalg.norm(state.mu - reference.mu))
            dist_l = analysis.dist_to_multiplier_set(state.lam, reference.lam, p.projector.J)
        else:
            err_x = np.full(p.N, np.nan)
            err_mu = np.nan
            dist_l = np.nan
        rows.append(
            (k, c_k, eps_k, inner_iters, err_x, err_mu, dist_l, res.as_tuple(),
             eval_lifted_objective(p, state.x))
        )
        if states is not None:
            states.append(state.copy())
        if res.total <= config.tol:
            status = STATUS_CONVERGED
            outer_count = k + 1
            break
        state = outer_step(p, state, c_k)
    trace = MoMTrace(
        k=np.array([r[0] for r in rows], dtype=int),
        c=np.array([r[1] for r in rows]),
        eps=np.array([r[2] for r in rows]),
        inner_iters=np.array([r[3] for r in rows], dtype=int),
        err_x=np.array([r[4] for r in rows]),
        err_mu=np.array([r[5] for r in rows]),
        dist_lambda=np.array([r[6] for r in rows]),
        kkt=np.array([r[7] for r in rows]),
        objective=np.array([r[8] for r in rows]),
        states=states,
        problem_hash=problem_hash,
    )
    return MoMResult(trace=trace, state=state, status=status, outer_iterations=outer_count)
