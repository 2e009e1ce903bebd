"""Policy-gradient optimization loops over stabilizing feedback gains.

Model-based gradient descent, natural gradient, and Gauss-Newton use the
exact closed-loop quantities; the model-free variants consume a
:class:`~lqrpg.sim.RolloutOracle` through the zeroth-order estimators; the
noisy-gradient loop perturbs the exact gradient with seeded Gaussian noise.
Every loop emits the same :class:`ConvergenceTrace` schema so downstream
CSVs are uniform.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .bounds import PlantNorms, npg_step_bound, pgd_step_bound
from .errors import ConfigurationError, InstabilityError
from .estimators import estimate_gradient_covariance, estimate_gradient_vr
from .exact import exact_quantities, solve_dare
from .plants import PlantModel, smallest_eigenvalue
from .sim import Purpose, RolloutConfig, RolloutOracle, SeedSpec

__all__ = [
    "StepSchedule",
    "StopRule",
    "IterationRecord",
    "ConvergenceTrace",
    "run_mb_pgd",
    "run_mb_npg",
    "run_mb_gauss_newton",
    "run_mf_pgd",
    "run_mf_npg",
    "run_noisy_gradient_pgd",
]

# A trace is marked diverged once the cost exceeds this multiple of the
# initial cost (or a state overflows).
DIVERGENCE_CEILING_FACTOR = 1e6


@dataclass(frozen=True)
class StepSchedule:
    """Step-size rule shared by all loops.

    kind "fixed" uses eta as is; "adaptive_certified" evaluates the
    certified step bound at the current cost (gradient or natural-gradient
    flavor depending on the loop); "adaptive_empirical" uses
    a / (b + c * tr_P) where tr_P is the current cost divided by
    Tr(Sigma_w), a measurable proxy for Tr(P_K).
    """

    kind: str = "fixed"
    eta: float | None = None
    a: float | None = None
    b: float | None = None
    c: float | None = None

    def __post_init__(self):
        if self.kind not in ("fixed", "adaptive_certified", "adaptive_empirical"):
            raise ConfigurationError(f"unknown schedule kind {self.kind!r}")
        if self.kind == "fixed" and not (self.eta is not None and self.eta > 0):
            raise ConfigurationError("fixed schedule requires eta > 0")
        if self.kind == "adaptive_empirical":
            for name in ("a", "b", "c"):
                v = getattr(self, name)
                if v is None or v < 0:
                    raise ConfigurationError(
                        f"adaptive_empirical requires nonnegative {name}"
                    )
            if self.a == 0:
                raise ConfigurationError("adaptive_empirical requires a > 0")

    def step_size(
        self,
        cost: float,
        norms: PlantNorms | None,
        flavor: str,
        c_star: float = 0.0,
    ) -> float:
        if self.kind == "fixed":
            return float(self.eta)
        if self.kind == "adaptive_certified":
            if norms is None:
                raise ConfigurationError(
                    "adaptive_certified schedule needs plant norms"
                )
            if flavor == "pgd":
                return pgd_step_bound(norms, cost, c_star)
            if flavor == "npg":
                return npg_step_bound(norms, cost)
            raise ConfigurationError(f"unknown step flavor {flavor!r}")
        # adaptive_empirical
        if norms is None or norms.trace_Sigma_w <= 0:
            raise ConfigurationError(
                "adaptive_empirical schedule needs Tr(Sigma_w) > 0"
            )
        tr_p = cost / norms.trace_Sigma_w
        return self.a / (self.b + self.c * tr_p)


@dataclass(frozen=True)
class StopRule:
    """Termination: iteration cap plus optional relative-suboptimality and
    gradient-norm tolerances."""

    max_iters: int = 100
    rel_subopt_tol: float | None = None
    grad_tol: float | None = None

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters}")


@dataclass(frozen=True)
class IterationRecord:
    i: int
    cost: float
    rel_subopt: float | None
    step: float
    grad_norm: float
    status: str  # "ok" | "diverged" | "estimate_failed"


@dataclass(frozen=True)
class ConvergenceTrace:
    records: list[IterationRecord]
    K_final: np.ndarray
    terminal_reason: str
    config: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self):
        if not self.records:
            raise ConfigurationError("trace must contain at least one record")
        for j, rec in enumerate(self.records):
            if rec.i != j:
                raise ConfigurationError("record indices must be consecutive from 0")

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.records])

    @property
    def diverged(self) -> bool:
        return any(r.status == "diverged" for r in self.records)


def _rel_subopt(cost: float, c_star: float | None) -> float | None:
    if c_star is None or c_star == 0:
        return None
    return (cost - c_star) / c_star


class _TraceBuilder:
    def __init__(self, config: dict, seed: int | None = None):
        self.records: list[IterationRecord] = []
        self.config = config
        self.seed = seed

    def add(self, cost, rel, step, grad_norm, status="ok"):
        self.records.append(
            IterationRecord(
                i=len(self.records), cost=float(cost), rel_subopt=rel,
                step=float(step), grad_norm=float(grad_norm), status=status,
            )
        )

    def finish(self, K, reason) -> ConvergenceTrace:
        return ConvergenceTrace(
            records=self.records, K_final=np.array(K), terminal_reason=reason,
            config=self.config, seed=self.seed,
        )


def _mb_loop(
    plant: PlantModel,
    K0: np.ndarray,
    schedule: StepSchedule,
    stop: StopRule,
    update,
    flavor: str,
    config: dict,
) -> ConvergenceTrace:
    """Shared driver for the model-based loops.

    ``update(K, quantities, eta)`` produces the next gain.
    """
    K = plant.check_gain(K0)
    opt = solve_dare(plant)
    c_star = opt.C_star
    norms = PlantNorms.from_plant(
        plant, norm_Sigma_star=float(np.linalg.norm(opt.Sigma_star, 2))
    )
    try:
        q = exact_quantities(plant, K)
    except InstabilityError as exc:
        raise ConfigurationError(f"K0 is not stabilizing: {exc}") from exc
    ceiling = DIVERGENCE_CEILING_FACTOR * max(q.cost, 1.0)
    tb = _TraceBuilder(config)

    for _ in range(stop.max_iters):
        grad_norm = float(np.linalg.norm(q.grad, "fro"))
        eta = schedule.step_size(q.cost, norms, flavor, c_star=c_star)
        rel = _rel_subopt(q.cost, c_star)
        if stop.rel_subopt_tol is not None and rel is not None and rel <= stop.rel_subopt_tol:
            tb.add(q.cost, rel, 0.0, grad_norm)
            return tb.finish(K, "converged")
        if stop.grad_tol is not None and grad_norm <= stop.grad_tol:
            tb.add(q.cost, rel, 0.0, grad_norm)
            return tb.finish(K, "stationary")
        tb.add(q.cost, rel, eta, grad_norm)
        K_next = update(K, q, eta)
        try:
            q_next = exact_quantities(plant, K_next)
        except InstabilityError:
            tb.add(math.inf, None, 0.0, math.nan, status="diverged")
            return tb.finish(K_next, "diverged")
        if not math.isfinite(q_next.cost) or q_next.cost > ceiling:
            tb.add(q_next.cost, _rel_subopt(q_next.cost, c_star), 0.0,
                   float(np.linalg.norm(q_next.grad, "fro")), status="diverged")
            return tb.finish(K_next, "diverged")
        K, q = K_next, q_next

    rel = _rel_subopt(q.cost, c_star)
    tb.add(q.cost, rel, 0.0, float(np.linalg.norm(q.grad, "fro")))
    return tb.finish(K, "max_iters")


def run_mb_pgd(
    plant: PlantModel, K0: np.ndarray, schedule: StepSchedule, stop: StopRule
) -> ConvergenceTrace:
    """Exact policy gradient descent K <- K - eta * grad C(K)."""
    return _mb_loop(
        plant, K0, schedule, stop,
        update=lambda K, q, eta: K - eta * q.grad,
        flavor="pgd",
        config={"optimizer": "mb_pgd", "schedule": schedule.kind},
    )


def run_mb_npg(
    plant: PlantModel, K0: np.ndarray, schedule: StepSchedule, stop: StopRule
) -> ConvergenceTrace:
    """Exact natural policy gradient K <- K - 2 eta E_K.

    The update equals K - eta * grad C(K) Sigma_K^{-1}; both forms are
    evaluated and must agree to 1e-10, which guards the Lyapunov solves.
    """

    def update(K, q, eta):
        direct = K - 2.0 * eta * q.E
        via_inverse = K - eta * q.grad @ np.linalg.inv(q.Sigma)
        err = np.linalg.norm(direct - via_inverse, "fro")
        if err > 1e-10 * max(1.0, np.linalg.norm(direct, "fro")):
            raise ConfigurationError(
                f"natural-gradient identity violated (discrepancy {err:.3e})"
            )
        return direct

    return _mb_loop(
        plant, K0, schedule, stop, update, flavor="npg",
        config={"optimizer": "mb_npg", "schedule": schedule.kind},
    )


def run_mb_gauss_newton(
    plant: PlantModel, K0: np.ndarray, eta: float, stop: StopRule
) -> ConvergenceTrace:
    """Gauss-Newton update K <- K - 2 eta (R + B'PB)^{-1} E_K.

    With eta = 1/2 each step is exactly the policy-improvement map
    -(R + B'PB)^{-1} B'PA.
    """
    if not (0.0 < eta <= 0.5):
        raise ConfigurationError(f"Gauss-Newton requires 0 < eta <= 1/2, got {eta}")

    def update(K, q, eta_i):
        G = plant.R + plant.B.T @ q.P @ plant.B
        return K - 2.0 * eta_i * np.linalg.solve(G, q.E)

    return _mb_loop(
        plant, K0, StepSchedule(kind="fixed", eta=eta), stop, update,
        flavor="pgd",
        config={"optimizer": "mb_gauss_newton", "eta": eta},
    )


def _mf_loop(
    oracle: RolloutOracle,
    K0: np.ndarray,
    schedule: StepSchedule,
    stop: StopRule,
    estimator,
    update,
    flavor: str,
    norms: PlantNorms | None,
    c_star: float | None,
    max_consecutive_failures: int,
    config: dict,
) -> ConvergenceTrace:
    """Shared driver for the model-free loops.

    ``estimator(K, i)`` returns (GradientEstimate, CovarianceEstimate or
    None); ``update(K, grad_est, cov_est, eta)`` returns (K_next, failed).
    The recorded cost is the mean of the iteration's rollout costs — the
    only cost observable without the model.
    """
    K = np.asarray(K0, dtype=float)
    tb = _TraceBuilder(config)
    ceiling = None
    failures = 0

    for i in range(stop.max_iters):
        grad_est, cov_est = estimator(K, i)
        if grad_est.failed:
            failures += 1
            tb.add(math.inf, None, 0.0, math.nan, status="estimate_failed")
            if failures >= max_consecutive_failures:
                return tb.finish(K, "too_many_failures")
            continue
        if grad_est.rollout_costs is not None and len(grad_est.rollout_costs):
            cost = float(np.mean(grad_est.rollout_costs))
        else:
            cost = math.nan
        if ceiling is None and math.isfinite(cost):
            ceiling = DIVERGENCE_CEILING_FACTOR * max(cost, 1.0)
        if ceiling is not None and (not math.isfinite(cost) or cost > ceiling):
            tb.add(cost, _rel_subopt(cost, c_star), 0.0,
                   float(np.linalg.norm(grad_est.value, "fro")), status="diverged")
            return tb.finish(K, "diverged")
        grad_norm = float(np.linalg.norm(grad_est.value, "fro"))
        rel = _rel_subopt(cost, c_star)
        if stop.rel_subopt_tol is not None and rel is not None and rel <= stop.rel_subopt_tol:
            tb.add(cost, rel, 0.0, grad_norm)
            return tb.finish(K, "converged")
        eta = schedule.step_size(cost, norms, flavor)
        K_next, failed = update(K, grad_est, cov_est, eta)
        if failed:
            failures += 1
            tb.add(cost, rel, 0.0, grad_norm, status="estimate_failed")
            if failures >= max_consecutive_failures:
                return tb.finish(K, "too_many_failures")
            continue
        failures = 0
        tb.add(cost, rel, eta, grad_norm)
        K = K_next

    return tb.finish(K, "max_iters")


def _resolve_rollout_cfg(
    oracle, rollout_cfg, norms, budget, cert_source, cost, cached
):
    """Explicit (n, l, r) wins; otherwise derive from the certificate at the
    supplied cost, caching the offline evaluation."""
    from .bounds import gradient_certificate

    if rollout_cfg is not None:
        return rollout_cfg, cached
    if norms is None or budget is None:
        raise ConfigurationError(
            "model-free run needs explicit rollout parameters or norms+budget"
        )
    if cert_source == "offline" and cached is not None:
        return cached, cached
    cert = gradient_certificate(norms, cost, budget, L0=oracle.L0)
    cfg = RolloutConfig(
        n=max(cert.N1, cert.N2), l=cert.l_min, r=cert.r_max, L0=oracle.L0
    )
    if cert_source == "offline":
        cached = cfg
    return cfg, cached


def run_mf_pgd(
    oracle: RolloutOracle,
    K0: np.ndarray,
    schedule: StepSchedule,
    stop: StopRule,
    rollout_cfg: RolloutConfig | None = None,
    norms: PlantNorms | None = None,
    budget=None,
    cert_source: str = "offline",
    c_star: float | None = None,
    use_vr: bool = False,
    n_v: int = 1,
    max_consecutive_failures: int = 5,
    estimator=None,
    run_offset: int = 0,
) -> ConvergenceTrace:
    """Model-free policy gradient descent with zeroth-order estimates.

    Rollout parameters come either from ``rollout_cfg`` or from the gradient
    certificate evaluated at the current empirical cost ("online") or once at
    the initial cost ("offline"). ``use_vr`` switches to the
    variance-reduced estimator with ``n_v`` baseline rollouts. ``estimator``
    overrides the estimator entirely (testing hook).
    """
    if cert_source not in ("online", "offline"):
        raise ConfigurationError(f"cert_source must be online/offline, got {cert_source}")
    state = {"cached": None, "cost": None}

    def default_estimator(K, i):
        cost = state["cost"]
        if cost is None:
            cost = _probe_cost(oracle, K, rollout_cfg, run_id=run_offset)
        cfg, state["cached"] = _resolve_rollout_cfg(
            oracle, rollout_cfg, norms, budget, cert_source, cost, state["cached"]
        )
        rid = run_offset + i
        if use_vr:
            g = estimate_gradient_vr(oracle, K, cfg, n_v, run_id=rid, keep_terms=True)
            return g, None
        g, _ = estimate_gradient_covariance(oracle, K, cfg, run_id=rid, keep_terms=True)
        return g, None

    est = estimator if estimator is not None else default_estimator

    def wrapped_estimator(K, i):
        g, c = est(K, i)
        if not g.failed and g.rollout_costs is not None and len(g.rollout_costs):
            state["cost"] = float(np.mean(g.rollout_costs))
        return g, c

    def update(K, grad_est, cov_est, eta):
        return K - eta * grad_est.value, False

    return _mf_loop(
        oracle, K0, schedule, stop, wrapped_estimator, update, "pgd",
        norms, c_star, max_consecutive_failures,
        config={"optimizer": "mf_pgd", "schedule": schedule.kind,
                "cert_source": cert_source, "use_vr": use_vr},
    )


def _probe_cost(oracle, K, rollout_cfg, run_id):
    """One unperturbed rollout to seed the certificate/step machinery."""
    if rollout_cfg is None:
        raise ConfigurationError(
            "from-bounds model-free runs need an initial rollout configuration "
            "or an initial cost; provide rollout_cfg for the first iteration"
        )
    x0 = oracle.draw_initial_state(run_id, 0)
    traj = oracle.rollout(K, x0, rollout_cfg.l, run_id, 0, Purpose.NOISE)
    return oracle.stage_cost(traj.states, K)


def run_mf_npg(
    oracle: RolloutOracle,
    K0: np.ndarray,
    schedule: StepSchedule,
    stop: StopRule,
    rollout_cfg: RolloutConfig | None = None,
    norms: PlantNorms | None = None,
    budget=None,
    cov_budget=None,
    cert_source: str = "offline",
    c_star: float | None = None,
    cov_floor: float | None = None,
    max_consecutive_failures: int = 5,
    estimator=None,
    run_offset: int = 0,
) -> ConvergenceTrace:
    """Model-free natural policy gradient.

    Each iteration estimates the gradient and the average state covariance
    together and updates K <- K - eta * grad_hat Sigma_hat^{-1}. The
    covariance is inverted only when its smallest eigenvalue clears
    ``cov_floor`` (default lam_1(Sigma_w)/2 when norms are supplied, else
    1e-8); otherwise the iteration is an estimate failure. When both budgets
    are given, (n, l, r) combine the two certificates as max/max/min.
    """
    if cert_source not in ("online", "offline"):
        raise ConfigurationError(f"cert_source must be online/offline, got {cert_source}")
    if cov_floor is None:
        cov_floor = norms.lam_Sigma_w / 2.0 if norms is not None else 1e-8
    state = {"cached": None, "cost": None}

    def resolve(cost):
        from .bounds import covariance_certificate, gradient_certificate

        if rollout_cfg is not None:
            return rollout_cfg
        if norms is None or budget is None or cov_budget is None:
            raise ConfigurationError(
                "model-free NPG needs explicit rollout parameters or "
                "norms + both budgets"
            )
        if cert_source == "offline" and state["cached"] is not None:
            return state["cached"]
        g = gradient_certificate(norms, cost, budget, L0=oracle.L0)
        s = covariance_certificate(norms, cost, cov_budget, L0=oracle.L0)
        cfg = RolloutConfig(
            n=max(max(g.N1, g.N2), s.n_min_prime),
            l=max(g.l_min, s.l_min_prime),
            r=min(g.r_max, s.r_max_prime),
            L0=oracle.L0,
        )
        if cert_source == "offline":
            state["cached"] = cfg
        return cfg

    def default_estimator(K, i):
        cost = state["cost"]
        if cost is None:
            cost = _probe_cost(oracle, K, rollout_cfg, run_id=run_offset)
        cfg = resolve(cost)
        return estimate_gradient_covariance(
            oracle, K, cfg, run_id=run_offset + i, keep_terms=True
        )

    est = estimator if estimator is not None else default_estimator

    def wrapped_estimator(K, i):
        g, c = est(K, i)
        if not g.failed and g.rollout_costs is not None and len(g.rollout_costs):
            state["cost"] = float(np.mean(g.rollout_costs))
        return g, c

    def update(K, grad_est, cov_est, eta):
        if cov_est is None or cov_est.failed:
            return K, True
        lam = smallest_eigenvalue(cov_est.value)
        if lam < cov_floor:
            return K, True
        return K - eta * grad_est.value @ np.linalg.inv(cov_est.value), False

    return _mf_loop(
        oracle, K0, schedule, stop, wrapped_estimator, update, "npg",
        norms, c_star, max_consecutive_failures,
        config={"optimizer": "mf_npg", "schedule": schedule.kind,
                "cert_source": cert_source},
    )


def run_noisy_gradient_pgd(
    plant: PlantModel,
    K0: np.ndarray,
    eta: float,
    noise_sigma: float,
    stop: StopRule,
    seeds: SeedSpec,
    run_id: int = 0,
) -> ConvergenceTrace:
    """Gradient descent on the exact gradient plus i.i.d. Gaussian noise:
    K <- K - eta (grad C(K) + Delta), Delta entries N(0, noise_sigma^2)."""
    if not eta > 0:
        raise ConfigurationError(f"eta must be positive, got {eta}")
    if noise_sigma < 0:
        raise ConfigurationError(f"noise_sigma must be >= 0, got {noise_sigma}")
    K = plant.check_gain(K0)
    opt = solve_dare(plant)
    c_star = opt.C_star
    try:
        q = exact_quantities(plant, K)
    except InstabilityError as exc:
        raise ConfigurationError(f"K0 is not stabilizing: {exc}") from exc
    ceiling = DIVERGENCE_CEILING_FACTOR * max(q.cost, 1.0)
    tb = _TraceBuilder(
        {"optimizer": "noisy_gradient_pgd", "eta": eta, "noise_sigma": noise_sigma},
        seed=seeds.master_seed,
    )

    for i in range(stop.max_iters):
        grad_norm = float(np.linalg.norm(q.grad, "fro"))
        rel = _rel_subopt(q.cost, c_star)
        if stop.rel_subopt_tol is not None and rel is not None and rel <= stop.rel_subopt_tol:
            tb.add(q.cost, rel, 0.0, grad_norm)
            return tb.finish(K, "converged")
        tb.add(q.cost, rel, eta, grad_norm)
        if noise_sigma > 0:
            rng = seeds.generator(run_id, i, Purpose.PERTURBATION)
            delta = noise_sigma * rng.standard_normal((plant.n_u, plant.n_x))
        else:
            delta = 0.0
        K_next = K - eta * (q.grad + delta)
        try:
            q_next = exact_quantities(plant, K_next)
        except InstabilityError:
            tb.add(math.inf, None, 0.0, math.nan, status="diverged")
            return tb.finish(K_next, "diverged")
        if not math.isfinite(q_next.cost) or q_next.cost > ceiling:
            tb.add(q_next.cost, _rel_subopt(q_next.cost, c_star), 0.0,
                   float(np.linalg.norm(q_next.grad, "fro")), status="diverged")
            return tb.finish(K_next, "diverged")
        K, q = K_next, q_next

    rel = _rel_subopt(q.cost, c_star)
    tb.add(q.cost, rel, 0.0, float(np.linalg.norm(q.grad, "fro")))
    return tb.finish(K, "max_iters")
