"""Closed-form perturbation constants and sample-complexity certificates.

Pure functions of plant norms, a cost value c, and an error/probability
budget. The formulas are evaluated verbatim, with no tightening; every
intermediate (the alpha constants, the sample-cost ceilings C_bar and
friends) is retained on the returned objects for inspection. Rollout-count
formulas return the raw real value and its integer ceiling side by side.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ConfigurationError
from .plants import PlantModel, smallest_eigenvalue

__all__ = [
    "PlantNorms",
    "PerturbationConstants",
    "ErrorBudget",
    "CovErrorBudget",
    "SampleCertificate",
    "perturbation_constants",
    "pgd_step_bound",
    "npg_step_bound",
    "state_bound",
    "gradient_certificate",
    "covariance_certificate",
    "vr_certificate",
    "required_accuracies",
    "RequiredAccuracies",
    "iteration_counts",
    "IterationCounts",
]


@dataclass(frozen=True)
class PlantNorms:
    """The handful of scalars the certificate formulas consume."""

    n_x: int
    n_u: int
    norm_A: float
    norm_B: float
    norm_R: float
    lam_Q: float
    lam_R: float
    lam_Sigma_w: float
    trace_Sigma_w: float
    norm_Sigma_w: float
    norm_Sigma_0: float
    lam_Sigma_0: float
    norm_Sigma_star: float | None = None

    @classmethod
    def from_plant(cls, plant: PlantModel, norm_Sigma_star: float | None = None):
        return cls(
            n_x=plant.n_x,
            n_u=plant.n_u,
            norm_A=float(np.linalg.norm(plant.A, 2)),
            norm_B=float(np.linalg.norm(plant.B, 2)),
            norm_R=float(np.linalg.norm(plant.R, 2)),
            lam_Q=smallest_eigenvalue(plant.Q),
            lam_R=smallest_eigenvalue(plant.R),
            lam_Sigma_w=smallest_eigenvalue(plant.Sigma_w),
            trace_Sigma_w=float(np.trace(plant.Sigma_w)),
            norm_Sigma_w=float(np.linalg.norm(plant.Sigma_w, 2)),
            norm_Sigma_0=float(np.linalg.norm(plant.Sigma_0, 2)),
            lam_Sigma_0=smallest_eigenvalue(plant.Sigma_0),
            norm_Sigma_star=norm_Sigma_star,
        )


@dataclass(frozen=True)
class PerturbationConstants:
    """Local Lipschitz constants and norm bounds, all functions of a cost
    value c (and a conservative lower bound on the optimal cost)."""

    c: float
    c_star: float
    h: float          # trust radius for the gain perturbation
    h_sigma: float    # Lipschitz constant of the average covariance
    h_cost: float     # Lipschitz constant of the cost
    h_grad: float     # Lipschitz constant of the gradient (alpha1 + alpha3)
    b_gain: float     # upper bound on ||K||
    b_grad: float     # upper bound on ||grad C(K)||
    alpha1: float
    alpha2: float
    alpha3: float


def _require_cost(c: float, c_star: float) -> None:
    if not c > 0:
        raise ConfigurationError(f"cost value must be positive, got {c}")
    if c < c_star:
        raise ConfigurationError(f"cost value {c} below optimal cost {c_star}")


def perturbation_constants(
    norms: PlantNorms, c: float, c_star: float = 0.0
) -> PerturbationConstants:
    """Evaluate the trust radius h and the Lipschitz/norm bounds at cost c.

    c_star defaults to 0, which only enlarges the bounds (conservative) when
    the optimal cost is unknown.
    """
    _require_cost(c, c_star)
    lam_q, lam_w = norms.lam_Q, norms.lam_Sigma_w
    if lam_w <= 0:
        raise ConfigurationError("certificates require positive-definite Sigma_w")
    nB, nR, nA = norms.norm_B, norms.norm_R, norms.norm_A

    h = lam_w * lam_q / (8.0 * c * nB)
    h_sigma = 8.0 * (c / lam_q) ** 2 * nB / lam_w

    gap = c - c_star
    # ||R + B'P B|| enlarged through ||P|| <= c / lam(Sigma_w).
    r_plus = nR + nB**2 * c / lam_w
    b_gain = (math.sqrt(gap * r_plus / lam_w) + nB * nA * c / lam_w) / norms.lam_R

    h_cost = (
        6.0
        * (c / (lam_w * lam_q)) ** 2
        * (2.0 * b_gain**2 * nR * nB + b_gain * nR)
        * norms.trace_Sigma_w
    )
    b_grad = math.sqrt(4.0 * (c / lam_q) ** 2 * gap / lam_w * r_plus)

    alpha1 = 2.0 * math.sqrt(gap / lam_w * r_plus) * h_sigma
    alpha2 = (
        6.0
        * (c / (lam_w * lam_q)) ** 2
        * (2.0 * b_gain**2 * nR * nB + b_gain * nR)
    )
    # The middle term divides by the smallest eigenvalue of Sigma_0, exactly
    # as the source derivation prints it; degenerate Sigma_0 yields +inf.
    if norms.lam_Sigma_0 > 0:
        mid = nB**2 * c / norms.lam_Sigma_0
    else:
        mid = math.inf
    alpha3 = nR + mid + alpha2 * (nB * nA + b_gain * nB**2)
    h_grad = alpha1 + alpha3

    return PerturbationConstants(
        c=c, c_star=c_star, h=h, h_sigma=h_sigma, h_cost=h_cost,
        h_grad=h_grad, b_gain=b_gain, b_grad=b_grad,
        alpha1=alpha1, alpha2=alpha2, alpha3=alpha3,
    )


def pgd_step_bound(norms: PlantNorms, c: float, c_star: float = 0.0) -> float:
    """Largest certified gradient-descent step size at cost level c:
    the smaller of the curvature and the gradient-magnitude branches."""
    pc = perturbation_constants(norms, c, c_star)
    lam_q, lam_w = norms.lam_Q, norms.lam_Sigma_w
    if pc.b_grad > 0:
        branch1 = (lam_q * lam_w / c) ** 2 / (2.0 * norms.norm_B * pc.b_grad)
    else:
        branch1 = math.inf
    branch2 = lam_q / (2.0 * c * (norms.norm_R + norms.norm_B**2 * c / lam_w))
    return min(branch1, branch2) / 32.0


def npg_step_bound(norms: PlantNorms, c: float) -> float:
    """Largest certified natural-gradient step size at cost level c."""
    _require_cost(c, 0.0)
    return 1.0 / (2.0 * norms.norm_R + 2.0 * norms.norm_B**2 * c / norms.lam_Sigma_w)


@dataclass(frozen=True)
class StateBound:
    value: float        # high-probability bound on max_t ||x_t||
    w_bar: float        # per-step noise norm bound
    mode: str           # "paper" or "chebyshev"


def state_bound(
    L0: float, t: int, trace_sigma_w: float, delta_x: float, mode: str = "paper"
) -> StateBound:
    """High-probability bound L0 + t * w_bar on the state norm over t steps.

    mode "paper" takes w_bar = Tr(Sigma_w) / (1 - (1-delta_x)^(1/t)) as
    printed in the source derivation; mode "chebyshev" takes the square root
    of that ratio, which is what a direct Chebyshev argument yields. Neither
    is endorsed; the mode is recorded in the output.
    """
    if not (0.0 < delta_x < 1.0):
        raise ConfigurationError(f"delta_x must be in (0,1), got {delta_x}")
    if t < 1:
        raise ConfigurationError(f"t must be >= 1, got {t}")
    denom = 1.0 - (1.0 - delta_x) ** (1.0 / t)
    if mode == "paper":
        w_bar = trace_sigma_w / denom
    elif mode == "chebyshev":
        w_bar = math.sqrt(trace_sigma_w / denom)
    else:
        raise ConfigurationError(f"unknown state-bound mode {mode!r}")
    return StateBound(value=L0 + t * w_bar, w_bar=w_bar, mode=mode)


@dataclass(frozen=True)
class ErrorBudget:
    """Decomposition of the gradient-estimation tolerance and probability.

    eps = eps_d + eps_l + eps_n + eps_r;
    delta = 1 - (1-delta_d)(1-delta_n)(1-delta_x).
    """

    eps_d: float
    eps_l: float
    eps_n: float
    eps_r: float
    delta_x: float
    delta_n: float
    delta_d: float

    def __post_init__(self):
        for name in ("eps_d", "eps_l", "eps_n", "eps_r"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("delta_x", "delta_n", "delta_d"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ConfigurationError(f"{name} must be in (0,1), got {v}")

    @property
    def eps(self) -> float:
        return self.eps_d + self.eps_l + self.eps_n + self.eps_r

    @property
    def delta(self) -> float:
        return 1.0 - (1.0 - self.delta_d) * (1.0 - self.delta_n) * (1.0 - self.delta_x)

    @classmethod
    def even_split(cls, eps: float, delta: float) -> "ErrorBudget":
        """Split eps into four equal parts and delta into three equal
        multiplicative factors."""
        part = 1.0 - (1.0 - delta) ** (1.0 / 3.0)
        return cls(
            eps_d=eps / 4, eps_l=eps / 4, eps_n=eps / 4, eps_r=eps / 4,
            delta_x=part, delta_n=part, delta_d=part,
        )


@dataclass(frozen=True)
class CovErrorBudget:
    """Covariance analog: eps' = eps_l + eps_n + eps_r,
    delta' = 1 - (1-delta_n)(1-delta_x)."""

    eps_l: float
    eps_n: float
    eps_r: float
    delta_x: float
    delta_n: float

    def __post_init__(self):
        for name in ("eps_l", "eps_n", "eps_r"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        for name in ("delta_x", "delta_n"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ConfigurationError(f"{name} must be in (0,1), got {v}")

    @property
    def eps(self) -> float:
        return self.eps_l + self.eps_n + self.eps_r

    @property
    def delta(self) -> float:
        return 1.0 - (1.0 - self.delta_n) * (1.0 - self.delta_x)

    @classmethod
    def even_split(cls, eps: float, delta: float) -> "CovErrorBudget":
        part = 1.0 - (1.0 - delta) ** (1.0 / 2.0)
        return cls(eps_l=eps / 3, eps_n=eps / 3, eps_r=eps / 3,
                   delta_x=part, delta_n=part)


def _ceil_int(x: float) -> int:
    if not math.isfinite(x):
        raise ConfigurationError(f"certificate value {x} is not finite")
    return max(1, int(math.ceil(x)))


@dataclass(frozen=True)
class SampleCertificate:
    """Certified (r, l, n) requirements plus every retained intermediate."""

    r_max: float | None = None
    l_min: int | None = None
    l_min_raw: float | None = None
    N1: int | None = None
    N1_raw: float | None = None
    N2: int | None = None
    N2_raw: float | None = None
    r_max_prime: float | None = None
    l_min_prime: int | None = None
    l_min_prime_raw: float | None = None
    n_min_prime: int | None = None
    n_min_prime_raw: float | None = None
    N3: int | None = None
    N3_raw: float | None = None
    n_tilde_min: int | None = None
    n_tilde_min_raw: float | None = None
    vr_improves: bool | None = None
    intermediates: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {k: v for k, v in asdict(self).items() if v is not None and k != "intermediates"}
        d["intermediates"] = dict(self.intermediates)
        return d


def _l_min_gradient(norms, c, h_cost, r, eps_l):
    """Rollout-length requirement for the gradient estimator at radius r."""
    lam_q, lam_w = norms.lam_Q, norms.lam_Sigma_w
    c_pert = c + r * h_cost
    lead = 2.0 * norms.n_x * norms.n_u * c_pert**2 / (eps_l * r * lam_w)
    core = (norms.norm_Sigma_0 * lam_w + c_pert) / (lam_q * lam_w**2) + 1.0 / lam_q
    return lead * core


def _c_bar(norms, c, h_cost, r, l, L0, delta_x, sb_mode, self_consistent):
    """Upper bound on one empirical rollout cost, given the state bound."""
    sb = state_bound(L0, l, norms.trace_Sigma_w, delta_x, mode=sb_mode)
    if self_consistent:
        inner = L0 + (l - 1) * sb.w_bar if l > 1 else L0
    else:
        # As printed: the growth factor appears once inside the square.
        inner = L0 + (l - 1) * sb.w_bar
    return (c + r * h_cost) / norms.lam_Sigma_w * inner**2


def gradient_certificate(
    norms: PlantNorms,
    c: float,
    budget: ErrorBudget,
    L0: float,
    c_star: float = 0.0,
    norm_K: float | None = None,
    state_bound_mode: str = "paper",
) -> SampleCertificate:
    """Certified (r_max, l_min, N1, N2) for the plain gradient estimator.

    The gain-norm slot in r_max uses the supplied ||K|| when available and
    the cost-based bound b_gain otherwise, so evaluation works model-free.
    """
    pc = perturbation_constants(norms, c, c_star)
    k_slot = pc.b_gain if norm_K is None else norm_K
    r_max = min(pc.h, k_slot, budget.eps_r / pc.h_grad)
    r = r_max
    l_raw = _l_min_gradient(norms, c, pc.h_cost, r, budget.eps_l)
    l = _ceil_int(l_raw)

    d = norms.n_x * norms.n_u
    mn = min(norms.n_x, norms.n_u)
    mx = max(norms.n_x, norms.n_u)
    c_pert = c + r * pc.h_cost
    sample_norm = d * c_pert / r
    alpha4 = sample_norm + budget.eps_r + pc.b_grad
    alpha5 = mx**2 * sample_norm**2 + (budget.eps_r + pc.b_grad) ** 2
    log_n = math.log((norms.n_x + norms.n_u) / budget.delta_n)
    N1_raw = (
        2.0 * mn / budget.eps_n**2
        * (alpha4**2 + alpha5 * budget.eps_n / (3.0 * math.sqrt(mn)))
        * log_n
    )

    c_bar = _c_bar(norms, c, pc.h_cost, r, l, L0, budget.delta_x,
                   state_bound_mode, self_consistent=False)
    alpha6 = d * c_bar / r
    eps_sum = budget.eps_l + budget.eps_n + budget.eps_r
    alpha7 = eps_sum + pc.b_grad + alpha6
    alpha8 = mx**2 * alpha6**2 + (eps_sum + pc.b_grad) ** 2
    log_d = math.log((norms.n_x + norms.n_u) / budget.delta_d)
    N2_raw = (
        2.0 * mn / budget.eps_d**2
        * (alpha7**2 + alpha8 * budget.eps_d / (3.0 * math.sqrt(mn)))
        * log_d
    )

    return SampleCertificate(
        r_max=r_max,
        l_min=l, l_min_raw=l_raw,
        N1=_ceil_int(N1_raw), N1_raw=N1_raw,
        N2=_ceil_int(N2_raw), N2_raw=N2_raw,
        intermediates={
            "alpha4": alpha4, "alpha5": alpha5, "alpha6": alpha6,
            "alpha7": alpha7, "alpha8": alpha8, "c_bar": c_bar,
            "h": pc.h, "h_cost": pc.h_cost, "h_grad": pc.h_grad,
            "b_gain": pc.b_gain, "b_grad": pc.b_grad,
            "state_bound_mode": state_bound_mode,
        },
    )


def covariance_certificate(
    norms: PlantNorms,
    c: float,
    budget: CovErrorBudget,
    L0: float,
    c_star: float = 0.0,
    norm_K: float | None = None,
    state_bound_mode: str = "paper",
) -> SampleCertificate:
    """Certified (r'_max, l'_min, n'_min) for the covariance estimator."""
    pc = perturbation_constants(norms, c, c_star)
    k_slot = pc.b_gain if norm_K is None else norm_K
    if pc.b_grad > 0:
        r_branch = budget.eps_r / pc.b_grad
    else:
        r_branch = math.inf
    r_max = min(pc.h, k_slot, r_branch)
    r = r_max

    lam_q, lam_w = norms.lam_Q, norms.lam_Sigma_w
    l_raw = (
        2.0 * c / (budget.eps_l * lam_w)
        * (c * norms.norm_Sigma_0 / (lam_q * lam_w)
           + c**2 / (lam_q * lam_w**2)
           + c / lam_q)
    )
    l = _ceil_int(l_raw)

    sb = state_bound(L0, l, norms.trace_Sigma_w, budget.delta_x, mode=state_bound_mode)
    c_pert = c + r * pc.h_cost
    alpha9 = c_pert / lam_q + sb.value**2
    alpha10 = norms.n_x**2 * (sb.value**2 + (c_pert / lam_q) ** 2)
    log_n = math.log(2.0 * norms.n_x / budget.delta_n)
    n_raw = (
        2.0 * norms.n_x / budget.eps_n**2
        * (alpha10 + alpha9 * budget.eps_n / (3.0 * math.sqrt(norms.n_x)))
        * log_n
    )

    return SampleCertificate(
        r_max_prime=r_max,
        l_min_prime=l, l_min_prime_raw=l_raw,
        n_min_prime=_ceil_int(n_raw), n_min_prime_raw=n_raw,
        intermediates={
            "alpha9": alpha9, "alpha10": alpha10,
            "state_bound": sb.value, "state_bound_mode": state_bound_mode,
            "h": pc.h, "b_gain": pc.b_gain, "b_grad": pc.b_grad,
        },
    )


def vr_certificate(
    norms: PlantNorms,
    c: float,
    budget: ErrorBudget,
    b_hat: float,
    b_s_bound: float,
    L0: float,
    l: int,
    c_star: float = 0.0,
    norm_K: float | None = None,
    r: float | None = None,
    delta_v_tilde: float | None = None,
    delta_x_tilde: float | None = None,
    state_bound_mode: str = "paper",
) -> SampleCertificate:
    """Rollout-count requirement N3 for the variance-reduced estimator and
    the baseline-rollout count that certifies N3 <= N2.

    ``b_hat`` is the estimated baseline value, ``b_s_bound`` an upper bound
    on the exact baseline. Also reports the comparison against the plain
    estimator's N2 at the same budget.
    """
    if b_hat < 0 or b_s_bound < 0:
        raise ConfigurationError("baseline values must be nonnegative")
    pc = perturbation_constants(norms, c, c_star)
    grad_cert = gradient_certificate(
        norms, c, budget, L0, c_star=c_star, norm_K=norm_K,
        state_bound_mode=state_bound_mode,
    )
    r = grad_cert.r_max if r is None else r
    d = norms.n_x * norms.n_u
    mn = min(norms.n_x, norms.n_u)
    mx = max(norms.n_x, norms.n_u)

    c_bar = _c_bar(norms, c, pc.h_cost, r, l, L0, budget.delta_x,
                   state_bound_mode, self_consistent=False)
    alpha12 = d / r * (max(c_bar - b_s_bound, b_s_bound) + abs(b_s_bound - b_hat))
    eps_sum = budget.eps_l + budget.eps_n + budget.eps_r
    alpha11 = mx**2 * alpha12**2 + (eps_sum + pc.b_grad) ** 2
    alpha7 = grad_cert.intermediates["alpha7"]
    log_d = math.log((norms.n_x + norms.n_u) / budget.delta_d)
    N3_raw = (
        2.0 * mn / budget.eps_d**2
        * (alpha7**2 + alpha11 * budget.eps_d / (3.0 * math.sqrt(mn)))
        * log_d
    )

    delta_v = budget.delta_d if delta_v_tilde is None else delta_v_tilde
    delta_xt = budget.delta_x if delta_x_tilde is None else delta_x_tilde
    sb = state_bound(L0, l, norms.trace_Sigma_w, delta_xt, mode=state_bound_mode)
    c_bar_v = c / norms.lam_Sigma_w * (L0 + (l - 1) * sb.w_bar) ** 2
    c_bar_ev = c / norms.lam_Sigma_w * (L0 + (l - 1) * norms.norm_Sigma_w) ** 2
    eps_v = min(b_s_bound, c_bar - b_s_bound)
    if eps_v > 0:
        n_tilde_raw = (
            2.0 / eps_v**2
            * ((c_bar_ev + c_bar_v) ** 2
               + ((c_bar_ev**2 + c_bar_v**2) * eps_v) / 3.0)
            * math.log(2.0 / delta_v)
        )
        n_tilde = _ceil_int(n_tilde_raw)
    else:
        n_tilde_raw = math.inf
        n_tilde = None

    return SampleCertificate(
        r_max=grad_cert.r_max,
        l_min=grad_cert.l_min, l_min_raw=grad_cert.l_min_raw,
        N1=grad_cert.N1, N1_raw=grad_cert.N1_raw,
        N2=grad_cert.N2, N2_raw=grad_cert.N2_raw,
        N3=_ceil_int(N3_raw), N3_raw=N3_raw,
        n_tilde_min=n_tilde, n_tilde_min_raw=n_tilde_raw,
        vr_improves=bool(N3_raw <= grad_cert.N2_raw),
        intermediates={
            **grad_cert.intermediates,
            "alpha11": alpha11, "alpha12": alpha12,
            "c_bar_v": c_bar_v, "c_bar_ev": c_bar_ev, "eps_v": eps_v,
        },
    )


@dataclass(frozen=True)
class RequiredAccuracies:
    """Per-iteration estimation accuracies the model-free loops must meet."""

    eps_pgd: float          # gradient accuracy for descent (via h_grad)
    eps_pgd_alt: float      # same threshold stated via h_cost
    eps_npg_grad: float
    eps_npg_cov: float


def required_accuracies(
    norms: PlantNorms,
    c: float,
    norm_sigma_star: float,
    eps: float,
    sigma: float,
    c_star: float = 0.0,
) -> RequiredAccuracies:
    """Thresholds on the gradient/covariance estimation errors that keep the
    model-free contraction factors valid, linear in both eps and sigma."""
    if not (0.0 < sigma < 1.0):
        raise ConfigurationError(f"sigma must be in (0,1), got {sigma}")
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    pc = perturbation_constants(norms, c, c_star)
    lam_r, lam_w = norms.lam_R, norms.lam_Sigma_w
    base = sigma * eps * lam_r * lam_w**2 / norm_sigma_star
    eps_pgd = base / (2.0 * pc.h_grad)
    eps_pgd_alt = base / (2.0 * pc.h_cost)
    eps_npg_grad = base / (8.0 * pc.h_grad)
    if pc.b_grad > 0:
        eps_npg_cov = (
            sigma * eps * lam_r * lam_w**3
            / (4.0 * pc.h_grad * norm_sigma_star * math.sqrt(pc.b_grad))
        )
    else:
        eps_npg_cov = math.inf
    return RequiredAccuracies(
        eps_pgd=eps_pgd, eps_pgd_alt=eps_pgd_alt,
        eps_npg_grad=eps_npg_grad, eps_npg_cov=eps_npg_cov,
    )


@dataclass(frozen=True)
class IterationCounts:
    n_pgd_exact: int
    n_pgd_model_free: int
    n_npg_model_free: int


def iteration_counts(
    norm_sigma_star: float,
    lam_R: float,
    lam_Sigma_w: float,
    c0: float,
    c_star: float,
    eps: float,
    eta: float,
    sigma: float = 0.0,
) -> IterationCounts:
    """Logarithmic iteration counts to reach suboptimality eps from c0 with
    step size eta; returns 0 when c0 is already within eps of optimal."""
    if not eps > 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    if c0 <= c_star + eps:
        return IterationCounts(0, 0, 0)
    log_term = math.log((c0 - c_star) / eps)
    pgd = norm_sigma_star / (2.0 * eta * lam_R * lam_Sigma_w**2) * log_term
    pgd_mf = pgd / (1.0 - sigma) if sigma < 1.0 else math.inf
    npg_mf = (
        norm_sigma_star / (2.0 * (1.0 - sigma) * eta * lam_Sigma_w) * log_term
        if sigma < 1.0 else math.inf
    )
    return IterationCounts(
        n_pgd_exact=_ceil_int(pgd) if pgd > 0 else 0,
        n_pgd_model_free=_ceil_int(pgd_mf) if pgd_mf > 0 else 0,
        n_npg_model_free=_ceil_int(npg_mf) if npg_mf > 0 else 0,
    )
