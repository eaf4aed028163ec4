"""Actuator identification: CMA-ES over log stiffness/damping to match a
recorded command/state trajectory.

The optimizer is a standard (mu/mu_w, lambda) CMA-ES with rank-based
recombination weights, cumulative step-size adaptation, and rank-one plus
rank-mu covariance updates. Box constraints are handled by projecting
candidates onto the box for evaluation and ranking with a quadratic
distance penalty; the best-ever point is always feasible.
"""

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import ActuatorParams, rollout

logger = logging.getLogger(__name__)

BOUND_PENALTY = 1e6

# default log-space search box per parameter kind
DEFAULT_LOG_BOUNDS = {"stiffness": (math.log(0.05), math.log(100.0)),
                      "damping": (math.log(1e-3), math.log(10.0))}


@dataclass(frozen=True)
class CmaesConfig:
    population: int | None = None   # None: 4 + floor(3 ln n)
    sigma0: float | None = None     # None: 0.3 x log-range (identify) / 0.3 (raw)
    max_gens: int = 300
    seed: int = 0
    search_space: tuple | None = None  # (lower, upper) arrays, log scale

    def __post_init__(self):
        if self.population is not None and self.population < 4:
            raise ValueError("population must be at least 4")
        if self.sigma0 is not None and self.sigma0 <= 0:
            raise ValueError("sigma0 must be positive")
        if self.max_gens < 1:
            raise ValueError("max_gens must be positive")
        if self.search_space is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in self.search_space)
            if lo.shape != hi.shape or np.any(lo > hi):
                raise ValueError("search_space bounds out of order")
            object.__setattr__(self, "search_space", (lo, hi))


@dataclass
class SysidResult:
    params: ActuatorParams
    best_loss: float
    loss_per_gen: np.ndarray  # rows: generation, generation best, best so far
    evaluations: int


def cmaes_minimize(objective, config, x0):
    """Minimize objective over R^n (optionally box-bounded); deterministic
    for a fixed config.seed. Returns (x_best, loss_best, history)."""
    x0 = np.asarray(x0, dtype=float).copy()
    n = x0.size
    f0 = float(objective(x0))
    if not np.isfinite(f0):
        raise ValueError(f"objective not finite at x0: {f0}")
    bounds = config.search_space
    if bounds is not None:
        lo, hi = bounds
        if lo.size != n:
            raise ValueError("search_space dimension mismatch")
        x0 = np.clip(x0, lo, hi)

    lam = config.population or 4 + int(3 * math.log(n))
    mu = lam // 2
    w = math.log((lam + 1) / 2) - np.log(np.arange(1, mu + 1))
    w /= w.sum()
    mu_eff = 1.0 / float(w @ w)
    c_sigma = (mu_eff + 2) / (n + mu_eff + 5)
    d_sigma = 1 + 2 * max(0.0, math.sqrt((mu_eff - 1) / (n + 1)) - 1) + c_sigma
    c_c = (4 + mu_eff / n) / (n + 4 + 2 * mu_eff / n)
    c_1 = 2 / ((n + 1.3) ** 2 + mu_eff)
    c_mu = min(1 - c_1, 2 * (mu_eff - 2 + 1 / mu_eff) / ((n + 2) ** 2 + mu_eff))
    chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))

    sigma = config.sigma0 if config.sigma0 is not None else 0.3
    if bounds is not None and config.sigma0 is None:
        rng_width = float(np.max(hi - lo))
        sigma = max(0.3 * rng_width, 1e-8)
    rng = np.random.default_rng(config.seed)

    mean = x0.copy()
    C = np.eye(n)
    p_sigma = np.zeros(n)
    p_c = np.zeros(n)
    best_x = x0.copy()
    best_f = f0
    history = []
    evals = 1
    for gen in range(1, config.max_gens + 1):
        # sample in the eigenbasis of C
        eigvals, B = np.linalg.eigh(C)
        eigvals = np.maximum(eigvals, 1e-20)
        D = np.sqrt(eigvals)
        z = rng.standard_normal((lam, n))
        y = z * D @ B.T  # rows: B D z_k
        xs = mean + sigma * y
        feas = np.clip(xs, lo, hi) if bounds is not None else xs
        raw = np.empty(lam)
        ranked = np.empty(lam)
        for k in range(lam):
            raw[k] = float(objective(feas[k]))
            ranked[k] = raw[k]
            if bounds is not None:
                # repair-and-penalize: evaluate the projection, rank the draw
                ranked[k] += BOUND_PENALTY * float(np.sum((xs[k] - feas[k]) ** 2))
        evals += lam
        order = np.argsort(ranked, kind="stable")
        gen_best = float(raw[order[0]])
        if gen_best < best_f:
            best_f = gen_best
            best_x = feas[order[0]].copy()
        history.append((gen, gen_best, best_f))

        y_sel = y[order[:mu]]
        y_w = w @ y_sel
        mean = mean + sigma * y_w
        c_inv_sqrt_yw = B @ ((B.T @ y_w) / D)
        p_sigma = (1 - c_sigma) * p_sigma + math.sqrt(
            c_sigma * (2 - c_sigma) * mu_eff
        ) * c_inv_sqrt_yw
        h_denom = math.sqrt(1 - (1 - c_sigma) ** (2 * gen))
        h_sigma = float(
            np.linalg.norm(p_sigma) / h_denom < (1.4 + 2 / (n + 1)) * chi_n
        )
        p_c = (1 - c_c) * p_c + h_sigma * math.sqrt(c_c * (2 - c_c) * mu_eff) * y_w
        rank_mu = (y_sel * w[:, None]).T @ y_sel
        delta_h = (1 - h_sigma) * c_c * (2 - c_c)
        C = (
            (1 - c_1 - c_mu) * C
            + c_1 * (np.outer(p_c, p_c) + delta_h * C)
            + c_mu * rank_mu
        )
        C = (C + C.T) / 2
        sigma *= math.exp((c_sigma / d_sigma) * (np.linalg.norm(p_sigma) / chi_n - 1))
        sigma = min(sigma, 1e8)  # guard against divergence on pathological objectives
    return best_x, best_f, np.array(history)


def sim_real_loss(model, params, config, real):
    """L_Sim-Real: sum over control ticks of the squared joint-angle gap
    between the rollout of the recorded commands and the recorded states."""
    if len(real) == 0:
        raise ValueError("empty trajectory")
    if real.q_commanded.shape[1] != model.dof:
        raise ValueError(
            f"trajectory has {real.q_commanded.shape[1]} joints, model has {model.dof}"
        )
    sim = rollout(model, params, config, real.q_measured[0], real.q_commanded)
    diff = sim.q_measured - real.q_measured
    return float(np.sum(diff * diff))


def identify(model, real, config, sim_config, mode="per_joint"):
    """Recover ActuatorParams by CMA-ES over log stiffness/damping.

    mode "per_joint" searches 2M parameters; "tied" shares one stiffness
    and one damping across joints.
    """
    if mode not in ("per_joint", "tied"):
        raise ValueError(f"unknown mode {mode!r}")
    M = model.dof
    reps = M if mode == "per_joint" else 1

    if config.search_space is not None:
        lo, hi = config.search_space
    else:
        ks = DEFAULT_LOG_BOUNDS["stiffness"]
        ds = DEFAULT_LOG_BOUNDS["damping"]
        lo = np.array([ks[0]] * reps + [ds[0]] * reps)
        hi = np.array([ks[1]] * reps + [ds[1]] * reps)
    if lo.size != 2 * reps:
        raise ValueError(f"search_space must have {2 * reps} entries for mode {mode!r}")
    sigma0 = config.sigma0
    if sigma0 is None:
        sigma0 = max(0.3 * float(np.max(hi - lo)), 1e-8)
    cfg = CmaesConfig(
        population=config.population, sigma0=sigma0, max_gens=config.max_gens,
        seed=config.seed, search_space=(lo, hi),
    )

    def to_params(x):
        k = np.exp(x[:reps])
        d = np.exp(x[reps:])
        if mode == "tied":
            k = np.full(M, k[0])
            d = np.full(M, d[0])
        return ActuatorParams(k, d)

    def objective(x):
        return sim_real_loss(model, to_params(x), sim_config, real)

    x0 = 0.5 * (lo + hi)
    x_best, f_best, history = cmaes_minimize(objective, cfg, x0)
    evals = 1 + (cfg.population or 4 + int(3 * math.log(x0.size))) * config.max_gens
    return SysidResult(
        params=to_params(x_best), best_loss=f_best, loss_per_gen=history, evaluations=evals,
    )


def multisine_commands(model, duration, control_hz, seed, n_sines=3,
                       freq_range=(0.2, 2.0), span=0.35):
    """Rich multi-sine excitation inside the joint limits, for synthetic
    identification experiments. Deterministic for a fixed seed."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * control_hz))
    t = np.arange(n) / control_hz
    mid = 0.5 * (model.limits_lower + model.limits_upper)
    half = 0.5 * (model.limits_upper - model.limits_lower)
    cmds = np.empty((n, model.dof))
    for j in range(model.dof):
        freqs = rng.uniform(*freq_range, size=n_sines)
        phases = rng.uniform(0, 2 * np.pi, size=n_sines)
        wave = np.sin(2 * np.pi * freqs[None, :] * t[:, None] + phases[None, :]).sum(axis=1)
        cmds[:, j] = mid[j] + span * half[j] * wave / n_sines
    return np.clip(cmds, model.limits_lower, model.limits_upper)


def sysid_result_to_json(result):
    return json.dumps(
        {
            "stiffness": result.params.stiffness.tolist(),
            "damping": result.params.damping.tolist(),
            "best_loss": result.best_loss,
            "evaluations": result.evaluations,
        },
        indent=2,
    )


def write_generation_csv(path, history):
    rows = ["generation,gen_best,best_so_far"]
    for gen, gen_best, best in history:
        rows.append("%d,%.17g,%.17g" % (int(gen), gen_best, best))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")
