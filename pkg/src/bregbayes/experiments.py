"""Scenario builders, data generation, lambda selection, and experiment runs.

Three bundled scenarios at desk scale:

* ``deblur2d`` -- spots phantom, Gaussian blur (sigma 0.015), pixel l1 prior;
* ``tv1d``     -- indicator of [1/3, 2/3], interval-averaged measurements,
                  1D TV prior, with the lambda-scaling sweep;
* ``ct2d``     -- Shepp-Logan phantom, parallel-beam Radon, Besov (Haar) prior
                  with the sparsity-matching lambda rule.

Synthetic data is always generated on a finer grid than the
reconstruction (``truth_factor`` times per axis) with a separate forward
operator, so reconstruction never inverts the operator that produced the
data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .bayescost import (CostSpec, centered_energy_check, cm_optimality_check,
                        theorem_ineq_check, verify_bayes_optimality)
from .grids import Grid, Signal, grid1d, grid2d
from .map_solver import MapResult, SolverOptions, solve_map
from .model import GaussianNoiseModel, Posterior
from .operators import (LinearOperator, adjoint_probe_error,
                        cell_average_restriction, gaussian_blur, haar_transform,
                        identity, interval_average_1d, radon)
from .priors import (Prior, make_besov_prior, make_l1_prior,
                     make_tv1d_prior)
from .sampling import (Chain, ChainSummary, sample_gibbs, sample_rwm,
                       summarize, two_chain_discrepancy)

SCENARIOS = ("deblur2d", "tv1d", "ct2d")


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one experiment bit for bit."""

    name: str
    seed: int = 0
    recon_shape: tuple[int, ...] = (64, 64)
    truth_factor: int = 4
    noise_fraction: float = 0.1
    # prior / lambda rule
    prior_kind: str = "l1"  # gaussian | l1 | tv1d | besov
    lam: Optional[float] = None
    lambda_rule: str = "fixed"  # fixed | sqrt_n | s_curve
    rule_constant: float = 1.0
    s_curve_target: Optional[float] = None  # None: truth coefficient sparsity
    s_curve_bracket: tuple[float, float] = (1e-3, 1e2)
    s_curve_tol: float = 0.02
    beta: float = 1.0
    # solver / sampler
    solver: SolverOptions = field(default_factory=SolverOptions)
    n_samples: int = 600
    burn_in: Optional[int] = None  # None: 10% of n_samples
    thinning: int = 1
    rwm_step: float = 2.4
    n_chains: int = 2
    # scenario specifics
    spots: int = 14
    spot_radius_range: tuple[float, float] = (0.01, 0.02)
    spot_intensity_range: tuple[float, float] = (0.7, 1.3)
    kernel_sigma: float = 0.015
    data_size: int = 30
    sweep: tuple[int, ...] = (63, 255, 1023, 4095)
    angles: int = 15
    bins: int = 95
    wavelet_levels: Optional[int] = None
    weights_csv: Optional[str] = None  # per-coefficient Besov weights

    def __post_init__(self):
        if self.name not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.name!r}")
        if self.noise_fraction <= 0:
            raise ValueError("noise fraction must be positive")
        if self.truth_factor < 1 or int(self.truth_factor) != self.truth_factor:
            raise ValueError("truth grid factor must be a positive integer")
        if self.lambda_rule not in ("fixed", "sqrt_n", "s_curve"):
            raise ValueError(f"unknown lambda rule {self.lambda_rule!r}")
        if self.lambda_rule == "fixed" and self.lam is None:
            raise ValueError("fixed lambda rule needs a lambda value")


# ---------------------------------------------------------------------------
# phantoms
# ---------------------------------------------------------------------------


def build_spots_phantom(grid: Grid, n_spots: int, seed: int = 0,
                        radius_range=(0.05, 0.09),
                        intensity_range=(0.7, 1.3),
                        max_retries: int = 2000) -> Signal:
    """Non-overlapping constant-intensity disks with varying radii/intensity.

    Deterministic for a given seed. Raises when ``n_spots`` cannot be
    placed without overlap within ``max_retries`` draws.
    """
    if grid.dim != 2:
        raise ValueError("spots phantom needs a 2D grid")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 101]))
    centers: list[tuple[float, float, float]] = []
    tries = 0
    while len(centers) < n_spots:
        if tries >= max_retries:
            raise RuntimeError(f"could not place {n_spots} spots "
                               f"without overlap after {max_retries} tries")
        tries += 1
        r = rng.uniform(*radius_range)
        cx = rng.uniform(r + 0.02, 1.0 - r - 0.02)
        cy = rng.uniform(r + 0.02, 1.0 - r - 0.02)
        if all((cx - ox) ** 2 + (cy - oy) ** 2 > (r + orr + 0.01) ** 2
               for ox, oy, orr in centers):
            centers.append((cx, cy, r))
    ys = grid.cell_centers(0)
    xs = grid.cell_centers(1)
    xg, yg = np.meshgrid(xs, ys)
    img = np.zeros(grid.shape)
    for cx, cy, r in centers:
        inten = rng.uniform(*intensity_range)
        img[(xg - cx) ** 2 + (yg - cy) ** 2 <= r * r] = inten
    return Signal(grid, img.reshape(-1))


def build_indicator_1d(grid: Grid) -> Signal:
    """Indicator of [1/3, 2/3] sampled at cell centers."""
    if grid.dim != 1:
        raise ValueError("indicator phantom needs a 1D grid")
    x = grid.cell_centers(0)
    return Signal(grid, ((x >= 1.0 / 3.0) & (x <= 2.0 / 3.0)).astype(float))


# standard intensity table: (value, half-axis a, half-axis b, x0, y0, phi_deg)
_SHEPP_LOGAN = (
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.01, 0.0230, 0.0230, 0.00, -0.6050, 0.0),
    (0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


def build_shepp_logan(grid: Grid) -> Signal:
    """Ten-ellipse head phantom with the standard (low contrast) intensities.

    Ellipse values compose additively and the image is clamped to [0, 1];
    evaluated at cell centers of the unit square mapped to [-1, 1]^2.
    """
    if grid.dim != 2 or grid.shape[0] != grid.shape[1]:
        raise ValueError("phantom needs a square 2D grid")
    ys = 1.0 - 2.0 * grid.cell_centers(0)  # row 0 at the top
    xs = 2.0 * grid.cell_centers(1) - 1.0
    xg, yg = np.meshgrid(xs, ys)
    img = np.zeros(grid.shape)
    for val, a, b, x0, y0, phi_deg in _SHEPP_LOGAN:
        phi = math.radians(phi_deg)
        ct, st = math.cos(phi), math.sin(phi)
        dx = xg - x0
        dy = yg - y0
        xr = dx * ct + dy * st
        yr = -dx * st + dy * ct
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += val
    return Signal(grid, np.clip(img, 0.0, 1.0).reshape(-1))


# ---------------------------------------------------------------------------
# data generation and lambda rules
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratedData:
    data: Signal
    sigma: float
    noiseless: Signal


def generate_data(truth: Signal, k_fine: LinearOperator,
                  restrict: LinearOperator, noise_fraction: float,
                  seed: int, data_grid: Grid) -> GeneratedData:
    """f = restrict(K_fine u) + eps with sigma = fraction * sup|noiseless|."""
    clean = restrict.apply(k_fine.apply(truth.values))
    sup = float(np.abs(clean).max())
    if sup == 0.0:
        raise ValueError("forward image is identically zero; sigma undefined")
    sigma = noise_fraction * sup
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 917]))
    noisy = clean + sigma * rng.standard_normal(clean.size)
    return GeneratedData(Signal(data_grid, noisy), sigma, Signal(data_grid, clean))


def lambda_sqrt_rule(n: int, c: float) -> float:
    """lambda_n = c sqrt(n + 1)."""
    if n < 2:
        raise ValueError("need n >= 2")
    if c <= 0:
        raise ValueError("constant must be positive")
    return c * math.sqrt(n + 1.0)


def coefficient_sparsity(prior: Prior, u: np.ndarray,
                         rtol: float = 1e-8) -> float:
    """Fraction of transform coefficients of u above rtol * max |coef|."""
    coef = u if prior.transform is None else prior.transform.apply(u)
    return _nonzero_fraction(coef, rtol)


def _nonzero_fraction(coef: np.ndarray, rtol: float = 1e-8) -> float:
    top = np.abs(coef).max()
    if top == 0.0:
        return 0.0
    return float(np.mean(np.abs(coef) > rtol * top))


def map_sparsity(post: Posterior, result: MapResult) -> float:
    """Coefficient sparsity of a MAP estimate.

    Prefers the terminal splitting variable, whose entries are exactly
    zero where the shrinkage killed them; CG ripple on the primal iterate
    would otherwise read as spurious nonzeros.
    """
    if result.split_coefficients is not None and post.prior.kind != "gaussian":
        return _nonzero_fraction(result.split_coefficients)
    return coefficient_sparsity(post.prior, result.estimate)


def s_curve_select_lambda(posterior_factory: Callable[[float], Posterior],
                          target_sparsity: float,
                          bracket: tuple[float, float],
                          tol: float = 0.02,
                          solver: Optional[SolverOptions] = None,
                          max_steps: int = 40) -> float:
    """Bisection on lambda until the MAP coefficient sparsity hits the target.

    Sparsity must be monotone non-increasing in lambda across the bracket
    (checked on the endpoints); raises when the bracket does not straddle
    the target.
    """
    if not 0.0 < target_sparsity < 1.0:
        raise ValueError("target sparsity must be in (0, 1)")
    lo, hi = bracket
    if not 0 < lo < hi:
        raise ValueError("bad bracket")
    solver = solver or SolverOptions(tol_rel_change=1e-6, max_iters=400)

    def sparsity_at(lam: float) -> float:
        post = posterior_factory(lam)
        res = solve_map(post, solver)
        return map_sparsity(post, res)

    s_lo = sparsity_at(lo)
    s_hi = sparsity_at(hi)
    if s_lo < s_hi:
        raise ValueError("sparsity is not non-increasing across the bracket")
    if not (s_hi <= target_sparsity <= s_lo):
        raise ValueError(
            f"bracket sparsities [{s_hi:.3f}, {s_lo:.3f}] do not straddle "
            f"target {target_sparsity:.3f}")
    for _ in range(max_steps):
        mid = math.sqrt(lo * hi)  # bisection in log lambda
        s_mid = sparsity_at(mid)
        if abs(s_mid - target_sparsity) <= tol:
            return mid
        if s_mid > target_sparsity:
            lo = mid
        else:
            hi = mid
        if hi / lo < 1.0 + 1e-3:
            break
    return math.sqrt(lo * hi)


# ---------------------------------------------------------------------------
# scenario assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioParts:
    """One scenario's operators, grids, truth, and prior factory."""

    config: ScenarioConfig
    recon_grid: Grid
    data_grid: Grid
    truth_fine: Signal
    truth_on_recon: Signal
    forward_fine: LinearOperator
    restrict: LinearOperator
    recon_operator: LinearOperator
    make_prior: Callable[[float], Prior]
    sampler_method: str  # gibbs | rwm


def _check_operators(*ops: LinearOperator) -> None:
    rng = np.random.default_rng(711)
    for op in ops:
        err = adjoint_probe_error(op, rng, n_probes=5)
        if err > 1e-9:
            raise AssertionError(f"{op.name}: adjoint defect {err:.2e}")


def build_deblur2d(cfg: ScenarioConfig) -> ScenarioParts:
    side = cfg.recon_shape[0]
    recon = grid2d(side, side)
    fine = grid2d(side * cfg.truth_factor, side * cfg.truth_factor)
    truth = build_spots_phantom(fine, cfg.spots, cfg.seed,
                                radius_range=cfg.spot_radius_range,
                                intensity_range=cfg.spot_intensity_range)
    k_fine = gaussian_blur(fine, cfg.kernel_sigma)
    restrict = cell_average_restriction(fine, recon)
    k_recon = gaussian_blur(recon, cfg.kernel_sigma)
    _check_operators(k_fine, restrict, k_recon)
    truth_recon = Signal(recon, restrict.apply(truth.values))
    return ScenarioParts(cfg, recon, recon, truth, truth_recon, k_fine,
                         restrict, k_recon, lambda lam: make_l1_prior(lam),
                         "gibbs")


def build_tv1d(cfg: ScenarioConfig, n: Optional[int] = None) -> ScenarioParts:
    n = n if n is not None else cfg.recon_shape[0]
    recon = grid1d(n)
    m = cfg.data_size
    fine_n = cfg.truth_factor * max(max(cfg.sweep), n)
    fine = grid1d(fine_n)
    truth = build_indicator_1d(fine)
    k_fine = interval_average_1d(fine, m)
    k_recon = interval_average_1d(recon, m)
    _check_operators(k_fine, k_recon)
    data_grid = grid1d(m)
    restrict = identity(m)
    truth_recon = Signal(recon, build_indicator_1d(recon).values)
    return ScenarioParts(cfg, recon, data_grid, truth, truth_recon, k_fine,
                         restrict, k_recon, lambda lam: make_tv1d_prior(lam),
                         "gibbs")


def build_ct2d(cfg: ScenarioConfig) -> ScenarioParts:
    side = cfg.recon_shape[0]
    recon = grid2d(side, side)
    fine = grid2d(side * cfg.truth_factor, side * cfg.truth_factor)
    truth = build_shepp_logan(fine)
    k_fine = radon(fine, cfg.angles, cfg.bins)
    k_recon = radon(recon, cfg.angles, cfg.bins)
    _check_operators(k_fine, k_recon)
    data_grid = grid2d(cfg.angles, cfg.bins)
    restrict = identity(cfg.angles * cfg.bins)
    truth_recon = Signal(recon,
                         cell_average_restriction(fine, recon).apply(truth.values))
    levels = cfg.wavelet_levels
    wavelet = haar_transform(recon, levels)
    if cfg.weights_csv is not None:
        from .priors import load_weights_csv

        weights = load_weights_csv(cfg.weights_csv)
    else:
        weights = np.ones(recon.size)

    def make_prior(lam: float) -> Prior:
        return make_besov_prior(lam, weights, wavelet)

    return ScenarioParts(cfg, recon, data_grid, truth, truth_recon, k_fine,
                         restrict, k_recon, make_prior, "rwm")


def build_scenario(cfg: ScenarioConfig) -> ScenarioParts:
    if cfg.name == "deblur2d":
        return build_deblur2d(cfg)
    if cfg.name == "tv1d":
        return build_tv1d(cfg)
    return build_ct2d(cfg)


# ---------------------------------------------------------------------------
# running experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentRecord:
    config: ScenarioConfig
    parts: ScenarioParts
    data: GeneratedData
    lam: float
    posterior: Posterior
    map_result: MapResult
    chains: list[Chain]
    cm: ChainSummary
    metrics: dict
    reports: list


def resolve_lambda(cfg: ScenarioConfig, parts: ScenarioParts,
                   data: GeneratedData) -> float:
    if cfg.lambda_rule == "fixed":
        return float(cfg.lam)
    if cfg.lambda_rule == "sqrt_n":
        return lambda_sqrt_rule(parts.recon_grid.size, cfg.rule_constant)
    # s_curve: match the truth's coefficient sparsity
    noise = GaussianNoiseModel.from_sigma(data.sigma, parts.data_grid.size)

    def factory(lam: float) -> Posterior:
        return Posterior(parts.recon_operator, data.data, noise,
                         parts.make_prior(lam), grid=parts.recon_grid)

    probe_prior = parts.make_prior(1.0)
    target = cfg.s_curve_target
    if target is None:
        target = coefficient_sparsity(probe_prior, parts.truth_on_recon.values)
    # sparsity counting needs only moderate accuracy per solve
    search_solver = replace(scenario_solver_options(cfg, 1.0, factory(1.0)),
                            tol_rel_change=1e-6, max_iters=400,
                            tol_residual=1e-3, trace_path=None)
    return s_curve_select_lambda(factory, target, cfg.s_curve_bracket,
                                 cfg.s_curve_tol, solver=search_solver)


def assemble_posterior(parts: ScenarioParts, data: GeneratedData,
                       lam: float) -> Posterior:
    noise = GaussianNoiseModel.from_sigma(data.sigma, parts.data_grid.size)
    return Posterior(parts.recon_operator, data.data, noise,
                     parts.make_prior(lam), grid=parts.recon_grid)


def normal_matrix_diag_mean(post: Posterior, n_probes: int = 3) -> float:
    """Hutchinson estimate of trace(K^T P K)/n, the data curvature scale."""
    rng = np.random.default_rng(131)
    op, prec = post.operator, post.noise.apply_precision
    total = 0.0
    for _ in range(n_probes):
        r = rng.choice([-1.0, 1.0], size=op.in_dim)
        ku = op.apply(r)
        total += float(ku @ prec(ku)) / op.in_dim
    return total / n_probes


def scenario_solver_options(cfg: ScenarioConfig, lam: float,
                            post: Posterior) -> SolverOptions:
    """Scenario-tuned splitting penalty when the config leaves it free.

    The TV splitting runs at 10x lambda (the shrink threshold then sits
    well under typical jump sizes); the image scenarios match the penalty
    to the mean data curvature so the inner least-squares stays balanced.
    """
    if cfg.solver.penalty is not None:
        return cfg.solver
    if cfg.name == "tv1d":
        penalty = 10.0 * lam
    else:
        penalty = max(normal_matrix_diag_mean(post), 1e-10)
    return replace(cfg.solver, penalty=penalty)


def sample_posterior(post: Posterior, cfg: ScenarioConfig, method: str,
                     initial: Optional[np.ndarray] = None) -> list[Chain]:
    burn = cfg.burn_in if cfg.burn_in is not None else max(1, cfg.n_samples // 10)
    chains = []
    for c in range(cfg.n_chains):
        if method == "gibbs":
            chains.append(sample_gibbs(post, cfg.n_samples, burn, cfg.thinning,
                                       seed=cfg.seed, chain_index=c,
                                       initial=initial))
        else:
            chains.append(sample_rwm(post, cfg.n_samples, burn, cfg.thinning,
                                     step=cfg.rwm_step, seed=cfg.seed,
                                     chain_index=c, initial=initial))
    return chains


def _rel_l2(u: np.ndarray, ref: np.ndarray) -> float:
    return float(np.linalg.norm(u - ref) / max(np.linalg.norm(ref), 1e-300))


def _merged_chain(chains: list[Chain]) -> Chain:
    return Chain(np.vstack([c.samples for c in chains]), seed=chains[0].seed,
                 burn_in=chains[0].burn_in, thinning=chains[0].thinning,
                 method=chains[0].method, grid=chains[0].grid)


def run_experiment(cfg: ScenarioConfig, verify: bool = False,
                   n_probes: int = 12) -> ExperimentRecord:
    """Build the scenario, generate data, estimate MAP and CM, compute metrics.

    With ``verify=True`` the full check suite runs on the merged chain:
    both optimality probes, the two expected-error inequalities, the
    MAP-centered energy identity, and the averaged CM optimality residual.
    """
    parts = build_scenario(cfg)
    if cfg.truth_factor > 1:
        # inverse-crime guard
        if parts.forward_fine is parts.recon_operator:
            raise AssertionError("data and reconstruction share an operator")
        if parts.truth_fine.grid == parts.recon_grid:
            raise AssertionError("data and reconstruction share a grid")
    data = generate_data(parts.truth_fine, parts.forward_fine, parts.restrict,
                         cfg.noise_fraction, cfg.seed, parts.data_grid)
    lam = resolve_lambda(cfg, parts, data)
    post = assemble_posterior(parts, data, lam)
    map_result = solve_map(post, scenario_solver_options(cfg, lam, post))
    chains = sample_posterior(post, cfg, parts.sampler_method)
    merged = _merged_chain(chains)
    cm = summarize(merged, post.prior)
    disc = two_chain_discrepancy(chains[0], chains[-1])
    truth = parts.truth_on_recon.values
    prior = post.prior
    metrics = {
        "lambda": lam,
        "sigma": data.sigma,
        "rel_l2_map": _rel_l2(map_result.estimate, truth),
        "rel_l2_cm": _rel_l2(cm.mean, truth),
        "sup_range_map": float(map_result.estimate.max()
                               - map_result.estimate.min()),
        "prior_energy_map": prior.energy(map_result.estimate),
        "prior_energy_cm": prior.energy(cm.mean),
        "map_iterations": map_result.iterations,
        "map_optimality_residual": map_result.residual_norm,
        "two_chain_sup": disc.sup,
        "two_chain_rel_l2": disc.rel_l2,
    }
    if chains[0].acceptance_rate is not None:
        metrics["acceptance_rate"] = chains[0].acceptance_rate
    reports = []
    if verify:
        reports = run_verification(post, map_result, merged, cm,
                                   n_probes=n_probes, seed=cfg.seed)
    return ExperimentRecord(cfg, parts, data, lam, post, map_result, chains,
                            cm, metrics, reports)


def run_verification(post: Posterior, map_result: MapResult, chain: Chain,
                     cm: ChainSummary, n_probes: int = 12,
                     seed: int = 0) -> list:
    """The full Bayes-cost check suite for one posterior."""
    prior = post.prior
    scale = max(float(np.abs(map_result.estimate).max()), 0.1)
    spec_brg = CostSpec.bregman(prior, post.operator, post.noise)
    spec_ls = CostSpec.ls(post.operator, post.noise)
    reports = [
        verify_bayes_optimality(chain, map_result.estimate, spec_brg,
                                n_probes=n_probes, probe_scale=scale,
                                seed=seed),
        verify_bayes_optimality(chain, cm.mean, spec_ls, n_probes=n_probes,
                                probe_scale=scale, seed=seed + 1),
        theorem_ineq_check(chain, map_result.estimate, cm.mean, None, prior),
        centered_energy_check(post, map_result, n_points=100, seed=seed),
        cm_optimality_check(post, chain),
    ]
    return reports


# ---------------------------------------------------------------------------
# the TV discretization-dilemma sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DilemmaLevel:
    n: int
    lam: float
    sup_range_map: float
    tv_map: float
    tv_cm: float
    rel_l2_map: float
    rel_l2_cm: float
    two_chain_sup: float
    two_chain_rel_l2: float


@dataclass(frozen=True)
class DilemmaReport:
    rule: str  # sqrt_n | fixed
    levels: list[DilemmaLevel]

    def to_dict(self):
        return {"check": "tv_dilemma", "rule": self.rule,
                "levels": [level.__dict__ for level in self.levels]}


def run_dilemma_sweep(cfg: ScenarioConfig, rule: str,
                      with_cm: bool = True) -> DilemmaReport:
    """MAP (and optionally CM) across the resolution sweep under one rule.

    ``rule='sqrt_n'`` scales lambda with c sqrt(n+1); ``rule='fixed'``
    keeps cfg.lam. Data is generated once on the fine grid and shared by
    every reconstruction level.
    """
    if cfg.name != "tv1d":
        raise ValueError("the dilemma sweep is a tv1d scenario")
    if rule not in ("sqrt_n", "fixed"):
        raise ValueError(f"unknown rule {rule!r}")
    base = build_tv1d(cfg, n=max(cfg.sweep))
    data = generate_data(base.truth_fine, base.forward_fine, base.restrict,
                         cfg.noise_fraction, cfg.seed, base.data_grid)
    levels = []
    tv_energy = make_tv1d_prior(1.0).energy
    for n in cfg.sweep:
        parts = build_tv1d(cfg, n=n)
        lam = (lambda_sqrt_rule(n, cfg.rule_constant) if rule == "sqrt_n"
               else float(cfg.lam))
        post = assemble_posterior(parts, data, lam)
        map_result = solve_map(post, scenario_solver_options(cfg, lam, post))
        truth = parts.truth_on_recon.values
        if with_cm:
            chains = sample_posterior(post, cfg, "gibbs",
                                      initial=map_result.estimate)
            cm_mean = _merged_chain(chains).samples.mean(axis=0)
            disc = two_chain_discrepancy(chains[0], chains[-1])
            tv_cm = tv_energy(cm_mean)
            rel_cm = _rel_l2(cm_mean, truth)
            d_sup, d_rel = disc.sup, disc.rel_l2
        else:
            tv_cm = float("nan")
            rel_cm = float("nan")
            d_sup = d_rel = float("nan")
        est = map_result.estimate
        levels.append(DilemmaLevel(
            n=n, lam=lam,
            sup_range_map=float(est.max() - est.min()),
            tv_map=tv_energy(est),
            tv_cm=tv_cm,
            rel_l2_map=_rel_l2(est, truth),
            rel_l2_cm=rel_cm,
            two_chain_sup=d_sup,
            two_chain_rel_l2=d_rel,
        ))
    return DilemmaReport(rule, levels)
