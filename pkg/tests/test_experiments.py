import numpy as np
import pytest

from bregbayes.experiments import (ScenarioConfig, build_ct2d, build_deblur2d,
                                   build_indicator_1d, build_scenario,
                                   build_shepp_logan, build_spots_phantom,
                                   build_tv1d, coefficient_sparsity,
                                   generate_data, lambda_sqrt_rule,
                                   run_dilemma_sweep, run_experiment,
                                   s_curve_select_lambda)
from bregbayes.grids import Signal, grid1d, grid2d
from bregbayes.map_solver import SolverOptions
from bregbayes.model import GaussianNoiseModel, Posterior
from bregbayes.operators import from_matrix, identity
from bregbayes.priors import make_l1_prior

RNG = np.random.default_rng(808)


# -- phantoms ------------------------------------------------------------------


def test_spots_phantom_empty_and_deterministic():
    g = grid2d(32, 32)
    zero = build_spots_phantom(g, 0, seed=1)
    assert np.all(zero.values == 0.0)
    a = build_spots_phantom(g, 5, seed=7)
    b = build_spots_phantom(g, 5, seed=7)
    np.testing.assert_array_equal(a.values, b.values)
    c = build_spots_phantom(g, 5, seed=8)
    assert not np.array_equal(a.values, c.values)


def test_spots_phantom_disk_membership():
    # every nonzero pixel belongs to exactly one disk, constant per disk
    g = grid2d(48, 48)
    sig = build_spots_phantom(g, 6, seed=3)
    img = sig.as_image()
    values = np.unique(img[img > 0])
    assert 1 <= values.size <= 6  # one constant level per disk
    assert np.all(sig.values >= 0.0)
    # overlap-free: morphological check via connected component count
    from scipy.ndimage import label

    labels, n_comp = label(img > 0)
    assert n_comp == 6
    for k in range(1, n_comp + 1):
        region = img[labels == k]
        assert np.all(region == region[0])


def test_spots_phantom_failure_when_too_crowded():
    with pytest.raises(RuntimeError):
        build_spots_phantom(grid2d(16, 16), 200, seed=0,
                            radius_range=(0.2, 0.3), max_retries=50)


def test_indicator_small_grid():
    np.testing.assert_array_equal(build_indicator_1d(grid1d(3)).values,
                                  [0.0, 1.0, 0.0])


def test_indicator_tv_and_mean():
    from bregbayes.priors import make_tv1d_prior

    tv = make_tv1d_prior(1.0)
    for n in (9, 33, 201):
        sig = build_indicator_1d(grid1d(n))
        assert tv.energy(sig.values) == pytest.approx(2.0)
    # Riemann sum converges to the interval length 1/3
    mean_fine = build_indicator_1d(grid1d(3001)).values.mean()
    assert mean_fine == pytest.approx(1.0 / 3.0, abs=1e-3)


def test_shepp_logan_range_and_corners():
    sig = build_shepp_logan(grid2d(64, 64))
    assert sig.values.min() >= 0.0
    assert sig.values.max() <= 1.0
    img = sig.as_image()
    assert img[0, 0] == 0.0 and img[0, -1] == 0.0
    assert img[-1, 0] == 0.0 and img[-1, -1] == 0.0
    # skull ring present: maximum is 1 (clamped outer ellipse)
    assert sig.values.max() == pytest.approx(1.0)


def test_shepp_logan_support_mirror_symmetric():
    # the two outer ellipses are centered and unrotated, so the support is
    # mirror symmetric up to pixel quantization; interior features are NOT
    # (the standard table's ventricles differ by design)
    sig = build_shepp_logan(grid2d(128, 128))
    img = sig.as_image()
    support = img > 0.0
    mismatch = np.mean(support != support[:, ::-1])
    assert mismatch < 0.01
    interior_mismatch = np.mean(np.abs(img - img[:, ::-1]) > 1e-12)
    assert interior_mismatch < 0.08


# -- data generation -----------------------------------------------------------


def test_generate_data_deterministic_and_noise_scale():
    g = grid1d(16)
    truth = Signal(g, np.abs(RNG.standard_normal(16)) + 0.5)
    op = identity(16)
    a = generate_data(truth, op, op, 0.1, seed=5, data_grid=g)
    b = generate_data(truth, op, op, 0.1, seed=5, data_grid=g)
    np.testing.assert_array_equal(a.data.values, b.data.values)
    assert a.sigma == pytest.approx(0.1 * np.abs(truth.values).max())
    # noise_fraction -> 0 recovers the noiseless projection
    tiny = generate_data(truth, op, op, 1e-12, seed=5, data_grid=g)
    np.testing.assert_allclose(tiny.data.values, truth.values, atol=1e-10)


def test_generate_data_empirical_sigma():
    g = grid1d(64)
    truth = Signal(g, np.ones(64))
    op = identity(64)
    draws = []
    for seed in range(100):
        out = generate_data(truth, op, op, 0.2, seed=seed, data_grid=g)
        draws.append(out.data.values - out.noiseless.values)
    emp = np.concatenate(draws).std()
    assert emp == pytest.approx(0.2, rel=0.05)


def test_generate_data_rejects_zero_forward():
    g = grid1d(4)
    truth = Signal(g, np.zeros(4))
    op = identity(4)
    with pytest.raises(ValueError):
        generate_data(truth, op, op, 0.1, seed=0, data_grid=g)


# -- lambda rules ----------------------------------------------------------------


def test_lambda_sqrt_rule_values():
    assert lambda_sqrt_rule(3, 1.0) == pytest.approx(2.0)
    assert lambda_sqrt_rule(63, 1.0) == pytest.approx(8.0)
    assert lambda_sqrt_rule(63, 2.0) == pytest.approx(16.0)
    with pytest.raises(ValueError):
        lambda_sqrt_rule(1, 1.0)
    with pytest.raises(ValueError):
        lambda_sqrt_rule(10, 0.0)


def test_s_curve_scalar_soft_threshold():
    # scalar problem: lambda above |f| zeroes the estimate
    f = 2.0

    def factory(lam):
        return Posterior(identity(1), Signal(grid1d(1), [f]),
                         GaussianNoiseModel.from_sigma(1.0, 1),
                         make_l1_prior(lam))

    from bregbayes.map_solver import solve_map

    res = solve_map(factory(3.0))
    assert coefficient_sparsity(factory(3.0).prior, res.estimate) == 0.0
    res = solve_map(factory(0.5))
    assert coefficient_sparsity(factory(0.5).prior, res.estimate) == 1.0


def test_s_curve_bisection_matches_target():
    # 8-dim problem with a 3-sparse truth: ask for sparsity 3/8
    rng = np.random.default_rng(4242)
    n = 8
    k = np.eye(n)
    truth = np.zeros(n)
    truth[:3] = (3.0, -2.0, 1.5)
    f = truth + 0.05 * rng.standard_normal(n)

    def factory(lam):
        return Posterior(from_matrix(k), Signal(grid1d(n), f),
                         GaussianNoiseModel.from_sigma(1.0, n),
                         make_l1_prior(lam))

    lam = s_curve_select_lambda(factory, 3.0 / 8.0, (1e-3, 10.0), tol=1e-6)
    from bregbayes.experiments import map_sparsity
    from bregbayes.map_solver import solve_map

    post = factory(lam)
    res = solve_map(post)
    assert map_sparsity(post, res) == pytest.approx(3.0 / 8.0)


def test_s_curve_rejects_bad_bracket():
    def factory(lam):
        return Posterior(identity(1), Signal(grid1d(1), [2.0]),
                         GaussianNoiseModel.from_sigma(1.0, 1),
                         make_l1_prior(lam))

    with pytest.raises(ValueError):
        # both ends above |f|: sparsity 0 at both, target 0.9 not straddled
        s_curve_select_lambda(factory, 0.9, (3.0, 10.0))


# -- scenario assembly ------------------------------------------------------------


def test_scenario_builders_shapes():
    cfg = ScenarioConfig(name="deblur2d", recon_shape=(16, 16), truth_factor=2,
                         lam=1.0, spots=2, kernel_sigma=0.05, seed=1)
    parts = build_deblur2d(cfg)
    assert parts.recon_grid.shape == (16, 16)
    assert parts.truth_fine.grid.shape == (32, 32)
    assert parts.recon_operator.in_dim == 256

    cfg = ScenarioConfig(name="tv1d", recon_shape=(15,), truth_factor=2,
                         lam=1.0, data_size=5, sweep=(15, 31), seed=1)
    parts = build_tv1d(cfg)
    assert parts.data_grid.size == 5
    assert parts.forward_fine.in_dim == 2 * 31

    cfg = ScenarioConfig(name="ct2d", recon_shape=(16, 16), truth_factor=2,
                         lam=1.0, angles=5, bins=23, seed=1)
    parts = build_ct2d(cfg)
    assert parts.data_grid.shape == (5, 23)
    assert parts.sampler_method == "rwm"


def test_inverse_crime_guard():
    cfg = ScenarioConfig(name="deblur2d", recon_shape=(16, 16), truth_factor=2,
                         lam=1.0, spots=2, kernel_sigma=0.05, seed=1)
    parts = build_scenario(cfg)
    assert parts.forward_fine is not parts.recon_operator
    assert parts.truth_fine.grid != parts.recon_grid


def test_run_experiment_small_deblur():
    cfg = ScenarioConfig(name="deblur2d", recon_shape=(16, 16), truth_factor=2,
                         noise_fraction=0.05, lam=2.0, spots=2,
                         kernel_sigma=0.05, seed=2, n_samples=60, n_chains=2,
                         solver=SolverOptions(max_iters=400,
                                              tol_rel_change=1e-8,
                                              tol_residual=1e-3))
    record = run_experiment(cfg, verify=True, n_probes=6)
    assert record.map_result.estimate.shape == (256,)
    assert record.cm.mean.shape == (256,)
    assert 0 < record.metrics["rel_l2_map"] < 5
    assert record.metrics["two_chain_sup"] >= 0
    assert len(record.reports) == 5
    # bit reproducibility of the whole pipeline
    again = run_experiment(cfg)
    np.testing.assert_array_equal(record.map_result.estimate,
                                  again.map_result.estimate)
    np.testing.assert_array_equal(record.cm.mean, again.cm.mean)


def test_run_experiment_small_ct_rwm():
    cfg = ScenarioConfig(name="ct2d", recon_shape=(16, 16), truth_factor=2,
                         noise_fraction=0.02, lam=0.5, lambda_rule="fixed",
                         angles=7, bins=23, seed=4, n_samples=80, n_chains=2,
                         solver=SolverOptions(max_iters=400,
                                              tol_rel_change=1e-8,
                                              tol_residual=1e-3))
    record = run_experiment(cfg)
    assert record.chains[0].method == "rwm"
    assert 0.01 < record.metrics["acceptance_rate"] < 0.99
    assert record.metrics["rel_l2_map"] < 2.0


def test_run_dilemma_sweep_small():
    cfg = ScenarioConfig(name="tv1d", recon_shape=(15,), truth_factor=4,
                         noise_fraction=0.1, lam=2.0, rule_constant=0.25,
                         data_size=8, sweep=(15, 31), seed=6, n_samples=80,
                         n_chains=2,
                         solver=SolverOptions(max_iters=800,
                                              tol_rel_change=1e-9,
                                              tol_residual=1e-3))
    rep = run_dilemma_sweep(cfg, "sqrt_n")
    assert rep.rule == "sqrt_n"
    assert [lv.n for lv in rep.levels] == [15, 31]
    assert rep.levels[0].lam == pytest.approx(0.25 * np.sqrt(16))
    rep2 = run_dilemma_sweep(cfg, "fixed")
    assert all(lv.lam == 2.0 for lv in rep2.levels)
    assert all(np.isfinite(lv.tv_cm) for lv in rep2.levels)
