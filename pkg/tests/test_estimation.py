import numpy as np
import pytest
from hypothesis import given, strategies as st

from spinmetrology.estimation import (
    ExperimentConfig,
    MeasurementRecord,
    NonInvertibleError,
    PhaseModel,
    mle_estimate,
    moment_estimate,
    outcome_distribution,
    run_experiment,
    sample,
    trial_rng,
)
from spinmetrology.metrology import InterferometerSpec, Povm, cfi, qfi_interferometer, spin_squeezing
from spinmetrology.states import DensityMatrix, coherent_spin_state, dicke, random_density, twin_fock_probe
from spinmetrology.su2 import EulerAngles, SpinQuantum, rotation_from_euler, spin_operators

CSS = coherent_spin_state(10, np.pi / 2, 0.0)
MZ = InterferometerSpec.mach_zehnder(CSS.j)


def random_spec(spin, rng):
    rot = lambda: rotation_from_euler(spin, EulerAngles(*rng.uniform(-np.pi, np.pi, 3)))
    return InterferometerSpec(rot(), rot(), rot())


@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1), st.floats(-3, 3))
def test_distribution_matches_dense_evaluation(n, seed, theta):
    rng = np.random.default_rng(seed)
    rho = random_density(SpinQuantum(n), rng)
    spec = random_spec(rho.j, rng)
    u = spec.unitary(theta)
    direct = np.real(np.diag(u @ rho.rho @ u.conj().T))
    p = outcome_distribution(rho, spec, theta)
    np.testing.assert_allclose(p, direct, atol=1e-12)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    model = PhaseModel.build(rho, spec)
    np.testing.assert_allclose(model.probabilities(theta), direct, atol=1e-12)
    h = 1e-6
    fd = (model.probabilities(theta + h) - model.probabilities(theta - h)) / (2 * h)
    np.testing.assert_allclose(model.derivative(theta), fd, atol=1e-7)


def test_distribution_examples():
    pole = coherent_spin_state(6, 0.0, 0.0)
    mz = InterferometerSpec.mach_zehnder(pole.j)
    np.testing.assert_allclose(outcome_distribution(pole, mz, 0.0), [1, 0, 0, 0, 0, 0, 0], atol=1e-14)
    rho = random_density(SpinQuantum(5), np.random.default_rng(5))
    ops = spin_operators(rho.j)
    jz, jx = rho.expect(ops.jz).real, rho.expect(ops.jx).real
    for theta in (0.2, -0.8, 2.5):
        mean = outcome_distribution(rho, InterferometerSpec.mach_zehnder(rho.j), theta) @ rho.j.m_values()
        assert mean == pytest.approx(np.cos(theta) * jz + np.sin(theta) * jx, abs=1e-12)
    mixed = DensityMatrix.maximally_mixed(SpinQuantum(4))
    for theta in (0.0, 1.0, 2.0):
        np.testing.assert_allclose(outcome_distribution(mixed, MZ.on(mixed.j), theta), np.full(5, 0.2), atol=1e-14)


def test_sample_examples():
    rec = sample([0, 0, 1, 0], 50, 1)
    assert np.all(rec.outcomes == -0.5) and rec.shots == 50
    a, b = sample(np.full(5, 0.2), 1000, 99), sample(np.full(5, 0.2), 1000, 99)
    np.testing.assert_array_equal(a.outcomes, b.outcomes)
    with pytest.raises(ValueError):
        sample([0.5, 0.6], 10, 0)
    with pytest.raises(ValueError):
        sample([0.5, 0.5], 0, 0)


def test_sample_multinomial_bands():
    p = np.array([0.05, 0.2, 0.4, 0.25, 0.1])
    nu = 100_000
    rec = sample(p, nu, trial_rng(77, 0))
    sigma = np.sqrt(nu * p * (1 - p))
    assert np.all(np.abs(rec.counts - nu * p) < 4 * sigma)
    assert rec.counts.sum() == nu
    assert set(np.unique(rec.outcomes)) <= set(rec.j.m_values())


def test_trial_rng_substreams():
    a = trial_rng(5, 0).integers(0, 2 ** 62, 4)
    b = trial_rng(5, 0).integers(0, 2 ** 62, 4)
    c = trial_rng(5, 1).integers(0, 2 ** 62, 4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_mle_single_record_near_truth():
    theta_true = 0.05
    model = PhaseModel.build(CSS, MZ)
    nu = 10_000
    rec = sample(model.probabilities(theta_true), nu, trial_rng(11, 0), CSS.j)
    est = mle_estimate(rec, CSS, MZ, center=theta_true, model=model)
    se = 1 / np.sqrt(nu * model.fisher(theta_true))
    assert abs(est.theta - theta_true) < 5 * se
    assert not est.flat


def test_mle_flat_likelihood_flagged():
    # a Jz eigenstate under a pure z phase gives a theta-independent likelihood
    probe = dicke(4, 1)
    spec = InterferometerSpec.trivial(probe.j)
    rec = sample(outcome_distribution(probe, spec, 0.3), 20, 3, probe.j)
    est = mle_estimate(rec, probe, spec, search_interval=(-1.0, 2.0))
    assert est.flat
    assert est.theta == pytest.approx(0.5)


def test_mle_rejects_wrong_dimension():
    rec = sample([0.5, 0.5], 10, 0)
    with pytest.raises(ValueError):
        mle_estimate(rec, CSS, MZ)


def test_moment_estimate_prediction():
    rec = sample(outcome_distribution(CSS, MZ, 0.0), 10_000, 2)
    est = moment_estimate(rec, CSS, MZ)
    xi2 = spin_squeezing(CSS)
    assert est.predicted_variance == pytest.approx(xi2 / (10_000 * 10), rel=1e-12)
    # an exact mean recovers the exact phase
    model = PhaseModel.build(CSS, MZ)
    for theta in (-0.4, 0.0, 0.3):
        probs = model.probabilities(theta)
        counts = np.rint(probs * 1e12).astype(np.int64)
        rec = MeasurementRecord(CSS.j, np.array([]), counts)
        assert moment_estimate(rec, CSS, MZ).theta == pytest.approx(theta, abs=1e-6)


def test_moment_estimate_rejects_twin_fock():
    tf = dicke(6, 0)
    spec = InterferometerSpec.mach_zehnder(tf.j)
    rec = sample(outcome_distribution(tf, spec, 0.0), 100, 0, tf.j)
    with pytest.raises(NonInvertibleError):
        moment_estimate(rec, tf, spec)


def test_cfi_of_readout_below_qfi():
    model = PhaseModel.build(CSS, MZ)
    q = qfi_interferometer(CSS, MZ)
    povm = Povm.dicke_projective(CSS.j)
    for theta in (-1.0, -0.2, 0.0, 0.5, 1.3):
        assert model.fisher(theta) <= q + 1e-9
        d = 1e-4
        fd = cfi(povm, MZ.output(CSS, theta - d), MZ.output(CSS, theta + d), d, MZ.output(CSS, theta))
        assert model.fisher(theta) == pytest.approx(fd, rel=1e-6)


def _config(**kw):
    base = dict(probe=CSS, interferometer=MZ, true_theta=0.0, shots=2_000, trials=60, master_seed=4)
    base.update(kw)
    return ExperimentConfig(**base)


def test_run_experiment_deterministic():
    a = run_experiment(_config(trials=10))
    b = run_experiment(_config(trials=10))
    assert a == b
    assert a.rng["algorithm"] == "PCG64"
    c = run_experiment(_config(trials=10, master_seed=5))
    assert c.estimator_variance != a.estimator_variance


def test_single_trial_variance_undefined():
    s = run_experiment(_config(trials=1))
    assert s.estimator_variance is None and s.estimator_variance_se is None


def test_variance_scales_inverse_with_shots():
    # 2000 trials keep the relative error of the variance ratio near 4.5%, so 20% is ~4 sigma
    small = run_experiment(_config(shots=1_000, trials=2_000, master_seed=21))
    large = run_experiment(_config(shots=2_000, trials=2_000, master_seed=22))
    assert large.estimator_variance / small.estimator_variance == pytest.approx(0.5, rel=0.2)


def test_moment_variance_matches_error_propagation():
    s = run_experiment(_config(shots=10_000, trials=200, master_seed=31))
    assert s.moment_variance == pytest.approx(s.error_propagation_prediction, rel=0.15)
    assert s.moment_variance >= s.estimator_variance - 3 * s.estimator_variance_se
    assert s.estimator_variance >= s.crlb - 3 * s.estimator_variance_se


def test_twin_fock_experiment_has_no_moment_estimator():
    tf = twin_fock_probe(4)
    s = run_experiment(ExperimentConfig(tf, InterferometerSpec.trivial(tf.j), 0.3, 200, 5, 1))
    assert s.moment_variance is None and s.error_propagation_prediction is None
    assert s.qfi == pytest.approx(12.0)


def test_config_validation():
    with pytest.raises(ValueError):
        _config(shots=0)
    with pytest.raises(ValueError):
        _config(trials=0)
    with pytest.raises(ValueError):
        _config(master_seed=-1)
    with pytest.raises(ValueError):
        _config(master_seed=2 ** 64)
