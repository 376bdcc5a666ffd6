import numpy as np
import pytest
from scipy.stats import unitary_group

from conftest import GAMMA_REF, K_REF, NBAR_REF
from src.gds.model import decoherence_matrix, noise_from_matrices
from src.symplectic.core import sympmat
from src.thermal.analysis import ThermalSpec, commuting_heff, spectra_relation, thermal_covariance
from src.thermal.qdbc import (
    QdbcSpec,
    build_lindblad_vectors,
    build_noise,
    default_sample_times,
    diffusive_noise,
    eigenvectors,
    limit_regimes,
    mix_lindblad,
    planck_distribution,
    planck_factor,
    qome_coefficients,
    random_qdbc_spec,
    scale_gain,
    verify_congruence,
    verify_eigenoperators,
)
from src.utils.errors import RegimeError, ShapeError

J1 = sympmat(1)


def _relative(X, Y):
    return np.abs(X - Y).max() / max(1.0, np.abs(Y).max())


def test_reference_noise(reference_spec):
    noise = build_noise(reference_spec)
    np.testing.assert_allclose(noise.D, 0.21639534 * np.eye(2), atol=1e-8)
    np.testing.assert_allclose(noise.C, 0.1 * J1.T, atol=1e-14)
    np.testing.assert_allclose(noise.Gamma, noise.D + 1j * noise.C, atol=1e-15)


def test_reference_noise_scales_with_hbar():
    hbar = 0.5
    spec = QdbcSpec(thermal=ThermalSpec(B=np.eye(2), beta=1.0 / hbar, hbar=hbar), gamma=np.array([GAMMA_REF]))
    noise = build_noise(spec)
    np.testing.assert_allclose(noise.D, hbar ** 2 * GAMMA_REF * K_REF * np.eye(2), atol=1e-12)
    np.testing.assert_allclose(noise.C, 0.5 * hbar * GAMMA_REF * J1.T, atol=1e-12)


def test_reference_eigenvector_phase(reference_spec):
    lbar = eigenvectors(reference_spec)[0]
    np.testing.assert_allclose(np.abs(lbar), [1 / np.sqrt(2.0)] * 2, atol=1e-12)
    np.testing.assert_allclose(lbar[1], 1j * lbar[0], atol=1e-12)


def test_reference_lindblad_moduli(reference_spec):
    lset = build_lindblad_vectors(reference_spec)
    np.testing.assert_allclose(lset.s2, [GAMMA_REF * (NBAR_REF + 1.0)], rtol=1e-12)
    np.testing.assert_allclose(lset.r2, [GAMMA_REF * NBAR_REF], rtol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(lset.loss[0]) ** 2, lset.s2[0], rtol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(lset.gain[0]) ** 2, lset.r2[0], rtol=1e-12)


def test_lindblad_vectors_reproduce_noise(random_specs):
    for spec in random_specs:
        noise = build_noise(spec)
        rebuilt = decoherence_matrix(build_lindblad_vectors(spec).vectors, hbar=spec.hbar)
        assert _relative(rebuilt.D, noise.D) <= 1e-10
        assert _relative(rebuilt.C, noise.C) <= 1e-10


def test_unitary_mixing_keeps_decoherence(rng):
    spec = random_qdbc_spec(2, rng)
    lset = build_lindblad_vectors(spec)
    W = unitary_group.rvs(4, random_state=12)
    mixed = mix_lindblad(lset, W)
    a = decoherence_matrix(lset.vectors)
    b = decoherence_matrix(mixed.vectors)
    np.testing.assert_allclose(b.Gamma, a.Gamma, atol=1e-12)
    np.testing.assert_allclose(b.D, a.D, atol=1e-12)


def test_mixing_rejects_non_unitary(reference_spec):
    lset = build_lindblad_vectors(reference_spec)
    with pytest.raises(ShapeError):
        mix_lindblad(lset, 2.0 * np.eye(2))
    with pytest.raises(ShapeError):
        mix_lindblad(lset, np.eye(3))


def test_congruence_holds_for_qdbc_noise(random_specs):
    for spec in random_specs:
        report = verify_congruence(build_noise(spec), spec.thermal)
        assert len(report.times) == 4
        assert report.max_defect <= 1e-9


def test_congruence_detects_axis_mixing(reference_spec):
    noise = noise_from_matrices(np.diag([1.0, 2.0]), np.zeros((2, 2)))
    report = verify_congruence(noise, reference_spec.thermal)
    assert report.defect_D > 0.1


def test_congruence_at_time_zero_is_exact(reference_spec):
    noise = noise_from_matrices(np.diag([1.0, 2.0]), np.zeros((2, 2)))
    report = verify_congruence(noise, reference_spec.thermal, times=[0.0])
    assert report.max_defect == 0.0


def test_default_sample_times_include_a_period():
    assert default_sample_times(np.array([2.0, 3.0]))[-1] == pytest.approx(np.pi)


def test_eigenoperators_of_qdbc_vectors(random_specs):
    for spec in random_specs:
        report = verify_eigenoperators(build_lindblad_vectors(spec), spec.thermal)
        assert report.max_residual <= 1e-10
        assert report.ratio_defect <= 1e-12
        assert report.passed


def test_lindblad_vectors_are_eigenoperators_of_commuting_heff(rng):
    spec = random_qdbc_spec(2, rng)
    vecs = build_lindblad_vectors(spec).vectors
    J = sympmat(2)
    for _ in range(5):
        lam = rng.uniform(-2.0, 2.0, size=2)
        JBp = J @ commuting_heff(spec.thermal, lam)
        for j in range(2):
            loss, gain = vecs[j], vecs[2 + j]
            scale = np.linalg.norm(loss) * max(1.0, np.abs(JBp).max())
            assert np.abs(JBp @ loss - 1j * lam[j] * loss).max() <= 1e-9 * scale
            assert np.abs(JBp @ gain + 1j * lam[j] * gain).max() <= 1e-9 * scale


def test_eigenoperators_detect_perturbation(reference_spec):
    lset = build_lindblad_vectors(reference_spec)
    vectors = lset.vectors.copy()
    vectors[0] = vectors[0] + 0.1 * vectors[0].conj()
    broken = type(lset)(vectors=vectors, w=lset.w, s2=lset.s2, r2=lset.r2)
    report = verify_eigenoperators(broken, reference_spec.thermal)
    assert report.loss_residuals[0] > 1e-2
    assert not report.passed


def test_eigenoperators_detect_wrong_temperature(reference_spec):
    lset = build_lindblad_vectors(reference_spec)
    colder = ThermalSpec(B=np.eye(2), beta=2.0)
    report = verify_eigenoperators(lset, colder)
    assert report.max_residual <= 1e-10
    assert report.ratio_defect == pytest.approx(np.e - 1.0, rel=1e-10)
    assert not report.passed


def test_scaled_gain_breaks_ratio(reference_spec):
    lset = scale_gain(build_lindblad_vectors(reference_spec), 1.1)
    report = verify_eigenoperators(lset, reference_spec.thermal)
    assert report.ratio_defect == pytest.approx(0.1, rel=1e-10)


def test_eigenoperators_reject_wrong_count(reference_spec):
    lset = build_lindblad_vectors(reference_spec)
    short = type(lset)(vectors=lset.vectors[:1], w=lset.w, s2=lset.s2, r2=lset.r2)
    with pytest.raises(ShapeError):
        verify_eigenoperators(short, reference_spec.thermal)


def test_qome_reference(reference_spec):
    coeffs = qome_coefficients(reference_spec)
    np.testing.assert_allclose(coeffs.nbar, [0.5819767], atol=1e-7)
    np.testing.assert_allclose(coeffs.loss_rate, [GAMMA_REF * (NBAR_REF + 1.0)], rtol=1e-12)
    np.testing.assert_allclose(coeffs.gain_rate / coeffs.loss_rate, [np.exp(-1.0)], rtol=1e-12)


def test_qome_zero_temperature():
    spec = QdbcSpec(thermal=ThermalSpec(B=np.eye(2), beta=60.0), gamma=np.array([GAMMA_REF]))
    coeffs = qome_coefficients(spec)
    assert coeffs.nbar[0] < 1e-25
    assert coeffs.loss_rate[0] == pytest.approx(GAMMA_REF)
    assert coeffs.gain_rate[0] == pytest.approx(0.0, abs=1e-25)


def test_qome_rates_carry_no_hbar_factor():
    spec = QdbcSpec(thermal=ThermalSpec(B=np.eye(2), beta=1.0, hbar=0.5), gamma=np.array([GAMMA_REF]))
    coeffs = qome_coefficients(spec)
    nbar = 1.0 / np.expm1(0.5)
    np.testing.assert_allclose(coeffs.nbar, [nbar], rtol=1e-12)
    np.testing.assert_allclose(coeffs.loss_rate, coeffs.gamma * (nbar + 1.0), rtol=1e-12)
    np.testing.assert_allclose(coeffs.gain_rate, coeffs.gamma * nbar, rtol=1e-12)
    np.testing.assert_allclose(coeffs.gain_rate / coeffs.loss_rate, [np.exp(-0.5)], rtol=1e-12)


def test_planck_distribution():
    p = planck_distribution(NBAR_REF, 200)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(p[1:] / p[:-1], NBAR_REF / (NBAR_REF + 1.0), rtol=1e-12)
    np.testing.assert_array_equal(planck_distribution(0.0, 3), [1.0, 0.0, 0.0])
    assert planck_factor(1.0, 1.0) == pytest.approx(NBAR_REF, rel=1e-14)


def test_high_temperature_limit():
    spec = QdbcSpec(thermal=ThermalSpec(B=np.eye(2), beta=1e-3), gamma=np.array([GAMMA_REF]))
    lim = limit_regimes(spec, "high")
    bound = 1.1 * (1e-3) ** 2 / 12.0
    assert lim.diagnostics["V_rel_error"] <= bound
    assert lim.diagnostics["D_rel_error"] <= bound
    np.testing.assert_allclose(lim.V, 1e3 * np.eye(2), rtol=1e-12)


def test_low_temperature_limit():
    spec = QdbcSpec(thermal=ThermalSpec(B=np.eye(2), beta=30.0), gamma=np.array([GAMMA_REF]))
    lim = limit_regimes(spec, "low")
    assert lim.diagnostics["k_minus_half"] <= 1.01 * np.exp(-30.0)
    assert lim.diagnostics["V_error"] <= 1e-12
    assert lim.diagnostics["D_rel_error"] <= 1e-12
    np.testing.assert_allclose(lim.D, 0.5 * GAMMA_REF * np.eye(2), atol=1e-14)


def test_limit_warns_outside_regime(caplog, reference_spec):
    limit_regimes(reference_spec, "high")
    assert "high-temperature limit used" in caplog.text
    caplog.clear()
    limit_regimes(reference_spec, "low", warn=False)
    assert caplog.text == ""


def test_diffusive_limit(reference_spec):
    spec = QdbcSpec(thermal=reference_spec.thermal, gamma=reference_spec.gamma, cbar=np.array([0.5]))
    lim = limit_regimes(spec, "diffusive")
    assert lim.V is None
    assert not lim.C.any()
    assert lim.diagnostics["spectral_abscissa"] >= -1e-12
    np.testing.assert_allclose(lim.D, 0.5 * np.eye(2), atol=1e-14)
    noise = diffusive_noise(spec)
    np.testing.assert_allclose(noise.Gamma.real, noise.D)


def test_diffusive_limit_requires_constants(reference_spec):
    with pytest.raises(RegimeError):
        limit_regimes(reference_spec, "diffusive")


def test_unknown_regime(reference_spec):
    with pytest.raises(RegimeError):
        limit_regimes(reference_spec, "tepid")


def test_equilibrium_independent_of_couplings(rng):
    spec = random_qdbc_spec(2, rng)
    other = QdbcSpec(thermal=spec.thermal, gamma=spec.gamma * 3.0 + 0.1)
    np.testing.assert_allclose(thermal_covariance(other.thermal).V_th, thermal_covariance(spec.thermal).V_th, atol=1e-12)
    assert np.abs(build_noise(other).D - build_noise(spec).D).max() > 1e-3
    assert np.abs(build_noise(other).C - build_noise(spec).C).max() > 1e-3


def test_diffusion_to_dissipation_ratio(random_specs):
    for spec in random_specs:
        rel = spectra_relation(build_noise(spec), spec.thermal)
        k = thermal_covariance(spec.thermal).k
        np.testing.assert_allclose(rel.d, 2.0 * rel.jc * k, rtol=1e-10)


def test_temperature_dependent_couplings():
    table = {0.5: [0.1], 2.0: [0.4]}
    spec = QdbcSpec(thermal=ThermalSpec(B=np.eye(2), beta=1.0), gamma=np.array([1.0]), coupling_table=table)
    np.testing.assert_allclose(spec.couplings(), [0.2])
    hotter = spec.at_beta(0.5)
    np.testing.assert_allclose(hotter.couplings(), [0.1])
    np.testing.assert_allclose(build_noise(spec).C, 0.1 * J1.T, atol=1e-14)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"gamma": np.array([0.2, 0.3])},
        {"gamma": np.array([0.0])},
        {"gamma": np.array([0.2]), "cbar": np.array([-1.0])},
        {"gamma": np.array([0.2]), "coupling_table": {1.0: [0.0]}},
    ],
)
def test_qdbc_spec_validation(kwargs):
    with pytest.raises(ShapeError):
        QdbcSpec(thermal=ThermalSpec(B=np.eye(2), beta=1.0), **kwargs)


def test_random_spec_is_reproducible():
    a = random_qdbc_spec(2, np.random.default_rng(3))
    b = random_qdbc_spec(2, np.random.default_rng(3))
    np.testing.assert_array_equal(a.thermal.B, b.thermal.B)
    assert a.beta == b.beta
