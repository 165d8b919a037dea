import math

import numpy as np
import pytest

from momentclosure.errors import ConfigurationError
from momentclosure.gpc import (
    BasisKind,
    GpcBasis,
    build_source_matrix,
    collocation_project,
    eval_basis,
    mean_and_std,
)
from momentclosure.hermite import QuadKind, gauss_rule


@pytest.fixture(params=[BasisKind.LEGENDRE_UNIFORM, BasisKind.LAGUERRE_EXPONENTIAL])
def basis(request):
    return GpcBasis(request.param, K=4)


class TestEvalBasis:
    def test_orthonormality(self, basis):
        # high-order rule of the matching family as the integration oracle
        quad = basis.quadrature(24)
        w = basis.measure_weights(quad)
        phi = eval_basis(basis, quad.nodes)
        gram = (phi * w[:, None]).T @ phi
        assert np.max(np.abs(gram - np.eye(basis.K + 1))) < 1e-10

    def test_phi0_is_one(self, basis):
        z = 0.5
        assert eval_basis(basis, z)[0] == 1.0

    def test_legendre_phi1(self):
        basis = GpcBasis(BasisKind.LEGENDRE_UNIFORM, K=3)
        for z in (-0.7, 0.0, 0.31, 1.0):
            vals = eval_basis(basis, z)
            assert vals[1] == pytest.approx(math.sqrt(3) * z, abs=1e-14)

    def test_laguerre_at_zero(self):
        basis = GpcBasis(BasisKind.LAGUERRE_EXPONENTIAL, K=6)
        vals = eval_basis(basis, 0.0)
        assert vals == pytest.approx(np.ones(7), abs=1e-14)

    def test_laguerre_phi1_at_one(self):
        basis = GpcBasis(BasisKind.LAGUERRE_EXPONENTIAL, K=2)
        assert eval_basis(basis, 1.0)[1] == 0.0

    def test_out_of_support(self):
        with pytest.raises(ValueError):
            eval_basis(GpcBasis(BasisKind.LEGENDRE_UNIFORM), 1.2)
        with pytest.raises(ValueError):
            eval_basis(GpcBasis(BasisKind.LAGUERRE_EXPONENTIAL), -0.1)

    def test_order_beyond_truncation(self):
        with pytest.raises(ValueError):
            eval_basis(GpcBasis(BasisKind.LEGENDRE_UNIFORM, K=2), 0.0, up_to=3)


class TestSourceMatrix:
    def test_constant_sigma(self, basis):
        quad = basis.quadrature(16)
        sm = build_source_matrix(lambda z: 5.0 + 0.0 * z, basis, quad)
        assert np.max(np.abs(sm.S + 5.0 * np.eye(basis.K + 1))) < 1e-12

    def test_laguerre_k1(self):
        basis = GpcBasis(BasisKind.LAGUERRE_EXPONENTIAL, K=1)
        quad = basis.quadrature(16)
        sm = build_source_matrix(lambda z: 2.0 + z, basis, quad)
        assert sm.S == pytest.approx(np.array([[-3.0, 1.0], [1.0, -5.0]]), abs=1e-12)

    def test_laguerre_k4_tridiagonal(self):
        # z L_i = (2i+1) L_i - (i+1) L_{i+1} - i L_{i-1} gives diag -(2i+3), off-diag i+1
        basis = GpcBasis(BasisKind.LAGUERRE_EXPONENTIAL, K=4)
        quad = basis.quadrature(16)
        sm = build_source_matrix(lambda z: 2.0 + z, basis, quad)
        expect = np.diag([-3.0, -5.0, -7.0, -9.0, -11.0])
        for i in range(4):
            expect[i, i + 1] = expect[i + 1, i] = i + 1.0
        assert np.max(np.abs(sm.S - expect)) < 1e-12

    def test_symmetry_and_negative_definite(self, basis):
        quad = basis.quadrature(16)
        sm = build_source_matrix(lambda z: 2.0 + z - z * 0 + np.abs(z) * 0, basis, quad)
        assert np.max(np.abs(sm.S - sm.S.T)) < 1e-12
        # sigma >= 1 on both supports ([-1,1] and [0,inf)) -> negative definite
        assert np.max(np.linalg.eigvalsh(sm.S)) < 0

    def test_quadrature_refinement_stable(self, basis):
        s1 = build_source_matrix(lambda z: 1.0 + 0.5 * z + 0.1 * z**3, basis, basis.quadrature(16))
        s2 = build_source_matrix(lambda z: 1.0 + 0.5 * z + 0.1 * z**3, basis, basis.quadrature(20))
        assert np.max(np.abs(s1.S - s2.S)) < 1e-12

    def test_family_mismatch(self):
        basis = GpcBasis(BasisKind.LEGENDRE_UNIFORM, K=2)
        wrong = gauss_rule(QuadKind.GAUSS_LAGUERRE, 8)
        with pytest.raises(ConfigurationError):
            build_source_matrix(lambda z: 2.0 + z, basis, wrong)


class TestCollocation:
    def test_basis_function_projects_to_unit_vector(self, basis):
        quad = basis.quadrature(16)
        samples = eval_basis(basis, quad.nodes)[:, 2]
        coeffs = collocation_project(samples, basis, quad)
        expect = np.zeros(basis.K + 1)
        expect[2] = 1.0
        assert coeffs == pytest.approx(expect, abs=1e-10)

    def test_constant_sample(self, basis):
        quad = basis.quadrature(16)
        coeffs = collocation_project(np.full(16, 3.25), basis, quad)
        expect = np.zeros(basis.K + 1)
        expect[0] = 3.25
        assert coeffs == pytest.approx(expect, abs=1e-12)

    def test_one_plus_z_on_laguerre(self):
        # 1 + z = 2 phi_0 - phi_1 because phi_1 = 1 - z
        basis = GpcBasis(BasisKind.LAGUERRE_EXPONENTIAL, K=1)
        quad = basis.quadrature(16)
        coeffs = collocation_project(1.0 + quad.nodes, basis, quad)
        assert coeffs == pytest.approx([2.0, -1.0], abs=1e-12)

    def test_round_trip_polynomial(self, basis):
        # project-then-synthesize reproduces any degree-<=K polynomial sample
        rng = np.random.default_rng(11)
        quad = basis.quadrature(16)
        phi = eval_basis(basis, quad.nodes)
        c_true = rng.uniform(-2, 2, basis.K + 1)
        samples = phi @ c_true
        coeffs = collocation_project(samples, basis, quad)
        assert coeffs == pytest.approx(c_true, abs=1e-10)
        scale = max(1.0, np.max(np.abs(samples)))
        assert np.max(np.abs(phi @ coeffs - samples)) < 1e-10 * scale

    def test_batched_rows(self, basis):
        rng = np.random.default_rng(12)
        quad = basis.quadrature(16)
        samples = rng.normal(size=(5, 16))
        batched = collocation_project(samples, basis, quad)
        for j in range(5):
            assert batched[j] == pytest.approx(
                collocation_project(samples[j], basis, quad), abs=1e-14
            )

    def test_length_mismatch(self, basis):
        with pytest.raises(ValueError):
            collocation_project(np.zeros(15), basis, basis.quadrature(16))


class TestMeanStd:
    def test_deterministic_vector(self):
        mean, std = mean_and_std(np.array([5.0, 0, 0, 0, 0]))
        assert mean == 5.0 and std == 0.0

    def test_two_coeff(self):
        mean, std = mean_and_std(np.array([2.0, -1.0]))
        assert mean == 2.0 and std == 1.0

    def test_pythagorean(self):
        mean, std = mean_and_std(np.array([0.0, 3.0, 4.0]))
        assert mean == 0.0 and std == pytest.approx(5.0, abs=1e-14)

    def test_sign_flip_invariance(self):
        rng = np.random.default_rng(4)
        c = rng.normal(size=6)
        flipped = c.copy()
        flipped[1:] *= -1
        assert mean_and_std(c)[1] == pytest.approx(mean_and_std(flipped)[1], abs=1e-15)
        assert mean_and_std(c)[0] == mean_and_std(flipped)[0]

    def test_batched(self):
        c = np.arange(12.0).reshape(4, 3)
        mean, std = mean_and_std(c)
        assert mean.shape == (4,) and std.shape == (4,)
        assert mean == pytest.approx(c[:, 0])
