import numpy as np
import pytest

from wigner_match import NumericError, ParameterError
from wigner_match.errors import SubspaceError
from wigner_match.spectral import (
    EtaSet,
    SpectralBands,
    band_select,
    constrained_subspace,
    nearest_center_select,
    select_eta,
    sym_eig,
)

from oracles import charpoly_eigenvalues


def projector(basis):
    return basis @ basis.T


class TestSymEig:
    def test_identity(self):
        vals, vecs = sym_eig(np.eye(3))
        assert np.allclose(vals, 1.0)
        assert np.allclose(vecs @ vecs.T, np.eye(3))

    def test_diagonal_with_signs(self):
        vals, vecs = sym_eig(np.diag([2.0, -1.0]))
        assert np.allclose(vals, [2.0, -1.0])
        # axis eigenvectors up to sign
        assert np.allclose(np.abs(vecs), np.eye(2))

    def test_random_reconstruction_and_orthonormality(self):
        rng = np.random.default_rng(0)
        s = rng.standard_normal((20, 20))
        s = (s + s.T) / 2
        vals, vecs = sym_eig(s)
        assert np.linalg.norm(s - (vecs * vals) @ vecs.T) <= 1e-8 * max(1.0, np.linalg.norm(s))
        assert np.abs(vecs.T @ vecs - np.eye(20)).max() <= 1e-10
        assert np.all(np.diff(vals) <= 0)

    def test_matches_charpoly_roots_at_d4(self):
        rng = np.random.default_rng(7)
        s = rng.standard_normal((4, 4))
        s = (s + s.T) / 2
        vals, _ = sym_eig(s)
        assert np.allclose(vals, charpoly_eigenvalues(s), atol=1e-8)

    def test_nonfinite_rejected(self):
        bad = np.eye(3)
        bad[0, 1] = np.nan
        with pytest.raises(NumericError):
            sym_eig(bad)


class TestBandSelect:
    def test_identity_band(self):
        vals, vecs = sym_eig(np.eye(12))
        basis, found = band_select(vals, vecs, 0.9, 1.1, max_count=9)
        assert found == 12
        assert basis.shape == (12, 9)
        # selected columns still span eigendirections of eigenvalue 1
        assert np.allclose(np.eye(12) @ basis, basis)

    def test_truncation_keeps_nearest_center(self):
        vals, vecs = sym_eig(np.diag([1.0, 1.05, 5.0]))
        basis, found = band_select(vals, vecs, 0.9, 1.1, max_count=2)
        assert found == 2
        span = projector(basis)
        expected = np.zeros((3, 3))
        expected[0, 0] = expected[1, 1] = 1.0
        assert np.allclose(span, expected)

    def test_empty_band(self):
        vals, vecs = sym_eig(np.diag([5.0, 6.0]))
        basis, found = band_select(vals, vecs, 0.9, 1.1, max_count=2)
        assert found == 0 and basis.shape == (2, 0)

    def test_nearest_center_fallback(self):
        vals, vecs = sym_eig(np.diag([24.0] + [0.0] * 5))
        basis = nearest_center_select(vals, vecs, 1.0, 4)
        assert basis.shape == (6, 4)
        # the extreme eigenvalue is farther from the center than the zeros
        assert np.allclose(np.diag(projector(basis))[0], 0.0, atol=1e-12)

    def test_bad_band(self):
        vals, vecs = sym_eig(np.eye(2))
        with pytest.raises(ParameterError):
            band_select(vals, vecs, 1.1, 0.9, 1)


class TestConstrainedSubspace:
    def test_no_constraints_full_space(self):
        eye = np.eye(5)
        basis = constrained_subspace(eye, eye, [])
        assert basis.shape == (5, 5)
        assert np.allclose(projector(basis), np.eye(5))

    def test_two_plane_intersection(self):
        e = np.eye(4)
        span_a = e[:, [0, 1]]
        span_b = e[:, [1, 2]]
        basis = constrained_subspace(span_a, span_b, [])
        assert basis.shape == (4, 1)
        expected = np.zeros((4, 4))
        expected[1, 1] = 1.0
        assert np.allclose(projector(basis), expected)

    def test_dimension_matches_rank_oracle(self):
        rng = np.random.default_rng(3)
        k = 24
        eye = np.eye(k)
        constraints = [rng.standard_normal((k, 4)) for _ in range(2)]
        basis = constrained_subspace(eye, eye, constraints)
        stacked = np.hstack(constraints).T
        expected_dim = k - np.linalg.matrix_rank(stacked)
        assert basis.shape[1] == expected_dim
        for m in constraints:
            assert np.abs(basis.T @ m).max() <= 1e-10

    def test_collapse_names_family(self):
        e = np.eye(3)
        with pytest.raises(SubspaceError) as err:
            constrained_subspace(e[:, [0]], e[:, [1]], [])
        assert err.value.family == "span-b"

    def test_constraint_collapse(self):
        eye = np.eye(2)
        with pytest.raises(SubspaceError) as err:
            constrained_subspace(eye, eye, [np.eye(2)])
        assert err.value.family == "constraint-0"


class TestSelectEta:
    def setup_forms(self, k, eps0):
        phi = np.eye(k)
        psi = eps0 * np.eye(k)
        return phi, psi

    def test_level0_defaults(self):
        # identity proxies: any unit vector works and the cross form gives
        # exactly eps0 because the rescale forces a unit Euclidean norm
        k, eps0 = 12, 0.0913
        phi, psi = self.setup_forms(k, eps0)
        rng = np.random.default_rng(5)
        es = select_eta(np.eye(k)[:, :9], phi, psi, psi, phi, eps0, count=1, rng=rng)
        assert es.count == 1
        assert es.gram_phi[0, 0] == pytest.approx(1.0, abs=1e-12)
        assert es.psi_quad[0] == pytest.approx(eps0, abs=1e-12)
        assert es.flags == ()

    def test_single_direction_any_nonzero(self):
        phi, psi = self.setup_forms(4, 0.1)
        es = select_eta(np.eye(4), phi, psi, psi, phi, 0.1, count=1, rng=np.random.default_rng(0))
        assert abs(float(es.etas[0] @ phi @ es.etas[0]) - 1.0) <= 1e-12

    def test_gram_residuals_against_direct_products(self):
        rng = np.random.default_rng(11)
        k = 24
        base = rng.standard_normal((k, k)) * 0.01
        phi = np.eye(k) + (base + base.T) / 2
        pert = rng.standard_normal((k, k)) * 0.001
        psi = 0.05 * np.eye(k) + (pert + pert.T) / 2
        mg = phi + rng.standard_normal((k, k)) * 0.001
        mg = (mg + mg.T) / 2
        mp = phi + rng.standard_normal((k, k)) * 0.001
        mp = (mp + mp.T) / 2
        vals, vecs = sym_eig(phi)
        es = select_eta(vecs[:, :18], mg, mp, psi, phi, 0.05, count=2, rng=rng)
        eta1, eta2 = es.etas
        assert abs(float(eta1 @ mg @ eta2)) <= 1e-8
        assert abs(float(eta1 @ mp @ eta2)) <= 1e-8
        assert abs(float(eta1 @ psi @ eta2)) <= 1e-8
        assert float(eta2 @ phi @ eta2) == pytest.approx(1.0, abs=1e-8)

    def test_deterministic_given_seed(self):
        phi, psi = self.setup_forms(12, 0.1)
        args = (np.eye(12)[:, :9], phi, psi, psi, phi, 0.1)
        a = select_eta(*args, count=3, rng=np.random.default_rng(99))
        b = select_eta(*args, count=3, rng=np.random.default_rng(99))
        assert np.array_equal(a.etas, b.etas)
        assert a.flags == b.flags

    def test_count_beyond_dimension_rejected(self):
        phi, psi = self.setup_forms(6, 0.1)
        with pytest.raises(ParameterError):
            select_eta(np.eye(6)[:, :2], phi, psi, psi, phi, 0.1, count=3, rng=np.random.default_rng(0))

    def test_psi_band_flagging(self):
        # a cross form far above the window is recorded, not fatal
        k = 8
        phi = np.eye(k)
        psi = 0.5 * np.eye(k)
        es = select_eta(np.eye(k), phi, psi, psi, phi, 0.01, count=1, rng=np.random.default_rng(1))
        assert any(f.startswith("eta-psi-band") for f in es.flags)


class TestBands:
    def test_defaults_valid(self):
        bands = SpectralBands()
        assert bands.phi_lo < bands.phi_hi
        assert bands.target_fraction == 0.75

    def test_invalid_band_rejected(self):
        with pytest.raises(ParameterError):
            SpectralBands(phi_lo=1.2, phi_hi=1.0)
