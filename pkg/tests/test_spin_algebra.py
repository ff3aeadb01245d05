"""
Tests for the spin algebra.

Verifies:
- Spin matrices satisfy the commutation relations and the Casimir identity
- Tensor embedding order, multiplicativity and error handling
- Commutators, operator norms and global SU(2) rotations
- Site sets: bonds, box coordinates and staggered signs
"""

import numpy as np
import pytest

from app.core.spin_algebra import (
    DimensionMismatchError,
    DuplicateSiteError,
    InvalidAxisError,
    LocalOperator,
    ManyBodyOperator,
    SiteSet,
    SpinAlgebraError,
    SpinMagnitude,
    basis_digits,
    commutator,
    embed,
    identity,
    operator_norm,
    spin_component,
    spin_matrices,
    su2_rotate,
    sz_diagonals,
    zero_operator,
)

pytestmark = [pytest.mark.unit, pytest.mark.algebra]


class TestSpinMagnitude:
    """Tests for SpinMagnitude."""

    def test_half_integer_from_spin(self):
        spin = SpinMagnitude.from_spin(1.5)
        assert spin.two_s == 3
        assert spin.dim == 4
        assert spin.casimir == pytest.approx(3.75)

    def test_non_half_integer_rejected(self):
        with pytest.raises(SpinAlgebraError):
            SpinMagnitude.from_spin(0.3)

    def test_negative_rejected(self):
        with pytest.raises(SpinAlgebraError):
            SpinMagnitude(-1)


class TestSpinMatrices:
    """Tests for spin_matrices."""

    def test_spin_half_matrices(self, spin_half):
        sx, sy, sz = spin_matrices(spin_half)
        assert np.allclose(sx.entries, [[0, 0.5], [0.5, 0]])
        assert np.allclose(sy.entries, [[0, -0.5j], [0.5j, 0]])
        assert np.allclose(sz.entries, [[0.5, 0], [0, -0.5]])

    @pytest.mark.parametrize("two_s", [1, 2, 3, 4])
    def test_commutation_relations(self, two_s):
        sx, sy, sz = (op.entries for op in spin_matrices(SpinMagnitude(two_s)))
        assert np.max(np.abs(sx @ sy - sy @ sx - 1j * sz)) <= 1e-12
        assert np.max(np.abs(sy @ sz - sz @ sy - 1j * sx)) <= 1e-12
        assert np.max(np.abs(sz @ sx - sx @ sz - 1j * sy)) <= 1e-12

    @pytest.mark.parametrize("two_s", [1, 2, 3, 4])
    def test_casimir(self, two_s):
        spin = SpinMagnitude(two_s)
        sx, sy, sz = (op.entries for op in spin_matrices(spin))
        total = sx @ sx + sy @ sy + sz @ sz
        assert np.max(np.abs(total - spin.casimir * np.eye(spin.dim))) <= 1e-12

    def test_matrices_are_hermitian(self, spin_one):
        for op in spin_matrices(spin_one):
            assert op.hermitian
            assert np.allclose(op.entries, op.entries.conj().T)

    def test_unknown_axis(self, spin_half):
        with pytest.raises(SpinAlgebraError):
            spin_component(spin_half, "w")


class TestEmbed:
    """Tests for tensor embedding."""

    def test_site_zero_is_most_significant(self, spin_half):
        sz = spin_component(spin_half, "z")
        op = embed([(0, sz)], SiteSet.chain(2))
        assert np.real(np.diag(op.entries)).tolist() == [0.5, 0.5, -0.5, -0.5]

    def test_distinct_sites_multiply(self, spin_one, chain3):
        sx = spin_component(spin_one, "x")
        sy = spin_component(spin_one, "y")
        product = embed([(0, sx)], chain3) @ embed([(2, sy)], chain3)
        assert product.allclose(embed([(0, sx), (2, sy)], chain3))

    def test_same_site_multiplies_locally(self, spin_half, chain3):
        sx = spin_component(spin_half, "x")
        sy = spin_component(spin_half, "y")
        product = embed([(1, sx)], chain3) @ embed([(1, sy)], chain3)
        assert product.allclose(embed([(1, sx @ sy)], chain3))

    def test_empty_embedding_is_identity(self, chain3):
        op = embed([], chain3, local_dim=2)
        assert op.allclose(identity(chain3, 2))

    def test_empty_embedding_needs_dimension(self, chain3):
        with pytest.raises(DimensionMismatchError):
            embed([], chain3)

    def test_duplicate_site(self, spin_half, chain3):
        sz = spin_component(spin_half, "z")
        with pytest.raises(DuplicateSiteError):
            embed([(1, sz), (1, sz)], chain3)

    def test_mixed_local_dimensions(self, spin_half, spin_one, chain3):
        with pytest.raises(DimensionMismatchError):
            embed([(0, spin_component(spin_half, "z")), (1, spin_component(spin_one, "z"))], chain3)

    def test_site_out_of_range(self, spin_half, chain3):
        with pytest.raises(SpinAlgebraError):
            embed([(3, spin_component(spin_half, "z"))], chain3)

    def test_non_hermitian_local_clears_flag(self, chain3):
        raising = LocalOperator.from_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
        assert not raising.hermitian
        assert not embed([(0, raising)], chain3).hermitian


class TestOperatorArithmetic:
    """Tests for ManyBodyOperator arithmetic, commutators and norms."""

    def test_shape_must_match_space(self):
        with pytest.raises(DimensionMismatchError):
            ManyBodyOperator(2, 2, np.eye(3, dtype=complex), True)

    def test_different_spaces_do_not_add(self, chain3):
        with pytest.raises(DimensionMismatchError):
            identity(chain3, 2) + identity(SiteSet.chain(2), 2)

    def test_entries_are_read_only(self, chain3):
        op = identity(chain3, 2)
        with pytest.raises(ValueError):
            op.entries[0, 0] = 5.0

    def test_embedded_commutator(self, spin_half, chain3):
        sx, sy, sz = spin_matrices(spin_half)
        result = commutator(embed([(1, sx)], chain3), embed([(1, sy)], chain3))
        assert result.allclose(embed([(1, sz)], chain3).scale(1j))
        assert not result.hermitian

    def test_disjoint_sites_commute(self, spin_half, chain3):
        sx, sy, _ = spin_matrices(spin_half)
        result = commutator(embed([(0, sx)], chain3), embed([(2, sy)], chain3))
        assert result.allclose(zero_operator(chain3, 2))

    def test_norm_of_single_spin(self, spin_one, chain3):
        assert operator_norm(embed([(1, spin_component(spin_one, "z"))], chain3)) == pytest.approx(1.0)

    def test_norm_of_heisenberg_bond(self, spin_half):
        sites = SiteSet.chain(2)
        bond = None
        for op in spin_matrices(spin_half):
            piece = embed([(0, op), (1, op)], sites)
            bond = piece if bond is None else bond + piece
        assert operator_norm(bond) == pytest.approx(0.75)
        assert np.allclose(np.linalg.eigvalsh(bond.entries), [-0.75, 0.25, 0.25, 0.25])

    def test_complex_scale_clears_hermitian_flag(self, chain3):
        assert not identity(chain3, 2).scale(1j).hermitian
        assert identity(chain3, 2).scale(2.0).hermitian


class TestSU2Rotation:
    """Tests for global rotations."""

    def test_pi_rotation_about_x_flips_sz(self, spin_one):
        sites = SiteSet.chain(2)
        sz = embed([(0, spin_component(spin_one, "z"))], sites)
        rotated = su2_rotate(sz, (1.0, 0.0, 0.0), np.pi)
        assert rotated.allclose(sz.scale(-1.0), atol=1e-10)

    def test_rotation_preserves_spectrum(self, spin_half, chain3):
        sx = embed([(0, spin_component(spin_half, "x")), (2, spin_component(spin_half, "y"))], chain3)
        herm = sx + sx.adjoint()
        axis = np.array([1.0, 2.0, 2.0]) / 3.0
        rotated = su2_rotate(herm, axis, 0.7)
        assert np.allclose(np.linalg.eigvalsh(rotated.entries), np.linalg.eigvalsh(herm.entries))

    def test_non_unit_axis(self, chain3):
        with pytest.raises(InvalidAxisError):
            su2_rotate(identity(chain3, 2), (1.0, 1.0, 0.0), 0.3)

    def test_non_hermitian_input(self, chain3):
        with pytest.raises(SpinAlgebraError):
            su2_rotate(identity(chain3, 2).scale(1j), (0.0, 0.0, 1.0), 0.3)


class TestSiteSet:
    """Tests for site sets and their bonds."""

    def test_open_chain_bonds(self):
        assert SiteSet.chain(4).nearest_neighbor_bonds() == [(0, 1), (1, 2), (2, 3)]

    def test_ring_bonds(self):
        assert SiteSet.chain(4).nearest_neighbor_bonds(periodic=True) == [
            (0, 1), (0, 3), (1, 2), (2, 3)
        ]

    def test_two_site_ring_has_one_bond(self):
        assert SiteSet.chain(2).nearest_neighbor_bonds(periodic=True) == [(0, 1)]

    def test_square_bonds(self):
        assert SiteSet.box((2, 2)).nearest_neighbor_bonds() == [(0, 1), (0, 2), (1, 3), (2, 3)]

    def test_coordinates_round_trip(self):
        box = SiteSet.box((2, 3))
        assert box.coordinates(4) == (2, 2)
        assert box.site_index((2, 2)) == 4

    def test_staggered_signs(self):
        assert SiteSet.chain(4).staggered_signs().tolist() == [-1.0, 1.0, -1.0, 1.0]

    def test_all_pairs(self):
        assert SiteSet.chain(3).all_pairs() == [(0, 1), (0, 2), (1, 2)]

    def test_shape_mismatch(self):
        with pytest.raises(SpinAlgebraError):
            SiteSet(5, (2, 2))


class TestDiagonalHelpers:
    """Tests for basis-state helpers of the classical path."""

    def test_basis_digits(self):
        assert basis_digits(2, 2).tolist() == [[0, 0, 1, 1], [0, 1, 0, 1]]

    def test_sz_diagonals_match_embedding(self, spin_one):
        sites = SiteSet.chain(2)
        values = sz_diagonals(2, spin_one)
        for site in range(2):
            dense = embed([(site, spin_component(spin_one, "z"))], sites)
            assert np.allclose(values[site], np.real(np.diag(dense.entries)))
