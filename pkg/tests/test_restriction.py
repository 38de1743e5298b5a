"""Restriction systems: recentring, Jacobians, echelon forms, rank, FRALD."""

import random
from fractions import Fraction

import pytest

from waldrates.polycore import MultiPoly, Scalar, parse_polynomial
from waldrates.restriction import (
    NullViolatedError,
    PolyMatrix,
    RankDeficientError,
    RestrictionSystem,
    ZeroRowError,
    echelonize,
    frald_check,
    jacobian,
    lowest_matrix,
    poly_rank,
    recenter,
    scalar_mat_det,
    transform,
)
from waldrates.systems import linear_system, product_pairs_system

V4 = ["x", "y", "z", "w"]


def poly(text, names=V4):
    return parse_polynomial(text, names)


def poly_matrix(rows, names=V4):
    return PolyMatrix([[poly(t, names) for t in row] for row in rows])


class TestRecenter:
    def test_product_pairs(self):
        centered = recenter(product_pairs_system())
        assert list(centered.g) == [poly("x*y"), poly("x + x*w"), poly("y + y*z")]
        assert all(t.is_zero() for t in centered.theta_bar)

    def test_zero_null_point_unchanged(self):
        sys0 = RestrictionSystem(["x", "y"], [0, 0], [poly("x*y", ["x", "y"])])
        assert recenter(sys0) is sys0

    def test_linear_shift(self):
        sys1 = RestrictionSystem(["x"], [1], [parse_polynomial("x - 1", ["x"])])
        assert recenter(sys1).g[0] == parse_polynomial("x", ["x"])

    def test_null_violated(self):
        bad = RestrictionSystem(V4, [1, 1, 1, 1],
                                [poly("x*y"), poly("x*w"), poly("y*z")])
        with pytest.raises(NullViolatedError):
            recenter(bad)


class TestJacobian:
    def test_product_pairs_rows(self):
        G = jacobian(recenter(product_pairs_system()))
        assert list(G.row(0)) == [poly("y"), poly("x"), poly("0"), poly("0")]
        assert list(G.row(1)) == [poly("1 + w"), poly("0"), poly("0"), poly("x")]
        assert list(G.row(2)) == [poly("0"), poly("1 + z"), poly("y"), poly("0")]

    def test_linear_system_constant(self):
        G = jacobian(linear_system(2))
        assert G.entry(0, 0) == MultiPoly.constant(1, 2)
        assert G.entry(0, 1).is_zero()

    def test_squares(self):
        sys2 = RestrictionSystem(["x", "y"], [0, 0],
                                 [poly("x^2", ["x", "y"]), poly("y^2", ["x", "y"])])
        G = jacobian(sys2)
        assert G.entry(0, 0) == poly("2*x", ["x", "y"])
        assert G.entry(0, 1).is_zero()
        assert G.entry(1, 1) == poly("2*y", ["x", "y"])


class TestLowestMatrix:
    def test_constant_entry_drops_higher_terms(self):
        low, rest, degs = lowest_matrix(poly_matrix([["1 + w", "0", "0", "x"]]))
        assert list(low.row(0)) == [poly("1"), poly("0"), poly("0"), poly("0")]
        assert degs == [0]
        assert list(rest.row(0)) == [poly("w"), poly("0"), poly("0"), poly("x")]

    def test_homogeneous_row_kept_whole(self):
        low, rest, degs = lowest_matrix(poly_matrix([["y", "x", "0", "0"]]))
        assert list(low.row(0)) == [poly("y"), poly("x"), poly("0"), poly("0")]
        assert degs == [1]
        assert all(p.is_zero() for p in rest.row(0))

    def test_constant_matrix(self):
        M = poly_matrix([["1", "2"], ["3", "4"]], ["x", "y"])
        low, rest, degs = lowest_matrix(M)
        assert low == M
        assert degs == [0, 0]
        assert all(p.is_zero() for row in rest.entries for p in row)

    def test_zero_row_rejected(self):
        with pytest.raises(ZeroRowError):
            lowest_matrix(poly_matrix([["0", "0", "0", "0"]]))


class TestEchelonize:
    def test_product_pairs_structure(self):
        ech = echelonize(jacobian(recenter(product_pairs_system())))
        assert ech.blocks == ((2, 0), (1, 1))
        assert ech.row_degrees == (0, 0, 1)
        assert list(ech.low_matrix.row(0)) == [poly("1"), poly("0"), poly("0"), poly("0")]
        assert list(ech.low_matrix.row(1)) == [poly("0"), poly("1"), poly("0"), poly("0")]
        assert list(ech.low_matrix.row(2)) == [poly("y"), poly("x"), poly("0"), poly("0")]
        # permutation only: original degree-1 row moved to the bottom
        S = [[int(v.a) for v in row] for row in ech.S]
        assert S == [[0, 1, 0], [0, 0, 1], [1, 0, 0]]

    def test_full_rank_constant_matrix(self):
        ech = echelonize(jacobian(linear_system(3)))
        assert ech.blocks == ((3, 0),)
        assert [[v for v in row] for row in ech.S] == \
            [[Scalar(1 if i == j else 0) for j in range(3)] for i in range(3)]

    def test_dependent_lows_are_eliminated(self):
        # g = (x, x + x^2): both lowest rows are (1, 0); one rewrite needed
        names = ["x", "y"]
        sys2 = RestrictionSystem(names, [0, 0],
                                 [poly("x", names), poly("x + x^2", names)])
        ech = echelonize(jacobian(sys2))
        assert ech.blocks == ((1, 0), (1, 1))
        assert list(ech.low_matrix.row(0)) == [poly("1", names), poly("0", names)]
        assert list(ech.low_matrix.row(1)) == [poly("2*x", names), poly("0", names)]
        assert ech.S == ((Scalar(1), Scalar(0)), (Scalar(-1), Scalar(1)))

    def test_rank_deficient_input(self):
        names = ["x", "y"]
        sys2 = RestrictionSystem(names, [0, 0], [poly("x", names), poly("x", names)])
        with pytest.raises(RankDeficientError):
            echelonize(jacobian(sys2))

    def test_det_s_nonzero_and_sg_identity(self):
        G = jacobian(recenter(product_pairs_system()))
        ech = echelonize(G)
        assert not scalar_mat_det(ech.S).is_zero()
        assert G.left_mul_scalars(ech.S) == ech.full_matrix
        low, rest, _ = lowest_matrix(ech.full_matrix)
        assert low + rest == ech.full_matrix
        assert low == ech.low_matrix

    def test_low_rows_homogeneous(self):
        ech = echelonize(jacobian(recenter(product_pairs_system())))
        for i in range(3):
            deg = ech.row_degrees[i]
            for p in ech.low_matrix.row(i):
                assert p.is_zero() or set(sum(m) for m in p.terms) == {deg}

    def test_idempotent_block_structure(self):
        G = jacobian(recenter(product_pairs_system()))
        first = echelonize(G)
        second = echelonize(first.full_matrix)
        assert second.blocks == first.blocks

    def test_block_structure_invariant_under_row_shuffles(self):
        G = jacobian(recenter(product_pairs_system()))
        reference = echelonize(G).blocks
        rng = random.Random(3)
        for _ in range(10):
            order = list(range(3))
            rng.shuffle(order)
            shuffled = PolyMatrix([G.row(i) for i in order])
            assert echelonize(shuffled).blocks == reference


class TestPolyRank:
    def test_dependent_polynomial_rows(self):
        M = poly_matrix([["y", "0"], ["y^2", "0"]], ["x", "y"])
        assert poly_rank(M, trials=3, rng=random.Random(0)) == 1

    def test_identity(self):
        M = poly_matrix([["1", "0"], ["0", "1"]], ["x", "y"])
        assert poly_rank(M, trials=1, rng=random.Random(0)) == 2

    def test_product_pairs_low_matrix(self):
        ech = echelonize(jacobian(recenter(product_pairs_system())))
        assert poly_rank(ech.low_matrix, trials=3, rng=random.Random(1)) == 2

    def test_invariant_under_nondegenerate_transform(self):
        ech = echelonize(jacobian(recenter(product_pairs_system())))
        rng = random.Random(9)
        base = poly_rank(ech.low_matrix, trials=3, rng=random.Random(2))
        for _ in range(10):
            while True:
                S = [[Fraction(rng.randint(-5, 5), rng.randint(1, 3))
                      for _ in range(3)] for _ in range(3)]
                if not scalar_mat_det(S).is_zero():
                    break
            transformed = ech.low_matrix.left_mul_scalars(S)
            assert poly_rank(transformed, trials=3, rng=random.Random(2)) == base


class TestFraldCheck:
    def test_product_pairs_fails(self):
        verdict = frald_check(product_pairs_system(), rng=random.Random(4))
        assert not verdict.frald_t_holds
        assert verdict.rank_r == 2
        assert verdict.echelon.blocks == ((2, 0), (1, 1))

    def test_linear_full_rank_holds(self):
        verdict = frald_check(linear_system(2, p=3), rng=random.Random(4))
        assert verdict.frald_t_holds
        assert verdict.rank_r == 2

    def test_null_violation_propagates(self):
        bad = RestrictionSystem(V4, [1, 1, 1, 1],
                                [poly("x*y"), poly("x*w"), poly("y*z")])
        with pytest.raises(NullViolatedError):
            frald_check(bad)

    def test_nondegenerate_numeric_jacobian_implies_frald_t(self):
        # quadratic restrictions with full-rank constant part at the null
        names = ["x", "y", "z"]
        sys3 = RestrictionSystem(
            names, [0, 0, 0],
            [poly("x + y^2", names), poly("y + x*z", names)],
        )
        verdict = frald_check(sys3, rng=random.Random(8))
        assert verdict.frald_t_holds

    def test_holds_with_positive_degree_block(self):
        # g = (x^2): the single lowest row (2x) is nonzero, so the property
        # holds even though the numeric Jacobian vanishes at the null
        sys1 = RestrictionSystem(["x", "y"], [0, 0], [poly("x^2", ["x", "y"])])
        verdict = frald_check(sys1, rng=random.Random(8))
        assert verdict.frald_t_holds
        assert verdict.echelon.blocks == ((1, 1),)


class TestTransform:
    def test_scalar_rows_combine(self):
        sys0 = product_pairs_system()
        S = [[1, 0, 0], [1, 1, 0], [0, 0, 2]]
        out = transform(sys0, S)
        assert out.g[0] == sys0.g[0]
        assert out.g[1] == sys0.g[0] + sys0.g[1]
        assert out.g[2] == sys0.g[2].scale(2)

    def test_wrong_shape_rejected(self):
        with pytest.raises(ValueError):
            transform(product_pairs_system(), [[1, 0], [0, 1]])
