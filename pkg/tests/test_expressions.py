import numpy as np

from volfrac.expressions import Term, TrigFactor, TrigPoly, affine_component


def fd(f, axis, pts, h=1e-6):
    shift = np.zeros(3)
    shift[axis] = h
    up = f(pts[0] + shift[0], pts[1] + shift[1], pts[2] + shift[2])
    dn = f(pts[0] - shift[0], pts[1] - shift[1], pts[2] - shift[2])
    return (up - dn) / (2 * h)


def test_affine_components():
    x = np.linspace(0, 1, 5)
    y = np.linspace(0, 2, 5)
    z = np.linspace(0, 3, 5)
    assert np.allclose(affine_component(0)(x, y, z), x)
    assert np.allclose(affine_component(1)(x, y, z), y)
    assert np.allclose(affine_component(2)(x, y, z), z)


def test_derivatives_match_finite_differences():
    rng = np.random.default_rng(11)
    poly = TrigPoly(
        [
            Term(0.7, (2, 0, 1)),
            Term(
                -0.3,
                (1, 0, 0),
                (
                    TrigFactor("sin", 2 * np.pi, 0.3),
                    TrigFactor("cos", np.pi, 0.0),
                    TrigFactor(),
                ),
            ),
            Term(
                0.05,
                (0, 0, 0),
                (
                    TrigFactor("cos", 3.0, 1.0),
                    TrigFactor("sin", 2.0, 0.5),
                    TrigFactor("sin", 1.0, 0.0),
                ),
            ),
        ]
    )
    pts = rng.uniform(0.1, 0.9, size=(3, 40))
    for axis in range(3):
        exact = poly.diff(axis)(*pts)
        approx = fd(poly, axis, pts)
        assert np.allclose(exact, approx, atol=1e-7, rtol=1e-6)


def test_second_derivatives_and_laplacian():
    poly = TrigPoly(
        [
            Term(
                1.0,
                (0, 0, 0),
                (
                    TrigFactor("sin", 2 * np.pi, 0.0),
                    TrigFactor("sin", 2 * np.pi, 0.0),
                    TrigFactor(),
                ),
            )
        ]
    )
    pts = np.random.default_rng(12).uniform(0, 1, size=(3, 30))
    hess = poly.hessian()
    assert np.allclose(hess[0][1](*pts), hess[1][0](*pts), atol=1e-13)
    lap = poly.laplacian()(*pts)
    # eigenfunction: laplacian = -2 (2 pi)^2 * poly
    assert np.allclose(lap, -2 * (2 * np.pi) ** 2 * poly(*pts), atol=1e-11)


def test_round_trip_serialization():
    poly = TrigPoly(
        [
            Term(0.4, (1, 2, 0), (TrigFactor("sin", 1.5, 0.2),) * 3),
            Term(-1.0, (0, 0, 3)),
        ]
    )
    clone = TrigPoly.from_dict(poly.to_dict())
    pts = np.random.default_rng(13).uniform(-1, 1, size=(3, 20))
    assert np.allclose(poly(*pts), clone(*pts), atol=0)


def test_add_and_scale():
    a = TrigPoly.constant(2.0)
    b = affine_component(0)
    combo = (a + b).scaled(0.5)
    x = np.array([0.0, 2.0])
    zero = np.zeros(2)
    assert np.allclose(combo(x, zero, zero), [1.0, 2.0])
