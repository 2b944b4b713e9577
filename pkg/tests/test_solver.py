import numpy as np
import pytest

from volfrac.expressions import Term, TrigFactor, TrigPoly, affine_component
from volfrac.grid import (
    ConductivityField,
    DirichletData,
    Grid3,
    NeumannData,
    read_field_dump,
    write_field_dump,
)
from volfrac.solver import (
    PotentialSet,
    boundary_mean_E,
    extract_fields,
    null_lagrangian_pairing,
    solve,
)


def homogeneous_field(n=8, sigma=1.0, sigma2=None, length=1.0):
    grid = Grid3((n, n, n), (length / n,) * 3)
    phase = np.full((n, n, n), 2, dtype=np.uint8)
    s2 = sigma if sigma2 is None else sigma2
    s1 = s2 * 5.0
    return ConductivityField(grid, phase, s1, s2)


def sphere_field(n, radius, sigma1, sigma2, center=(0.5, 0.5, 0.5)):
    grid = Grid3((n, n, n), (1.0 / n,) * 3)
    xs = grid.cell_centers(0)
    X, Y, Z = np.meshgrid(xs, xs, xs, indexing="ij")
    inside = (X - center[0]) ** 2 + (Y - center[1]) ** 2 + (
        Z - center[2]
    ) ** 2 <= radius**2
    phase = np.where(inside, 1, 2).astype(np.uint8)
    return ConductivityField(grid, phase, sigma1, sigma2)


def wiggle_data(amp=0.1):
    comps = []
    for axis in range(3):
        trig = [TrigFactor(), TrigFactor(), TrigFactor()]
        trig[axis] = TrigFactor("sin", 2 * np.pi, 0.0)
        trig[(axis + 1) % 3] = TrigFactor("cos", 2 * np.pi, 0.0)
        comps.append(
            affine_component(axis) + TrigPoly([Term(amp, (0, 0, 0), tuple(trig))])
        )
    return DirichletData(tuple(comps))


class TestConductionDirichlet:
    def test_affine_exact_on_homogeneous(self):
        field = homogeneous_field(8)
        V = solve(field, DirichletData.affine())
        grid = field.grid
        for i in range(3):
            centers = grid.cell_centers(i)
            shape = [1, 1, 1]
            shape[i] = -1
            expected = np.broadcast_to(centers.reshape(shape), grid.dims)
            assert np.allclose(V.values[i], expected, atol=1e-10)
        E, J = extract_fields(V)
        assert np.allclose(E, np.broadcast_to(np.eye(3), E.shape), atol=1e-9)
        assert np.allclose(boundary_mean_E(V), np.eye(3), atol=1e-12)

    def test_shear_sign_convention(self):
        field = homogeneous_field(6)
        data = DirichletData(
            (affine_component(1), affine_component(1), affine_component(2))
        )
        V = solve(field, data)
        E, _ = extract_fields(V)
        col0 = E[3, 3, 3, :, 0]
        assert np.allclose(col0, [0.0, -1.0, 0.0], atol=1e-9)

    def test_constitutive_law_exact(self):
        field = sphere_field(10, 0.3, 4.0, 1.0)
        V = solve(field, DirichletData.affine())
        E, J = extract_fields(V)
        sig = field.sigma()
        assert np.allclose(J, sig[..., None, None] * E, atol=0)

    def test_boundary_flux_conservation(self):
        field = sphere_field(10, 0.3, 4.0, 1.0)
        V = solve(field, DirichletData.affine())
        total = sum(F.sum(axis=(1, 2)) for F in V.flux.values())
        assert np.max(np.abs(total)) < 1e-8

    def test_volume_vs_boundary_mean_E_identity(self):
        field = sphere_field(10, 0.3, 4.0, 1.0)
        V = solve(field, wiggle_data())
        E, _ = extract_fields(V)
        vol_mean = E.mean(axis=(0, 1, 2))
        assert np.allclose(vol_mean, boundary_mean_E(V), atol=1e-12)

    def test_determinism(self):
        field = sphere_field(8, 0.3, 3.0, 1.0)
        V1 = solve(field, DirichletData.affine())
        V2 = solve(field, DirichletData.affine())
        assert np.array_equal(V1.values, V2.values)


class TestConductionNeumann:
    def test_special_data_uniform_current(self):
        field = homogeneous_field(8, sigma2=2.0)
        field = ConductivityField(field.grid, field.phase, 5.0, 2.0)
        V = solve(field, NeumannData.special())
        E, J = extract_fields(V)
        assert np.allclose(
            J, np.broadcast_to(np.eye(3), J.shape), atol=1e-9
        )
        # gauge: zero mean
        assert np.allclose(V.values.mean(axis=(1, 2, 3)), 0.0, atol=1e-12)

    def test_incompatible_data_rejected(self):
        from volfrac.errors import ConfigError

        field = homogeneous_field(6)
        comps = {}
        for axis, side in [(a, s) for a in range(3) for s in (0, 1)]:
            qs = [TrigPoly.zero()] * 3
            qs[0] = TrigPoly.constant(1.0)  # net influx, not compatible
            comps[(axis, side)] = tuple(qs)
        with pytest.raises(ConfigError):
            solve(field, NeumannData(comps))


class TestLaplaceMode:
    def test_affine_exact(self):
        field = homogeneous_field(8)
        U = solve(field, DirichletData.affine(), mode="laplace")
        grid = field.grid
        for i in range(3):
            verts = grid.vertices(i)
            shape = [1, 1, 1]
            shape[i] = -1
            expected = np.broadcast_to(
                verts.reshape(shape), tuple(d + 1 for d in grid.dims)
            )
            assert np.allclose(U.values[i], expected, atol=1e-10)

    def test_left_in_laplace_mode_sigma_ignored(self):
        a = sphere_field(8, 0.3, 5.0, 1.0)
        b = homogeneous_field(8)
        Ua = solve(a, wiggle_data(), mode="laplace")
        Ub = solve(b, wiggle_data(), mode="laplace")
        assert np.allclose(Ua.values, Ub.values, atol=1e-11)


class TestNullLagrangianPairing:
    def test_affine_gives_translation_of_identity(self):
        field = homogeneous_field(8)
        U = solve(field, DirichletData.affine(), mode="laplace")
        res = null_lagrangian_pairing(U, U)
        assert np.allclose(res.volume, 2 * np.eye(3), atol=1e-11)
        assert np.allclose(res.boundary, 2 * np.eye(3), atol=1e-11)

    def test_routes_agree_for_arbitrary_vertex_data(self):
        # the discrete identity is algebraic: any vertex data, even rough
        # random fields, must give matching volume and boundary forms
        rng = np.random.default_rng(21)
        field = homogeneous_field(7)
        nv = tuple(d + 1 for d in field.grid.dims)
        mk = lambda: rng.standard_normal((3,) + nv)

        def as_potentials(vals):
            boundary = {}
            for axis, side in [(a, s) for a in range(3) for s in (0, 1)]:
                sl = [slice(None)] * 3
                sl[axis] = 0 if side == 0 else -1
                boundary[(axis, side)] = vals[(slice(None),) + tuple(sl)]
            return PotentialSet(
                field=field,
                layout="vertex",
                mode="laplace",
                bc_kind="dirichlet",
                values=vals,
                boundary=boundary,
                flux={},
                iterations=(0, 0, 0),
                final_residuals=(0.0, 0.0, 0.0),
            )

        V1 = as_potentials(mk())
        V2 = as_potentials(mk())
        res = null_lagrangian_pairing(V1, V2)
        scale = max(1.0, np.max(np.abs(res.volume)))
        assert np.max(np.abs(res.volume - res.boundary)) < 1e-12 * scale
        # symmetry of the pairing
        swapped = null_lagrangian_pairing(V2, V1)
        assert np.allclose(res.volume, swapped.volume, atol=1e-11 * scale)

    def test_smooth_data_routes(self):
        field = homogeneous_field(12)
        U = solve(field, wiggle_data(), mode="laplace")
        res = null_lagrangian_pairing(U, U)
        assert res.route_gap < 1e-12

    def test_translated_gradient_discrete_divergence_free(self):
        # central differences commute, so div(T grad V) vanishes identically
        rng = np.random.default_rng(22)
        n = 9
        V = rng.standard_normal((3, n, n, n))
        h = 0.1

        def cd(arr, axis):
            sl_hi = [slice(None)] * 3
            sl_lo = [slice(None)] * 3
            sl_hi[axis] = slice(2, None)
            sl_lo[axis] = slice(None, -2)
            pad = [slice(1, -1)] * 3
            pad[axis] = slice(None)
            return (arr[tuple(sl_hi)] - arr[tuple(sl_lo)])[
                tuple(sl_j for sl_j in pad)
            ] / (2 * h)

        # T(grad V)_kj = d_kj * div V - d_j V_k at interior points
        grads = {(a, i): cd(V[i], a) for a in range(3) for i in range(3)}
        inner = lambda arr: arr[1:-1, 1:-1, 1:-1]
        div = sum(inner(grads[(m, m)]) * 0 for m in range(3))
        resid = np.zeros((3,) + div.shape)
        for j in range(3):
            term = np.zeros_like(div)
            for k in range(3):
                # d/dx_k of [T grad V]_kj
                tg = (
                    (grads[(k, k)] if False else None)
                )
                pass
        # assemble explicitly: TG[k][j] on the interior lattice
        TG = [[None] * 3 for _ in range(3)]
        divV = sum(grads[(m, m)] for m in range(3))
        for k in range(3):
            for j in range(3):
                TG[k][j] = (divV if k == j else 0.0) - grads[(j, k)]
        for j in range(3):
            r = 0.0
            for k in range(3):
                r = r + cd(TG[k][j], k) if not np.isscalar(TG[k][j]) else r
            resid[j] = r
        assert np.max(np.abs(resid)) < 1e-12 * max(1.0, np.max(np.abs(V))) / h**2


class TestSphereOracle:
    def test_interior_field_matches_isolated_sphere(self):
        # classical result: uniform interior field 3 s2/(s1+2 s2) E0
        sigma1, sigma2 = 5.0, 1.0
        field = sphere_field(48, 0.12, sigma1, sigma2)
        V = solve(field, DirichletData.affine())
        E, _ = extract_fields(V, method="flux")
        grid = field.grid
        xs = grid.cell_centers(0)
        X, Y, Z = np.meshgrid(xs, xs, xs, indexing="ij")
        core = (X - 0.5) ** 2 + (Y - 0.5) ** 2 + (Z - 0.5) ** 2 <= 0.06**2
        mean_core = E[core].mean(axis=0)
        expected = 3 * sigma2 / (sigma1 + 2 * sigma2)
        assert np.allclose(
            mean_core, expected * np.eye(3), atol=0.02 * expected
        )


class TestFieldDump:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(23)
        arrays = [rng.standard_normal((4, 5, 6)) for _ in range(3)]
        path = tmp_path / "fields.tbf"
        write_field_dump(path, arrays, (0.1, 0.2, 0.3))
        back, spacing = read_field_dump(path)
        assert spacing == (0.1, 0.2, 0.3)
        for a, b in zip(arrays, back):
            assert np.array_equal(a, b)

    def test_magic_check(self, tmp_path):
        path = tmp_path / "bad.tbf"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError):
            read_field_dump(path)
