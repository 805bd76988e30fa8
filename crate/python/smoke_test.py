"""Smoke test of the qtrefftz_py extension.

Build and install it first, e.g.
    pip install maturin
    maturin develop -m crates/py/Cargo.toml
then run `python python/smoke_test.py`.
"""

import math

import qtrefftz_py as qt


def main():
    problem = qt.Problem.case1()
    mesh = qt.Mesh.square(4)
    assert len(mesh) == 32
    x0 = mesh.centroids[5]

    for method in qt.METHODS:
        for d in (2, 4, 6):
            basis = qt.build_basis(method, d, x0, problem)
            assert len(basis) == 2 * d + 1, (method, d, len(basis))
            ident = qt.check_identities(basis, problem)
            if method in ("expl2", "alge2"):
                assert ident == 0.0, (method, d, ident)
            else:
                assert ident <= 1e-12, (method, d, ident)

    # Residual decays like r^(d-1) before the roundoff floor.
    d = 5
    basis = qt.build_basis("expl1", d, x0, problem)
    radii = qt.default_radii(mesh.hmax)
    values = qt.residual_decay(basis, problem, radii)
    slope, _plateau, used = qt.fit_slope(radii, values)
    assert used >= 3 and d - 1.3 <= slope <= d - 0.5, (slope, used)

    for d in range(2, 11):
        report = qt.closed_forms(d)
        want1 = (d**4 - 2 * d**3 + 35 * d**2 - 22 * d + 12) // 12
        want2 = (d**4 - 2 * d**3 + 35 * d**2 - 10 * d) // 12
        assert report["expl1"] == want1 and report["expl2"] == want2
        assert qt.measure_flops("expl1", d, x0, problem) == want1
        assert qt.measure_flops("expl2", d, x0, problem) == want2
        assert qt.kernel_dims(d, x0, problem) == (2 * d + 1, 2 * d + 1)

    f = qt.build_basis("alge2", 3, (0.5, 0.5), problem)[0]
    p, vx, vy = f.eval(0.5, 0.5)
    assert isinstance(p, complex) and f.p[0][0] == p
    assert f.center == (0.5, 0.5) and f.d == 3

    jet = qt.Problem.case2()
    assert math.isclose(jet.omega, problem.omega)
    assert qt.Problem.from_json(jet.to_json()).to_json() == jet.to_json()

    try:
        qt.build_basis("expl3", 3, x0, problem)
    except ValueError:
        pass
    else:
        raise AssertionError("unknown method accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
