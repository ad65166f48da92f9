"""Quick invariant checks behind ``hsifuse selftest``.

Each check returns ``(name, ok, detail)``; nothing here raises on failure.
"""

import tempfile
from pathlib import Path

import numpy as np

from . import io_formats as iof
from .degradation import (
    SpatialOperator,
    SpectralResponse,
    circulant_apply,
    circulant_matrix,
    dft_matrix,
    gaussian_kernel,
    spatial_adjoint,
    spatial_degrade,
)
from .optim import project_simplex
from .solver import (
    FusionConfig,
    SolverState,
    grad_s,
    kernel_gradient,
    kernel_objective,
    srf_gradient,
    srf_objective,
    update_z,
)
from .tensor import fold, inner, unfold
from .transform import KINDS, build_transform, prox_ttnn, unitarity_residual


def _rel(a, b):
    return abs(a - b) / max(abs(a), abs(b), 1e-300)


def _fd(f, x, d, h=1e-6):
    return (f(x + h * d) - f(x - h * d)) / (2 * h)


def run_checks(seed=0):
    rng = np.random.default_rng(seed)
    out = []

    def check(name, ok, detail=""):
        out.append((name, bool(ok), detail))

    x = rng.normal(size=(5, 4, 3))
    check("unfold/fold roundtrip", all(np.array_equal(fold(unfold(x, k), k, x.shape), x) for k in (1, 2, 3)))

    worst = max(unitarity_residual(build_transform(k, 6, source=rng.random((4, 4, 6)) if k == "data_svd" else None).phi) for k in KINDS)
    check("transform unitarity", worst <= 1e-10, f"max residual {worst:.2e}")

    b = project_simplex(rng.random(16))
    f = dft_matrix(16)
    err = np.linalg.norm(circulant_matrix(b) - f.conj().T @ np.diag(np.sqrt(16) * f @ b) @ f)
    check("circulant eigen-identity", err <= 1e-9, f"residual {err:.2e}")

    m1, m2 = rng.normal(size=(16, 3)), rng.normal(size=(16, 3))
    gap = abs(inner(circulant_apply(b, m1)[:, :, None], m2[:, :, None]) - inner(m1[:, :, None], circulant_apply(b, m2, adjoint=True)[:, :, None]))
    check("circulant adjoint", gap <= 1e-10, f"gap {gap:.2e}")

    op = SpatialOperator(12, 3, gaussian_kernel(12, 1.0, 5))
    u, v = rng.normal(size=(12, 12, 2)), rng.normal(size=(4, 4, 2))
    gap = abs(inner(spatial_degrade(u, op, op), v) - inner(u, spatial_adjoint(v, op, op)))
    check("spatial operator adjoint", gap <= 1e-10, f"gap {gap:.2e}")

    a, c = rng.normal(size=10), rng.normal(size=10)
    pa, pc = project_simplex(a), project_simplex(c)
    ok = pa.min() >= 0 and abs(pa.sum() - 1) <= 1e-12 and np.linalg.norm(pa - pc) <= np.linalg.norm(a - c) + 1e-12
    check("simplex projection", ok)

    t = build_transform("dct", 3)
    y1, y2 = rng.normal(size=(4, 4, 3)), rng.normal(size=(4, 4, 3))
    lhs = np.linalg.norm(prox_ttnn(y1, 0.3, t) - prox_ttnn(y2, 0.3, t))
    check("prox nonexpansive", lhs <= np.linalg.norm(y1 - y2) + 1e-10)

    op1 = SpatialOperator(8, 2, project_simplex(rng.random(8)))
    op2 = SpatialOperator(8, 2, project_simplex(rng.random(8)))
    sr = SpectralResponse(4, [(0, 1), (2, 3)], [project_simplex(rng.random(2)) for _ in range(2)])
    s = rng.random((8, 8, 4))
    h, m = rng.random((4, 4, 4)), rng.random((8, 8, 2))
    state = SolverState.start(s, op1, op2, sr)
    d = rng.normal(size=s.shape)

    def loss(z):
        r1 = spatial_degrade(z, op1, op2) - h
        r2 = sr.apply(z) - m
        return 0.5 * inner(r1, r1) + 0.5 * inner(r2, r2)

    err = _rel(inner(grad_s(state, h, m, 1.0), d), _fd(loss, s, d))
    check("grad_s finite differences", err <= 1e-5, f"rel err {err:.2e}")

    a_mat, w_mat = rng.random((8, 6)), rng.random((4, 6))
    db = rng.normal(size=8)
    err = _rel(kernel_gradient(op1.b, a_mat, w_mat, op1) @ db, _fd(lambda z: kernel_objective(z, a_mat, w_mat, op1), op1.b, db))
    check("kernel gradient finite differences", err <= 1e-5, f"rel err {err:.2e}")

    db = rng.normal(size=2)
    b3 = sr.weights[0]
    err = _rel(srf_gradient(b3, s, m[:, :, 0], (0, 1)) @ db, _fd(lambda z: srf_objective(z, s, m[:, :, 0], (0, 1)), b3, db))
    check("spectral gradient finite differences", err <= 1e-5, f"rel err {err:.2e}")

    cfg = FusionConfig(beta=1.0, mu=2.0)
    st = SolverState.start(np.full((1, 1, 1), -1.0), op1, op2, sr)
    yv, zv = update_z(st, cfg)
    expect = cfg.mu / (1 + cfg.mu * cfg.beta) * (-cfg.beta)
    check("Moreau z-step closed form", yv.item() == 0.0 and abs(zv.item() - expect) <= 1e-15)

    with tempfile.TemporaryDirectory() as tmp:
        base = Path(tmp) / "cube"
        iof.write_cube(x, base)
        check("cube file roundtrip", np.array_equal(iof.read_cube(base), x))
    return out
