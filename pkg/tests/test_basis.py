import numpy as np
import pytest

from hsgs.basis import (
    assemble_basis,
    eigensolve_dirichlet_vector,
    eigensolve_neumann_scalar,
    eigensolve_stokes,
    load_basis,
    save_basis,
    vertical_modes,
)
from hsgs.domain import CylinderDomain, build_grid
from hsgs.errors import ConfigurationError


def test_neumann_kernel_and_spectrum():
    g = build_grid(CylinderDomain(1.0, 1.0, 1.0, 32, 32, 4))
    lam, vecs = eigensolve_neumann_scalar(g, 6)
    assert lam[0] == 0.0
    assert np.ptp(vecs[:, 0]) == 0.0  # exactly constant
    assert abs(lam[1] - np.pi**2) / np.pi**2 <= 0.02


def test_neumann_dimension_bound(small_grid):
    with pytest.raises(ConfigurationError):
        eigensolve_neumann_scalar(small_grid, small_grid.nxc * small_grid.nyc + 1)


def test_dirichlet_vector_family():
    g = build_grid(CylinderDomain(1.0, 1.0, 1.0, 32, 32, 4))
    mu, vecs = eigensolve_dirichlet_vector(g, 8)
    assert abs(mu[0] - 2 * np.pi**2) / (2 * np.pi**2) <= 0.02
    assert np.all(mu > 0)
    assert np.all(np.diff(mu) >= -1e-12)
    # polarisation pairs share the eigenvalue
    assert mu[0] == mu[1]
    # boundary nodes are identically zero by construction
    v = g.unpack_velocity(vecs[:, 3])
    assert np.abs(v[:, ~g.interior_mask]).max() == 0.0
    gram = vecs.T @ vecs * g.cell_xy
    assert np.abs(gram - np.eye(8)).max() <= 1e-10


def test_stokes_family(small_grid):
    muh, vecs = eigensolve_stokes(small_grid, 6)
    D = small_grid.divergence_matrix()
    for j in range(6):
        ratio = np.linalg.norm(D @ vecs[:, j]) / np.linalg.norm(vecs[:, j])
        assert ratio <= 1e-10
    assert np.all(np.diff(muh) >= -1e-12)


def test_stokes_richardson_self_consistency():
    mu16 = eigensolve_stokes(
        build_grid(CylinderDomain(1.0, 1.0, 1.0, 16, 16, 4)), 1
    )[0][0]
    mu32 = eigensolve_stokes(
        build_grid(CylinderDomain(1.0, 1.0, 1.0, 32, 32, 4)), 1
    )[0][0]
    assert abs(mu32 - mu16) / mu32 <= 0.01


@pytest.mark.parametrize(
    "h,k,parity,expected",
    [(1.0, 1, "cos", np.pi**2), (2.0, 3, "sin", 9 * np.pi**2 / 4)],
)
def test_vertical_mode_eigenvalues(h, k, parity, expected):
    vb = vertical_modes(h, max(k, 1), parity)
    idx = k if parity == "cos" else k - 1
    assert abs(vb.eigenvalues[idx] - expected) <= 1e-12 * expected


def test_vertical_modes_boundary_and_orthogonality():
    h = 1.3
    z = np.linspace(-h, 0.0, 17)
    cos = vertical_modes(h, 5, "cos")
    sin = vertical_modes(h, 5, "sin")
    dcos = cos.d_values(np.array([-h, 0.0]))
    assert np.abs(dcos).max() <= 1e-12
    svals = sin.values(np.array([-h, 0.0]))
    assert np.abs(svals).max() <= 1e-12
    w = np.full(17, h / 16)
    w[0] = w[-1] = h / 32
    gram = (cos.values(z) * w[None, :]) @ cos.values(z).T
    assert np.abs(gram - np.eye(6)).max() <= 1e-10


def test_assemble_counts_and_lambda_bar(small_basis):
    b = small_basis
    assert b.n_velocity == b.n * (b.n_z + 1)
    assert b.n_temperature == b.n * b.n_z
    bars = [b.lambda_bar(m) for m in range(1, b.n + 1)]
    assert np.all(np.diff(bars) >= 0)
    assert b.lambda_bar(b.n) >= b.lambda_floor(b.n)
    with pytest.raises(ConfigurationError):
        b.lambda_bar(b.n + 1)


def test_assemble_requires_enough_vertical_panels(small_grid):
    with pytest.raises(ConfigurationError):
        assemble_basis(small_grid, 4, small_grid.domain.Nz)


def test_eigen_relation_on_assembled_elements(small_basis):
    """Applying the discrete operators to assembled basis elements
    reproduces eigenvalue times the element (both branches)."""
    b = small_basis
    g = b.grid
    # temperature element (m=2, k=1): -Lap_neu acts horizontally
    t = b.neumann_vecs[:, 2].reshape(g.nxc, g.nyc)
    field = t[:, :, None] * b._sin_nodes[0][None, None, :]
    lhs = -np.stack(
        [g.lap_neumann_xy(field[:, :, j]) for j in range(g.nzc)], axis=-1
    )
    resid = np.abs(lhs - b.neumann_vals[2] * field).max()
    assert resid <= 1e-8 * max(1.0, b.neumann_vals[2] * np.abs(field).max())
    # barotropic element: P_G(-Lap) phi_hat = mu_hat phi_hat
    v = g.unpack_velocity(b.stokes_vecs[:, 1])
    lap = -np.stack([g.lap_dirichlet_xy(v[0]), g.lap_dirichlet_xy(v[1])])
    proj = g.leray_project(lap)
    resid = np.abs(proj - b.stokes_vals[1] * v).max()
    assert resid <= 1e-8 * max(1.0, np.abs(b.stokes_vals[1] * v).max())


def test_cache_roundtrip(tmp_path, small_basis):
    path = tmp_path / "basis.bin"
    save_basis(str(path), small_basis)
    loaded = load_basis(str(path))
    for name in (
        "stokes_vals",
        "stokes_vecs",
        "dirvec_vals",
        "dirvec_vecs",
        "neumann_vals",
        "neumann_vecs",
    ):
        assert np.array_equal(getattr(loaded, name), getattr(small_basis, name))


def test_cache_rejects_bad_magic(tmp_path, small_basis):
    path = tmp_path / "basis.bin"
    save_basis(str(path), small_basis)
    data = bytearray(path.read_bytes())
    data[0] ^= 0xFF
    path.write_bytes(bytes(data))
    with pytest.raises(ConfigurationError):
        load_basis(str(path))


def test_cache_rejects_grid_mismatch(tmp_path, small_basis):
    path = tmp_path / "basis.bin"
    save_basis(str(path), small_basis)
    other = build_grid(CylinderDomain(1.0, 1.0, 1.0, 16, 16, 8))
    with pytest.raises(ConfigurationError):
        load_basis(str(path), grid=other)
