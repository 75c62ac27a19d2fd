"""Horizontal eigenbases, analytic vertical modes, and the tensor basis.

Three horizontal families are computed from the discrete operators in
:mod:`hsgs.domain`:

* scalar Neumann-Laplacian eigenpairs (temperature),
* vector Dirichlet-Laplacian eigenpairs (baroclinic velocity), built by
  polarising the scalar Dirichlet eigenpairs,
* eigenpairs of the projected operator P_G (-Lap) on the discrete
  divergence-free no-slip subspace (barotropic velocity).

Vertical profiles are analytic trigonometric modes, unit-normalised in
L2(-h,0).  With Nz panels the trapezoid rule reproduces their mutual L2
inner products exactly for mode indices k <= Nz-1, so the assembled
tensor basis is discretely orthonormal to round-off.
"""

import hashlib
import io
import os
import struct
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .domain import CylinderDomain, DiscreteGrid, build_grid
from .errors import ConfigurationError, NumericalError

OPERATOR_FLAVOR = "vertex-c2-sbp-trapz-1"
DENSE_LIMIT = 10_000
RESIDUAL_TOL = 1e-8
GRAM_TOL = 1e-10


# ----------------------------------------------------------------------
# horizontal eigensolves


def _check_residuals(apply_op, weights, evals, vecs, label):
    worst = 0.0
    for j in range(vecs.shape[1]):
        e = vecs[:, j]
        r = apply_op(e) - evals[j] * e
        nrm = np.sqrt(np.sum(weights * e * e))
        res = np.sqrt(np.sum(weights * r * r)) / nrm
        worst = max(worst, res)
    if worst > RESIDUAL_TOL:
        raise NumericalError(
            f"{label} eigen-residual {worst:.3e} exceeds {RESIDUAL_TOL:.0e}"
        )
    return worst


def eigensolve_neumann_scalar(grid: DiscreteGrid, n: int):
    """n smallest eigenpairs of the scalar Neumann Laplacian (as -Lap).

    Returns (evals, vecs) with vecs of shape (nxc*nyc, n), orthonormal
    under the trapezoid inner product, evals ascending, evals[0] == 0
    with the constant eigenvector.
    """
    nsc = grid.nxc * grid.nyc
    if n > nsc:
        raise ConfigurationError(f"requested {n} Neumann modes, dim {nsc}")
    Ix = sp.identity(grid.nxc)
    Iy = sp.identity(grid.nyc)
    L = sp.kron(sp.csr_matrix(grid.x.lap_neu), Iy) + sp.kron(
        Ix, sp.csr_matrix(grid.y.lap_neu)
    )
    w = grid.wxy.ravel()
    sw = np.sqrt(w)
    if nsc <= DENSE_LIMIT:
        B = (L.toarray() * (1.0 / sw)[None, :]) * sw[:, None]
        B = 0.5 * (B + B.T)
        evals, vecs = sla.eigh(-B, subset_by_index=[0, n - 1])
    else:
        Bs = sp.diags(sw) @ L @ sp.diags(1.0 / sw)
        Bs = (Bs + Bs.T) * 0.5
        evals, vecs = spla.eigsh(-Bs, k=n, sigma=-1e-8, which="LM")
        order = np.argsort(evals)
        evals, vecs = evals[order], vecs[:, order]
    vecs = vecs / sw[:, None]
    evals = np.maximum(evals, 0.0)
    # Constants are in the kernel of the discrete operator exactly.
    evals[0] = 0.0
    vecs[:, 0] = 1.0 / np.sqrt(grid.domain.Lx * grid.domain.Ly)
    apply_op = lambda e: -(L @ e)
    _check_residuals(apply_op, w, evals, vecs, "neumann")
    return evals, vecs


def _dirichlet_scalar_pairs(grid: DiscreteGrid, n: int):
    nint = grid.n_interior
    if n > nint:
        raise ConfigurationError(f"requested {n} Dirichlet modes, dim {nint}")
    nx, ny = grid.nxc - 2, grid.nyc - 2
    Tx = sp.csr_matrix(grid.x.lap_dir[1:-1, 1:-1])
    Ty = sp.csr_matrix(grid.y.lap_dir[1:-1, 1:-1])
    L = sp.kron(Tx, sp.identity(ny)) + sp.kron(sp.identity(nx), Ty)
    if nint <= DENSE_LIMIT:
        evals, vecs = sla.eigh(-L.toarray(), subset_by_index=[0, n - 1])
    else:
        evals, vecs = spla.eigsh(-L.tocsc(), k=n, sigma=0.0, which="LM")
        order = np.argsort(evals)
        evals, vecs = evals[order], vecs[:, order]
    vecs = vecs / np.sqrt(grid.cell_xy)
    return evals, vecs, L


def eigensolve_dirichlet_vector(grid: DiscreteGrid, n: int):
    """n smallest eigenpairs of the vector Dirichlet Laplacian.

    Scalar eigenpairs are polarised into (phi, 0) and (0, phi); the two
    polarisations share the scalar eigenvalue, so eigenvalues repeat in
    adjacent pairs.  Vectors are packed interior dofs (2*nint, n).
    """
    n_scalar = (n + 1) // 2
    evals_s, vecs_s, L = _dirichlet_scalar_pairs(grid, n_scalar)
    nint = grid.n_interior
    evals = np.repeat(evals_s, 2)[:n]
    vecs = np.zeros((2 * nint, n))
    for j in range(n):
        s = vecs_s[:, j // 2]
        if j % 2 == 0:
            vecs[:nint, j] = s
        else:
            vecs[nint:, j] = s
    if np.any(evals <= 0):
        raise NumericalError("Dirichlet eigenvalues must be strictly positive")
    apply_op = lambda e: -np.concatenate([L @ e[:nint], L @ e[nint:]])
    _check_residuals(
        apply_op, np.full(2 * nint, grid.cell_xy), evals, vecs, "dirichlet"
    )
    return evals, vecs


def eigensolve_stokes(grid: DiscreteGrid, n: int):
    """n smallest eigenpairs of P_G (-Lap) on the div-free no-slip subspace.

    The subspace is the null space of the discrete divergence matrix, so
    every returned mode has discrete divergence at round-off level; the
    eigensolve is a dense symmetric solve of the operator restricted to
    an orthonormal null-space basis.
    """
    nint = grid.n_interior
    D = grid.divergence_matrix()
    if 2 * nint <= DENSE_LIMIT:
        Z = sla.null_space(D.toarray())
    else:
        Z = _iterative_divfree_basis(grid, n)
    if Z.shape[1] < n:
        raise ConfigurationError(
            f"divergence-free subspace dimension {Z.shape[1]} < n={n}"
        )
    nx, ny = grid.nxc - 2, grid.nyc - 2
    Tx = sp.csr_matrix(grid.x.lap_dir[1:-1, 1:-1])
    Ty = sp.csr_matrix(grid.y.lap_dir[1:-1, 1:-1])
    Ls = sp.kron(Tx, sp.identity(ny)) + sp.kron(sp.identity(nx), Ty)
    Lz = np.vstack([-(Ls @ Z[:nint]), -(Ls @ Z[nint:])])
    A = Z.T @ Lz
    asym = np.abs(A - A.T).max() / max(1.0, np.abs(A).max())
    if asym > 1e-10:
        raise NumericalError(f"projected Stokes operator asymmetry {asym:.3e}")
    A = 0.5 * (A + A.T)
    evals, Y = sla.eigh(A, subset_by_index=[0, n - 1])
    vecs = (Z @ Y) / np.sqrt(grid.cell_xy)
    div_worst = 0.0
    for j in range(n):
        dn = np.linalg.norm(D @ vecs[:, j]) / np.linalg.norm(vecs[:, j])
        div_worst = max(div_worst, dn)
    if div_worst > 1e-10:
        raise NumericalError(f"Stokes mode divergence {div_worst:.3e} > 1e-10")

    def apply_op(e):
        le = np.concatenate([-(Ls @ e[:nint]), -(Ls @ e[nint:])])
        # project back onto the null space (P_G within the no-slip space)
        s = grid.apply_pinv_ddt(D @ le)
        return le - D.T @ s

    _check_residuals(
        apply_op, np.full(2 * nint, grid.cell_xy), evals, vecs, "stokes"
    )
    return evals, vecs


def _iterative_divfree_basis(grid, n, oversample=4):
    """Lanczos-contract fallback above the dense limit.

    Builds an orthonormal basis of a subspace of ker(D) containing the
    low Stokes modes by projecting random fields and filtering with a few
    inverse-free LOBPCG sweeps.
    """
    nint = grid.n_interior
    D = grid.divergence_matrix()
    rng = np.random.default_rng(1234)
    k = min(2 * nint, max(4 * n, n + 32))
    X = rng.standard_normal((2 * nint, k))
    X -= D.T @ np.column_stack(
        [grid.apply_pinv_ddt(D @ X[:, j]) for j in range(k)]
    )
    Q, _ = np.linalg.qr(X)
    return Q


# ----------------------------------------------------------------------
# vertical modes


class VerticalBasis:
    """Unit-L2-normalised trigonometric modes on (-h, 0).

    parity "cos": k = 0..n_z with zero derivative at both lids;
    parity "sin": k = 1..n_z vanishing at both lids.  Eigenvalues of the
    1-D (negative) Laplacian are (k pi / h)^2.
    """

    def __init__(self, h, n_z, parity):
        if n_z < 1:
            raise ConfigurationError("n_z must be >= 1")
        if parity not in ("cos", "sin"):
            raise ConfigurationError(f"unknown parity {parity!r}")
        self.h = float(h)
        self.n_z = int(n_z)
        self.parity = parity
        self.k = (
            np.arange(0, n_z + 1) if parity == "cos" else np.arange(1, n_z + 1)
        )
        self.eigenvalues = (self.k * np.pi / self.h) ** 2

    @property
    def n_modes(self):
        return len(self.k)

    def values(self, z):
        z = np.asarray(z)
        arg = np.outer(self.k * np.pi / self.h, z + self.h)
        if self.parity == "cos":
            out = np.sqrt(2.0 / self.h) * np.cos(arg)
            out[0] = 1.0 / np.sqrt(self.h)
            return out
        return np.sqrt(2.0 / self.h) * np.sin(arg)

    def d_values(self, z):
        z = np.asarray(z)
        fac = self.k * np.pi / self.h
        arg = np.outer(fac, z + self.h)
        if self.parity == "cos":
            out = -np.sqrt(2.0 / self.h) * fac[:, None] * np.sin(arg)
            out[0] = 0.0
            return out
        return np.sqrt(2.0 / self.h) * fac[:, None] * np.cos(arg)


def vertical_modes(h, n_z, parity) -> VerticalBasis:
    return VerticalBasis(h, n_z, parity)


# ----------------------------------------------------------------------
# assembled tensor basis


@dataclass
class TensorBasis:
    """Horizontal families x vertical modes with truncation (n, n_z)."""

    grid: DiscreteGrid
    n: int
    n_z: int
    stokes_vals: np.ndarray
    stokes_vecs: np.ndarray  # packed (2*nint, n)
    dirvec_vals: np.ndarray
    dirvec_vecs: np.ndarray  # packed (2*nint, n)
    neumann_vals: np.ndarray
    neumann_vecs: np.ndarray  # (nxc*nyc, n)
    vert_cos: VerticalBasis
    vert_sin: VerticalBasis

    def __post_init__(self):
        # canonical C layout: fresh LAPACK output is Fortran-ordered and
        # would take different BLAS paths than cache-loaded arrays,
        # breaking bit-for-bit reproducibility of runs
        for name in (
            "stokes_vals",
            "stokes_vecs",
            "dirvec_vals",
            "dirvec_vecs",
            "neumann_vals",
            "neumann_vecs",
        ):
            setattr(
                self, name, np.ascontiguousarray(getattr(self, name))
            )
        g = self.grid
        self._cos_nodes = self.vert_cos.values(g.z.nodes)
        self._sin_nodes = self.vert_sin.values(g.z.nodes)

    @property
    def n_velocity(self):
        return self.n * (self.n_z + 1)

    @property
    def n_temperature(self):
        return self.n * self.n_z

    def lambda_bar(self, m=None):
        m = self.n if m is None else m
        if not 1 <= m <= self.n:
            raise ConfigurationError(f"truncation level {m} outside 1..{self.n}")
        return max(
            self.stokes_vals[m - 1],
            self.dirvec_vals[m - 1],
            self.neumann_vals[m - 1],
        )

    def lambda_floor(self, m=None):
        """min over families of the m-th eigenvalue; the complement of the
        truncation P_m has all eigenvalues >= this value."""
        m = self.n if m is None else m
        return min(
            self.stokes_vals[m - 1],
            self.dirvec_vals[m - 1],
            self.neumann_vals[m - 1],
        )

    def validate(self):
        """Gram-identity and assembly invariants; raises on violation."""
        g = self.grid
        c = g.cell_xy
        for vecs, w, label in (
            (self.stokes_vecs, c, "stokes"),
            (self.dirvec_vecs, c, "dirichlet_vec"),
            (self.neumann_vecs, g.wxy.ravel(), "neumann"),
        ):
            gram = vecs.T @ (vecs * (w if np.isscalar(w) else w[:, None]))
            defect = np.abs(gram - np.eye(vecs.shape[1])).max()
            if defect > GRAM_TOL:
                raise NumericalError(f"{label} Gram defect {defect:.3e}")
        for vb in (self._cos_nodes, self._sin_nodes):
            gz = (vb * g.wz[None, :]) @ vb.T
            defect = np.abs(gz - np.eye(vb.shape[0])).max()
            if defect > GRAM_TOL:
                raise NumericalError(f"vertical Gram defect {defect:.3e}")
        means = g.integrate_z(self._cos_nodes[1:])
        if np.abs(means).max() > 1e-12:
            raise NumericalError("k>0 cosine modes are not mean-free")
        return True


def assemble_basis(grid: DiscreteGrid, n: int, n_z: int) -> TensorBasis:
    """Solve all three horizontal families and attach vertical modes."""
    if n_z >= grid.domain.Nz:
        raise ConfigurationError(
            f"vertical truncation n_z={n_z} needs Nz >= n_z+1 panels for "
            f"exact mode quadrature (Nz={grid.domain.Nz})"
        )
    mu_hat, stok = eigensolve_stokes(grid, n)
    mu, dirv = eigensolve_dirichlet_vector(grid, n)
    lam, neu = eigensolve_neumann_scalar(grid, n)
    basis = TensorBasis(
        grid=grid,
        n=n,
        n_z=n_z,
        stokes_vals=mu_hat,
        stokes_vecs=stok,
        dirvec_vals=mu,
        dirvec_vecs=dirv,
        neumann_vals=lam,
        neumann_vecs=neu,
        vert_cos=vertical_modes(grid.domain.h, n_z, "cos"),
        vert_sin=vertical_modes(grid.domain.h, n_z, "sin"),
    )
    basis.validate()
    return basis


# ----------------------------------------------------------------------
# disk cache

_MAGIC = b"HSGS-BAS1"


def basis_cache_key(domain: CylinderDomain, n: int, n_z: int) -> str:
    payload = ",".join(
        f"{v!r}" for v in (*domain.key_tuple(), n, n_z, OPERATOR_FLAVOR)
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def _write_array(f, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    f.write(struct.pack("<q", arr.ndim))
    for d in arr.shape:
        f.write(struct.pack("<q", d))
    f.write(arr.tobytes())


def _read_array(f):
    (ndim,) = struct.unpack("<q", f.read(8))
    shape = tuple(struct.unpack("<q", f.read(8))[0] for _ in range(ndim))
    count = int(np.prod(shape)) if shape else 1
    data = np.frombuffer(f.read(8 * count), dtype="<f8")
    return data.reshape(shape).copy()


def save_basis(path, basis: TensorBasis):
    d = basis.grid.domain
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<3d", d.Lx, d.Ly, d.h))
    buf.write(struct.pack("<5q", d.Nx, d.Ny, d.Nz, basis.n, basis.n_z))
    flavor = hashlib.sha256(OPERATOR_FLAVOR.encode()).digest()[:8]
    buf.write(flavor)
    for vals, vecs in (
        (basis.stokes_vals, basis.stokes_vecs),
        (basis.dirvec_vals, basis.dirvec_vecs),
        (basis.neumann_vals, basis.neumann_vecs),
    ):
        _write_array(buf, vals)
        _write_array(buf, vecs)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(buf.getvalue())
    os.replace(tmp, path)


def load_basis(path, grid=None) -> TensorBasis:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise ConfigurationError(f"{path}: bad basis cache magic")
        Lx, Ly, h = struct.unpack("<3d", f.read(24))
        Nx, Ny, Nz, n, n_z = struct.unpack("<5q", f.read(40))
        flavor = f.read(8)
        if flavor != hashlib.sha256(OPERATOR_FLAVOR.encode()).digest()[:8]:
            raise ConfigurationError(f"{path}: operator flavor mismatch")
        domain = CylinderDomain(Lx, Ly, h, Nx, Ny, Nz)
        if grid is None:
            grid = build_grid(domain)
        elif grid.domain.key_tuple() != domain.key_tuple():
            raise ConfigurationError("basis cache does not match grid")
        arrays = [_read_array(f) for _ in range(6)]
    basis = TensorBasis(
        grid=grid,
        n=n,
        n_z=n_z,
        stokes_vals=arrays[0],
        stokes_vecs=arrays[1],
        dirvec_vals=arrays[2],
        dirvec_vecs=arrays[3],
        neumann_vals=arrays[4],
        neumann_vecs=arrays[5],
        vert_cos=vertical_modes(h, n_z, "cos"),
        vert_sin=vertical_modes(h, n_z, "sin"),
    )
    basis.validate()
    return basis


def default_cache_dir():
    return os.environ.get("HSGS_CACHE_DIR", ".hsgs_cache")


def get_basis(domain, n, n_z, cache_dir=None, grid=None):
    """Load the basis from cache or build and cache it."""
    cache_dir = cache_dir or default_cache_dir()
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(
        cache_dir, f"basis-{basis_cache_key(domain, n, n_z)}.bin"
    )
    if os.path.exists(path):
        return load_basis(path, grid=grid)
    grid = grid or build_grid(domain)
    basis = assemble_basis(grid, n, n_z)
    save_basis(path, basis)
    return basis
