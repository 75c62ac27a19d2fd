"""Cylinder geometry and the discrete operator set on its tensor grid.

The horizontal cross-section G = (0,Lx) x (0,Ly) is discretised on the
closed vertex grid (Nx+1) x (Ny+1) with trapezoid quadrature weights; the
vertical interval (-h, 0) on Nz+1 closed nodes, again with trapezoid
weights.  Velocity-type fields carry homogeneous Dirichlet values on the
lateral boundary (stored as explicit zeros), temperature-type fields are
free there.

Operator conventions
--------------------
* ``D`` (per axis) is the generic first derivative: 2nd-order centered in
  the interior, 2nd-order one-sided at the two end nodes.
* The paired divergence is the *weighted adjoint* ``-W^-1 D^T W``, so the
  summation-by-parts identity <D f, g>_W = -<f, div g>_W holds exactly by
  construction, which is what the skew-symmetric advection and the
  projector algebra rely on.
* The Dirichlet Laplacian is the compact second difference on interior
  nodes (boundary rows zero); the Neumann Laplacian carries the standard
  half-weight closure, which keeps it self-adjoint under the trapezoid
  inner product and makes discrete cosines exact eigenvectors.

The 2D divergence matrix of velocity fields (centered interior rows plus
one-sided rows on the boundary nodes) defines the discrete
divergence-free subspace; the Leray projection is the literal orthogonal
projection onto its null space, so projected fields have divergence at
round-off level rather than at truncation level.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, NumericalError

_MIN_CELLS = 4


def apply_along(mat, f, axis):
    """Apply a small dense matrix along one axis of an nd array."""
    moved = np.moveaxis(f, axis, 0)
    out = np.tensordot(mat, moved, axes=(1, 0))
    return np.moveaxis(out, 0, axis)


@dataclass(frozen=True)
class CylinderDomain:
    """Geometry M = G x (-h, 0) with G = (0,Lx) x (0,Ly)."""

    Lx: float
    Ly: float
    h: float
    Nx: int
    Ny: int
    Nz: int

    def __post_init__(self):
        if min(self.Lx, self.Ly, self.h) <= 0:
            raise ConfigurationError("Lx, Ly, h must be strictly positive")
        if min(self.Nx, self.Ny, self.Nz) < _MIN_CELLS:
            raise ConfigurationError(
                f"grid too small: need Nx, Ny, Nz >= {_MIN_CELLS}"
            )

    def key_tuple(self):
        return (self.Lx, self.Ly, self.h, self.Nx, self.Ny, self.Nz)


class Axis:
    """Closed 1-D grid with trapezoid weights and difference operators."""

    def __init__(self, length, n_panels, lo=0.0):
        self.length = float(length)
        self.n = int(n_panels)
        self.lo = float(lo)
        self.spacing = self.length / self.n
        self.nodes = self.lo + self.spacing * np.arange(self.n + 1)
        w = np.full(self.n + 1, self.spacing)
        w[0] = w[-1] = 0.5 * self.spacing
        self.weights = w
        self.D = self._derivative_matrix()
        # weighted adjoint pair: div := -W^-1 D^T W, exact SBP partner of D
        self.D_adj = -(self.D.T * w[None, :]) / w[:, None]
        self.lap_dir = self._dirichlet_laplacian()
        self.lap_neu = self._neumann_laplacian()

    def _derivative_matrix(self):
        n, h = self.n, self.spacing
        M = np.zeros((n + 1, n + 1))
        for i in range(1, n):
            M[i, i - 1] = -0.5 / h
            M[i, i + 1] = 0.5 / h
        M[0, 0:3] = np.array([-1.5, 2.0, -0.5]) / h
        M[n, n - 2 : n + 1] = np.array([0.5, -2.0, 1.5]) / h
        return M

    def _dirichlet_laplacian(self):
        n, h = self.n, self.spacing
        M = np.zeros((n + 1, n + 1))
        for i in range(1, n):
            M[i, i - 1] = 1.0 / h**2
            M[i, i] = -2.0 / h**2
            M[i, i + 1] = 1.0 / h**2
        M[:, 0] = 0.0
        M[:, n] = 0.0
        M[0, :] = 0.0
        M[n, :] = 0.0
        return M

    def _neumann_laplacian(self):
        n, h = self.n, self.spacing
        M = np.zeros((n + 1, n + 1))
        for i in range(1, n):
            M[i, i - 1] = 1.0 / h**2
            M[i, i + 1] = 1.0 / h**2
        # half-weight closure rows; self-adjoint under the trapezoid weights
        M[0, 1] = 2.0 / h**2
        M[n, n - 1] = 2.0 / h**2
        # diagonal as the negative row sum: constants are annihilated
        # exactly in floating point, not just in exact arithmetic
        for i in range(n + 1):
            M[i, i] = -(M[i].sum())
        return M


class DiscreteGrid:
    """Tensor grid over M with the assembled discrete operators."""

    def __init__(self, domain: CylinderDomain):
        self.domain = domain
        self.x = Axis(domain.Lx, domain.Nx)
        self.y = Axis(domain.Ly, domain.Ny)
        self.z = Axis(domain.h, domain.Nz, lo=-domain.h)
        self.nxc = domain.Nx + 1
        self.nyc = domain.Ny + 1
        self.nzc = domain.Nz + 1
        self.wxy = np.multiply.outer(self.x.weights, self.y.weights)
        self.wz = self.z.weights
        self.cell_xy = self.x.spacing * self.y.spacing
        interior = np.zeros((self.nxc, self.nyc), dtype=bool)
        interior[1:-1, 1:-1] = True
        self.interior_mask = interior
        self.n_interior = int(interior.sum())
        self._div_mat = None
        self._leray_eig = None

    # -- quadrature ---------------------------------------------------

    def integrate_xy(self, f):
        """Trapezoid integral over G; f has leading shape (nxc, nyc, ...)."""
        return np.tensordot(self.wxy, f, axes=([0, 1], [0, 1]))

    def integrate_z(self, f):
        """Trapezoid integral over (-h, 0) along the last axis."""
        return f @ self.wz

    def inner_xy(self, f, g):
        return float(np.sum(self.wxy * f * g))

    def inner_m(self, f, g):
        """L2(M) inner product of scalar 3-D fields (nxc, nyc, nzc)."""
        return float(np.einsum("ij,k,ijk,ijk->", self.wxy, self.wz, f, g))

    def vertical_mean(self, f):
        """(1/h) integral over (-h,0); exact for stored trig modes."""
        return self.integrate_z(f) / self.domain.h

    # -- first derivatives --------------------------------------------

    def dx(self, f):
        return apply_along(self.x.D, f, 0)

    def dy(self, f):
        return apply_along(self.y.D, f, 1)

    def dz(self, f):
        return apply_along(self.z.D, f, -1)

    def grad_xy(self, f):
        return np.stack([self.dx(f), self.dy(f)])

    def div_xy(self, v):
        """Divergence built from the same Dx, Dy used everywhere else."""
        return self.dx(v[0]) + self.dy(v[1])

    def div_form_xy(self, v):
        """SBP-adjoint divergence, exact partner of grad_xy."""
        return apply_along(self.x.D_adj, v[0], 0) + apply_along(
            self.y.D_adj, v[1], 1
        )

    def div_form_z(self, f):
        return apply_along(self.z.D_adj, f, -1)

    # -- Laplacians ----------------------------------------------------

    def lap_dirichlet_xy(self, f):
        return apply_along(self.x.lap_dir, f, 0) + apply_along(
            self.y.lap_dir, f, 1
        )

    def lap_neumann_xy(self, f):
        return apply_along(self.x.lap_neu, f, 0) + apply_along(
            self.y.lap_neu, f, 1
        )

    # -- velocity dof packing -------------------------------------------

    def pack_velocity(self, v):
        """(2, nxc, nyc) field with zero boundary -> flat interior dofs."""
        return np.concatenate(
            [v[0][self.interior_mask], v[1][self.interior_mask]]
        )

    def unpack_velocity(self, u):
        v = np.zeros((2, self.nxc, self.nyc))
        n = self.n_interior
        v[0][self.interior_mask] = u[:n]
        v[1][self.interior_mask] = u[n:]
        return v

    # -- divergence matrix and Leray apparatus ---------------------------

    def divergence_matrix(self):
        """Sparse map from packed interior velocity dofs to closed scalars.

        Rows cover every closed node (one-sided on the boundary), so the
        constrained subspace also pins the boundary trace of the
        divergence; this is what keeps the diagnosed vertical velocity
        zero on the upper lid over the whole section.
        """
        if self._div_mat is None:
            Ix = sp.identity(self.nxc, format="csr")
            Iy = sp.identity(self.nyc, format="csr")
            Dx2 = sp.kron(sp.csr_matrix(self.x.D), Iy, format="csr")
            Dy2 = sp.kron(Ix, sp.csr_matrix(self.y.D), format="csr")
            cols = self.interior_mask.ravel()
            self._div_mat = sp.hstack(
                [Dx2[:, cols], Dy2[:, cols]], format="csr"
            )
        return self._div_mat

    def _leray_factors(self):
        if self._leray_eig is None:
            D = self.divergence_matrix()
            S = (D @ D.T).toarray()
            evals, evecs = np.linalg.eigh(S)
            cutoff = max(evals.max(), 1.0) * 1e-12
            inv = np.where(evals > cutoff, 1.0 / np.maximum(evals, cutoff), 0.0)
            self._leray_eig = (evals, evecs, inv)
        return self._leray_eig

    def apply_pinv_ddt(self, rhs):
        """(D D^T)^+ rhs via the cached eigendecomposition."""
        _, evecs, inv = self._leray_factors()
        return evecs @ (inv * (evecs.T @ rhs))

    def leray_smallest_singular_sq(self):
        """Smallest nonzero eigenvalue of D D^T; converts a divergence
        norm into a bound on the Leray-complement norm."""
        evals, _, _ = self._leray_factors()
        nz = evals[evals > evals.max() * 1e-12]
        return float(nz.min())

    def leray_decompose(self, v):
        """Split a horizontal vector field into P_G v and its complement.

        v: (2, nxc, nyc) with zero lateral boundary values.  Returns
        (v_div_free, v_residual, q) where v = v_div_free + v_residual,
        v_residual equals ``weighted_gradient(q)`` exactly (q carries the
        minimum-norm gauge of the pseudo-inverse, not a mean-zero shift),
        and the divergence of v_div_free vanishes to round-off.
        """
        D = self.divergence_matrix()
        u = self.pack_velocity(v)
        s = self.apply_pinv_ddt(D @ u)
        resid = D.T @ s
        proj = self.unpack_velocity(u - resid)
        residual = self.unpack_velocity(resid)
        q = -self.cell_xy * (s / self.wxy.ravel())
        q = q.reshape(self.nxc, self.nyc)
        return proj, residual, q

    def leray_project(self, v):
        return self.leray_decompose(v)[0]

    def weighted_gradient(self, q):
        """The SBP gradient paired with ``divergence_matrix`` rows.

        Satisfies <D u, q>_W = -<u, grad q>_W for interior-supported u.
        """
        D = self.divergence_matrix()
        g = -(D.T @ (self.wxy.ravel() * q.ravel())) / self.cell_xy
        return self.unpack_velocity(g)

    def check_sbp_adjointness(self, rng=None, samples=5):
        """Max defect of <grad f, g>_W + <f, div g>_W over random fields."""
        rng = rng or np.random.default_rng(0)
        worst = 0.0
        for _ in range(samples):
            f = rng.standard_normal((self.nxc, self.nyc))
            g = rng.standard_normal((2, self.nxc, self.nyc))
            lhs = self.inner_xy(self.dx(f), g[0]) + self.inner_xy(
                self.dy(f), g[1]
            )
            rhs = -self.inner_xy(f, self.div_form_xy(g))
            scale = max(1.0, abs(lhs))
            worst = max(worst, abs(lhs - rhs) / scale)
        return worst


def build_grid(domain: CylinderDomain) -> DiscreteGrid:
    """Construct the discrete grid; validates the domain invariants."""
    grid = DiscreteGrid(domain)
    defect = grid.check_sbp_adjointness()
    if defect > 1e-12:
        raise NumericalError(f"SBP adjointness defect {defect:.3e} > 1e-12")
    return grid
