"""Harmonic and biharmonic diffusion inpainting, used as comparators."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import cg, splu

from .image import GrayImage
from .mask import InpaintingMask


class Diffusion(str, enum.Enum):
    HARMONIC = "harmonic"
    BIHARMONIC = "biharmonic"


class SolverError(RuntimeError):
    pass


def laplacian(dims) -> sp.csr_matrix:
    """Negative 5-point Laplacian with mirrored (Neumann) boundaries."""
    w, h = dims

    def path(n):
        if n == 1:
            return sp.csr_matrix((1, 1))
        main = np.full(n, 2.0)
        main[[0, -1]] = 1.0
        return sp.diags([-np.ones(n - 1), main, -np.ones(n - 1)], [-1, 0, 1])

    # row-major pixels: x varies fastest
    return (sp.kron(sp.identity(h), path(w)) + sp.kron(path(h), sp.identity(w))).tocsr()


def stencil_matrix(dims, order) -> sp.csr_matrix:
    lap = laplacian(dims)
    if Diffusion(order) is Diffusion.HARMONIC:
        return lap
    return (lap @ lap).tocsr()   # 13-point stencil in the interior


@dataclass
class DiffusionProblem:
    mask: InpaintingMask
    order: Diffusion = Diffusion.HARMONIC
    tol: float = 1e-8
    max_iter: int | None = None

    def __post_init__(self):
        self.order = Diffusion(self.order)
        if len(self.mask) == 0:
            raise ValueError("diffusion needs at least one known pixel")

    @cached_property
    def blocks(self):
        """(M_uu, M_uk, M_ku, unknown pixel indices)."""
        m = stencil_matrix(self.mask.dims, self.order)
        n = m.shape[0]
        unknown = np.setdiff1d(np.arange(n), self.mask.flat)
        mu = m[unknown]
        return (mu[:, unknown].tocsc(), mu[:, self.mask.flat].tocsr(),
                m[self.mask.flat][:, unknown].tocsr(), unknown)


def solve_diffusion(prob: DiffusionProblem) -> GrayImage:
    """Solve ``M_uu u = -M_uk g`` by conjugate gradients."""
    mask = prob.mask
    w, h = mask.dims
    m_uu, m_uk, _, unknown = prob.blocks
    u = np.empty(w * h)
    u[mask.flat] = mask.gray
    if unknown.size:
        rhs = -(m_uk @ mask.gray)
        # start from the mean so constant data converge in one step
        x0 = np.full(unknown.size, mask.gray.mean())
        maxiter = prob.max_iter or 20 * unknown.size
        x, info = cg(m_uu, rhs, x0=x0, rtol=prob.tol, atol=0.0, maxiter=maxiter)
        if info != 0:
            raise SolverError(f"{prob.order.value} CG did not converge in {maxiter} iterations")
        u[unknown] = x
    return GrayImage(u.reshape(h, w))


class DiffusionOperator:
    """Linear map from known gray values to the diffusion reconstruction.

    Products go through one sparse LU factorization of the reduced system,
    so ``A`` and ``A^T`` are applied exactly without forming ``A``.
    """

    def __init__(self, prob: DiffusionProblem):
        self.prob = prob
        m_uu, self.m_uk, self.m_ku, self.unknown = prob.blocks
        self.lu = splu(m_uu) if self.unknown.size else None
        w, h = prob.mask.dims
        self.dims = (w, h)
        self.shape = (w * h, len(prob.mask))

    def matvec(self, g):
        g = np.asarray(g, dtype=np.float64)
        u = np.empty(self.shape[0])
        u[self.prob.mask.flat] = g
        if self.lu is not None:
            u[self.unknown] = -self.lu.solve(self.m_uk @ g)
        return u

    def rmatvec(self, y):
        y = np.asarray(y, dtype=np.float64)
        out = y[self.prob.mask.flat].copy()
        if self.lu is not None:
            out -= self.m_ku @ self.lu.solve(y[self.unknown], trans="T")
        return out

    def apply(self, g) -> GrayImage:
        w, h = self.dims
        return GrayImage(self.matvec(g).reshape(h, w))
