"""Graded 1-d meshes and the discrete weighted forms.

Piecewise-linear elements with the coefficient sampled at element midpoints
(the assembly never evaluates a'(x) or touches a(0)), a lumped trapezoidal
mass, and an optional Dirichlet constraint at the degenerate endpoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadMeshParams, BcMismatch, ShapeMismatch
from .model import CoefficientSpec

DIRICHLET_LEFT = "dirichlet_left"
NATURAL_LEFT = "natural_left"


@dataclass(frozen=True)
class Mesh:
    """Nodes 0 = x_0 < ... < x_N = 1 with grading x_j = (j/N)^gamma."""

    nodes: np.ndarray
    grading_gamma: float
    N: int

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])


def default_gamma(mu_a: float) -> float:
    """Grading heuristic 2/(2 - mu_a), clamped to [1, 4]."""
    return float(np.clip(2.0 / (2.0 - mu_a), 1.0, 4.0))


def build_mesh(N: int, gamma: float = 1.0) -> Mesh:
    """Graded mesh of [0, 1] with N elements; gamma >= 1 clusters nodes at 0."""
    if int(N) != N or N < 2:
        raise BadMeshParams("need an integer element count N >= 2")
    if gamma < 1.0:
        raise BadMeshParams("grading exponent must be >= 1")
    N = int(N)
    nodes = (np.arange(N + 1, dtype=float) / N) ** gamma
    nodes[-1] = 1.0
    return Mesh(nodes=nodes, grading_gamma=float(gamma), N=N)


@dataclass(frozen=True)
class DiscreteOperators:
    """Lumped mass, midpoint-quadrature stiffness and boundary data.

    mass : diagonal weights (h_{j-1} + h_j)/2, strictly positive
    k_cell : per-element conductances a(m_i)/h_i; the stiffness tridiagonal is
        main_j = k_{j-1} + k_j, off_i = -k_i
    bc_kind : "dirichlet_left" iff the coefficient degenerates weakly
    """

    mass: np.ndarray
    k_cell: np.ndarray
    bc_kind: str
    a1: float
    mu_a: float
    mesh: Mesh

    @property
    def n_nodes(self) -> int:
        return self.mesh.N + 1

    @property
    def first_active(self) -> int:
        return 1 if self.bc_kind == DIRICHLET_LEFT else 0

    def stiffness_matvec(self, u: np.ndarray) -> np.ndarray:
        """K u on the full node set (the constrained node simply carries u=0)."""
        k = self.k_cell
        out = np.zeros_like(u)
        du = k * (u[1:] - u[:-1])
        out[:-1] -= du
        out[1:] += du
        return out

    def stiffness_quadform(self, u: np.ndarray, w: np.ndarray | None = None) -> float:
        """u^T K w (w defaults to u); equals sum_i k_i (du_i)(dw_i)."""
        if w is None:
            w = u
        return float(np.dot(self.k_cell * np.diff(u), np.diff(w)))

    def mass_quadform(self, v: np.ndarray, w: np.ndarray | None = None) -> float:
        if w is None:
            w = v
        return float(np.dot(self.mass * v, w))

    def stiffness_banded(self, start: int, shift: np.ndarray | None = None):
        """Symmetric banded form (rows [upper, main]) of K on nodes[start:],
        optionally with a diagonal shift added."""
        k = self.k_cell
        n = self.n_nodes - start
        main = np.zeros(n)
        main[:] = np.concatenate([k, [0.0]])[start:] + np.concatenate([[0.0], k])[start:]
        upper = np.zeros(n)
        upper[1:] = -k[start:]
        ab = np.vstack([upper, main])
        if shift is not None:
            ab[1] += shift
        return ab


def assemble_operators(spec: CoefficientSpec, mesh: Mesh,
                       bc_kind: str) -> DiscreteOperators:
    """Assemble mass/stiffness for the given coefficient and left boundary.

    The left condition is dictated by the degeneracy regime: Dirichlet for
    mu_a < 1, natural (the weighted flux term is simply absent) for
    mu_a >= 1.  Any other pairing raises BcMismatch.
    """
    if bc_kind not in (DIRICHLET_LEFT, NATURAL_LEFT):
        raise ValueError(f"unknown bc_kind {bc_kind!r}")
    weak = spec.mu_a < 1.0
    if weak != (bc_kind == DIRICHLET_LEFT):
        raise BcMismatch(
            f"bc {bc_kind!r} inconsistent with degeneracy index mu_a = {spec.mu_a:.6g}"
        )
    h = mesh.h
    a_mid = np.asarray(spec.a(mesh.midpoints), dtype=float)
    if np.any(a_mid <= 0.0):
        from .errors import NonPositive

        raise NonPositive("coefficient must be positive at element midpoints")
    mass = np.zeros(mesh.N + 1)
    mass[:-1] += 0.5 * h
    mass[1:] += 0.5 * h
    return DiscreteOperators(
        mass=mass, k_cell=a_mid / h, bc_kind=bc_kind, a1=spec.a_of_1,
        mu_a=spec.mu_a, mesh=mesh,
    )


def default_bc(spec: CoefficientSpec) -> str:
    return DIRICHLET_LEFT if spec.mu_a < 1.0 else NATURAL_LEFT


def weighted_norms(u: np.ndarray, v: np.ndarray, mesh: Mesh,
                   ops: DiscreteOperators, beta: float, a1: float) -> dict:
    """Quadratic parts of the state norm.

    Returns h1a_part = u^T K u (the weighted gradient energy), l2_part =
    v^T M v, and boundary_part = beta a(1) u(1)^2.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (mesh.N + 1,) or v.shape != (mesh.N + 1,):
        raise ShapeMismatch(
            f"expected vectors of length {mesh.N + 1}, got {u.shape} and {v.shape}"
        )
    return {
        "h1a_part": ops.stiffness_quadform(u),
        "l2_part": ops.mass_quadform(v),
        "boundary_part": beta * a1 * float(u[-1]) ** 2,
    }
