"""Radial smoothing kernels with compact (or truncated) support.

Every kernel has the form ``W(eta) = rho / h**2 * phi(|eta|)`` with
``eta = (q - p) / h`` and ``W = 0`` for ``|eta| > 1``.  The anisotropic
variant replaces ``1/h`` by an SPD tensor ``G``: ``eta = G (q - p)`` and
the prefactor becomes ``rho * det(G)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

FAMILIES = ("gaussian", "matern0", "matern2", "lucy", "cubic", "wendland4")

DEFAULT_EPSILON = {"gaussian": 5.09, "matern0": 6.52, "matern2": 8.04}

# truncated kernels are positive on the unit circle, compact ones vanish there
_TRUNCATED = frozenset(DEFAULT_EPSILON)


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    epsilon: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown kernel {self.family!r}; choose from {', '.join(FAMILIES)}")
        if self.family in DEFAULT_EPSILON:
            eps = DEFAULT_EPSILON[self.family] if self.epsilon is None else float(self.epsilon)
            if not eps > 0:
                raise ValueError("epsilon must be positive")
            object.__setattr__(self, "epsilon", eps)
        elif self.epsilon is not None:
            raise ValueError(f"kernel {self.family!r} has no shape parameter")

    @property
    def truncated(self) -> bool:
        """True if the profile is cut off at |eta| = 1 with a nonzero value."""
        return self.family in _TRUNCATED

    @property
    def rho(self) -> float:
        eps = self.epsilon
        return {
            "gaussian": lambda: eps / math.pi,
            "matern0": lambda: eps ** 2 / (2 * math.pi),
            "matern2": lambda: eps ** 2 / (6 * math.pi),
            "lucy": lambda: 5 / math.pi,
            "cubic": lambda: 120 / (14 * math.pi),
            "wendland4": lambda: 3 / math.pi,
        }[self.family]()

    def phi(self, r):
        """Unnormalized radial profile, zero outside the unit disc."""
        r = np.asarray(r, dtype=np.float64)
        eps = self.epsilon
        inside = r <= 1.0
        rc = np.where(inside, r, 1.0)
        if self.family == "gaussian":
            v = np.exp(-eps * rc * rc)
        elif self.family == "matern0":
            v = np.exp(-eps * rc)
        elif self.family == "matern2":
            v = (1 + eps * rc) * np.exp(-eps * rc)
        elif self.family == "lucy":
            v = (1 + 3 * rc) * (1 - rc) ** 3
        elif self.family == "cubic":
            v = np.where(rc <= 0.5,
                         2 / 3 - 4 * rc ** 2 + 4 * rc ** 3,
                         (2 - 2 * rc) ** 3 / 6)
        else:
            v = (35 * rc * rc + 18 * rc + 3) * (1 - rc) ** 6
        return np.where(inside, v, 0.0)

    def profile(self, r):
        """``rho * phi(r)``; the kernel value for unit smoothing length."""
        return self.rho * self.phi(r)

    def positive(self, r):
        """Mask of normalized radii at which the kernel is strictly positive."""
        r = np.asarray(r)
        return r <= 1.0 if self.truncated else r < 1.0


def parse_kernel(name: str, epsilon: float | None = None) -> KernelSpec:
    aliases = {"matern": "matern0", "wendland": "wendland4", "cubic_spline": "cubic"}
    return KernelSpec(aliases.get(name, name), epsilon)


def eval_iso(spec: KernelSpec, diff, h: float):
    """Kernel value for offset(s) ``diff = q - p`` (shape (..., 2)) and length ``h``."""
    if not h > 0:
        raise ValueError(f"smoothing length must be positive, got {h}")
    diff = np.asarray(diff, dtype=np.float64)
    r = np.hypot(diff[..., 0], diff[..., 1]) / h
    return spec.profile(r) / (h * h)


def check_tensor(g) -> np.ndarray:
    g = np.asarray(g, dtype=np.float64)
    if g.shape != (2, 2):
        raise ValueError(f"tensor must be 2x2, got shape {g.shape}")
    if abs(g[0, 1] - g[1, 0]) > 1e-12 * max(1.0, np.abs(g).max()):
        raise ValueError("tensor is not symmetric")
    if np.linalg.eigvalsh(g).min() <= 0:
        raise ValueError("tensor is not positive definite")
    return g


def eval_aniso(spec: KernelSpec, diff, g):
    """Kernel value with elliptical support ``|G diff| <= 1``."""
    g = check_tensor(g)
    diff = np.asarray(diff, dtype=np.float64)
    eta = diff @ g.T
    r = np.hypot(eta[..., 0], eta[..., 1])
    return spec.profile(r) * np.linalg.det(g)


def unity_check(spec: KernelSpec, h: float, cells: int = 400) -> float:
    """Midpoint-rule integral of the kernel over its support square."""
    if not h > 0:
        raise ValueError("smoothing length must be positive")
    cells = max(int(cells), 400)
    step = 2 * h / cells
    c = -h + step * (np.arange(cells) + 0.5)
    x, y = np.meshgrid(c, c)
    return float(eval_iso(spec, np.stack([x, y], axis=-1), h).sum() * step * step)


def truncated_mass(spec: KernelSpec) -> float:
    """Closed-form integral over the unit disc (1 minus the cut-off tail)."""
    eps = spec.epsilon
    if spec.family == "gaussian":
        return 1 - math.exp(-eps)
    if spec.family == "matern0":
        return 1 - math.exp(-eps) * (1 + eps)
    if spec.family == "matern2":
        return 1 - math.exp(-eps) * (eps * eps + 3 * eps + 3) / 3
    return 1.0
