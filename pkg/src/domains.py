"""
Reference Domains, Probe Grids and Domain Maps

The eigenmatrix is always built on a reference domain (the closed unit
disk or the interval [-1, 1]). An application domain X is the image of the
reference domain under a map phi; only identity and affine maps are
provided.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Union

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReferenceDomain:
    """Closed unit disk ('disk') or the interval [-1, 1] ('interval')."""

    kind: str

    KINDS = ("disk", "interval")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"Unsupported domain: {self.kind}. Use {list(self.KINDS)}")

    @property
    def is_real(self) -> bool:
        return self.kind == "interval"

    def contains(self, t: Union[complex, np.ndarray], tol: float = 1e-12) -> np.ndarray:
        t = np.asarray(t, dtype=np.complex128)
        if self.kind == "disk":
            return np.abs(t) <= 1.0 + tol
        return (np.abs(t.imag) <= tol) & (np.abs(t.real) <= 1.0 + tol)

    def far_outside(self, t: Union[complex, np.ndarray], limit: float = 2.0) -> np.ndarray:
        """Eigenvalue estimates treated as spurious rather than projected."""
        t = np.asarray(t, dtype=np.complex128)
        if self.kind == "disk":
            return np.abs(t) > limit
        return np.abs(t.real) > limit


@dataclass(frozen=True)
class DomainMap:
    """phi(t) = t (identity) or phi(t) = center + scale * t (affine)."""

    kind: str = "identity"
    center: complex = 0.0
    scale: complex = 1.0

    KINDS = ("identity", "affine")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"Unsupported domain map: {self.kind}. Use {list(self.KINDS)}")
        object.__setattr__(self, "center", complex(self.center))
        object.__setattr__(self, "scale", complex(self.scale))
        if self.scale == 0:
            raise ValueError("domain map scale must be nonzero")
        if self.kind == "identity" and (self.center != 0 or self.scale != 1):
            raise ValueError("identity map takes no center or scale")

    @classmethod
    def from_interval(cls, low: float, high: float) -> "DomainMap":
        """Affine map sending [-1, 1] onto [low, high]."""
        if not high > low:
            raise ValueError(f"interval needs low < high, got [{low}, {high}]")
        return cls(kind="affine", center=(low + high) / 2.0, scale=(high - low) / 2.0)

    @property
    def is_real(self) -> bool:
        return self.center.imag == 0 and self.scale.imag == 0

    def to_dict(self) -> Dict:
        if self.kind == "identity":
            return {"kind": "identity"}
        return {
            "kind": "affine",
            "center": [self.center.real, self.center.imag],
            "scale": [self.scale.real, self.scale.imag],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "DomainMap":
        if data.get("kind", "identity") == "identity":
            return cls()
        return cls(kind="affine", center=_complex_from(data["center"]), scale=_complex_from(data["scale"]))


@dataclass(frozen=True)
class ProbeGrid:
    """The probe nodes {a_t} in reference coordinates."""

    nodes: np.ndarray
    kind: str

    @property
    def n_a(self) -> int:
        return int(self.nodes.size)


def _complex_from(value) -> complex:
    if isinstance(value, (list, tuple)):
        return complex(value[0], value[1])
    return complex(value)


def probe_grid(d: ReferenceDomain, n_a: int) -> ProbeGrid:
    """
    Probe nodes for the eigen-relation.

    disk: a_t = exp(2 pi i t / n_a), t = 0..n_a-1 (equispaced on the unit circle)
    interval: a_t = cos((2t - 1) pi / (2 n_a)), t = 1..n_a (Chebyshev points of the first kind)
    """
    if n_a < 1:
        raise ValueError(f"probe grid needs n_a >= 1, got {n_a}")
    if d.kind == "disk":
        nodes = np.exp(2j * np.pi * np.arange(n_a) / n_a)
    else:
        t = np.arange(1, n_a + 1)
        nodes = np.cos((2 * t - 1) * np.pi / (2 * n_a)).astype(np.complex128)
    nodes.setflags(write=False)
    return ProbeGrid(nodes=nodes, kind=d.kind)


def map_forward(m: DomainMap, t):
    """phi(t)."""
    if m.kind == "identity":
        return t
    return m.center + m.scale * np.asarray(t) if np.ndim(t) else m.center + m.scale * t


def map_inverse(m: DomainMap, x):
    """phi^{-1}(x)."""
    if m.kind == "identity":
        return x
    return (np.asarray(x) - m.center) / m.scale if np.ndim(x) else (x - m.center) / m.scale


def project_to_domain(d: ReferenceDomain, t):
    """
    Nearest point of the reference domain.

    disk: radial projection of points with |t| > 1; interval: clamp of Re t.
    """
    t = np.asarray(t, dtype=np.complex128)
    if d.kind == "disk":
        r = np.abs(t)
        out = np.where(r > 1.0, t / np.where(r > 0, r, 1.0), t)
    else:
        out = np.clip(t.real, -1.0, 1.0).astype(np.complex128)
    return complex(out) if out.ndim == 0 else out


def domain_diameter(d: ReferenceDomain, m: DomainMap) -> float:
    """Diameter of X = phi(reference domain)."""
    scale = 1.0 if m.kind == "identity" else abs(m.scale)
    return 2.0 * scale
