"""
Kernel Families and Sampled Kernel Vectors

Defines the analytic kernels G(s, x) linking a parameter location x to an
observation at sample location s, and assembles the sampled vectors
g(x) = [G(s_j, x)]_j and their normalized versions.

Library users who need a kernel outside the built-in families can pass any
object satisfying the ``KernelFunction`` protocol (an ``evaluate`` method
and, for refinement, an ``x_derivative`` method) to the assembly and
refinement functions.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional, Protocol, Sequence, Union

import numpy as np

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, Sequence, complex, float]


class KernelSingularityError(ValueError):
    """Kernel evaluated at a singular (s, x) pair."""


class KernelFunction(Protocol):
    """Extension point: anything with a family name and vectorized evaluate()."""

    family: str

    def evaluate(self, s: ArrayLike, x: ArrayLike) -> np.ndarray:
        ...


@dataclass(frozen=True)
class Kernel:
    """
    One of the built-in kernel families with its parameters.

    Families:
        cauchy:     1 / (s - x)
        power:      x^s = exp(s Log x), principal branch (cut along x <= 0)
        fourier:    exp(pi i s x)
        laplace:    x exp(-s x)
        lorentzian: 1 / (1 + gamma (s - x)^2), gamma > 0
    """

    family: str
    gamma: Optional[float] = None

    FAMILIES = ("cauchy", "power", "fourier", "laplace", "lorentzian")

    def __post_init__(self):
        if self.family not in self.FAMILIES:
            raise ValueError(f"Unsupported kernel family: {self.family}. Use {list(self.FAMILIES)}")
        if self.family == "lorentzian":
            if self.gamma is None or not self.gamma > 0:
                raise ValueError(f"lorentzian kernel needs gamma > 0, got {self.gamma}")
        elif self.gamma is not None:
            raise ValueError(f"{self.family} kernel takes no gamma parameter")

    def evaluate(self, s: ArrayLike, x: ArrayLike) -> np.ndarray:
        """Vectorized G(s, x) with numpy broadcasting."""
        s = np.asarray(s, dtype=np.complex128)
        x = np.asarray(x, dtype=np.complex128)
        singular = self.singular_mask(s, x)
        if np.any(singular):
            s_b, x_b = np.broadcast_arrays(s, x)
            idx = np.argwhere(singular)[0]
            pair = (complex(s_b[tuple(idx)]), complex(x_b[tuple(idx)]))
            raise KernelSingularityError(f"{self.family} kernel is singular at (s, x) = {pair}")
        with np.errstate(divide="ignore", invalid="ignore"):
            values = _EVALUATORS[self.family](self, s, x)
        return values

    def singular_mask(self, s: np.ndarray, x: np.ndarray) -> np.ndarray:
        """True where G(s, x) is not defined."""
        if self.family == "cauchy":
            return np.broadcast_to(s == x, np.broadcast(s, x).shape)
        if self.family == "lorentzian":
            return np.broadcast_to(1.0 + self.gamma * (s - x) ** 2 == 0, np.broadcast(s, x).shape)
        if self.family == "power":
            return np.broadcast_to((x == 0) & (s.real <= 0) & (s != 0), np.broadcast(s, x).shape)
        return np.zeros(np.broadcast(s, x).shape, dtype=bool)

    def to_dict(self) -> Dict:
        data = {"family": self.family}
        if self.gamma is not None:
            data["gamma"] = self.gamma
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "Kernel":
        return cls(family=data["family"], gamma=data.get("gamma"))


def _power(k: Kernel, s: np.ndarray, x: np.ndarray) -> np.ndarray:
    # 0^s is 1 for s == 0 and 0 for Re s > 0; other singular cases are rejected earlier
    s_b, x_b = np.broadcast_arrays(s, x)
    out = np.empty(s_b.shape, dtype=np.complex128)
    zero = x_b == 0
    out[~zero] = np.exp(s_b[~zero] * np.log(x_b[~zero]))
    out[zero] = np.where(s_b[zero] == 0, 1.0, 0.0)
    return out


_EVALUATORS = {
    "cauchy": lambda k, s, x: 1.0 / (s - x),
    "power": _power,
    "fourier": lambda k, s, x: np.exp(1j * np.pi * s * x),
    "laplace": lambda k, s, x: x * np.exp(-s * x),
    "lorentzian": lambda k, s, x: 1.0 / (1.0 + k.gamma * (s - x) ** 2),
}


@dataclass(frozen=True)
class SampleSet:
    """The n_s unstructured complex sample locations {s_j}."""

    locations: np.ndarray

    def __post_init__(self):
        locs = np.atleast_1d(np.asarray(self.locations, dtype=np.complex128))
        if locs.ndim != 1 or locs.size < 1:
            raise ValueError("a sample set needs at least one location")
        if not np.all(np.isfinite(locs)):
            raise ValueError("sample locations must be finite")
        locs.setflags(write=False)
        object.__setattr__(self, "locations", locs)

    @property
    def n_s(self) -> int:
        return int(self.locations.size)

    def __len__(self) -> int:
        return self.n_s


def eval_kernel(k: KernelFunction, s: complex, x: complex) -> complex:
    """Single kernel value G(s, x)."""
    return complex(k.evaluate(complex(s), complex(x)))


def assemble_vector(k: KernelFunction, S: SampleSet, x: complex) -> np.ndarray:
    """g(x) = [G(s_j, x)]_j, length n_s."""
    return np.asarray(k.evaluate(S.locations, complex(x)), dtype=np.complex128)


def assemble_matrix(k: KernelFunction, S: SampleSet, xs: ArrayLike) -> np.ndarray:
    """Columns g(x_k) for each x_k; shape n_s x len(xs)."""
    xs = np.atleast_1d(np.asarray(xs, dtype=np.complex128))
    return np.asarray(k.evaluate(S.locations[:, None], xs[None, :]), dtype=np.complex128).reshape(S.n_s, xs.size)


def normalize_columns(G: np.ndarray, where: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Scale each column to unit Euclidean norm.

    Raises:
        ValueError: if a column is zero (the kernel is degenerate there).
    """
    norms = np.linalg.norm(G, axis=0)
    bad = np.flatnonzero(~(norms > 0))
    if bad.size:
        at = where[bad[0]] if where is not None else bad[0]
        raise ValueError(f"kernel vector vanishes at x = {at}; cannot normalize")
    return G / norms


def assemble_normalized(k: KernelFunction, S: SampleSet, x: complex) -> np.ndarray:
    """g(x) / ||g(x)||."""
    g = assemble_vector(k, S, x)
    return normalize_columns(g[:, None], np.array([x]))[:, 0]
