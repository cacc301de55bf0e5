"""Dense complex linear algebra for finite-dimensional quantum objects.

Everything here is a pure function of immutable values: operators and states
carry read-only numpy arrays plus an ordered list of subsystem dimensions, so
they can be shared freely across concurrent workers.
"""

from __future__ import annotations

import math
from dataclasses import InitVar, dataclass
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg

from .errors import ValidationError

# Structural tolerances for the state types.
HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = -1e-9
NORM_TOL = 1e-10


def _freeze(array: np.ndarray) -> np.ndarray:
    out = np.array(array, dtype=complex, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Operator:
    """Square complex matrix over an ordered list of subsystem dimensions.

    ``dims`` records the tensor factorization of the space the matrix acts
    on; its product must equal the matrix side.  Used uniformly for
    Hamiltonians, unitaries, coupling/jump operators and ladder operators.
    """

    data: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValidationError("dims must be a non-empty list of dimensions >= 1")
        data = _freeze(self.data)
        side = math.prod(dims)
        if data.ndim != 2 or data.shape != (side, side):
            raise ValidationError(
                f"matrix of shape {data.shape} incompatible with dims {dims}"
            )
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", dims)

    @property
    def side(self) -> int:
        return self.data.shape[0]

    def dag(self) -> "Operator":
        return Operator(self.data.conj().T, self.dims)

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def is_hermitian(self, tol: float = HERMITICITY_TOL) -> bool:
        return float(np.max(np.abs(self.data - self.data.conj().T))) <= tol

    def __add__(self, other: "Operator") -> "Operator":
        self._check_same_space(other)
        return Operator(self.data + other.data, self.dims)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_same_space(other)
        return Operator(self.data - other.data, self.dims)

    def __neg__(self) -> "Operator":
        return Operator(-self.data, self.dims)

    def __mul__(self, scalar: complex) -> "Operator":
        return Operator(self.data * scalar, self.dims)

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check_same_space(other)
        return Operator(self.data @ other.data, self.dims)

    def _check_same_space(self, other: "Operator") -> None:
        if self.dims != other.dims:
            raise ValidationError(
                f"operators act on different spaces: {self.dims} vs {other.dims}"
            )


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace, positive-semidefinite operator.

    Validated on construction; ``psd_tol`` can be loosened by propagation
    code that tolerates accumulated round-off (see collision module).
    """

    op: Operator
    psd_tol: InitVar[float] = PSD_TOL

    def __post_init__(self, psd_tol: float):
        data = self.op.data
        herm = float(np.max(np.abs(data - data.conj().T)))
        if herm > HERMITICITY_TOL:
            raise ValidationError(f"not Hermitian: max deviation {herm:.3e}")
        tr = complex(np.trace(data))
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValidationError(f"trace {tr} deviates from 1 beyond {TRACE_TOL}")
        min_eig = float(np.linalg.eigvalsh(data)[0])
        if min_eig < psd_tol:
            raise ValidationError(f"not PSD: min eigenvalue {min_eig:.3e} < {psd_tol}")

    @property
    def data(self) -> np.ndarray:
        return self.op.data

    @property
    def dims(self) -> tuple[int, ...]:
        return self.op.dims

    @property
    def side(self) -> int:
        return self.op.side


@dataclass(frozen=True, eq=False)
class PureState:
    """Normalized complex amplitude vector over subsystem dimensions."""

    amplitudes: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise ValidationError("dims must be a non-empty list of dimensions >= 1")
        amps = _freeze(np.asarray(self.amplitudes).reshape(-1))
        if amps.shape[0] != math.prod(dims):
            raise ValidationError(
                f"amplitude vector of length {amps.shape[0]} incompatible with dims {dims}"
            )
        norm_sq = float(np.vdot(amps, amps).real)
        if abs(norm_sq - 1.0) > NORM_TOL:
            raise ValidationError(f"squared norm {norm_sq} deviates from 1")
        object.__setattr__(self, "amplitudes", amps)
        object.__setattr__(self, "dims", dims)

    def density_matrix(self) -> DensityMatrix:
        return DensityMatrix(Operator(np.outer(self.amplitudes, self.amplitudes.conj()), self.dims))


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def identity(*dims: int) -> Operator:
    return Operator(np.eye(math.prod(dims), dtype=complex), tuple(dims))


def fock(d: int, k: int) -> PureState:
    """Number state |k> in a d-dimensional truncation."""
    if not 0 <= k < d:
        raise ValidationError(f"Fock index {k} outside truncation {d}")
    amps = np.zeros(d, dtype=complex)
    amps[k] = 1.0
    return PureState(amps, (d,))


def fock_dm(d: int, k: int) -> DensityMatrix:
    return fock(d, k).density_matrix()


def annihilator(d: int) -> Operator:
    """Truncated bosonic lowering operator: a|k> = sqrt(k)|k-1>, a|0> = 0."""
    if d < 2:
        raise ValidationError(f"truncation dimension must be >= 2, got {d}")
    return Operator(np.diag(np.sqrt(np.arange(1, d, dtype=float)), k=1), (d,))


def displacement(xi: complex, d: int) -> Operator:
    """Unitary displacement exp(xi a^dag - conj(xi) a) at truncation d."""
    a = annihilator(d)
    return expm(xi * a.dag() - np.conj(xi) * a, 1.0)


def truncation_fidelity(xi: complex, d: int) -> float:
    """Weight of an ideal coherent state of amplitude xi lost above level d-1.

    |1 - <psi|psi>_truncated| with the exact Poisson photon-number weights;
    small values certify that displacement(xi, d) is a faithful coherent
    state preparation.
    """
    n_mean = abs(xi) ** 2
    kept = sum(n_mean**k / math.factorial(k) for k in range(d))
    return abs(1.0 - math.exp(-n_mean) * kept)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def tensor(a: Operator, b: Operator) -> Operator:
    """Kronecker product; dims concatenate."""
    return Operator(np.kron(a.data, b.data), a.dims + b.dims)


def tensor_all(ops: Iterable[Operator]) -> Operator:
    """Left-fold tensor product (fixed evaluation order for reproducibility)."""
    ops = list(ops)
    if not ops:
        raise ValidationError("tensor_all needs at least one operator")
    return reduce(tensor, ops)


def ptrace_matrix(data: np.ndarray, dims: Sequence[int], keep: Sequence[int]) -> np.ndarray:
    """Partial trace of a raw square matrix over the subsystems not in keep."""
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= n for k in keep):
        raise ValidationError(f"keep indices {keep} invalid for {n} subsystems")
    t = data.reshape(dims + dims)
    row = list(range(n))
    col = [i if i not in keep else n + i for i in range(n)]
    out = [i for i in keep] + [n + i for i in keep]
    return np.einsum(t, row + col, out).reshape(
        math.prod(dims[i] for i in keep), -1
    )


def partial_trace(rho: DensityMatrix, keep: Sequence[int]) -> DensityMatrix:
    """Reduced state on the subsystems listed in keep (original order)."""
    data = ptrace_matrix(rho.data, rho.dims, keep)
    kept_dims = tuple(rho.dims[i] for i in sorted(set(int(k) for k in keep)))
    return DensityMatrix(Operator(data, kept_dims))


def partial_trace_operator(a: Operator, keep: Sequence[int]) -> Operator:
    data = ptrace_matrix(a.data, a.dims, keep)
    kept_dims = tuple(a.dims[i] for i in sorted(set(int(k) for k in keep)))
    return Operator(data, kept_dims)


def expm(a: Operator, scale: complex) -> Operator:
    """Matrix exponential exp(scale * a) (scaling-and-squaring Pade kernel)."""
    if scale == 0:
        return identity(*a.dims)
    return Operator(scipy.linalg.expm(scale * a.data), a.dims)


def expect(observable: Operator, rho: DensityMatrix) -> complex:
    return complex(np.trace(observable.data @ rho.data))


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    """(1/2)||a - b||_1 via the eigenvalues of the Hermitian difference."""
    eigs = np.linalg.eigvalsh(a.data - b.data)
    return 0.5 * float(np.sum(np.abs(eigs)))
