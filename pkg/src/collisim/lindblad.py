"""Emergent continuous-time generators and the reference ME integrator.

The generator extracted from a collision specification consists of the
bath-induced Hamiltonian shift (the ancilla average of the interaction)
and jump operators built from interaction matrix elements in the ancilla
eigenbasis, each carrying the emergent rate g^2 dt.  A fixed-step RK4
integrator provides the independent continuous-time dynamics that the
discrete collision runs are checked against.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import qcore
from .collision import (
    RUN_PSD_TOL,
    CollisionSpec,
    Trajectory,
    _observable_series,
    interaction_operator,
)
from .errors import PropagationError, ValidationError
from .qcore import DensityMatrix, Operator

# Ancilla eigenvalue below which a branch contributes no jump operator;
# avoids 0 * inf noise from degenerate or rank-deficient ancilla states.
P_FLOOR = 1e-12

# Jump operators that vanish identically are dropped from the generator.
ZERO_JUMP_TOL = 1e-14

JumpList = tuple[tuple[Operator, float], ...]


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    """Effective Hamiltonian plus (jump operator, rate) pairs.

    A step-dependent generator additionally carries a per-step table of
    (h_eff, jumps) entries, piecewise constant over intervals of length
    ``step_duration``; the static fields then hold the first entry.
    """

    h_eff: Operator
    jumps: JumpList
    step_table: tuple[tuple[Operator, JumpList], ...] | None = None
    step_duration: float | None = None

    def __post_init__(self):
        entries = [(self.h_eff, self.jumps)]
        if self.step_table is not None:
            if self.step_duration is None or self.step_duration <= 0:
                raise ValidationError("step-dependent generator needs a positive step_duration")
            entries.extend(self.step_table)
        for h, jumps in entries:
            if not h.is_hermitian():
                raise ValidationError("effective Hamiltonian is not Hermitian")
            for op, rate in jumps:
                if rate < 0:
                    raise ValidationError(f"negative jump rate {rate}")
                if op.dims != h.dims:
                    raise ValidationError("jump operator on wrong space")

    def term_for_time(self, t: float) -> tuple[Operator, JumpList]:
        """Generator in force at time t (piecewise constant over the table)."""
        if self.step_table is None:
            return self.h_eff, self.jumps
        idx = min(int(t / self.step_duration), len(self.step_table) - 1)
        return self.step_table[idx]


def _fix_eigenvector_phases(vecs: np.ndarray) -> np.ndarray:
    """Rotate each column so its largest-magnitude entry is real positive."""
    out = np.array(vecs)
    for k in range(out.shape[1]):
        idx = int(np.argmax(np.abs(out[:, k])))
        pivot = out[idx, k]
        if abs(pivot) > 0:
            out[:, k] *= np.conj(pivot) / abs(pivot)
    return out


def _split_dims(v: Operator, eta: DensityMatrix) -> tuple[tuple[int, ...], tuple[int, ...]]:
    n_anc = len(eta.dims)
    if len(v.dims) <= n_anc or v.dims[-n_anc:] != eta.dims:
        raise ValidationError(
            f"interaction dims {v.dims} do not end with ancilla dims {eta.dims}"
        )
    return v.dims[:-n_anc], eta.dims


def effective_hamiltonian(v_int: Operator, eta: DensityMatrix) -> Operator:
    """Bath-induced Hamiltonian shift: ancilla average Tr_anc{V (I (x) eta)}."""
    s_dims, _ = _split_dims(v_int, eta)
    weighted = v_int.data @ np.kron(np.eye(math.prod(s_dims)), eta.data)
    h = qcore.ptrace_matrix(weighted, v_int.dims, keep=range(len(s_dims)))
    return Operator(h, s_dims)


def jump_operators(v_dimensionless: Operator, eta: DensityMatrix,
                   gamma: float) -> list[tuple[Operator, float]]:
    """Jump operators sqrt(p_j) <i|v|j> over the ancilla eigenbasis of eta.

    Branches with eigenvalue at or below P_FLOOR are skipped; identically
    vanishing operators are dropped.  Every emitted jump carries the rate
    ``gamma``.  Eigenvector phases are fixed deterministically, so for
    non-degenerate eta the result is reproducible; within degenerate
    blocks only the dissipator as a whole is basis-independent.
    """
    s_dims, a_dims = _split_dims(v_dimensionless, eta)
    d_s, d_a = math.prod(s_dims), math.prod(a_dims)
    p, vecs = np.linalg.eigh(eta.data)
    vecs = _fix_eigenvector_phases(vecs)
    v4 = v_dimensionless.data.reshape(d_s, d_a, d_s, d_a)
    jumps: list[tuple[Operator, float]] = []
    for j in range(d_a):
        if p[j] <= P_FLOOR:
            continue
        for i in range(d_a):
            mat = math.sqrt(p[j]) * np.einsum(
                "a,satb,b->st", vecs[:, i].conj(), v4, vecs[:, j]
            )
            if float(np.max(np.abs(mat))) < ZERO_JUMP_TOL:
                continue
            jumps.append((Operator(mat, s_dims), gamma))
    return jumps


def generator_from_collision(spec: CollisionSpec, eta: DensityMatrix) -> LindbladGenerator:
    """Emergent generator of the collision map against ancilla state eta."""
    v = interaction_operator(spec)
    g = spec.coupling_strength
    h_prime = effective_hamiltonian(g * v, eta)
    h_eff = spec.h_sys + h_prime
    # The second-order expansion behind the generator is first order in the
    # system Hamiltonian; warn when it is not small against the coupling.
    w0 = float(np.max(np.abs(np.linalg.eigvalsh(spec.h_sys.data))))
    if w0 * spec.dt > 0.1 * (g * math.sqrt(spec.dt)) ** 2:
        warnings.warn(
            f"system frequency scale {w0:.3g} is not small against the "
            f"coupling (g = {g:.3g}); the extracted generator may be inaccurate",
            stacklevel=2,
        )
    jumps = jump_operators(v, eta, spec.rate)
    return LindbladGenerator(h_eff=h_eff, jumps=tuple(jumps))


def _compile_term(h: Operator, jumps: JumpList):
    return (
        h.data,
        [(op.data, op.data.conj().T, op.data.conj().T @ op.data, rate) for op, rate in jumps],
    )


def _rhs(h: np.ndarray, compiled_jumps, m: np.ndarray) -> np.ndarray:
    out = -1j * (h @ m - m @ h)
    for l, l_dag, l_dag_l, rate in compiled_jumps:
        out += rate * (l @ m @ l_dag - 0.5 * (l_dag_l @ m + m @ l_dag_l))
    return out


def apply_generator(gen: LindbladGenerator, rho: DensityMatrix,
                    t: float | None = None) -> Operator:
    """Right-hand side -i[h,rho] + dissipator; traceless and Hermitian.

    For step-dependent generators, ``t`` selects the table entry in force
    (defaults to the static entry).
    """
    h, jumps = gen.term_for_time(t) if t is not None else (gen.h_eff, gen.jumps)
    if h.dims != rho.dims:
        raise ValidationError("generator and state act on different spaces")
    h_data, compiled = _compile_term(h, jumps)
    return Operator(_rhs(h_data, compiled, rho.data), rho.dims)


def integrate_me(gen: LindbladGenerator, rho0: DensityMatrix, t_final: float,
                 n_substeps: int,
                 observables: Mapping[str, Operator] | None = None) -> Trajectory:
    """Fixed-step classical RK4 integration of the master equation.

    A step-dependent generator is treated as piecewise constant and
    sampled at the midpoint of every substep.  Stored states are
    re-symmetrized before the structural checks; a PSD breach beyond the
    run tolerance aborts.
    """
    if n_substeps < 1:
        raise ValidationError("n_substeps must be >= 1")
    if t_final <= 0:
        raise ValidationError("t_final must be positive")
    if gen.h_eff.dims != rho0.dims:
        raise ValidationError("generator and state act on different spaces")

    h = t_final / n_substeps
    if gen.step_table is None:
        static = _compile_term(gen.h_eff, gen.jumps)
        pick = lambda _t: static
    else:
        compiled_table = [_compile_term(hh, jj) for hh, jj in gen.step_table]
        duration = gen.step_duration

        def pick(t_mid):
            return compiled_table[min(int(t_mid / duration), len(compiled_table) - 1)]

    rho = np.array(rho0.data)
    states = [rho0]
    for k in range(n_substeps):
        h_data, jumps = pick((k + 0.5) * h)
        k1 = _rhs(h_data, jumps, rho)
        k2 = _rhs(h_data, jumps, rho + 0.5 * h * k1)
        k3 = _rhs(h_data, jumps, rho + 0.5 * h * k2)
        k4 = _rhs(h_data, jumps, rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rho = 0.5 * (rho + rho.conj().T)
        try:
            states.append(DensityMatrix(Operator(rho, rho0.dims), psd_tol=RUN_PSD_TOL))
        except ValidationError as exc:
            raise PropagationError(
                f"ME state invariant breached at substep {k + 1}: {exc}", step=k + 1
            ) from exc
    times = np.arange(n_substeps + 1) * h
    return Trajectory(times, tuple(states), _observable_series(observables, states))
