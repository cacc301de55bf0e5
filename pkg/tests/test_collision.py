import math

import numpy as np
import pytest

from collisim import (
    CollisionSpec,
    DensityMatrix,
    Operator,
    ResourceCapError,
    Trajectory,
    ValidationError,
    annihilator,
    choi_of_collision,
    collide_once,
    collision_unitary,
    fock_dm,
    identity,
    product_bath,
    run_correlated,
    run_product,
    single_photon_bath,
    step_map_choi,
)
from collisim.bath import PRODUCT_STEP_DEPENDENT, BathSpec

H2 = Operator(np.zeros((2, 2), dtype=complex), (2,))
LOWER = annihilator(2)


def two_level_spec(g=None, gamma=None, dt=0.1, n_steps=1, d_anc=2, h=H2):
    return CollisionSpec(h_sys=h, coupling=LOWER, dt=dt, n_steps=n_steps,
                         d_anc=d_anc, g=g, gamma=gamma)


def random_density(rng, d):
    m = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    rho = m @ m.conj().T
    return DensityMatrix(Operator(rho / np.trace(rho), (d,)))


def random_spec(rng, d_anc):
    m = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2))
    h = Operator(m + m.conj().T, (2,))
    b = Operator(rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)), (2,))
    return CollisionSpec(h_sys=h, coupling=b, dt=float(rng.uniform(0.01, 0.3)),
                         n_steps=1, d_anc=d_anc, g=float(rng.uniform(0.1, 3.0)))


# ---------------------------------------------------------------------------
# spec invariants
# ---------------------------------------------------------------------------

def test_spec_rejects_bad_parameters():
    with pytest.raises(ValidationError):
        two_level_spec(g=1.0, dt=0.0)
    with pytest.raises(ValidationError):
        two_level_spec(g=1.0, d_anc=1)
    with pytest.raises(ValidationError):
        two_level_spec()  # neither g nor gamma
    with pytest.raises(ValidationError):
        two_level_spec(g=1.0, gamma=1.0)  # both


def test_rate_mode_coupling_and_rate():
    spec = two_level_spec(gamma=2.0, dt=0.5)
    assert spec.coupling_strength == math.sqrt(2.0 / 0.5)
    assert spec.rate == 2.0  # exact, no sqrt round trip
    raw = two_level_spec(g=3.0, dt=0.5)
    assert raw.rate == pytest.approx(4.5)


# ---------------------------------------------------------------------------
# collision unitary
# ---------------------------------------------------------------------------

def test_decoupled_limit_factorizes():
    h = Operator(np.array([[0.4, 0.1], [0.1, -0.4]], dtype=complex), (2,))
    spec = two_level_spec(g=0.0, dt=0.2, h=h)
    u = collision_unitary(spec)
    import scipy.linalg
    expected = np.kron(scipy.linalg.expm(-1j * h.data * 0.2), np.eye(2))
    assert np.max(np.abs(u.data - expected)) < 1e-12


def test_exchange_block_is_rabi_rotation():
    # on span{|e,0>, |g,1>} the collision acts as a rotation by g dt
    g, dt = 1.7, 0.3
    u = collision_unitary(two_level_spec(g=g, dt=dt))
    assert abs(u.data[1, 2] - (-1j) * math.sin(g * dt)) < 1e-12
    assert abs(u.data[2, 2] - math.cos(g * dt)) < 1e-12


@pytest.mark.parametrize("d_anc", [2, 3])
def test_collision_unitary_is_unitary(d_anc):
    rng = np.random.default_rng(d_anc)
    u = collision_unitary(random_spec(rng, d_anc))
    assert np.max(np.abs(u.data.conj().T @ u.data - np.eye(2 * d_anc))) < 1e-9


# ---------------------------------------------------------------------------
# single collision
# ---------------------------------------------------------------------------

def test_identity_collision_returns_input():
    rng = np.random.default_rng(3)
    rho = random_density(rng, 2)
    out = collide_once(rho, fock_dm(2, 0), identity(2, 2))
    assert np.max(np.abs(out.data - rho.data)) < 1e-14


def test_vacuum_collision_rabi_decay():
    g, dt = 1.7, 0.3
    u = collision_unitary(two_level_spec(g=g, dt=dt))
    out = collide_once(fock_dm(2, 1), fock_dm(2, 0), u)
    assert abs(out.data[1, 1].real - math.cos(g * dt) ** 2) < 1e-12


def test_collision_preserves_trace():
    rng = np.random.default_rng(4)
    for d_anc in (2, 3):
        spec = random_spec(rng, d_anc)
        u = collision_unitary(spec)
        out = collide_once(random_density(rng, 2), random_density(rng, d_anc), u)
        assert abs(np.trace(out.data) - 1.0) < 1e-12


def test_collide_once_rejects_dimension_mismatch():
    with pytest.raises(ValidationError):
        collide_once(fock_dm(2, 0), fock_dm(3, 0), identity(2, 2))


# ---------------------------------------------------------------------------
# product-bath runs
# ---------------------------------------------------------------------------

def test_run_with_zero_steps_returns_initial_state():
    spec = two_level_spec(gamma=1.0, n_steps=0)
    bath = product_bath(fock_dm(2, 0), 1)
    traj = run_product(spec, bath, fock_dm(2, 1))
    assert len(traj) == 1
    assert np.array_equal(traj.states[0].data, fock_dm(2, 1).data)


def test_spontaneous_emission_endpoint():
    n = 1000
    spec = two_level_spec(gamma=1.0, dt=1.0 / n, n_steps=n)
    bath = product_bath(fock_dm(2, 0), n)
    number_op = LOWER.dag() @ LOWER
    traj = run_product(spec, bath, fock_dm(2, 1), {"excited_population": number_op})
    final = traj.observables["excited_population"][-1].real
    assert abs(final - math.exp(-1.0)) < 5e-3
    # trace holds along the whole run
    assert all(abs(np.trace(s.data) - 1.0) < 1e-10 for s in traj.states)


def test_homogeneous_run_satisfies_semigroup_composition():
    rng = np.random.default_rng(9)
    rho0 = random_density(rng, 2)
    bath = product_bath(fock_dm(2, 0), 100)
    for n, m in ((8, 3), (20, 10)):
        spec_n = two_level_spec(gamma=0.7, dt=0.02, n_steps=n)
        spec_m = two_level_spec(gamma=0.7, dt=0.02, n_steps=m)
        spec_rest = two_level_spec(gamma=0.7, dt=0.02, n_steps=n - m)
        direct = run_product(spec_n, bath, rho0).states[-1]
        mid = run_product(spec_m, bath, rho0).states[-1]
        composed = run_product(spec_rest, bath, mid).states[-1]
        assert np.max(np.abs(direct.data - composed.data)) < 1e-12


def test_run_product_rejects_short_bath():
    spec = two_level_spec(gamma=1.0, n_steps=5)
    with pytest.raises(ValidationError):
        run_product(spec, product_bath(fock_dm(2, 0), 3), fock_dm(2, 1))


# ---------------------------------------------------------------------------
# correlated-bath runs
# ---------------------------------------------------------------------------

def test_single_slot_envelope_matches_step_dependent_product():
    # photon localized on ancilla 1: correlated machinery must reproduce a
    # product run whose first ancilla is |1><1| and the rest vacuum
    n, g, dt = 4, 0.9, 0.25
    spec = two_level_spec(g=g, dt=dt, n_steps=n)
    corr = single_photon_bath([1.0, 0.0, 0.0, 0.0], n)
    etas = (fock_dm(2, 1),) + tuple(fock_dm(2, 0) for _ in range(n - 1))
    prod = BathSpec(kind=PRODUCT_STEP_DEPENDENT, d=2, n_steps=n, etas=etas)
    traj_corr = run_correlated(spec, corr, fock_dm(2, 0))
    traj_prod = run_product(spec, prod, fock_dm(2, 0))
    for a, b in zip(traj_corr.states, traj_prod.states):
        assert np.max(np.abs(a.data - b.data)) < 1e-12


def _embed_pair_unitary(u: np.ndarray, n_anc: int, target: int) -> np.ndarray:
    """Unitary on S (x) anc_1..anc_N acting as u on (S, anc_target)."""
    dims = [2] * (1 + n_anc)
    full = np.kron(u, np.eye(2 ** (n_anc - 1)))
    # full acts on ordering (S, target, others); permute into place
    order = [0, target] + [k for k in range(1, n_anc + 1) if k != target]
    perm = np.argsort(order)
    t = full.reshape(dims + dims)
    t = np.transpose(t, list(perm) + [p + len(dims) for p in perm])
    side = 2 ** (1 + n_anc)
    return t.reshape(side, side)


def test_per_step_traceout_matches_no_discard_evolution():
    # evolve the full joint state without intermediate trace-outs and
    # compare the final reduced state against the per-step-discard path
    g, dt = math.pi / 2 / 0.3, 0.3  # g dt = pi/2
    spec = two_level_spec(g=g, dt=dt, n_steps=2)
    bath = single_photon_bath([1.0, 1.0], 2)
    rho0 = fock_dm(2, 0)

    traj = run_correlated(spec, bath, rho0)

    u = collision_unitary(spec).data
    psi = bath.joint.amplitudes
    sigma = np.kron(rho0.data, np.outer(psi, psi.conj()))
    u1 = _embed_pair_unitary(u, 2, 1)
    u2 = _embed_pair_unitary(u, 2, 2)
    sigma = u2 @ u1 @ sigma @ u1.conj().T @ u2.conj().T
    t = sigma.reshape(2, 4, 2, 4)
    rho_final = np.einsum("abcb->ac", t)
    assert np.max(np.abs(traj.states[-1].data - rho_final)) < 1e-12


def test_correlated_run_rejects_cap_violation():
    n = 6
    spec = two_level_spec(gamma=1.0, dt=0.1, n_steps=n)
    bath = single_photon_bath([1.0] * n, n)
    with pytest.raises(ResourceCapError):
        run_correlated(spec, bath, fock_dm(2, 0), max_joint_dim=2**n)


def test_correlated_run_requires_matching_steps():
    spec = two_level_spec(gamma=1.0, dt=0.1, n_steps=3)
    bath = single_photon_bath([1.0, 1.0], 2)
    with pytest.raises(ValidationError):
        run_correlated(spec, bath, fock_dm(2, 0))


# ---------------------------------------------------------------------------
# complete positivity
# ---------------------------------------------------------------------------

def test_choi_of_identity_collision_is_maximally_entangled_projector():
    spec = two_level_spec(g=0.0, dt=0.1)
    choi = choi_of_collision(spec, fock_dm(2, 0))
    omega = np.zeros((4, 1), dtype=complex)
    omega[0] = omega[3] = 1.0  # |00> + |11>, unnormalized
    assert np.max(np.abs(choi.data - omega @ omega.conj().T)) < 1e-12
    eigs = np.linalg.eigvalsh(choi.data)
    assert np.sum(eigs > 1e-12) == 1


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_random_product_collisions_are_cptp(seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, int(rng.integers(2, 4)))
    eta = random_density(rng, spec.d_anc)
    choi = choi_of_collision(spec, eta)
    assert float(np.linalg.eigvalsh(choi.data)[0]) >= -1e-9
    marginal = np.einsum(choi.data.reshape(2, 2, 2, 2), [0, 1, 0, 3], [1, 3])
    assert np.max(np.abs(marginal - np.eye(2))) < 1e-10


# ---------------------------------------------------------------------------
# step-map tomography (memory witness)
# ---------------------------------------------------------------------------

# Frozen regression: two-step uniform single-photon envelope, g dt = pi/3,
# lowering-operator coupling, no free Hamiltonian.  The reconstructed
# second-step map is far from completely positive.
WITNESS_MIN_EIGENVALUE = -1.125


def witness_spec_and_bath():
    spec = two_level_spec(g=math.pi / 3, dt=1.0, n_steps=2)
    return spec, single_photon_bath([1.0, 1.0], 2)


def test_step_two_map_of_correlated_bath_is_not_cp():
    spec, bath = witness_spec_and_bath()
    choi = step_map_choi(spec, bath, 2)
    min_eig = float(np.linalg.eigvalsh(choi.data)[0])
    assert min_eig < -1e-6
    assert abs(min_eig - WITNESS_MIN_EIGENVALUE) < 1e-9


def test_step_one_map_of_correlated_bath_is_cp():
    # no prior system-bath correlation yet, so the first map must be CP
    spec, bath = witness_spec_and_bath()
    choi = step_map_choi(spec, bath, 1)
    assert float(np.linalg.eigvalsh(choi.data)[0]) >= -1e-9


def test_step_two_map_of_product_control_is_cp():
    spec, _ = witness_spec_and_bath()
    bath = product_bath(fock_dm(2, 0), 2)
    choi = step_map_choi(spec, bath, 2)
    assert float(np.linalg.eigvalsh(choi.data)[0]) >= -1e-9


def test_tomography_reproduces_single_collision_choi_for_product_bath():
    rng = np.random.default_rng(17)
    spec = random_spec(rng, 2)
    spec = CollisionSpec(h_sys=spec.h_sys, coupling=spec.coupling, dt=spec.dt,
                         n_steps=3, d_anc=2, g=spec.g)
    eta = random_density(rng, 2)
    bath = product_bath(eta, 3)
    direct = choi_of_collision(spec, eta)
    reconstructed = step_map_choi(spec, bath, 2)
    assert np.max(np.abs(direct.data - reconstructed.data)) < 1e-10


# ---------------------------------------------------------------------------
# trajectory invariants
# ---------------------------------------------------------------------------

def test_trajectory_requires_increasing_times():
    states = (fock_dm(2, 0), fock_dm(2, 0))
    with pytest.raises(ValidationError):
        Trajectory(np.array([0.0, 0.0]), states, {})
    with pytest.raises(ValidationError):
        Trajectory(np.array([0.0]), states, {})
