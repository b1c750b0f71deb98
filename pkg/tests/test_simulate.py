import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from friction_walk.constants import closed_form_constants
from friction_walk.errors import DomainError, OutOfRange, ResourceLimit, ZeroMomentum
from friction_walk.kernel import PhysParams, energy_residual, epsilon, scattering_rate
from friction_walk.rng import RandomStream
from friction_walk.simulate import (
    jump_count,
    rescaled_path,
    run_ensemble,
    simulate_short,
    simulate_skeleton,
    simulate_trajectory,
    skeleton_from_draws,
)

P = PhysParams()
K0 = np.array([1.0, 0.0, 0.0])


def test_empty_chain():
    sk = simulate_skeleton(P, K0, 0, RandomStream(1))
    assert sk.n == 0
    assert np.array_equal(sk.K, [K0])
    assert np.array_equal(sk.T, [0.0])
    assert not sk.absorbed


def test_zero_and_negative_inputs():
    with pytest.raises(ZeroMomentum):
        simulate_skeleton(P, (0, 0, 0), 3, RandomStream(1))
    with pytest.raises(DomainError):
        simulate_skeleton(P, K0, -1, RandomStream(1))
    with pytest.raises(ZeroMomentum):
        simulate_trajectory(P, (0, 0, 0), (0, 0, 0), 1.0, RandomStream(1))
    for t_max in (0.0, -1.0, math.inf, math.nan):
        with pytest.raises(DomainError):
            simulate_trajectory(P, (0, 0, 0), K0, t_max, RandomStream(1))


def test_no_contraction_ray():
    k0 = np.array([0.0, 3.0, 4.0])
    n = 20
    U = np.tile(k0 / 5.0, (n, 1))
    lam = RandomStream(3).exponentials(n)
    sk = skeleton_from_draws(PhysParams(1.0, 2.0), k0, U, lam)
    assert np.allclose(sk.K, k0, rtol=1e-15, atol=0)
    assert sk.T[-1] == pytest.approx(lam.sum() / scattering_rate(sk.params, k0), rel=1e-15)


def test_mean_log_contraction():
    n = 10**6
    sk = simulate_skeleton(P, K0, n, RandomStream(11))
    D = sk.D
    se = D.std(ddof=1) / math.sqrt(n)
    assert abs(D.mean() - (-0.5)) <= 3 * se


@pytest.mark.parametrize("m,M", [(1.0, 1.0), (1.0, 4.0), (3.0, 0.5)])
def test_radius_law_and_shell(m, M):
    p = PhysParams(m, M)
    stream = RandomStream(5)
    n = 2000
    U = stream.directions(n)
    lam = stream.exponentials(n)
    sk = skeleton_from_draws(p, (0.2, -0.7, 1.1), U, lam)
    w = p.a * sk.Y[:-1] + p.one_minus_a * U[: sk.n]
    assert np.max(np.abs(sk.D - np.log(np.linalg.norm(w, axis=1)))) <= 1e-13
    assert np.all(np.diff(sk.log_R) <= 0)
    # shell membership of consecutive momenta while they stay representable
    K = sk.K
    ok = np.linalg.norm(K, axis=1) > 1e-100
    for j in np.flatnonzero(ok[1:] & ok[:-1])[:500]:
        r = energy_residual(p, K[j], K[j + 1])
        assert abs(r) <= 1e-12 * epsilon(p, K[j])


def test_jump_times_sum_in_order():
    p = PhysParams(1.0, 3.0)
    sk = simulate_skeleton(p, K0, 500, RandomStream(8))
    inc = sk.lam / (p.rate_coeff * sk.R[:-1])
    assert np.all(np.diff(sk.T) > 0)
    for n in (1, 10, 100, 500):
        assert sk.T[n] == pytest.approx(math.fsum(inc[:n]), rel=1e-14)


def test_waiting_times_are_unit_exponential_after_scaling():
    # 1000 chains of 1000 steps: Sigma(K_j)(T_{j+1} - T_j) should be Exp(1)
    root = RandomStream(21)
    vals = []
    for i in range(1000):
        sk = simulate_skeleton(P, K0, 1000, root.substream(i))
        vals.append(scattering_rate(P, (1, 0, 0)) * sk.R[:-1] * np.diff(sk.T))
    v = np.concatenate(vals)
    assert abs(v.mean() - 1.0) <= 3 * v.std(ddof=1) / math.sqrt(len(v))


def test_jump_count_conventions():
    T = np.array([0.0, 1.0, 2.5, 4.0])
    assert jump_count(T, 0.0) == 0
    assert jump_count(T, 0.5) == 0
    assert jump_count(T, 1.0) == 1  # a jump exactly at t counts
    assert jump_count(T, 4.0) == 3
    assert jump_count(T, 2.5 + 1e-12) == 2
    assert list(jump_count(T, [0.0, 1.0, 3.0])) == [0, 1, 2]
    with pytest.raises(OutOfRange):
        jump_count(T, 4.1)
    with pytest.raises(OutOfRange):
        jump_count(T, -1.0)
    assert jump_count(T, 99.0, absorbed=True) == 3


def test_jump_count_from_path():
    sk = simulate_skeleton(P, K0, 10, RandomStream(4))
    assert jump_count(sk, sk.T[3] * (1 + 1e-12)) == 3
    assert jump_count(sk, sk.T[3]) == 3


def test_free_flight_before_first_jump():
    stream = RandomStream(6)
    tr = simulate_trajectory(P, (1, 2, 3), (0.5, 0, 0), 1e-9, stream)
    assert tr.jump_count(1e-9) == 0
    assert np.allclose(tr.position(1e-9), [1 + 0.5e-9, 2, 3], rtol=1e-15)
    assert np.array_equal(tr.position(0.0), [1.0, 2.0, 3.0])


@pytest.mark.parametrize("m,M", [(1.0, 1.0), (2.0, 1.0)])
def test_position_sum_identity(m, M):
    p = PhysParams(m, M)
    tr = simulate_trajectory(p, (0, 0, 0), K0, 1e6, RandomStream(9))
    sk = tr.skeleton
    n = sk.n
    expect = p.increment_prefactor * np.array([math.fsum(sk.lam * sk.Y[:-1, i]) for i in range(3)])
    scale = p.increment_prefactor * sk.lam.sum()
    assert np.max(np.abs(tr.X[n] - expect)) <= 1e-12 * scale
    assert np.allclose(tr.position(sk.T[n - 1]), tr.X[n - 1], rtol=0, atol=1e-12 * scale)
    if p.m == 1.0 and p.M == 1.0:
        assert p.increment_prefactor == pytest.approx(1 / math.pi, rel=1e-15)


def test_position_is_continuous():
    tr = simulate_trajectory(P, (0, 0, 0), K0, 1e3, RandomStream(2))
    T = tr.T[1:6]
    left = tr.position(T * (1 - 1e-13))
    assert np.allclose(left, tr.position(T), rtol=0, atol=1e-9)


def test_trajectory_stops_at_first_jump_past_t_max():
    tr = simulate_trajectory(P, (0, 0, 0), K0, 500.0, RandomStream(12))
    assert tr.T[-1] >= 500.0 > tr.T[-2]
    rows = tr.rows()
    assert rows[0, 0] == 0.0 and rows[-1, 0] == 500.0
    assert len(rows) == tr.jump_count(500.0) + 2


def test_trajectory_matches_skeleton_draws():
    # doubling blocks continue the same generators as one long draw
    tr = simulate_trajectory(P, (0, 0, 0), K0, 1e80, RandomStream(13))
    sk = simulate_skeleton(P, K0, tr.skeleton.n, RandomStream(13))
    assert tr.skeleton.n > 200
    assert np.array_equal(tr.skeleton.Y, sk.Y)
    assert np.array_equal(tr.skeleton.D, sk.D)
    assert np.allclose(tr.T, sk.T, rtol=1e-15, atol=0)


def test_shorter_horizon_is_prefix():
    a = simulate_trajectory(P, (0, 0, 0), K0, 1e4, RandomStream(14))
    b = simulate_trajectory(P, (0, 0, 0), K0, 1e8, RandomStream(14))
    n = a.skeleton.n
    assert np.array_equal(a.T, b.T[: n + 1])
    assert np.array_equal(a.X, b.X[: n + 1])


def test_resource_limit():
    with pytest.raises(ResourceLimit):
        simulate_trajectory(P, (0, 0, 0), K0, 1e300, RandomStream(1), max_jumps=100)


def test_absorption_at_equal_masses():
    # U = -Y lands exactly on k' = 0 when a = 1/2
    U = np.array([[1.0, 0, 0], [1.0, 0, 0], [-1.0, 0, 0], [0, 1.0, 0]])
    sk = skeleton_from_draws(P, K0, U, np.ones(4))
    assert sk.absorbed
    assert sk.n == 3
    assert sk.D[-1] == -math.inf and sk.R[-1] == 0.0
    assert sk.T[-1] == math.inf or sk.T[-1] >= sk.T[-2]
    assert jump_count(sk, 1e10) == jump_count(sk, 1e300)


def test_csv_export():
    tr = simulate_trajectory(P, (0, 0, 0), K0, 10.0, RandomStream(3))
    buf = io.StringIO()
    tr.to_csv(buf, ["seed 3"])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "# seed 3"
    assert lines[1] == "t,x1,x2,x3,k1,k2,k3"
    back = np.loadtxt(io.StringIO(buf.getvalue()), delimiter=",", comments="#", skiprows=2)
    assert np.array_equal(back, tr.rows())
    d = tr.to_dict()
    assert d["t"][-1] == 10.0 and set(d) >= {"x1", "k3", "absorbed"}


def test_rescaled_path():
    c = closed_form_constants(P)
    n = 10
    tr = simulate_trajectory(P, (0, 0, 0), K0, c.theta ** (-n) * 1.01, RandomStream(5))
    W = rescaled_path(tr, n, c.theta, [0.0, 0.5, 1.0])
    assert np.array_equal(W[0], tr.position(1.0) / math.sqrt(n))
    assert np.array_equal(W, rescaled_path(tr, n, c.theta, [0.0, 0.5, 1.0]))
    with pytest.raises(OutOfRange):
        rescaled_path(tr, n, c.theta, [0.0, 2.0])
    with pytest.raises(DomainError):
        rescaled_path(tr, n, c.theta, [0.5, 0.25])
    with pytest.raises(DomainError):
        rescaled_path(tr, 0, c.theta, [0.5])


def test_ensemble_single_member_matches_direct_run():
    ens = run_ensemble(P, (1, 0, 0), K0, 100.0, 1, 42)
    tr = simulate_trajectory(P, (1, 0, 0), K0, 100.0, RandomStream(42).substream(0))
    assert np.array_equal(ens.X[0], tr.position(100.0))
    assert np.array_equal(ens.K[0], tr.momentum(100.0))
    assert ens.jumps[0] == tr.jump_count(100.0)


def test_ensemble_thread_count_irrelevant():
    a = run_ensemble(P, (0, 0, 0), K0, 1e3, 16, 7, threads=1, t_eval=[1.0, 10.0])
    b = run_ensemble(P, (0, 0, 0), K0, 1e3, 16, 7, threads=4, t_eval=[1.0, 10.0])
    assert a.to_json() == b.to_json()
    assert np.array_equal(a.X_eval, b.X_eval)


def test_ensemble_momentum_decays():
    early = run_ensemble(P, (0, 0, 0), K0, 1e3, 100, 3)
    late = run_ensemble(P, (0, 0, 0), K0, 1e5, 100, 3)
    assert late.stats()["mean_abs_momentum"] < early.stats()["mean_abs_momentum"]


def test_ensemble_error_names_trajectory():
    with pytest.raises(ResourceLimit, match="trajectory 0") as info:
        run_ensemble(P, (0, 0, 0), K0, 1e300, 3, 1, max_jumps=50)
    assert info.value.index == 0
    with pytest.raises(DomainError):
        run_ensemble(P, (0, 0, 0), K0, 1.0, 0, 1)
    with pytest.raises(DomainError):
        run_ensemble(P, (0, 0, 0), K0, 1.0, 2, 1, t_eval=[2.0])


def test_short_time_transport():
    dt = 1e-3
    X, K = simulate_short(P, (0, 0, 0), K0, dt, 10**5, RandomStream(3))
    # momentum drift over dt matches -eta|k|k dt to first order
    dK = K.mean(axis=0) - K0
    se = K.std(axis=0, ddof=1) / math.sqrt(len(K))
    assert abs(dK[0] / dt + P.eta) < 4 * se[0] / dt + P.eta**2 * dt * 5
    assert np.allclose(X.mean(axis=0), K0 * dt, rtol=0, atol=1e-6)


@settings(max_examples=20)
@given(st.integers(0, 2**63), st.integers(1, 40))
def test_same_seed_same_path(seed, n):
    a = simulate_skeleton(P, K0, n, RandomStream(seed))
    b = simulate_skeleton(P, K0, n, RandomStream(seed))
    assert np.array_equal(a.K, b.K) and np.array_equal(a.T, b.T)
