"""Exact event-driven simulation of the momentum chain and the position path.

The chain is kept in polar form: unit directions ``Y_j`` and the logarithm of
the radius ``log R_j``.  Storing ``log R`` rather than ``R`` matters because
``R_j`` shrinks like ``theta^j`` and would underflow after ~1400 jumps at
a = 1/2, while the jump times grow like ``theta^-j``.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import _kernels
from .errors import DomainError, OutOfRange, ResourceLimit, ZeroMomentum
from .kernel import PhysParams, as_vec3
from .rng import RandomStream

MAX_JUMPS = 10**8
FIRST_BLOCK = 64
MAX_BLOCK = 1 << 20


def _unit(k0):
    k0 = as_vec3(k0, "k0")
    r = float(np.linalg.norm(k0))
    if r == 0.0:
        raise ZeroMomentum("initial momentum k0 = 0 is absorbing")
    return k0 / r, r


@dataclass
class SkeletonPath:
    """Post-jump states K_0..K_n in polar form, with the exponential clocks.

    ``Y`` has shape (n+1, 3), ``log_R`` shape (n+1,), ``lam`` and ``D`` shape
    (n,).  ``D[j] = log|a Y_j + (1-a) U_j|`` is stored as computed, so
    ``log_R`` is its compensated running sum started at ``log|k0|``.
    """

    params: PhysParams
    Y: np.ndarray
    log_R: np.ndarray
    D: np.ndarray
    lam: np.ndarray
    absorbed: bool = False

    @property
    def n(self) -> int:
        return len(self.lam)

    @property
    def R(self) -> np.ndarray:
        return np.exp(self.log_R)

    @property
    def K(self) -> np.ndarray:
        return self.R[:, None] * self.Y

    @cached_property
    def T(self) -> np.ndarray:
        """Jump times T_0 = 0 < T_1 < ...; +inf once they overflow."""
        return _times(self.params, self.lam, self.log_R[:-1])


def _times(p, lam, log_R, s=0.0, c=0.0):
    inc = np.empty(len(lam))
    _kernels.time_increments(lam, log_R, p.rate_coeff, inc)
    T = np.empty(len(lam) + 1)
    T[0] = s + c
    _kernels.compensated_cumsum(s, c, inc, T[1:])
    return T


def skeleton_from_draws(p: PhysParams, k0, U, lam) -> SkeletonPath:
    """Build the chain from given directions U (n, 3) and clocks lam (n,)."""
    y0, r0 = _unit(k0)
    U = np.ascontiguousarray(U, dtype=np.float64)
    lam = np.ascontiguousarray(lam, dtype=np.float64)
    if U.ndim != 2 or U.shape[1] != 3 or lam.shape != (U.shape[0],):
        raise DomainError(f"need U of shape (n, 3) and lam of shape (n,), got {U.shape}, {lam.shape}")
    n = len(lam)
    Y = np.empty((n + 1, 3))
    D = np.empty(n)
    done = _kernels.chain(p.a, y0, U, Y, D)
    absorbed = done < n or (n > 0 and D[n - 1] == -np.inf)
    Y, D, lam = Y[: done + 1], D[:done], lam[:done]
    log_R = np.empty(done + 1)
    log_R[0] = math.log(r0)
    _kernels.compensated_cumsum(log_R[0], 0.0, D, log_R[1:])
    return SkeletonPath(p, Y, log_R, D, lam.copy(), bool(absorbed))


def simulate_skeleton(p: PhysParams, k0, n_steps: int, stream: RandomStream) -> SkeletonPath:
    """n_steps jumps of the momentum chain started at k0."""
    _unit(k0)
    n_steps = int(n_steps)
    if n_steps < 0:
        raise DomainError(f"n_steps must be >= 0, got {n_steps}")
    U = stream.directions(n_steps)
    lam = stream.exponentials(n_steps)
    return skeleton_from_draws(p, k0, U, lam)


def jump_count(T, t, absorbed=False):
    """N_t for jump times T (or anything with a ``.T``).

    A jump exactly at t is counted.  Raises OutOfRange when t lies beyond the
    last stored jump, unless the path ended by absorption (no more jumps ever).
    Accepts a scalar or an array of times.
    """
    if hasattr(T, "T") and not isinstance(T, np.ndarray):
        absorbed = T.absorbed
        T = T.T
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr < 0) or np.any(np.isnan(t_arr)):
        raise OutOfRange(f"t must be >= 0, got {t}")
    if not absorbed and np.any(t_arr > T[-1]):
        raise OutOfRange(f"t = {np.max(t_arr)} is past the last simulated jump T_n = {T[-1]}")
    N = np.searchsorted(T, t_arr, side="right") - 1
    if N.ndim == 0:
        return int(N)
    return N


@dataclass
class Trajectory:
    """Piecewise-linear position path driven by a skeleton.

    ``X[j]`` is the position at jump time ``T[j]``; between jumps the tracer
    moves with velocity ``K_j / m``.
    """

    skeleton: SkeletonPath
    x0: np.ndarray
    X: np.ndarray
    t_max: float

    @property
    def params(self):
        return self.skeleton.params

    @property
    def T(self):
        return self.skeleton.T

    def jump_count(self, t):
        if np.any(np.asarray(t) > self.t_max):
            raise OutOfRange(f"t = {np.max(t)} beyond simulated horizon {self.t_max}")
        return jump_count(self.skeleton, t)

    def momentum(self, t):
        N = self.jump_count(t)
        return self.skeleton.K[N]

    def position(self, t):
        """Exact X(t); vectorised over an array of times."""
        t_arr = np.asarray(t, dtype=np.float64)
        N = np.asarray(self.jump_count(t_arr))
        sk = self.skeleton
        # (t - T_N) K_N / m, written with log R to survive tiny |K|
        speed = np.exp(sk.log_R[N]) / self.params.m
        dt = t_arr - sk.T[N]
        out = self.X[N] + (dt * speed)[..., None] * sk.Y[N]
        return out

    def events(self):
        """(t_j, K_j) for every jump up to t_max, the initial state included."""
        N = self.jump_count(self.t_max)
        return self.T[: N + 1].copy(), self.skeleton.K[: N + 1].copy()

    def rows(self):
        """t, x1..x3, k1..k3 at t = 0, at each jump, and at t_max."""
        t, K = self.events()
        X = self.X[: len(t)]
        if t[-1] < self.t_max:
            t = np.append(t, self.t_max)
            X = np.vstack([X, self.position(self.t_max)])
            K = np.vstack([K, K[-1]])
        return np.column_stack([t, X, K])

    def to_csv(self, fh, header_lines=()):
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write("t,x1,x2,x3,k1,k2,k3\n")
        for r in self.rows():
            fh.write(",".join(format(float(v), ".17g") for v in r) + "\n")

    def to_dict(self):
        r = self.rows()
        return {
            "t": r[:, 0].tolist(),
            "x1": r[:, 1].tolist(),
            "x2": r[:, 2].tolist(),
            "x3": r[:, 3].tolist(),
            "k1": r[:, 4].tolist(),
            "k2": r[:, 5].tolist(),
            "k3": r[:, 6].tolist(),
            "absorbed": self.skeleton.absorbed,
        }


def simulate_trajectory(
    p: PhysParams,
    x0,
    k0,
    t_max: float,
    stream: RandomStream,
    *,
    max_jumps: int = MAX_JUMPS,
) -> Trajectory:
    """Simulate until the first jump at or after ``t_max``.

    Draws are made in doubling blocks; since every block continues the same
    two generators, the path does not depend on the block sizes.
    """
    x0 = as_vec3(x0, "x0")
    y, r0 = _unit(k0)
    t_max = float(t_max)
    if not (t_max > 0 and math.isfinite(t_max)):
        raise DomainError(f"t_max must be finite and > 0, got {t_max}")
    a, pref = p.a, p.increment_prefactor

    Ys, Ds, lams, logRs, Ts, Xs = [y[None, :]], [], [], [np.array([math.log(r0)])], [np.zeros(1)], [x0[None, :]]
    lr_s, lr_c = math.log(r0), 0.0
    t_s, t_c = 0.0, 0.0
    x_sc = [(float(x0[i]), 0.0) for i in range(3)]
    total, block, absorbed = 0, FIRST_BLOCK, False
    while True:
        if total >= max_jumps:
            raise ResourceLimit(f"{total} jumps without reaching t_max = {t_max}")
        block = min(block, max_jumps - total)
        U = stream.directions(block)
        lam = stream.exponentials(block)
        Y = np.empty((block + 1, 3))
        D = np.empty(block)
        done = _kernels.chain(a, y, U, Y, D)
        if done < block or D[done - 1] == -np.inf:
            absorbed = True
        Y, D, lam = Y[: done + 1], D[:done], lam[:done]

        logR = np.empty(done)
        lr_prev = lr_s + lr_c
        lr_s, lr_c = _kernels.compensated_cumsum(lr_s, lr_c, D, logR)
        inc = np.empty(done)
        _kernels.time_increments(lam, np.concatenate([[lr_prev], logR[:-1]]), p.rate_coeff, inc)
        T = np.empty(done)
        t_s, t_c = _kernels.compensated_cumsum(t_s, t_c, inc, T)
        X = np.empty((done, 3))
        step = pref * lam[:, None] * Y[:-1]
        for i in range(3):
            s, c = x_sc[i]
            x_sc[i] = _kernels.compensated_cumsum(s, c, np.ascontiguousarray(step[:, i]), X[:, i])

        hit = np.searchsorted(T, t_max, side="left")
        keep = done if hit == done else hit + 1
        Ys.append(Y[1 : keep + 1])
        Ds.append(D[:keep])
        lams.append(lam[:keep])
        logRs.append(logR[:keep])
        Ts.append(T[:keep])
        Xs.append(X[:keep])
        total += keep
        y = Y[done]
        if hit < done or absorbed:
            break
        block = min(2 * block, MAX_BLOCK)

    sk = SkeletonPath(
        p,
        np.concatenate(Ys),
        np.concatenate(logRs),
        np.concatenate(Ds),
        np.concatenate(lams),
        absorbed,
    )
    sk.__dict__["T"] = np.concatenate(Ts)
    return Trajectory(sk, x0, np.concatenate(Xs), t_max)


def rescaled_times(n: int, theta: float, s_grid) -> np.ndarray:
    """theta^(-n s) for each s."""
    s = np.asarray(s_grid, dtype=np.float64)
    return np.exp(-n * s * math.log(theta))


def _check_grid(n, s_grid):
    if int(n) < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    s = np.asarray(s_grid, dtype=np.float64)
    if s.ndim != 1 or len(s) == 0 or np.any(s < 0) or np.any(np.diff(s) < 0):
        raise DomainError("s_grid must be a non-empty nondecreasing list of s >= 0")
    return s


def rescaled_path(traj: Trajectory, n: int, theta: float, s_grid) -> np.ndarray:
    """X(theta^{-n s}) / sqrt(n) on the grid, shape (len(s_grid), 3)."""
    s = _check_grid(n, s_grid)
    t = rescaled_times(n, theta, s)
    if t[-1] > traj.t_max:
        raise OutOfRange(f"trajectory covers t <= {traj.t_max}, grid needs {t[-1]}")
    return traj.position(t) / math.sqrt(n)


# -- ensembles ---------------------------------------------------------------


def resolve_threads(threads=None) -> int:
    if threads is None:
        env = os.environ.get("FRICTION_WALK_THREADS")
        threads = int(env) if env else 1
    threads = int(threads)
    if threads < 1:
        raise DomainError(f"threads must be >= 1, got {threads}")
    return threads


def parallel_map(fn, count, threads=None):
    """[fn(i) for i in range(count)] on a thread pool; result order is by index."""
    threads = resolve_threads(threads)
    if threads == 1 or count <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, range(count)))


def _attributed(fn):
    def run(i):
        try:
            return fn(i)
        except Exception as e:  # re-raise the same type, naming the trajectory
            try:
                err = type(e)(f"trajectory {i}: {e}")
            except Exception:
                raise e
            err.index = i
            raise err from e

    return run


@dataclass
class EnsembleSummary:
    """Terminal states of ``count`` trajectories plus optional grid samples.

    Row i always belongs to substream i of ``seed``; all statistics reduce
    over rows in index order, so they do not depend on the thread count.
    """

    params: PhysParams
    x0: np.ndarray
    k0: np.ndarray
    t_max: float
    seed: int
    X: np.ndarray
    K: np.ndarray
    jumps: np.ndarray
    absorbed: np.ndarray
    t_eval: np.ndarray | None = None
    X_eval: np.ndarray | None = None
    K_eval: np.ndarray | None = None
    extra: dict = field(default_factory=dict)

    @property
    def count(self):
        return len(self.jumps)

    def stats(self) -> dict:
        dX = self.X - self.x0
        absX = np.linalg.norm(dX, axis=1)
        absK = np.linalg.norm(self.K, axis=1)
        n = self.count
        se = lambda v: float(np.std(v, ddof=1) / math.sqrt(n)) if n > 1 else math.nan  # noqa: E731
        return {
            "count": n,
            "mean_displacement": dX.mean(axis=0).tolist(),
            "se_displacement": [se(dX[:, i]) for i in range(3)],
            "mean_abs_displacement": float(absX.mean()),
            "mean_abs_momentum": float(absK.mean()),
            "median_abs_momentum": float(np.median(absK)),
            "mean_jumps": float(self.jumps.mean()),
            "max_jumps": int(self.jumps.max()),
            "absorbed": int(self.absorbed.sum()),
        }

    def to_dict(self, include_states=True) -> dict:
        d = {"t_max": self.t_max, "seed": self.seed, "stats": self.stats()}
        if include_states:
            d["X"] = self.X.tolist()
            d["K"] = self.K.tolist()
            d["jumps"] = self.jumps.tolist()
        return d

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(**kw), indent=2)


def run_ensemble(
    p: PhysParams,
    x0,
    k0,
    t_max: float,
    count: int,
    base_seed: int,
    *,
    t_eval=None,
    threads=None,
    max_jumps: int = MAX_JUMPS,
) -> EnsembleSummary:
    """Simulate trajectories 0..count-1 on substreams of ``base_seed``.

    If ``t_eval`` is given, positions and momenta are also recorded at those
    times (all must be <= t_max).
    """
    return run_ensemble_stream(
        p, x0, k0, t_max, count, RandomStream(base_seed), t_eval=t_eval, threads=threads, max_jumps=max_jumps
    )


def run_ensemble_stream(p, x0, k0, t_max, count, root: RandomStream, *, t_eval=None, threads=None, max_jumps=MAX_JUMPS):
    """:func:`run_ensemble` with trajectory i on ``root.substream(i)``."""
    count = int(count)
    if count < 1:
        raise DomainError(f"count must be >= 1, got {count}")
    x0 = as_vec3(x0, "x0")
    _unit(k0)
    k0 = as_vec3(k0, "k0")
    te = None
    if t_eval is not None:
        te = np.asarray(t_eval, dtype=np.float64)
        if np.any(te < 0) or np.any(te > t_max):
            raise DomainError("t_eval must lie in [0, t_max]")

    def one(i):
        tr = simulate_trajectory(p, x0, k0, t_max, root.substream(i), max_jumps=max_jumps)
        N = tr.jump_count(t_max)
        out = (tr.position(t_max), tr.momentum(t_max), N, tr.skeleton.absorbed)
        if te is not None:
            out += (tr.position(te), tr.momentum(te))
        return out

    res = parallel_map(_attributed(one), count, threads)
    X = np.array([r[0] for r in res])
    K = np.array([r[1] for r in res])
    jumps = np.array([r[2] for r in res], dtype=np.int64)
    absorbed = np.array([r[3] for r in res], dtype=bool)
    Xe = Ke = None
    if te is not None:
        Xe = np.array([r[4] for r in res])
        Ke = np.array([r[5] for r in res])
    return EnsembleSummary(p, x0, k0, float(t_max), root.seed, X, K, jumps, absorbed, te, Xe, Ke)


def simulate_short(p: PhysParams, x, k, dt: float, n_samples: int, stream: RandomStream):
    """(X_dt, K_dt) for n_samples independent copies started at (x, k).

    Jumps are resolved one round at a time over the copies whose clock has
    not yet passed dt; all draws come from ``stream`` in a fixed order.
    """
    x = as_vec3(x, "x")
    _unit(k)
    k = as_vec3(k, "k")
    X = np.tile(x, (n_samples, 1))
    K = np.tile(k, (n_samples, 1))
    clock = np.zeros(n_samples)
    active = np.arange(n_samples)
    while len(active):
        R = np.linalg.norm(K[active], axis=1)
        with np.errstate(divide="ignore"):
            wait = stream.exponentials(len(active)) / (p.rate_coeff * R)
        step = np.minimum(wait, dt - clock[active])
        X[active] += step[:, None] * K[active] / p.m
        clock[active] += step
        jumped = wait < dt - (clock[active] - step)
        idx = active[jumped]
        if len(idx):
            Kj = K[idx]
            Rj = np.linalg.norm(Kj, axis=1)
            K[idx] = p.a * Kj + (1.0 - p.a) * Rj[:, None] * stream.directions(len(idx))
        active = idx[np.linalg.norm(K[idx], axis=1) > 0]
    return X, K
