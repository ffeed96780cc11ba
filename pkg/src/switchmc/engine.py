"""Vectorized path simulation of the switched jump-diffusion.

Paths are processed in fixed-size blocks; block ``k`` draws from
``RngStream(seed, k)`` so results depend only on (inputs, seed, block size),
never on how blocks are distributed over workers.

One time step for an active path at (t, x, i):

1. advance the switching clock A += -q_ii(x) dt; if it passes the unit
   exponential threshold the switch happens inside the step at
   s = (E - A) / rate, before any boundary check;
2. otherwise jumps (thinned compound Poisson) fire from the left point;
3. then an Euler-Maruyama step with the compensated drift follows, with
   boundary exit detected on the grid and by a Brownian-bridge crossing
   test (policy ``"bridge"``);
4. at most one jump fires per step, with probability 1 - exp(-rate dt).

Path integrals use left-point weights with exact discounting, so the
integral up to the switch time matches the switching clock exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from .analytics import Ball
from .operator_model import CoefficientSet, CoefficientError
from .parallel import map_blocks
from .quadrature import annulus_rule
from .rng import RngStream

BOUNDARY, SWITCH, KILLED, HORIZON = 0, 1, 2, 3
REASONS = ("boundary", "switch-before-boundary", "killed", "horizon")
CEMETERY = -1


class EllipticityError(CoefficientError):
    """Cholesky factorization of a(x, i) failed."""


class EnvelopeError(CoefficientError):
    """b2 exceeded the thinning envelope theta3."""


@dataclass(frozen=True)
class SimControls:
    """Discretization controls.

    ``max_time`` of None means 10^3 r^2 for the simulated ball.
    ``theta3`` of None means the maximum of the constant jump multipliers.
    """

    dt: float = 1e-4
    delta: float = 0.05
    max_time: Optional[float] = None
    boundary_policy: str = "bridge"
    theta3: Optional[float] = None
    block_size: int = 8192
    flush_entries: int = 2_000_000

    def __post_init__(self):
        if not self.dt >= 0:
            raise ValueError("dt must be >= 0")
        if not 0 < self.delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        if self.boundary_policy not in ("bridge", "grid"):
            raise ValueError("boundary_policy must be 'bridge' or 'grid'")
        if self.block_size < 1:
            raise ValueError("block_size must be positive")

    @classmethod
    def for_ball(cls, ball: Ball, **kw) -> "SimControls":
        """Default step min(1e-4, (r/50)^2)."""
        kw.setdefault("dt", min(1e-4, (ball.radius / 50.0) ** 2))
        return cls(**kw)

    def horizon(self, ball: Optional[Ball]) -> float:
        if self.max_time is not None:
            return self.max_time
        if ball is None:
            return 1e3
        return 1e3 * ball.radius**2

    def to_dict(self) -> dict:
        return {
            "dt": self.dt,
            "delta": self.delta,
            "max_time": self.max_time,
            "boundary_policy": self.boundary_policy,
            "theta3": self.theta3,
            "block_size": self.block_size,
        }


# ---------------------------------------------------------------------------
# single-step building blocks


class DriftModel:
    """b_eff(x, i) = b1(x, i) minus the compensator of jumps with delta < |z| <= 1."""

    def __init__(self, coeffs: CoefficientSet, delta: float):
        self.coeffs = coeffs
        d, m = coeffs.d, coeffs.m
        self.level_shift = np.zeros((m, d))
        self.generic_levels = []
        for i, kern in enumerate(coeffs.jumps):
            if kern is None:
                continue
            if kern.even and coeffs.b2_even:
                continue
            if coeffs.b2_const is not None:
                self.level_shift[i] = coeffs.b2_const[i] * kern.compensator(d, delta)
            else:
                self.generic_levels.append(i)
        if self.generic_levels:
            z, w = annulus_rule(d, delta, 1.0, 24, 12)
            self.z, self.w = z, w
        self.const = None
        if coeffs.b1_const is not None and not self.generic_levels:
            self.const = coeffs.b1_const - self.level_shift
        self.zero = self.const is not None and not np.any(self.const)

    def __call__(self, x, lev):
        if self.const is not None:
            return self.const[lev]
        out = np.asarray(self.coeffs.b1(x, lev), dtype=float) - self.level_shift[lev]
        for i in self.generic_levels:
            sel = np.flatnonzero(lev == i)
            if sel.size == 0:
                continue
            kern = self.coeffs.jumps[i]
            jw = self.w * kern(self.z)
            nz = jw != 0
            zz, jw = self.z[nz], jw[nz]
            xs = x[sel]
            xr = np.repeat(xs, len(zz), axis=0)
            zr = np.tile(zz, (len(sel), 1))
            b2 = self.coeffs.b2(xr, zr, np.full(len(xr), i)).reshape(len(sel), len(zz))
            out[sel] -= (b2 * jw) @ zz
        return out


class DiffusionFactor:
    """Cholesky factors of a(x, i); identity fast path when a is constant I."""

    def __init__(self, coeffs: CoefficientSet):
        self.coeffs = coeffs
        self.identity = False
        self.const = None
        if coeffs.a_const is not None:
            ac = np.asarray(coeffs.a_const, dtype=float)
            if np.array_equal(ac, np.broadcast_to(np.eye(coeffs.d), ac.shape)):
                self.identity = True
            else:
                try:
                    self.const = np.linalg.cholesky(ac)
                except np.linalg.LinAlgError:
                    bad = next(i for i in range(len(ac)) if np.linalg.eigvalsh(ac[i])[0] <= 0)
                    raise EllipticityError("a", np.zeros(coeffs.d), f"not positive definite at level {bad}") from None

    def factor(self, x, lev):
        if self.identity:
            return None
        if self.const is not None:
            return self.const[lev]
        a = np.asarray(self.coeffs.a(x, lev), dtype=float)
        try:
            return np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            eig = np.linalg.eigvalsh(a)[:, 0]
            k = int(np.argmin(eig))
            raise EllipticityError("a", x[k], f"not positive definite at level {int(lev[k])}") from None

    def normal_variance(self, L, normals):
        """n^T a n for unit vectors n (rows)."""
        if L is None:
            return np.ones(len(normals))
        v = np.einsum("nji,nj->ni", L, normals)
        return np.einsum("ni,ni->n", v, v)


def step_diffusion(coeffs: CoefficientSet, x, i, dt: float, rng: np.random.Generator, delta: float = 0.05):
    """One Euler-Maruyama step x + b_eff dt + L sqrt(dt) xi with L L^T = a(x, i).

    Vectorized: ``x`` may be (d,) or (n, d) and ``i`` scalar or (n,).
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xs = np.atleast_2d(x)
    lev = np.broadcast_to(np.asarray(i), (len(xs),)).astype(np.int64)
    if dt == 0:
        return x.copy()
    drift = DriftModel(coeffs, delta)(xs, lev)
    fac = DiffusionFactor(coeffs)
    L = fac.factor(xs, lev)
    xi = rng.standard_normal(xs.shape)
    noise = xi if L is None else np.einsum("nij,nj->ni", L, xi)
    out = xs + drift * dt + math.sqrt(dt) * noise
    return out[0] if single else out


class JumpSampler:
    """Thinned compound-Poisson jumps with |z| > delta against the envelope theta3 j_i."""

    def __init__(self, coeffs: CoefficientSet, delta: float, theta3: Optional[float]):
        self.coeffs = coeffs
        self.delta = delta
        if theta3 is None:
            if coeffs.b2_const is None:
                raise ValueError("theta3 must be given for non-constant jump multipliers")
            theta3 = float(np.max(coeffs.b2_const))
        self.theta3 = theta3
        d = coeffs.d
        rates = []
        for kern in coeffs.jumps:
            rates.append(0.0 if kern is None or theta3 == 0 else theta3 * kern.tail_mass(d, delta))
        self.rates = np.asarray(rates)
        if not np.all(np.isfinite(self.rates)):
            raise ValueError("big-jump intensity is not finite")
        self.active = coeffs.has_jumps and bool(np.any(self.rates > 0))

    def sample(self, rng, x, lev, dt):
        """Return (accepted mask, displacements); displacements are zero where rejected."""
        n, d = x.shape
        u = rng.random(n)
        fire = u < -np.expm1(-self.rates[lev] * dt)
        z = np.zeros((n, d))
        acc = np.zeros(n, dtype=bool)
        fi = np.flatnonzero(fire)
        if fi.size == 0:
            return acc, z
        for level in np.unique(lev[fi]):
            sel = fi[lev[fi] == level]
            z[sel] = self.coeffs.jumps[int(level)].sample(rng, len(sel), d, self.delta)
        if self.coeffs.b2_const is not None:
            b2 = self.coeffs.b2_const[lev[fi]]
        else:
            b2 = np.asarray(self.coeffs.b2(x[fi], z[fi], lev[fi]), dtype=float)
        over = b2 > self.theta3 * (1 + 1e-12)
        if np.any(over):
            k = int(np.flatnonzero(over)[0])
            raise EnvelopeError("b2", x[fi[k]], f"b2 = {b2[k]:.6g} exceeds theta3 = {self.theta3:.6g}")
        keep = rng.random(fi.size) * self.theta3 < b2
        acc[fi[keep]] = True
        z[fi[~keep]] = 0.0
        return acc, z


def sample_jump(coeffs: CoefficientSet, x, i, delta: float, dt: float, rng, theta3: Optional[float] = None):
    """Single-point jump proposal; returns the displacement or None."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    sampler = JumpSampler(coeffs, delta, theta3)
    acc, z = sampler.sample(rng, x, np.atleast_1d(np.asarray(i, dtype=np.int64)), dt)
    return z[0] if acc[0] else None


# ---------------------------------------------------------------------------
# accumulators


@dataclass
class Integrand:
    """Per-path integral of exp(-alpha s) f(X_s, Lambda_s) up to termination."""

    func: Callable
    alpha: float = 0.0


@dataclass
class Tally:
    """Grouped sparse tally of the integral of f(X_s, Lambda_s) ds.

    ``func(x, lev)`` returns (cols, vals), both (n, c); negative columns are
    ignored.  Sums are kept per (group, sub-batch, column).
    """

    func: Callable
    ncols: int


@dataclass
class BlockJob:
    coeffs: CoefficientSet
    ball: Optional[Ball]
    x0: np.ndarray
    lev0: np.ndarray
    groups: np.ndarray
    path_offset: int
    controls: SimControls
    seed: int
    block_id: int
    mode: str
    integrands: tuple = ()
    tally: Optional[Tally] = None
    n_groups: int = 1
    n_sub: int = 1
    inner_radius: Optional[float] = None
    record: bool = False


@dataclass
class PathBatch:
    """Per-path summaries of a batch of simulated paths, in path order."""

    exit_time: np.ndarray
    reason: np.ndarray
    exit_x: np.ndarray
    exit_level: np.ndarray
    first_switch_time: np.ndarray
    preswitch_x: np.ndarray
    n_switches: np.ndarray
    jump_exit: np.ndarray
    inner_exit_first: np.ndarray
    integrals: np.ndarray
    groups: np.ndarray
    tally: Optional[np.ndarray] = None
    events: Optional[list] = None
    max_step: float = 0.0
    max_overshoot: float = 0.0

    @property
    def n(self) -> int:
        return len(self.exit_time)

    @property
    def n_censored(self) -> int:
        return int(np.sum(self.reason == HORIZON))

    def reason_counts(self) -> dict:
        return {name: int(np.sum(self.reason == k)) for k, name in enumerate(REASONS)}


def _discount_weight(t, h, alpha):
    if alpha == 0:
        return h
    return np.exp(-alpha * t) * (-np.expm1(-alpha * h)) / alpha


# bridge probabilities below exp(-BRIDGE_CUTOFF / 2) are treated as zero
BRIDGE_CUTOFF = 80.0


def _bridge_hits(rng, gap0, gap1, var_n, dt, cand):
    """Indices (into ``cand``) whose Brownian bridge crossed the sphere.

    ``gap0``/``gap1`` are distances to the sphere at the two grid points;
    crossing probability is exp(-2 gap0 gap1 / (var_n dt)).
    """
    ci = np.flatnonzero(cand)
    if ci.size == 0:
        return ci
    u = rng.random(ci.size)
    p = np.exp(-2.0 * gap0[ci] * gap1[ci] / (var_n[ci] * dt))
    return ci[u < p]


def _radius(dx):
    return np.sqrt(np.einsum("ij,ij->i", dx, dx))


def simulate_block(job: BlockJob):
    """Simulate one block of paths; see the module docstring for the step."""
    coeffs = job.coeffs
    ctl = job.controls
    d, m = coeffs.d, coeffs.m
    rng = RngStream(job.seed, job.block_id).generator()
    n = len(job.x0)
    dt = ctl.dt
    sqdt = math.sqrt(dt)
    ball = job.ball
    horizon = ctl.horizon(ball)
    killed_mode = job.mode == "killed"
    bridge = ctl.boundary_policy == "bridge" and dt > 0
    if ball is not None:
        center, radius = ball.c, ball.radius
        centered = not np.any(center)
    inner = job.inner_radius if ball is not None else None

    drift = DriftModel(coeffs, ctl.delta)
    fac = DiffusionFactor(coeffs)
    jumper = JumpSampler(coeffs, ctl.delta, ctl.theta3) if coeffs.has_jumps else None
    if jumper is not None and not jumper.active:
        jumper = None
    q_const = coeffs.Q_const
    switching = not (q_const is not None and not np.any(q_const))
    if q_const is not None:
        neg_diag = -np.diag(q_const).copy()

    # per-path outputs
    exit_time = np.zeros(n)
    reason = np.full(n, HORIZON, dtype=np.int8)
    exit_x = np.zeros((n, d))
    exit_level = np.zeros(n, dtype=np.int64)
    first_switch = np.full(n, np.nan)
    preswitch_x = np.full((n, d), np.nan)
    n_switches = np.zeros(n, dtype=np.int64)
    jump_exit = np.zeros(n, dtype=bool)
    inner_first = np.zeros(n, dtype=bool)
    integrals = np.zeros((n, len(job.integrands)))
    tally = job.tally
    need_h = bool(job.integrands) or tally is not None
    if tally is not None:
        tsize = job.n_groups * job.n_sub * tally.ncols
        tsum = np.zeros(tsize)
        buf_idx, buf_w, buf_len = [], [], 0
        sub = (job.path_offset + np.arange(n)) % job.n_sub
        row_base = (job.groups.astype(np.int64) * job.n_sub + sub) * tally.ncols
    events = [[(0.0, list(map(float, job.x0[k])), int(job.lev0[k]), "start")] for k in range(n)] if job.record else None
    max_step = 0.0
    max_over = 0.0

    # active state
    x = np.array(job.x0, dtype=float)
    lev = np.array(job.lev0, dtype=np.int64)
    t = np.zeros(n)
    clock = np.zeros(n)
    thresh = rng.standard_exponential(n)
    idx = np.arange(n)
    nsw = np.zeros(n, dtype=np.int64)
    inner_done = np.zeros(n, dtype=bool)
    if ball is not None:
        rad = _radius(x if centered else x - center)

    while idx.size:
        na = idx.size
        any_sw = False
        if switching:
            if q_const is not None:
                rate = neg_diag[lev]
            else:
                rows = np.asarray(coeffs.Q(x), dtype=float)[np.arange(na), lev]
                rate = -rows[np.arange(na), lev]
            new_clock = clock + rate * dt
            sw = new_clock >= thresh
            any_sw = bool(sw.any())
        if need_h:
            h = np.full(na, dt)
            if any_sw:
                h[sw] = (thresh[sw] - clock[sw]) / rate[sw]
            # left-point integrals over [t, t + h)
            for k, itg in enumerate(job.integrands):
                integrals[idx, k] += np.asarray(itg.func(x, lev), dtype=float) * _discount_weight(t, h, itg.alpha)
            if tally is not None:
                cols, vals = tally.func(x, lev)
                cols = np.asarray(cols)
                ok = cols >= 0
                flat = (row_base[idx][:, None] + cols)[ok]
                buf_idx.append(flat)
                buf_w.append((np.asarray(vals) * h[:, None])[ok])
                buf_len += flat.size
                if buf_len > ctl.flush_entries:
                    tsum += np.bincount(np.concatenate(buf_idx), np.concatenate(buf_w), minlength=tsize)
                    buf_idx, buf_w, buf_len = [], [], 0

        done = np.zeros(na, dtype=bool)
        kind = ["step"] * na if job.record else None

        # switching events come first within the step
        if any_sw:
            swi = np.flatnonzero(sw)
            t_sw = t[swi] + (thresh[swi] - clock[swi]) / rate[swi]
            g = idx[swi]
            first = nsw[swi] == 0
            first_switch[g[first]] = t_sw[first]
            preswitch_x[g[first]] = x[swi[first]]
            nsw[swi] += 1
            t = t.copy()
            t[swi] = t_sw
            if killed_mode:
                done[swi] = True
                reason[g] = SWITCH
                exit_time[g] = t_sw
                exit_x[g] = x[swi]
                exit_level[g] = lev[swi]
                if kind is not None:
                    for k in swi:
                        kind[k] = "switch"
            else:
                rows_sw = q_const[lev[swi]] if q_const is not None else rows[swi]
                probs = rows_sw / rate[swi][:, None]
                probs[np.arange(swi.size), lev[swi]] = 0.0
                bad = (probs < -1e-12).any(axis=1) | (probs.sum(axis=1) > 1 + 1e-12)
                if np.any(bad):
                    k = int(np.flatnonzero(bad)[0])
                    raise CoefficientError("Q", x[swi[k]], "redistribution probabilities outside [0, 1]")
                cum = np.cumsum(np.clip(probs, 0, None), axis=1)
                u = rng.random(swi.size)
                target = (u[:, None] >= cum).sum(axis=1)
                dead = target >= m
                lev = lev.copy()
                lev[swi[~dead]] = target[~dead]
                if np.any(dead):
                    gd = g[dead]
                    done[swi[dead]] = True
                    reason[gd] = KILLED
                    exit_time[gd] = t_sw[dead]
                    exit_x[gd] = x[swi[dead]]
                    exit_level[gd] = CEMETERY
                new_clock[swi] = 0.0
                thresh[swi] = rng.standard_exponential(swi.size)
                if kind is not None:
                    for kk, k in enumerate(swi):
                        kind[k] = "kill" if dead[kk] else "switch"
        if switching:
            clock = new_clock

        # thinned jumps from the left point, then the Euler-Maruyama step
        exited = np.zeros(na, dtype=bool)
        base = x
        base_rad = rad if ball is not None else None
        if jumper is not None and dt > 0:
            movable = ~done
            if any_sw:
                movable &= ~sw
            movable = np.flatnonzero(movable)
            if movable.size:
                acc, z = jumper.sample(rng, x[movable], lev[movable], dt)
                if np.any(acc):
                    ai = movable[acc]
                    base = x.copy()
                    base[ai] += z[acc]
                    if kind is not None:
                        for k in ai:
                            kind[k] = "jump"
                    if ball is not None:
                        base_rad = rad.copy()
                        base_rad[ai] = _radius(base[ai] - center)
                        out = ai[base_rad[ai] >= radius]
                        exited[out] = True
                        jump_exit[idx[out]] = True
                        if inner is not None:
                            pend = ai[(nsw[ai] == 0) & ~inner_done[ai]]
                            inner_done[pend[base_rad[pend] >= inner]] = True

        L = None
        frozen = exited | sw if any_sw else exited
        if dt > 0:
            L = fac.factor(base, lev)
            xi = rng.standard_normal((na, d))
            if L is None:
                disp = xi
                disp *= sqdt
            else:
                disp = np.einsum("nij,nj->ni", L, xi)
                disp *= sqdt
            if not drift.zero:
                disp += drift(base, lev) * dt
            disp[frozen] = 0.0
            new_x = base + disp
            if ball is not None:
                max_step = max(max_step, float(np.sqrt(np.max(np.einsum("ij,ij->i", disp, disp)))))
            t_new = t + dt
            if any_sw:
                t_new[sw] = t[sw]
        else:
            new_x = x.copy()
            t_new = t.copy()

        if ball is not None:
            rad_new = _radius(new_x if centered else new_x - center)
            if dt > 0:
                moved = ~frozen
                exited |= moved & (rad_new >= radius)
                var_n = None
                if bridge:
                    gap0 = radius - base_rad
                    gap1 = radius - rad_new
                    if L is None:
                        var_n = np.ones(na)
                    else:
                        normals = (new_x - center) / np.maximum(rad_new, 1e-300)[:, None]
                        var_n = fac.normal_variance(L, normals)
                    cand = moved & ~exited & (gap0 * gap1 < BRIDGE_CUTOFF * var_n * dt)
                    hits = _bridge_hits(rng, gap0, gap1, var_n, dt, cand)
                    if hits.size:
                        dx = new_x[hits] - center
                        new_x[hits] = center + radius * dx / rad_new[hits][:, None]
                        rad_new[hits] = radius
                        exited[hits] = True
                if inner is not None:
                    pending = (nsw == 0) & ~inner_done
                    hit = pending & (exited | (rad_new >= inner))
                    if bridge:
                        g0 = inner - base_rad
                        g1 = inner - rad_new
                        cand = pending & moved & ~hit & (g0 * g1 < BRIDGE_CUTOFF * var_n * dt)
                        hit[_bridge_hits(rng, g0, g1, var_n, dt, cand)] = True
                    inner_done |= hit

        if exited.any():
            ei = np.flatnonzero(exited)
            g = idx[ei]
            done[ei] = True
            reason[g] = BOUNDARY
            exit_time[g] = t_new[ei]
            exit_x[g] = new_x[ei]
            exit_level[g] = lev[ei]
            cont = ei[~jump_exit[g]]
            if cont.size:
                max_over = max(max_over, float(np.max(rad_new[cont])) - radius)
            if kind is not None:
                for k in ei:
                    kind[k] = "exit"
        timed_out = ~done & (t_new >= horizon)
        if dt == 0 and not switching:
            # nothing can happen any more
            timed_out = ~done
        if timed_out.any():
            ti = np.flatnonzero(timed_out)
            g = idx[ti]
            done[ti] = True
            reason[g] = HORIZON
            exit_time[g] = t_new[ti]
            exit_x[g] = new_x[ti]
            exit_level[g] = lev[ti]

        if kind is not None:
            for k in range(na):
                if kind[k] in ("switch", "kill"):
                    events[idx[k]].append((float(t[k]), x[k].tolist(), CEMETERY if kind[k] == "kill" else int(lev[k]),
                                           kind[k]))
                else:
                    events[idx[k]].append((float(t_new[k]), new_x[k].tolist(), int(lev[k]), kind[k]))
                if timed_out[k]:
                    events[idx[k]].append((float(t_new[k]), new_x[k].tolist(), int(lev[k]), "horizon"))

        if done.any():
            g = idx[done]
            n_switches[g] = nsw[done]
            inner_first[g] = inner_done[done]
            keep = ~done
            idx = idx[keep]
            x = new_x[keep]
            lev = lev[keep]
            t = t_new[keep]
            if switching:
                clock = clock[keep]
            thresh = thresh[keep]
            nsw = nsw[keep]
            inner_done = inner_done[keep]
            if ball is not None:
                rad = rad_new[keep]
        else:
            x, t = new_x, t_new
            if ball is not None:
                rad = rad_new

    tally_out = None
    if tally is not None:
        if buf_len:
            tsum += np.bincount(np.concatenate(buf_idx), np.concatenate(buf_w), minlength=tsize)
        tally_out = tsum.reshape(job.n_groups, job.n_sub, tally.ncols)
    return PathBatch(exit_time, reason, exit_x, exit_level, first_switch, preswitch_x, n_switches, jump_exit,
                     inner_first, integrals, job.groups.copy(), tally_out, events, max_step, max_over)


def _merge(parts: Sequence[PathBatch]) -> PathBatch:
    cat = lambda name: np.concatenate([getattr(p, name) for p in parts])  # noqa: E731
    tally = None
    if parts[0].tally is not None:
        tally = parts[0].tally.copy()
        for p in parts[1:]:
            tally += p.tally
    events = None
    if parts[0].events is not None:
        events = [e for p in parts for e in p.events]
    return PathBatch(cat("exit_time"), cat("reason"), cat("exit_x"), cat("exit_level"), cat("first_switch_time"),
                     cat("preswitch_x"), cat("n_switches"), cat("jump_exit"), cat("inner_exit_first"),
                     cat("integrals"), cat("groups"), tally, events,
                     max(p.max_step for p in parts), max(p.max_overshoot for p in parts))


def run_paths(
    coeffs: CoefficientSet,
    ball: Optional[Ball],
    starts: Sequence[tuple],
    n: int,
    controls: SimControls,
    seed: int,
    mode: str = "killed",
    integrands: Sequence[Integrand] = (),
    tally: Optional[Tally] = None,
    n_sub: int = 1,
    inner_radius: Optional[float] = None,
    workers: int = 1,
    record: bool = False,
) -> PathBatch:
    """Simulate ``n`` paths from each start (x, i); paths of start k form group k.

    Blocks of ``controls.block_size`` consecutive paths use streams
    ``RngStream(seed, block)``; block results are merged in block order.
    """
    if mode not in ("killed", "switched"):
        raise ValueError("mode must be 'killed' or 'switched'")
    starts = list(starts)
    d = coeffs.d
    xs = np.empty((len(starts) * n, d))
    ls = np.empty(len(starts) * n, dtype=np.int64)
    for k, (x0, i0) in enumerate(starts):
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (d,):
            raise ValueError(f"start point must have shape ({d},)")
        if ball is not None and not ball.contains(x0):
            raise ValueError(f"start {x0.tolist()} is not inside the ball")
        if not 0 <= int(i0) < coeffs.m:
            raise ValueError(f"start level {i0} out of range")
        xs[k * n:(k + 1) * n] = x0
        ls[k * n:(k + 1) * n] = int(i0)
    groups = np.repeat(np.arange(len(starts)), n)
    total = len(xs)
    bs = controls.block_size
    jobs = []
    for b, lo in enumerate(range(0, total, bs)):
        hi = min(lo + bs, total)
        jobs.append(BlockJob(coeffs, ball, xs[lo:hi], ls[lo:hi], groups[lo:hi], lo, controls, seed, b, mode,
                             tuple(integrands), tally, len(starts), n_sub, inner_radius, record))
    parts = map_blocks(simulate_block, jobs, workers)
    return _merge(parts)


# ---------------------------------------------------------------------------
# single-path records


@dataclass
class SwitchedPathRecord:
    """One trajectory: time-ordered events, exit data and its stream id."""

    events: list
    exit_state: Optional[tuple]
    exit_reason: str
    rng_stream_id: int
    first_switch_time: Optional[float] = None
    jump_exit: bool = False

    @property
    def exit_time(self) -> float:
        return self.events[-1][0]


def _single(coeffs, ball, start, controls, rng, mode):
    stream = rng if isinstance(rng, RngStream) else RngStream(int(rng), 0)
    x0, i0 = start
    job = BlockJob(coeffs, ball, np.asarray(x0, dtype=float)[None, :], np.array([int(i0)]), np.zeros(1, dtype=np.int64),
                   0, controls, stream.seed, stream.stream_id, mode, record=True)
    res = simulate_block(job)
    r = int(res.reason[0])
    exit_state = None
    if r == BOUNDARY:
        exit_state = (res.exit_x[0].tolist(), int(res.exit_level[0]))
    t_sw = float(res.first_switch_time[0])
    return SwitchedPathRecord(res.events[0], exit_state, REASONS[r], stream.stream_id,
                              None if math.isnan(t_sw) else t_sw, bool(res.jump_exit[0]))


def simulate_killed_exit(coeffs: CoefficientSet, ball: Ball, start: tuple, controls: SimControls, rng) -> SwitchedPathRecord:
    """Single regime with the additive switching clock, stopped at exit, switch or horizon.

    ``rng`` is an :class:`RngStream` (or an integer seed for stream 0).
    """
    return _single(coeffs, ball, start, controls, rng, "killed")


def simulate_switched(coeffs: CoefficientSet, domain: Ball, start: tuple, controls: SimControls, rng) -> SwitchedPathRecord:
    """Full switched process, stopped at exit, kill or horizon."""
    return _single(coeffs, domain, start, controls, rng, "switched")


def write_trace(path, records: Sequence[SwitchedPathRecord]) -> None:
    """Path dump: one event per line, ``stream_id t x... level kind``."""
    lines = []
    for rec in records:
        for t, x, lev, kind in rec.events:
            xs = " ".join(repr(float(v)) for v in x)
            lines.append(f"{rec.rng_stream_id} {t!r} {xs} {lev} {kind}")
    from .io_utils import atomic_write_text

    atomic_write_text(path, "\n".join(lines) + "\n")
