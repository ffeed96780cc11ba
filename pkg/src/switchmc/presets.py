"""Catalog of closed-form coefficient families.

Every preset is built from picklable callable objects so coefficient sets
can be shipped to worker processes.  Levels are 0-based.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .operator_model import ClassParams, CoefficientSet, RadialPowerKernel


# ---------------------------------------------------------------------------
# coefficient field building blocks


class LevelMatrices:
    """a(x, i) = mats[i], constant in x."""

    def __init__(self, mats):
        self.mats = np.asarray(mats, dtype=float)

    def __call__(self, x, i):
        return self.mats[np.asarray(i)]


class TrigDiffusion:
    """a(x, i) = diag(1 + eps sin(x_k + i))."""

    def __init__(self, eps):
        self.eps = float(eps)

    def __call__(self, x, i):
        x = np.asarray(x, dtype=float)
        diag = 1.0 + self.eps * np.sin(x + np.asarray(i)[:, None])
        out = np.zeros(x.shape + (x.shape[1],))
        idx = np.arange(x.shape[1])
        out[:, idx, idx] = diag
        return out


class LevelVectors:
    """b1(x, i) = vecs[i], constant in x."""

    def __init__(self, vecs):
        self.vecs = np.asarray(vecs, dtype=float)

    def __call__(self, x, i):
        return self.vecs[np.asarray(i)]


class TrigDrift:
    """b1(x, i)_k = amp sin(x_{k+1} + i) / sqrt(d); |b1| <= amp."""

    def __init__(self, amp):
        self.amp = float(amp)

    def __call__(self, x, i):
        x = np.asarray(x, dtype=float)
        d = x.shape[1]
        return self.amp / math.sqrt(d) * np.sin(np.roll(x, -1, axis=1) + np.asarray(i)[:, None])


class LevelConstB2:
    """b2(x, z, i) = vals[i]."""

    def __init__(self, vals):
        self.vals = np.asarray(vals, dtype=float)

    def __call__(self, x, z, i):
        return self.vals[np.asarray(i)]


class TrigB2:
    """b2(x, z, i) = base (1 + amp sin(x_1)); even in z."""

    def __init__(self, base, amp):
        self.base = float(base)
        self.amp = float(amp)

    def __call__(self, x, z, i):
        return self.base * (1.0 + self.amp * np.sin(np.asarray(x)[:, 0]))


class ConstQ:
    """Q(x) = Q for every x."""

    def __init__(self, q):
        self.q = np.asarray(q, dtype=float)

    def __call__(self, x):
        return np.broadcast_to(self.q, (len(x),) + self.q.shape)


class TrigQ2:
    """Two-level Q with q_01 = rate (1 + amp sin x_1), q_10 = rate (1 + amp cos x_2).

    ``kill`` is added to the diagonal, making the matrix sub-Markovian.
    """

    def __init__(self, rate, amp, kill=0.0):
        self.rate = float(rate)
        self.amp = float(amp)
        self.kill = float(kill)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        q01 = self.rate * (1.0 + self.amp * np.sin(x[:, 0]))
        q10 = self.rate * (1.0 + self.amp * np.cos(x[:, 1]))
        out = np.empty((len(x), 2, 2))
        out[:, 0, 1] = q01
        out[:, 1, 0] = q10
        out[:, 0, 0] = -q01 - self.kill
        out[:, 1, 1] = -q10 - self.kill
        return out


def _offdiag_q(off, kill=0.0):
    off = np.asarray(off, dtype=float).copy()
    np.fill_diagonal(off, 0.0)
    return off - np.diag(off.sum(axis=1) + kill)


# ---------------------------------------------------------------------------
# catalog


@dataclass(frozen=True)
class PresetInfo:
    preset_id: str
    description: str
    schema: dict  # name -> (default, description)
    conditions: tuple
    factory: Callable = field(repr=False)
    scaler: Callable | None = field(default=None, repr=False)

    def defaults(self) -> dict:
        return {k: v[0] for k, v in self.schema.items()}


_REGISTRY: dict[str, PresetInfo] = {}

_ALL_CONDITIONS = ("symmetry", "ellipticity", "holder", "drift_bound", "b2_range", "jump_small_bound",
                   "jump_mass", "q_offdiag_nonneg", "q_row_sums", "q_bounds", "q_diag")


def _register(pid, description, schema, conditions=_ALL_CONDITIONS, scaler=None):
    def deco(fn):
        _REGISTRY[pid] = PresetInfo(pid, description, schema, tuple(conditions), fn, scaler)
        return fn

    return deco


def _params(d, m, *, theta1=1.0, theta2=1.0, theta3=1.0, theta4=1.0, theta5=1.0, c1=1.0, beta=1.5,
            c0=0.5, gamma=0.5, holder_c=None, vartheta=1.0):
    return ClassParams(d=d, m=m, theta1=theta1, theta2=theta2, theta3=theta3, theta4=theta4, theta5=theta5,
                       gamma=gamma, beta=beta, c1=c1, c0=c0, vartheta=vartheta, holder_c=holder_c)


def _identity_parts(d, m):
    eye = np.broadcast_to(np.eye(d), (m, d, d)).copy()
    zero = np.zeros((m, d))
    return eye, zero


def _coeffs(d, m, pid, kw, *, a=None, b1=None, b2=None, jumps=None, Q=None, Q0=None,
            a_const=None, b1_const=None, b2_const=None, Q_const=None, b2_even=True):
    eye, zero = _identity_parts(d, m)
    if a is None:
        a_const = eye if a_const is None else a_const
        a = LevelMatrices(a_const)
    if b1 is None:
        b1_const = zero if b1_const is None else b1_const
        b1 = LevelVectors(b1_const)
    if b2 is None:
        b2_const = np.zeros(m) if b2_const is None else np.asarray(b2_const, dtype=float)
        b2 = LevelConstB2(b2_const)
    if Q is None:
        Q_const = np.zeros((m, m)) if Q_const is None else np.asarray(Q_const, dtype=float)
        Q = ConstQ(Q_const)
    if Q0 is None:
        Q0 = np.zeros((m, m)) if Q_const is None else Q_const
    jumps = tuple(jumps) if jumps is not None else (None,) * m
    return CoefficientSet(d=d, m=m, a=a, b1=b1, b2=b2, jumps=jumps, Q=Q, Q0=Q0, preset_id=pid, params=dict(kw),
                          a_const=a_const, b1_const=b1_const, b2_const=b2_const, Q_const=Q_const, b2_even=b2_even)


def _jump_params(kern, d):
    return dict(c1=kern.c1, beta=kern.beta, theta4=1.01 * kern.second_moment_mass(d) + 1.0)


@_register("brownian", "a = I, b = 0, no jumps, Q = 0",
           {"m": (2, "number of levels")},
           scaler=lambda kw, lam: dict(kw))
def _brownian(d, m=2):
    kw = {"m": m}
    return _coeffs(d, m, "brownian", kw), _params(d, m)


@_register("diffusion_trig", "a = diag(1 + eps sin(x_k + i)), b1 = trigonometric drift, no jumps, Q = 0",
           {"m": (2, "number of levels"), "eps": (0.3, "diffusion perturbation in [0, 1)"),
            "drift": (0.2, "drift amplitude")})
def _diffusion_trig(d, m=2, eps=0.3, drift=0.2):
    if not 0 <= eps < 1:
        raise ValueError("eps must lie in [0, 1)")
    kw = {"m": m, "eps": eps, "drift": drift}
    c = _coeffs(d, m, "diffusion_trig", kw, a=TrigDiffusion(eps), b1=TrigDrift(drift))
    return c, _params(d, m, theta1=1.0 - eps, theta2=max(drift, 1e-12), holder_c=max(eps, 1e-12))


def _stable_scaler(kw, lam):
    out = dict(kw)
    out["c1"] = kw["c1"] * lam ** (2.0 - kw["beta"])
    out["rmax"] = kw["rmax"] / lam
    return out


@_register("stable_trunc", "a = I, b = 0, j(z) = c1 |z|^{-d-beta} on |z| <= rmax, b2 constant, Q = 0",
           {"m": (2, "number of levels"), "c1": (1.0, "kernel constant"), "beta": (1.5, "jump index in (1, 2)"),
            "rmax": (1.0, "support radius"), "b2": (1.0, "jump multiplier")},
           scaler=_stable_scaler)
def _stable_trunc(d, m=2, c1=1.0, beta=1.5, rmax=1.0, b2=1.0):
    kern = RadialPowerKernel(c1, beta, rmax)
    kw = {"m": m, "c1": c1, "beta": beta, "rmax": rmax, "b2": b2}
    c = _coeffs(d, m, "stable_trunc", kw, jumps=[kern] * m, b2_const=np.full(m, b2))
    return c, _params(d, m, theta3=max(b2, 1e-12), **_jump_params(kern, d))


@_register("stable_onesided", "a = I, b = 0, j(z) = c1 |z|^{-d-beta} on {z_1 > 0, |z| <= 1}, b2 constant, Q = 0",
           {"m": (2, "number of levels"), "c1": (1.0, "kernel constant"), "beta": (1.5, "jump index in (1, 2)"),
            "b2": (1.0, "jump multiplier")})
def _stable_onesided(d, m=2, c1=1.0, beta=1.5, b2=1.0):
    kern = RadialPowerKernel(c1, beta, 1.0, half_space=True)
    kw = {"m": m, "c1": c1, "beta": beta, "b2": b2}
    c = _coeffs(d, m, "stable_onesided", kw, jumps=[kern] * m, b2_const=np.full(m, b2), b2_even=False)
    return c, _params(d, m, theta3=max(b2, 1e-12), **_jump_params(kern, d))


@_register("stable_trig", "a = I, b = 0, truncated stable kernel with b2(x, z, i) = b2 (1 + amp sin x_1), Q = 0",
           {"m": (2, "number of levels"), "c1": (1.0, "kernel constant"), "beta": (1.5, "jump index in (1, 2)"),
            "b2": (1.0, "base multiplier"), "amp": (0.5, "multiplier modulation in [0, 1]")})
def _stable_trig(d, m=2, c1=1.0, beta=1.5, b2=1.0, amp=0.5):
    kern = RadialPowerKernel(c1, beta, 1.0)
    kw = {"m": m, "c1": c1, "beta": beta, "b2": b2, "amp": amp}
    c = _coeffs(d, m, "stable_trig", kw, jumps=[kern] * m, b2=TrigB2(b2, amp))
    return c, _params(d, m, theta3=b2 * (1 + amp), vartheta=3.0, **_jump_params(kern, d))


def _rate_scaler(kw, lam):
    out = dict(kw)
    for key in ("rate", "kill"):
        if key in out:
            out[key] = kw[key] * lam**2
    return out


@_register("switch2_markov", "a = I, b = 0, no jumps, Q = [[-rate, rate], [rate, -rate]]",
           {"rate": (1.0, "switching rate")}, scaler=_rate_scaler)
def _switch2_markov(d, rate=1.0):
    q = _offdiag_q([[0, rate], [rate, 0]])
    c = _coeffs(d, 2, "switch2_markov", {"rate": rate}, Q_const=q, Q0=q)
    return c, _params(d, 2, theta5=max(rate, 1e-12))


@_register("switch2_submarkov", "a = I, b = 0, no jumps, Q = [[-rate-kill, rate], [rate, -rate-kill]]",
           {"rate": (1.0, "switching rate"), "kill": (1.0, "killing rate")}, scaler=_rate_scaler)
def _switch2_submarkov(d, rate=1.0, kill=1.0):
    q = _offdiag_q([[0, rate], [rate, 0]], kill)
    c = _coeffs(d, 2, "switch2_submarkov", {"rate": rate, "kill": kill}, Q_const=q, Q0=q)
    return c, _params(d, 2, theta5=max(rate + kill, 1e-12))


@_register("switch3_strict", "a = I, b = 0, no jumps, three levels with every off-diagonal rate equal (strictly irreducible)",
           {"rate": (1.0, "switching rate between every pair")}, scaler=_rate_scaler)
def _switch3_strict(d, rate=1.0):
    q = _offdiag_q(np.full((3, 3), rate))
    c = _coeffs(d, 3, "switch3_strict", {"rate": rate}, Q_const=q, Q0=q)
    return c, _params(d, 3, theta5=max(2 * rate, 1e-12))


@_register("switch3_chain", "a = I, b = 0, no jumps, three levels coupled as a chain 0 <-> 1 <-> 2",
           {"rate": (1.0, "switching rate along the chain")}, scaler=_rate_scaler)
def _switch3_chain(d, rate=1.0):
    q = _offdiag_q([[0, rate, 0], [rate, 0, rate], [0, rate, 0]])
    c = _coeffs(d, 3, "switch3_chain", {"rate": rate}, Q_const=q, Q0=q)
    return c, _params(d, 3, theta5=max(2 * rate, 1e-12))


@_register("switch2_varying", "a = I, b = 0, no jumps, q_01 = rate (1 + amp sin x_1), q_10 = rate (1 + amp cos x_2)",
           {"rate": (1.0, "base switching rate"), "amp": (0.5, "modulation in [0, 1)"), "kill": (0.0, "killing rate")})
def _switch2_varying(d, rate=1.0, amp=0.5, kill=0.0):
    if not 0 <= amp < 1:
        raise ValueError("amp must lie in [0, 1)")
    top = rate * (1 + amp)
    q0 = _offdiag_q([[0, top], [top, 0]], kill)
    c = _coeffs(d, 2, "switch2_varying", {"rate": rate, "amp": amp, "kill": kill}, Q=TrigQ2(rate, amp, kill), Q0=q0)
    c0 = (1 - amp) / (1 + amp) if amp > 0 else 0.5
    return c, _params(d, 2, theta5=max(top + kill, 1e-12), c0=min(max(c0, 1e-6), 1 - 1e-9))


@_register("switch2_stable", "a = I, b = 0, truncated stable jumps, Q = [[-rate, rate], [rate, -rate]]",
           {"rate": (1.0, "switching rate"), "c1": (1.0, "kernel constant"), "beta": (1.5, "jump index in (1, 2)"),
            "rmax": (1.0, "support radius")},
           scaler=lambda kw, lam: _rate_scaler(_stable_scaler(kw, lam), lam))
def _switch2_stable(d, rate=1.0, c1=1.0, beta=1.5, rmax=1.0):
    q = _offdiag_q([[0, rate], [rate, 0]])
    kern = RadialPowerKernel(c1, beta, rmax)
    kw = {"rate": rate, "c1": c1, "beta": beta, "rmax": rmax}
    c = _coeffs(d, 2, "switch2_stable", kw, jumps=[kern, kern], b2_const=np.ones(2), Q_const=q, Q0=q)
    return c, _params(d, 2, theta5=max(rate, 1e-12), **_jump_params(kern, d))


SWITCHING_PRESETS = ("switch2_markov", "switch2_submarkov", "switch3_strict", "switch3_chain", "switch2_varying",
                     "switch2_stable")


def preset_ids() -> list[str]:
    return sorted(_REGISTRY)


def preset_info(pid: str) -> PresetInfo:
    try:
        return _REGISTRY[pid]
    except KeyError:
        raise KeyError(f"unknown preset '{pid}'; known presets: {', '.join(preset_ids())}") from None


def build_preset(pid: str, d: int, **params) -> tuple[CoefficientSet, ClassParams]:
    """Coefficient set and matching class constants for a catalog preset."""
    info = preset_info(pid)
    unknown = set(params) - set(info.schema)
    if unknown:
        raise KeyError(f"preset '{pid}' has no parameter(s) {sorted(unknown)}")
    kw = {**info.defaults(), **params}
    return info.factory(d, **kw)


def make_preset(pid: str, d: int, **params) -> CoefficientSet:
    return build_preset(pid, d, **params)[0]


def scaled_preset(coeffs: CoefficientSet, lam: float) -> CoefficientSet:
    """Coefficients of the rescaled generator, when the family is closed under scaling.

    Raises ``ValueError`` for presets without a catalog scaled form.
    """
    info = preset_info(coeffs.preset_id) if coeffs.preset_id in _REGISTRY else None
    if info is None or info.scaler is None:
        raise ValueError(f"preset '{coeffs.preset_id}' has no scaled form in the catalog")
    if not 0 < lam <= 1:
        raise ValueError("lambda must lie in (0, 1]")
    return make_preset(coeffs.preset_id, coeffs.d, **info.scaler(coeffs.params, lam))


def list_presets() -> list[dict]:
    """Catalog listing: ids, parameter schemas and conditions holding by construction."""
    out = []
    for pid in preset_ids():
        info = _REGISTRY[pid]
        out.append({
            "id": pid,
            "description": info.description,
            "parameters": {k: {"default": v[0], "description": v[1]} for k, v in info.schema.items()},
            "conditions": list(info.conditions),
            "scalable": info.scaler is not None,
        })
    return out
