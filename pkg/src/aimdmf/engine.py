"""Simulation kernels for AIMD connections.

Between losses a connection's state grows linearly, w(t) = w0 + a*t; at a
loss it jumps to r*w.  With loss rate b(w, u) = w * beta(u) and the
environment u frozen, the time to the next loss solves the integrated-hazard
equation

    beta * (w*tau + a*tau^2/2) = E,      E ~ Exp(1),

inverted in closed form (next_jump_time).  That inversion makes the
single-connection simulator and the per-step population kernel exact: no
time-discretization error is introduced within a step, only the field-freeze
approximation between steps.

General (non-multiplicative) loss rates that are nondecreasing in w are
simulated by thinning: within a step of length h the rate is bounded by
b(w + a*h, u) pathwise (jumps only lower the state), candidate events are
drawn at the bound rate and accepted with probability b(w(s), u)/bound.
Non-monotone general forms are rejected.

Randomness discipline: every variate is derived from per-particle uniform
streams (see numerics.RngStream), one stream per particle, so results do not
depend on how particles are batched or threaded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .model import (
    GeneralLoss,
    ModelError,
    MultiplicativeLoss,
    NetworkModel,
    ScalarRate,
    class_beta,
    eval_drift,
    loss_u_part,
)
from .numerics import RngStream, exp_sample

__all__ = [
    "UnsupportedModelError",
    "next_jump_time",
    "ConnectionPath",
    "simulate_connection",
    "ParticleStreams",
    "GeneratorDraws",
    "step_frozen_field",
    "advance_in_place",
    "simulate_discrete_aimd",
]


class UnsupportedModelError(ModelError):
    """Raised when an engine cannot simulate the given loss specification."""


def next_jump_time(w, a, beta, e):
    """Time to the next loss from state w under drift a and loss rate
    beta * w(t), given the exponential variate e.

    Solves beta*(w*tau + a*tau^2/2) = e in the numerically stable form
    tau = 2e / (beta * (w + sqrt(w^2 + 2*a*e/beta))), which avoids
    cancellation for small a and never subtracts.  Special cases: tau = +inf
    when a = 0 and w = 0 (the rate is frozen at zero), tau = e/(beta*w) when
    a = 0.  Accepts scalars or broadcasting arrays.
    """
    w = np.asarray(w, dtype=float)
    a = np.asarray(a, dtype=float)
    beta = np.asarray(beta, dtype=float)
    e = np.asarray(e, dtype=float)
    if np.any(~np.isfinite(beta)) or np.any(beta <= 0.0):
        raise ModelError("next_jump_time requires beta > 0")
    if np.any(w < 0.0) or np.any(a < 0.0) or np.any(e < 0.0):
        raise ModelError("next_jump_time requires w, a, e >= 0")
    with np.errstate(divide="ignore", invalid="ignore"):
        denom = beta * (w + np.sqrt(w * w + 2.0 * a * e / beta))
        tau = np.where(denom > 0.0, 2.0 * e / np.where(denom > 0.0, denom, 1.0), np.inf)
    tau = np.where((a == 0.0) & (w == 0.0), np.inf, tau)
    tau = np.where(e == 0.0, np.where((a == 0.0) & (w == 0.0), np.inf, 0.0), tau)
    return float(tau) if tau.ndim == 0 else tau


@dataclass
class ConnectionPath:
    """Piecewise-linear trajectory of one connection on [t0, t_end].

    Jump times are strictly increasing; post_values[i] is the state
    immediately after jump i.  value() evaluates the path (right-continuous),
    time_average() integrates it exactly segment by segment.
    """

    t0: float
    t_end: float
    w0: float
    a: float
    r: float
    jump_times: np.ndarray
    post_values: np.ndarray

    def __post_init__(self):
        self.jump_times = np.asarray(self.jump_times, dtype=float)
        self.post_values = np.asarray(self.post_values, dtype=float)
        self._seg_t = np.concatenate([[self.t0], self.jump_times])
        self._seg_w = np.concatenate([[self.w0], self.post_values])

    @property
    def n_jumps(self) -> int:
        return int(self.jump_times.size)

    def value(self, t):
        ts = np.asarray(t, dtype=float)
        if np.any(ts < self.t0 - 1e-12) or np.any(ts > self.t_end + 1e-12):
            raise ValueError("path evaluated outside its time span")
        idx = np.searchsorted(self._seg_t, ts, side="right") - 1
        out = self._seg_w[idx] + self.a * (ts - self._seg_t[idx])
        return float(out) if np.ndim(t) == 0 else out

    def time_average(self, t_lo: Optional[float] = None, t_hi: Optional[float] = None) -> float:
        lo = self.t0 if t_lo is None else float(t_lo)
        hi = self.t_end if t_hi is None else float(t_hi)
        if not (self.t0 - 1e-12 <= lo < hi <= self.t_end + 1e-12):
            raise ValueError("averaging window outside the path span")
        starts = np.concatenate([self._seg_t, [self.t_end]])
        seg_lo = np.clip(starts[:-1], lo, hi)
        seg_hi = np.clip(starts[1:], lo, hi)
        lengths = seg_hi - seg_lo
        # linear within a segment: integral = w(seg_lo)*len + a*len^2/2
        w_at_lo = self._seg_w + self.a * (seg_lo - self._seg_t)
        total = np.sum(w_at_lo * lengths + 0.5 * self.a * lengths * lengths)
        return float(total / (hi - lo))

    def events(self):
        """(time, state-after) pairs, for tracing."""
        return list(zip(self.jump_times.tolist(), self.post_values.tolist()))


def _connection_mult(w0, a, beta, r, t0, t_end, gen):
    t, w = t0, w0
    times, posts = [], []
    while True:
        tau = next_jump_time(w, a, beta, exp_sample(gen))
        if t + tau > t_end:
            break
        t += tau
        w = r * (w + a * tau)
        times.append(t)
        posts.append(w)
    return times, posts


def _connection_thinning(w0, a, r, t0, t_end, omega: ScalarRate, s_u: float, gen):
    times, posts = [], []
    t, w = t0, w0
    window = 1.0  # lookahead per thinning window; bound is refreshed per window
    while t < t_end - 1e-15:
        span = min(window, t_end - t)
        bound = float(omega.value(w + a * span)) * s_u
        if bound <= 0.0:
            w += a * span
            t += span
            continue
        s = 0.0
        last = 0.0
        while True:
            s += exp_sample(gen) / bound
            if s > span:
                break
            accept = gen.random() * bound <= float(omega.value(w + a * (s - last))) * s_u
            if accept:
                w = r * (w + a * (s - last))
                last = s
                times.append(t + s)
                posts.append(w)
        w += a * (span - last)
        t += span
    return times, posts


def simulate_connection(
    model: NetworkModel,
    k: int,
    u,
    w0: float,
    t_end: float,
    stream: Union[RngStream, np.random.Generator],
    t0: float = 0.0,
) -> ConnectionPath:
    """Exact event-driven simulation of one class-k connection with the
    environment frozen at u, from state w0 >= 0 over [t0, t_end]."""
    if not (w0 >= 0.0 and np.isfinite(w0)):
        raise ModelError("initial state must be finite and >= 0")
    if not (t_end > t0):
        raise ModelError("t_end must exceed t0")
    gen = stream.generator() if isinstance(stream, RngStream) else stream
    cls = model.classes[k]
    a = eval_drift(model, k, u)
    if isinstance(cls.loss, MultiplicativeLoss):
        beta = class_beta(model, k, u)
        if beta <= 0.0:
            times, posts = [], []
        else:
            times, posts = _connection_mult(w0, a, beta, cls.r, t0, t_end, gen)
    else:
        if not cls.loss.monotone_in_w:
            raise UnsupportedModelError(
                f"class {k}: general loss not flagged monotone in w"
            )
        s_u = loss_u_part(model, k, u)
        times, posts = _connection_thinning(
            w0, a, cls.r, t0, t_end, cls.loss.w_rate, s_u, gen
        )
    return ConnectionPath(
        t0=t0, t_end=t_end, w0=w0, a=a, r=cls.r,
        jump_times=np.array(times), post_values=np.array(posts),
    )


class ParticleStreams:
    """Buffered per-particle uniform draws.

    Particle i draws from the stream ``base.child(labels[i])``, in blocks,
    so a particle's variate sequence depends only on (root seed, its own
    path) - not on batching, vector width, or thread count.  ``take`` returns
    one uniform per requested particle index (indices must be unique per
    call).
    """

    def __init__(self, base: RngStream, n: int, labels=None, block: int = 256):
        self._base = base
        self._n = int(n)
        if labels is None:
            labels = np.arange(self._n)
        labels = np.asarray(labels)
        if labels.shape != (self._n,):
            raise ValueError("labels must provide one stream label per particle")
        self._labels = labels
        self._block = int(block)
        self._gens = [None] * self._n
        self._buf = np.empty((self._n, self._block))
        self._pos = np.full(self._n, self._block)

    def take(self, idx: np.ndarray) -> np.ndarray:
        pos = self._pos
        exhausted = idx[pos[idx] >= self._block]
        for i in exhausted.tolist():
            g = self._gens[i]
            if g is None:
                g = self._base.child(int(self._labels[i])).generator()
                self._gens[i] = g
            self._buf[i] = g.random(self._block)
            pos[i] = 0
        out = self._buf[idx, pos[idx]]
        pos[idx] += 1
        return out


class GeneratorDraws:
    """Adapter presenting a single numpy Generator through the ``take``
    interface; used for scalar stepping and tests."""

    def __init__(self, gen: np.random.Generator):
        self._gen = gen

    def take(self, idx: np.ndarray) -> np.ndarray:
        return self._gen.random(len(idx))


def _advance_multiplicative(w, a, beta, r, h, draws, jumps, trace=None):
    """In-place exact step of length h for all particles in w (loss = beta*w)."""
    n = w.size
    if beta <= 0.0:
        w += a * h
        return
    active = np.arange(n)
    rem = np.full(n, h)
    while active.size:
        e = -np.log1p(-draws.take(active))
        wa = w[active]
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = wa + np.sqrt(wa * wa + (2.0 * a / beta) * e)
            tau = np.where(denom > 0.0, 2.0 * e / (beta * np.where(denom > 0.0, denom, 1.0)), np.inf)
        fire = tau < rem[active]
        f_idx = active[fire]
        d_idx = active[~fire]
        w[d_idx] += a * rem[d_idx]
        pre = w[f_idx] + a * tau[fire]
        post = r * pre
        w[f_idx] = post
        if trace is not None and f_idx.size:
            trace.append((pre.copy(), post.copy()))
        rem[f_idx] -= tau[fire]
        jumps[f_idx] += 1
        active = f_idx


def _advance_thinning(w, a, r, h, omega: ScalarRate, s_u: float, draws, jumps, trace=None):
    """In-place thinning step of length h; loss rate omega(w) * s_u with
    omega nondecreasing (bound evaluated at the step's maximal state)."""
    n = w.size
    if s_u <= 0.0:
        w += a * h
        return
    bound = np.asarray(omega.value(w + a * h), dtype=float) * s_u
    w_ev = w.copy()  # state at the last event
    t_ev = np.zeros(n)  # time of the last event within the step
    clock = np.zeros(n)  # thinning candidate clock
    active = np.nonzero(bound > 0.0)[0]
    w[bound <= 0.0] += a * h
    while active.size:
        e = -np.log1p(-draws.take(active))
        clock[active] += e / bound[active]
        alive = clock[active] <= h
        done = active[~alive]
        w[done] = w_ev[done] + a * (h - t_ev[done])
        cand = active[alive]
        if cand.size:
            u2 = draws.take(cand)
            w_at = w_ev[cand] + a * (clock[cand] - t_ev[cand])
            rate = np.asarray(omega.value(w_at), dtype=float) * s_u
            acc = cand[u2 * bound[cand] <= rate]
            pre = w_ev[acc] + a * (clock[acc] - t_ev[acc])
            post = r * pre
            w_ev[acc] = post
            if trace is not None and acc.size:
                trace.append((pre.copy(), post.copy()))
            t_ev[acc] = clock[acc]
            jumps[acc] += 1
        active = cand


def advance_in_place(w, model, k, u, h, draws, jumps, trace=None):
    """Advance the class-k state array w (in place) by one frozen-field step,
    accumulating jump counts into ``jumps``; the dispatch behind
    step_frozen_field, shared by the population and ensemble simulators.
    ``trace``, if a list, collects (pre-jump, post-jump) value arrays."""
    cls = model.classes[k]
    a = eval_drift(model, k, u)
    if isinstance(cls.loss, MultiplicativeLoss):
        _advance_multiplicative(
            w, a, class_beta(model, k, u), cls.r, h, draws, jumps, trace
        )
    else:
        if not cls.loss.monotone_in_w:
            raise UnsupportedModelError(
                f"class {k}: general loss not flagged monotone in w"
            )
        _advance_thinning(
            w, a, cls.r, h, cls.loss.w_rate, loss_u_part(model, k, u), draws, jumps, trace
        )


def step_frozen_field(w, model: NetworkModel, k: int, u, h: float, draws, trace=None):
    """Advance class-k state(s) by a step of length h with the utilization
    frozen at u (its value at the step start).

    Exact within the step for multiplicative losses (closed-form hazard
    inversion, several jumps per step allowed); exact thinning for general
    monotone losses; pure drift when the loss scale vanishes.  ``draws`` may
    be a ParticleStreams, a GeneratorDraws, a numpy Generator, or an
    RngStream.  Returns (new state, jump count), matching the input shape.
    """
    if not (h > 0.0):
        raise ValueError("step length must be positive")
    if isinstance(draws, RngStream):
        draws = GeneratorDraws(draws.generator())
    elif isinstance(draws, np.random.Generator):
        draws = GeneratorDraws(draws)
    scalar = np.ndim(w) == 0
    w_arr = np.atleast_1d(np.asarray(w, dtype=float)).copy()
    if np.any(w_arr < 0.0):
        raise ModelError("states must be >= 0")
    jumps = np.zeros(w_arr.size, dtype=np.int64)
    advance_in_place(w_arr, model, k, u, h, draws, jumps, trace)
    if scalar:
        return float(w_arr[0]), int(jumps[0])
    return w_arr, jumps


def simulate_discrete_aimd(
    r: float,
    eps: float,
    steps: int,
    stream: Union[RngStream, np.random.Generator],
    w0: int = 1,
    chains: int = 1,
    record_stride: int = 1,
) -> np.ndarray:
    """Packet-level chain: from state W the next state is W+1 with
    probability (1-eps)^W, else floor(r*W); from 0 the chain moves to 1
    (the no-loss branch fires with probability (1-eps)^0 = 1).

    Runs ``chains`` independent copies for ``steps`` steps and records every
    ``record_stride``-th state (after the step).  Returns an int64 array of
    shape (chains, steps // record_stride).  eps = 0 is the degenerate
    loss-free chain (monotone growth), accepted here and flagged by callers
    that need a nondegenerate law.
    """
    if not (0.0 <= eps < 1.0):
        raise ModelError("eps must lie in [0, 1)")
    if not (0.0 < r < 1.0):
        raise ModelError("decrease factor r must lie in (0, 1)")
    if steps < 0 or record_stride < 1 or chains < 1 or w0 < 0:
        raise ValueError("steps >= 0, record_stride >= 1, chains >= 1, w0 >= 0")
    gen = stream.generator() if isinstance(stream, RngStream) else stream
    w = np.full(chains, int(w0), dtype=np.int64)
    n_rec = steps // record_stride
    out = np.empty((chains, n_rec), dtype=np.int64)
    log_keep = math.log1p(-eps) if eps > 0.0 else 0.0
    rec = 0
    block = 512
    done = 0
    while done < steps:
        m = min(block, steps - done)
        u = gen.random((m, chains))
        for i in range(m):
            if eps == 0.0:
                w += 1
            else:
                keep = u[i] < np.exp(w * log_keep)
                w = np.where(keep, w + 1, np.floor(r * w).astype(np.int64))
            done += 1
            if done % record_stride == 0:
                out[:, rec] = w
                rec += 1
    return out
