"""Finite-population simulation of interacting AIMD classes.

The N-particle system couples connections only through the per-node
utilization of the empirical means,

    u_j = sum_k (N_k / |N|) A_jk mean(w over class k),

weighted by the actual population fractions N_k/|N| (not the limit weights
p_k).  Evolution uses operator splitting: the utilization is frozen at its
step-start value for a step of length h, within which each class advances by
the exact frozen-field kernel.  The only discretization error is therefore
the field freeze itself, controlled by keeping expected jumps per particle
per step small (see calibration.JUMPS_PER_STEP_TARGET).

Particles are exchangeable within a class: particle i of class k draws from
the stream ``base.child("class", k, label_i)``, so permuting initial states
together with their stream labels permutes trajectories identically
(multi-exchangeability, asserted in tests).  The first two particles of
every class are recorded as tagged trajectories for decoupling diagnostics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .engine import ParticleStreams, advance_in_place
from .model import ModelError, NetworkModel, utilization
from .numerics import RngStream

__all__ = [
    "TrajectoryRecord",
    "ChaosMetrics",
    "SnapshotMissingError",
    "MismatchedGridsError",
    "simulate_population",
    "export_empirical",
    "chaos_metrics",
    "default_step",
]

TIME_ATOL = 1e-9  # grid times are integer multiples of the step; lookup slack


class SnapshotMissingError(LookupError):
    """Requested snapshot time was not retained during simulation."""


class MismatchedGridsError(ValueError):
    """Replicate and reference records do not share the requested times."""


@dataclass
class TrajectoryRecord:
    """Sampled summaries of one population run.

    times: sample instants (starting at t = 0); means/tagged: per-class
    sample means and the two tagged particles; u: per-node utilization of
    the recorded states; snapshots: full per-class state vectors at the
    requested times; jumps: cumulative per-class jump counts at sample
    instants.
    """

    times: np.ndarray
    means: np.ndarray  # (K, S)
    tagged: np.ndarray  # (K, 2, S)
    u: np.ndarray  # (J, S)
    jumps: np.ndarray  # (K, S)
    h: float
    snapshots: dict = field(default_factory=dict)

    def time_index(self, t: float) -> int:
        hits = np.nonzero(np.isclose(self.times, t, rtol=0.0, atol=TIME_ATOL))[0]
        if hits.size == 0:
            raise MismatchedGridsError(f"time {t} is not on the sample grid")
        return int(hits[0])

    def trajectory_rows(self):
        """Rows (t, class, metric, value); node utilizations carry an empty
        class field and metrics u_1..u_J."""
        k_count = self.means.shape[0]
        j_count = self.u.shape[0]
        for i, t in enumerate(self.times):
            for k in range(k_count):
                yield (t, k + 1, "mean", self.means[k, i])
                yield (t, k + 1, "tagged1", self.tagged[k, 0, i])
                yield (t, k + 1, "tagged2", self.tagged[k, 1, i])
            for j in range(j_count):
                yield (t, "", f"u_{j + 1}", self.u[j, i])

    def snapshot_rows(self):
        """Rows (t, class, particle, w), particles numbered from 1."""
        for t in sorted(self.snapshots):
            for k, vec in enumerate(self.snapshots[t]):
                for i, w in enumerate(vec):
                    yield (t, k + 1, i + 1, w)


def default_step(model: NetworkModel, law=None, target_jumps: float = 0.1) -> float:
    """Step length keeping expected per-particle jumps per step <= target at
    equilibrium scale; uses the supplied equilibrium law (or a crude u = 1
    profile when none is given) to estimate per-class loss rates."""
    from .model import class_beta, MultiplicativeLoss, eval_loss

    if law is not None:
        u = law.u_star
        means = law.mean_throughput
    else:
        u = np.ones(model.num_nodes)
        means = np.ones(model.num_classes)
    worst = 0.0
    for k, cls in enumerate(model.classes):
        if isinstance(cls.loss, MultiplicativeLoss):
            rate = class_beta(model, k, u) * means[k]
        else:
            rate = float(eval_loss(model, k, means[k], u))
        worst = max(worst, rate)
    if worst <= 0.0:
        return 0.1
    return target_jumps / worst


def simulate_population(
    model: NetworkModel,
    init_states: Sequence[np.ndarray],
    t_end: float,
    h: float,
    stream: RngStream,
    sample_stride: int = 1,
    snapshot_times: Sequence[float] = (),
    labels: Optional[Sequence[np.ndarray]] = None,
    collect_jump_trace: bool = False,
) -> TrajectoryRecord:
    """Simulate the interacting population from the given per-class initial
    state vectors over [0, t_end] with frozen-field steps of length h.

    t_end must be an integer multiple of h; samples are recorded every
    ``sample_stride`` steps (t = 0 included).  ``labels``, when given,
    assigns the per-particle stream labels (default 0..N_k-1); permuting
    initial states and labels together yields identical trajectories up to
    the same permutation.
    """
    if not (h > 0.0 and t_end > 0.0):
        raise ValueError("t_end and h must be positive")
    steps = int(round(t_end / h))
    if abs(steps * h - t_end) > TIME_ATOL * max(1.0, abs(t_end)):
        raise ValueError("t_end must be an integer multiple of the step h")
    if sample_stride < 1 or steps % sample_stride != 0:
        raise ValueError("sample_stride must divide the step count")
    k_count = model.num_classes
    if len(init_states) != k_count:
        raise ModelError("one initial state vector per class is required")
    states = []
    for k, s in enumerate(init_states):
        arr = np.array(s, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ModelError(f"class {k}: initial states must be a non-empty vector")
        if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
            raise ModelError(f"class {k}: initial states must be finite and >= 0")
        states.append(arr)
    snap_steps = {}
    for t in snapshot_times:
        i = int(round(t / h))
        if abs(i * h - t) > TIME_ATOL or not (0 <= i <= steps):
            raise ValueError(f"snapshot time {t} is not on the step grid")
        snap_steps[i] = float(t)
    draws = []
    for k in range(k_count):
        lab = None if labels is None else labels[k]
        draws.append(ParticleStreams(stream.child("class", k), states[k].size, labels=lab))
    n_samples = steps // sample_stride + 1
    times = np.arange(n_samples) * (sample_stride * h)
    means = np.empty((k_count, n_samples))
    tagged = np.empty((k_count, 2, n_samples))
    u_rec = np.empty((model.num_nodes, n_samples))
    jumps_rec = np.zeros((k_count, n_samples), dtype=np.int64)
    jump_totals = [np.zeros(states[k].size, dtype=np.int64) for k in range(k_count)]
    trace = [] if collect_jump_trace else None
    snapshots = {}

    def record(sample_idx: int):
        for k in range(k_count):
            m = np.mean(states[k])
            if not np.isfinite(m):
                bad = int(np.nonzero(~np.isfinite(states[k]))[0][0])
                raise FloatingPointError(
                    f"non-finite state in class {k} (particle {bad}) at "
                    f"t={times[sample_idx]:g}; h={h:g} may be too coarse "
                    "for the model's rates"
                )
            means[k, sample_idx] = m
            tagged[k, 0, sample_idx] = states[k][0]
            tagged[k, 1, sample_idx] = states[k][1] if states[k].size > 1 else np.nan
            jumps_rec[k, sample_idx] = jump_totals[k].sum()
        u_rec[:, sample_idx] = utilization(states, model)

    record(0)
    if 0 in snap_steps:
        snapshots[snap_steps[0]] = [s.copy() for s in states]
    for step in range(1, steps + 1):
        u = utilization(states, model)
        for k in range(k_count):
            advance_in_place(states[k], model, k, u, h, draws[k], jump_totals[k], trace)
        if step % sample_stride == 0:
            record(step // sample_stride)
        if step in snap_steps:
            snapshots[snap_steps[step]] = [s.copy() for s in states]
    rec = TrajectoryRecord(
        times=times, means=means, tagged=tagged, u=u_rec, jumps=jumps_rec,
        h=h, snapshots=snapshots,
    )
    if collect_jump_trace:
        rec.jump_trace = trace
    return rec


def export_empirical(record: TrajectoryRecord, t: float, k: int) -> np.ndarray:
    """The class-k empirical state vector snapshotted at time t."""
    for key, vecs in record.snapshots.items():
        if abs(key - t) <= TIME_ATOL:
            return vecs[k].copy()
    raise SnapshotMissingError(
        f"no snapshot at t={t}; retained: {sorted(record.snapshots)}"
    )


@dataclass
class ChaosMetrics:
    """Replicate-averaged decoupling diagnostics at the requested times."""

    times: np.ndarray
    err: np.ndarray  # (K, T): mean_r |class mean - reference mean|
    err_se: np.ndarray  # (K, T)
    pair_cov: np.ndarray  # (K, T): cov across replicates of the tagged pair
    pair_cov_se: np.ndarray  # (K, T)
    cross_cov: dict  # (k, l) -> (T,) covariance of tagged1_k with tagged1_l
    replicates: int
    identical_replicates: bool


def chaos_metrics(
    records: Sequence[TrajectoryRecord],
    reference,
    times: Sequence[float],
) -> ChaosMetrics:
    """Decoupling metrics of replicate population runs against a mean-field
    reference (any object with ``times`` and per-class ``means`` arrays on a
    grid covering the requested sample times).

    err_k(t) estimates E|W-bar_k(t) - m_k(t)| over replicates; tagged-pair
    covariances estimate the residual dependence between two fixed particles.
    Identical replicates (same seed reused) are flagged: they would silently
    collapse the replicate SE to zero.
    """
    if len(records) < 2:
        raise ValueError("chaos metrics need at least two replicates")
    r_count = len(records)
    k_count = records[0].means.shape[0]
    reference_times = np.asarray(reference.times, dtype=float)
    reference_means = np.asarray(reference.means, dtype=float)
    t_list = list(times)
    ref_idx = []
    for t in t_list:
        hits = np.nonzero(np.isclose(reference_times, t, rtol=0.0, atol=TIME_ATOL))[0]
        if hits.size == 0:
            raise MismatchedGridsError(f"reference grid does not contain t={t}")
        ref_idx.append(int(hits[0]))
    err = np.empty((k_count, len(t_list)))
    err_se = np.empty_like(err)
    pair_cov = np.empty_like(err)
    pair_cov_se = np.empty_like(err)
    cross_cov = {}
    identical = False
    for a in range(r_count):
        for b in range(a + 1, r_count):
            if np.array_equal(records[a].means, records[b].means):
                identical = True
    if identical:
        warnings.warn(
            "two replicates are bitwise identical: replicate streams were "
            "reused; decoupling metrics are unreliable"
        )
    for ti, t in enumerate(t_list):
        cols = [rec.time_index(t) for rec in records]
        for k in range(k_count):
            devs = np.array(
                [abs(rec.means[k, c] - reference_means[k, ref_idx[ti]])
                 for rec, c in zip(records, cols)]
            )
            err[k, ti] = devs.mean()
            err_se[k, ti] = devs.std(ddof=1) / np.sqrt(r_count)
            x = np.array([rec.tagged[k, 0, c] for rec, c in zip(records, cols)])
            y = np.array([rec.tagged[k, 1, c] for rec, c in zip(records, cols)])
            zx, zy = x - x.mean(), y - y.mean()
            prods = zx * zy
            pair_cov[k, ti] = prods.sum() / (r_count - 1)
            # SE of the covariance from the spread of centered products
            pair_cov_se[k, ti] = prods.std(ddof=1) / np.sqrt(r_count)
        for k in range(k_count):
            for l in range(k + 1, k_count):
                xk = np.array([rec.tagged[k, 0, cols[i]] for i, rec in enumerate(records)])
                xl = np.array([rec.tagged[l, 0, cols[i]] for i, rec in enumerate(records)])
                c = ((xk - xk.mean()) * (xl - xl.mean())).sum() / (r_count - 1)
                cross_cov.setdefault((k, l), np.empty(len(t_list)))[ti] = c
    return ChaosMetrics(
        times=np.array(t_list),
        err=err,
        err_se=err_se,
        pair_cov=pair_cov,
        pair_cov_se=pair_cov_se,
        cross_cov=cross_cov,
        replicates=r_count,
        identical_replicates=identical,
    )
