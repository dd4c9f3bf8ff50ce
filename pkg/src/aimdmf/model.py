"""Network model: classes of AIMD connections sharing nodes.

A model has J nodes and K connection classes.  The allocation matrix A
(J x K, entries >= 0) says which nodes each class occupies.  Class k state w
grows at drift rate a_k(u) and jumps w -> r_k * w at loss rate b_k(w, u),
where u is the per-node utilization vector

    u_j = sum_k (N_k / |N|) * A_jk * mean(w over class-k connections)

for a finite population, or u_j = sum_k A_jk * p_k * E(W_k) in the
infinite-population limit with class weights p_k (sum_k p_k = 1).

Rate families
-------------
ScalarRate is the shared one-dimensional family c0 + c1 * x**p (constant,
affine, and power kinds), nonnegative and nondecreasing by construction.

Drift: either a constant a_k > 0, or the round-trip reciprocal form
1 / (tau_k + sum_j t_jk(u_j)) with per-node delay terms t_jk.

Loss: either multiplicative, b_k(w, u) = w * beta_k(u), with beta_k given
per-node (delta_k + sum_j d_jk(u_j)) or as a function of the aggregate
utilization seen by the class (g_k(sum_j A_jk u_j)); or general,
b_k(w, u) = omega_k(w) * (delta_k + sum_j d_jk(u_j)) with an explicit
monotone-in-w flag (simulation engines reject non-monotone general forms).

Structural rule: A_jk = 0 forces t_jk and d_jk to vanish identically; a
class cannot be delayed or throttled by a node it does not use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

__all__ = [
    "ModelError",
    "ScalarRate",
    "ZERO_RATE",
    "ConstantDrift",
    "ReciprocalDrift",
    "MultiplicativeLoss",
    "GeneralLoss",
    "ClassSpec",
    "NetworkModel",
    "utilization",
    "limit_utilization",
    "eval_drift",
    "eval_loss",
    "class_beta",
    "loss_u_part",
    "drift_bound",
    "validate_hypotheses",
    "HypothesesReport",
    "ClassHypotheses",
]

PROB_TOL = 1e-12  # tolerance on sum(p_k) = 1


class ModelError(ValueError):
    """Raised for structurally invalid models or rate evaluations."""


@dataclass(frozen=True)
class ScalarRate:
    """Nonnegative nondecreasing map x >= 0 -> c0 + c1 * x**p.

    kind "constant" uses c0 alone; "affine" fixes p = 1; "power" requires
    p > 0.  c0 >= 0 and c1 >= 0 keep values nonnegative and monotone.
    """

    kind: str
    c0: float
    c1: float = 0.0
    p: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "affine", "power"):
            raise ModelError(f"unknown rate kind {self.kind!r}")
        if not (np.isfinite(self.c0) and self.c0 >= 0.0):
            raise ModelError("rate requires c0 >= 0")
        if not (np.isfinite(self.c1) and self.c1 >= 0.0):
            raise ModelError("rate requires c1 >= 0")
        if self.kind == "constant" and self.c1 != 0.0:
            raise ModelError("constant rate must not carry c1")
        if self.kind in ("constant", "affine") and self.p != 1.0:
            raise ModelError(f"{self.kind} rate must not carry an exponent")
        if self.kind == "power" and not (np.isfinite(self.p) and self.p > 0.0):
            raise ModelError("power rate requires p > 0")

    def value(self, x):
        if self.is_constant:
            return np.full(np.shape(x), self.c0) if np.ndim(x) else self.c0
        xs = np.asarray(x, dtype=float)
        if self.p == 1.0:
            out = self.c0 + self.c1 * xs
        else:
            out = self.c0 + self.c1 * np.power(xs, self.p)
        return out if np.ndim(x) else float(out)

    @property
    def is_zero(self) -> bool:
        return self.c0 == 0.0 and self.c1 == 0.0

    @property
    def is_constant(self) -> bool:
        return self.kind == "constant" or self.c1 == 0.0

    @property
    def strictly_increasing(self) -> bool:
        return self.c1 > 0.0

    @property
    def lipschitz_on_compacts(self) -> bool:
        # x**p has unbounded slope at 0 for p < 1, even on compact boxes.
        return self.is_constant or self.kind != "power" or self.p >= 1.0


ZERO_RATE = ScalarRate("constant", 0.0)


@dataclass(frozen=True)
class ConstantDrift:
    """Constant additive-increase rate a > 0."""

    a: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and self.a > 0.0):
            raise ModelError("constant drift requires a > 0")


@dataclass(frozen=True)
class ReciprocalDrift:
    """Round-trip form a(u) = 1 / (tau + sum_j t_j(u_j)), tau > 0."""

    tau: float
    node_terms: tuple

    def __post_init__(self):
        if not (np.isfinite(self.tau) and self.tau > 0.0):
            raise ModelError("reciprocal drift requires tau > 0")
        object.__setattr__(self, "node_terms", tuple(self.node_terms))
        for t in self.node_terms:
            if not isinstance(t, ScalarRate):
                raise ModelError("reciprocal drift node_terms must be ScalarRate")

    @property
    def effectively_constant(self) -> bool:
        return all(t.is_zero for t in self.node_terms)


DriftSpec = Union[ConstantDrift, ReciprocalDrift]


@dataclass(frozen=True)
class MultiplicativeLoss:
    """Loss rate b(w, u) = w * beta(u).

    scope "per_node": beta(u) = delta + sum_j node_terms[j](u_j).
    scope "aggregate": beta(u) = rate(sum_j A_jk u_j), evaluated on the
    class's own allocation column.
    """

    scope: str
    delta: float = 0.0
    node_terms: tuple = ()
    rate: Optional[ScalarRate] = None

    def __post_init__(self):
        if self.scope not in ("per_node", "aggregate"):
            raise ModelError(f"unknown loss scope {self.scope!r}")
        if not (np.isfinite(self.delta) and self.delta >= 0.0):
            raise ModelError("loss requires delta >= 0")
        object.__setattr__(self, "node_terms", tuple(self.node_terms))
        if self.scope == "per_node":
            if self.rate is not None:
                raise ModelError("per_node loss must not carry an aggregate rate")
            for t in self.node_terms:
                if not isinstance(t, ScalarRate):
                    raise ModelError("loss node_terms must be ScalarRate")
        else:
            if self.node_terms or self.delta != 0.0:
                raise ModelError("aggregate loss carries only its rate")
            if not isinstance(self.rate, ScalarRate):
                raise ModelError("aggregate loss requires a ScalarRate")


@dataclass(frozen=True)
class GeneralLoss:
    """Loss rate b(w, u) = w_rate(w) * (delta + sum_j node_terms[j](u_j)).

    monotone_in_w must be declared; engines refuse to simulate general
    forms flagged non-monotone (the thinning bound needs monotonicity).
    """

    w_rate: ScalarRate
    monotone_in_w: bool
    delta: float = 0.0
    node_terms: tuple = ()

    def __post_init__(self):
        if not isinstance(self.w_rate, ScalarRate):
            raise ModelError("general loss requires a ScalarRate in w")
        if not (np.isfinite(self.delta) and self.delta >= 0.0):
            raise ModelError("loss requires delta >= 0")
        object.__setattr__(self, "node_terms", tuple(self.node_terms))
        for t in self.node_terms:
            if not isinstance(t, ScalarRate):
                raise ModelError("loss node_terms must be ScalarRate")


LossSpec = Union[MultiplicativeLoss, GeneralLoss]


@dataclass(frozen=True)
class ClassSpec:
    """One connection class: decrease factor r in (0,1), weight p >= 0,
    drift and loss specifications."""

    r: float
    p: float
    drift: DriftSpec
    loss: LossSpec

    def __post_init__(self):
        if not (np.isfinite(self.r) and 0.0 < self.r < 1.0):
            raise ModelError("class requires decrease factor r in (0, 1)")
        if not (np.isfinite(self.p) and self.p >= 0.0):
            raise ModelError("class requires weight p >= 0")
        if not isinstance(self.drift, (ConstantDrift, ReciprocalDrift)):
            raise ModelError("class drift must be ConstantDrift or ReciprocalDrift")
        if not isinstance(self.loss, (MultiplicativeLoss, GeneralLoss)):
            raise ModelError("class loss must be MultiplicativeLoss or GeneralLoss")


def _node_terms_of(spec) -> tuple:
    if isinstance(spec, ReciprocalDrift):
        return spec.node_terms
    if isinstance(spec, MultiplicativeLoss) and spec.scope == "per_node":
        return spec.node_terms
    if isinstance(spec, GeneralLoss):
        return spec.node_terms
    return ()


@dataclass
class NetworkModel:
    """J nodes, K classes, allocation matrix, class specs, optional counts."""

    allocation: np.ndarray
    classes: tuple
    counts: Optional[tuple] = None

    def __post_init__(self):
        a = np.asarray(self.allocation, dtype=float)
        if a.ndim != 2:
            raise ModelError("allocation must be a J x K matrix")
        if not np.all(np.isfinite(a)) or np.any(a < 0.0):
            raise ModelError("allocation entries must be finite and >= 0")
        a = a.copy()
        a.flags.writeable = False
        self.allocation = a
        self.classes = tuple(self.classes)
        j, k = a.shape
        if j < 1 or k < 1:
            raise ModelError("model requires at least one node and one class")
        if len(self.classes) != k:
            raise ModelError(f"expected {k} class specs, got {len(self.classes)}")
        for c in self.classes:
            if not isinstance(c, ClassSpec):
                raise ModelError("classes must be ClassSpec instances")
        total = float(sum(c.p for c in self.classes))
        if abs(total - 1.0) > PROB_TOL:
            raise ModelError(f"class weights must sum to 1 (got {total!r})")
        if self.counts is not None:
            self.counts = tuple(int(n) for n in self.counts)
            if len(self.counts) != k:
                raise ModelError("counts must list one population per class")
            if any(n < 1 for n in self.counts):
                raise ModelError("declared class populations must be >= 1")
        # A_jk = 0 forces the corresponding per-node terms to vanish.
        for ki, c in enumerate(self.classes):
            for spec in (c.drift, c.loss):
                terms = _node_terms_of(spec)
                if terms and len(terms) != j:
                    raise ModelError(
                        f"class {ki}: expected {j} node terms, got {len(terms)}"
                    )
                for ji, t in enumerate(terms):
                    if a[ji, ki] == 0.0 and not t.is_zero:
                        raise ModelError(
                            f"class {ki} has a nonzero node term at node {ji} "
                            "but does not use that node"
                        )

    @property
    def num_nodes(self) -> int:
        return self.allocation.shape[0]

    @property
    def num_classes(self) -> int:
        return self.allocation.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return np.array([c.p for c in self.classes])


def utilization(states: Sequence[np.ndarray], model: NetworkModel) -> np.ndarray:
    """Per-node utilization of a finite population.

    u_j = sum_k (N_k / |N|) A_jk mean(states[k]), weights taken from the
    actual vector lengths.  Every class must be non-empty.
    """
    if len(states) != model.num_classes:
        raise ModelError("one state vector per class is required")
    sizes = np.array([len(s) for s in states], dtype=float)
    if np.any(sizes == 0):
        raise ModelError("empty class state: every declared class needs members")
    means = np.array([float(np.mean(s)) for s in states])
    w = sizes / sizes.sum()
    return model.allocation @ (w * means)


def limit_utilization(means: Sequence[float], model: NetworkModel) -> np.ndarray:
    """Infinite-population utilization u_j = sum_k A_jk p_k means[k]."""
    m = np.asarray(means, dtype=float)
    if m.shape != (model.num_classes,):
        raise ModelError("one mean per class is required")
    return model.allocation @ (model.weights * m)


def eval_drift(model: NetworkModel, k: int, u) -> float:
    """Drift rate a_k(u) >= 0 of class k at utilization u."""
    u = np.asarray(u, dtype=float)
    d = model.classes[k].drift
    if isinstance(d, ConstantDrift):
        return d.a
    denom = d.tau + sum(t.value(u[j]) for j, t in enumerate(d.node_terms))
    return 1.0 / denom


def class_beta(model: NetworkModel, k: int, u) -> float:
    """Multiplicative loss scale beta_k(u); error for general-form classes."""
    u = np.asarray(u, dtype=float)
    loss = model.classes[k].loss
    if not isinstance(loss, MultiplicativeLoss):
        raise ModelError(f"class {k} loss is not multiplicative")
    if loss.scope == "aggregate":
        return float(loss.rate.value(float(model.allocation[:, k] @ u)))
    return loss.delta + sum(t.value(u[j]) for j, t in enumerate(loss.node_terms))


def loss_u_part(model: NetworkModel, k: int, u) -> float:
    """The u-dependent factor of a general loss: delta + sum_j d_j(u_j)."""
    u = np.asarray(u, dtype=float)
    loss = model.classes[k].loss
    if not isinstance(loss, GeneralLoss):
        raise ModelError(f"class {k} loss is not of general form")
    return loss.delta + sum(t.value(u[j]) for j, t in enumerate(loss.node_terms))


def eval_loss(model: NetworkModel, k: int, w, u):
    """Loss rate b_k(w, u); w may be a scalar or an array."""
    loss = model.classes[k].loss
    if isinstance(loss, MultiplicativeLoss):
        return np.asarray(w, dtype=float) * class_beta(model, k, u) if np.ndim(w) else w * class_beta(model, k, u)
    s = loss_u_part(model, k, u)
    return loss.w_rate.value(w) * s


def drift_bound(model: NetworkModel, k: int) -> float:
    """Uniform bound a_k(u) <= bound over u >= 0 (growth-bound constant)."""
    d = model.classes[k].drift
    if isinstance(d, ConstantDrift):
        return d.a
    # node terms are nondecreasing in u, so the denominator is smallest at u = 0
    return 1.0 / (d.tau + sum(t.value(0.0) for t in d.node_terms))


@dataclass(frozen=True)
class ClassHypotheses:
    klass: int
    drift_bound: float
    drift_lipschitz: bool
    loss_lipschitz: bool
    condition_c_branch: Optional[int]
    required_tail: Optional[str]
    warnings: tuple


@dataclass(frozen=True)
class HypothesesReport:
    per_class: tuple
    warnings: tuple

    def __str__(self):
        lines = []
        for c in self.per_class:
            branch = c.condition_c_branch if c.condition_c_branch else "none"
            tail = c.required_tail if c.required_tail else "n/a"
            lines.append(
                f"class {c.klass}: drift bound {c.drift_bound:g}, "
                f"drift Lipschitz {c.drift_lipschitz}, loss Lipschitz {c.loss_lipschitz}, "
                f"branch {branch}, initial-law tail {tail}"
            )
        lines.extend(f"warning: {w}" for w in self.warnings)
        return "\n".join(lines)


def validate_hypotheses(model: NetworkModel) -> HypothesesReport:
    """Report, per class, which regularity hypotheses of the limit theorems
    hold: drift bounded, drift/loss Lipschitz on compact utilization boxes,
    and which moment condition the initial law must satisfy.

    Branch 1 applies when b_k(w, u) is jointly Lipschitz (requires an
    exponential moment of the initial law); branch 2 when the loss is
    multiplicative with Lipschitz beta_k (requires a Gaussian moment).
    Violations are warnings, never errors: the simulators run regardless,
    only the limit-theorem guarantees lapse.
    """
    per_class = []
    warnings = []
    for k, c in enumerate(model.classes):
        cw = []
        d = c.drift
        if isinstance(d, ConstantDrift):
            d_lip = True
        else:
            d_lip = all(t.lipschitz_on_compacts for t in d.node_terms)
            if not d_lip:
                cw.append(
                    f"class {k}: drift delay term with exponent < 1 is not "
                    "Lipschitz at u = 0"
                )
        loss = c.loss
        branch = None
        tail = None
        if isinstance(loss, MultiplicativeLoss):
            if loss.scope == "aggregate":
                l_lip = loss.rate.lipschitz_on_compacts
            else:
                l_lip = all(t.lipschitz_on_compacts for t in loss.node_terms)
            if l_lip:
                beta_constant = (
                    loss.rate.is_constant
                    if loss.scope == "aggregate"
                    else all(t.is_zero for t in loss.node_terms)
                )
                if beta_constant:
                    # b = w * const is jointly Lipschitz: the weaker branch applies
                    branch, tail = 1, "exponential"
                else:
                    branch, tail = 2, "gaussian"
        else:
            l_lip = loss.w_rate.lipschitz_on_compacts and all(
                t.lipschitz_on_compacts for t in loss.node_terms
            )
            if not loss.monotone_in_w:
                cw.append(
                    f"class {k}: general loss flagged non-monotone in w; "
                    "simulation engines will reject this class"
                )
            u_constant = all(t.is_zero for t in loss.node_terms)
            w_constant = loss.w_rate.is_constant
            if l_lip and (u_constant or w_constant):
                # a product of rates is jointly Lipschitz only when one
                # factor is constant (otherwise it grows like w * u)
                branch, tail = 1, "exponential"
        if not l_lip:
            cw.append(
                f"class {k}: loss term with exponent < 1 is not Lipschitz at 0"
            )
        if branch is None:
            cw.append(
                f"class {k}: outside both moment-condition branches; "
                "limit-theorem guarantees do not apply"
            )
        per_class.append(
            ClassHypotheses(
                klass=k,
                drift_bound=drift_bound(model, k),
                drift_lipschitz=d_lip,
                loss_lipschitz=l_lip,
                condition_c_branch=branch,
                required_tail=tail,
                warnings=tuple(cw),
            )
        )
        warnings.extend(cw)
    return HypothesesReport(per_class=tuple(per_class), warnings=tuple(warnings))
