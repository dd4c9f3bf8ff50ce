"""Stationary analysis: single-class stationary law and network fixed points.

One class in a constant environment (drift a, loss rate w -> b*w, decrease
factor r) has a stationary throughput density that depends on (a, b) only
through the scale rho = a/b:

    H_{r,rho}(x) = (1/sqrt(rho)) * Hu_r(x / sqrt(rho)),   x >= 0,

where Hu_r is the unit-scale density

    Hu_r(y) = C(r) * sum_{n>=0} (-1)^n q_n(r) * exp(-r^(-2n) y^2 / 2),
    q_n(r)  = r^(n(n-1)) / prod_{k=1..n} (1 - r^(2k)),
    C(r)    = sqrt(2/pi) / prod_{n>=0} (1 - r^(2n+1)),

with mean

    psi(r) = sqrt(2/pi) * prod_{n>=1} (1 - r^(2n)) / (1 - r^(2n-1)),

so E(W) = sqrt(rho) * psi(r).  The sum alternates and its terms first grow,
then decay super-exponentially; cancellation deepens rapidly as r -> 1
(both the largest coefficient and C(r) blow up), so evaluation switches to
extended precision above r = 0.9 and the supported range is capped at
r = 0.999.

Network equilibria: with multiplicative losses, a stationary profile is a
fixed point of

    u_j = F_j(u) = sum_k A_jk p_k psi(r_k) sqrt(a_k(u) / beta_k(u)),

solved generically by damped iteration with multistart, and by dedicated
monotone bisection schemes for three special topologies (single node,
linear network with one long route, three-node ring).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import mpmath
import numpy as np

from .calibration import NUMERIC_SEED, U_FLOOR
from .model import (
    ConstantDrift,
    ModelError,
    MultiplicativeLoss,
    NetworkModel,
    ReciprocalDrift,
    class_beta,
    eval_drift,
)
from .numerics import RngStream, bisect

__all__ = [
    "R_MAX",
    "SeriesError",
    "SolverError",
    "TopologyError",
    "FixedPointError",
    "unit_stationary_mean",
    "stationary_density",
    "StationaryDistribution",
    "StationaryLaw",
    "solve_fixed_point",
    "solve_single_node",
    "solve_linear_network",
    "solve_torus",
    "solve_auto",
    "detect_topology",
]

R_MAX = 0.999  # evaluation degrades as r -> 1 (cancellation digits ~ C/(1-r)); hard cap
# Above this, density evaluation switches to extended precision: the f64
# alternating series develops negative excursions past 1e-13 (vs the 1e-12
# sanity guard) once r reaches ~0.88.
R_EXTENDED = 0.85
MAX_TERMS = 20000


class SeriesError(ArithmeticError):
    """Raised when the stationary-density series cannot be evaluated reliably."""


class SolverError(RuntimeError):
    """Raised when an equilibrium solver cannot certify its result."""


class TopologyError(ModelError):
    """Raised when a specialized solver is applied to a non-matching network."""


class FixedPointError(SolverError):
    """Raised when no multistart iteration converges; carries the histories."""

    def __init__(self, message, histories=None):
        super().__init__(message)
        self.histories = histories or []


def _check_r(r: float):
    if not (np.isfinite(r) and 0.0 <= r <= R_MAX):
        raise ModelError(
            f"decrease factor r={r!r} outside supported range [0, {R_MAX}]"
        )


def unit_stationary_mean(r: float) -> float:
    """psi(r): stationary mean at unit scale (a = b = 1).

    Infinite product truncated once r^(2N) < 1e-16 * (1 - r), so the
    neglected tail is below the float64 resolution of the result.
    """
    _check_r(r)
    if r == 0.0:
        return math.sqrt(2.0 / math.pi)
    n_terms = max(1, math.ceil(math.log(1e-16 * (1.0 - r)) / (2.0 * math.log(r))))
    prod = 1.0
    rsq = r * r
    even = 1.0  # r^(2n)
    odd = r  # r^(2n-1)
    for _ in range(n_terms):
        even_next = even * rsq
        prod *= (1.0 - even_next) / (1.0 - odd)
        even = even_next
        odd *= rsq
    return math.sqrt(2.0 / math.pi) * prod


def _coef_logs(r: float) -> np.ndarray:
    """log |q_n| for n = 0, 1, ... until well past the peak.

    |q_n| = r^(n(n-1)) / prod_{k<=n}(1 - r^(2k)); the sequence rises while
    the Pochhammer factors dominate and then falls like r^(n^2).
    """
    logs = [0.0]
    lr = math.log(r) if r > 0.0 else -math.inf
    acc = 0.0
    peak = 0.0
    n = 0
    while n < MAX_TERMS:
        n += 1
        f = 1.0 - r ** (2 * n)
        acc += 2 * (n - 1) * lr - math.log(f)
        logs.append(acc)
        peak = max(peak, acc)
        if acc < peak - 60.0 * math.log(10.0):
            break
    else:
        raise SeriesError(
            f"stationary-density series needs more than {MAX_TERMS} terms; "
            "use a smaller decrease factor r"
        )
    return np.array(logs)


def _log_prefactor(r: float) -> float:
    """log C(r) = log sqrt(2/pi) - sum_n log(1 - r^(2n+1))."""
    out = 0.5 * math.log(2.0 / math.pi)
    term = r
    while term > 1e-19:
        out -= math.log1p(-term)
        term *= r * r
    return out


def _unit_density_f64(r: float, y: np.ndarray) -> np.ndarray:
    pref = math.exp(_log_prefactor(r))
    ysq = 0.5 * y * y
    total = np.exp(-ysq)  # n = 0 term, coefficient 1
    coef = 1.0
    max_coef = 1.0
    scale = 1.0  # r^(-2n)
    for n in range(1, MAX_TERMS):
        coef *= -(r ** (2 * (n - 1))) / (1.0 - r ** (2 * n))
        max_coef = max(max_coef, abs(coef))
        scale /= r * r
        if abs(coef) <= 1e-17 * max_coef:
            break
        total += coef * np.exp(-scale * ysq)
    else:
        raise SeriesError("stationary-density series did not converge")
    return pref * total


def _unit_density_mp(r: float, y: np.ndarray) -> np.ndarray:
    # Working precision sized from the worst cancellation: largest coefficient
    # times the normalizing constant, both of which explode as r -> 1.
    logs = _coef_logs(r)
    lost = (max(logs.max(), 0.0) + max(_log_prefactor(r), 0.0)) / math.log(10.0)
    digits = int(lost) + 30
    n_terms = len(logs)
    out = np.empty(y.shape, dtype=float)
    with mpmath.workdps(digits):
        rm = mpmath.mpf(repr(r))
        pref = mpmath.sqrt(2 / mpmath.pi)
        m = 0
        term = rm
        while term > mpmath.mpf(10) ** (-digits - 10) and m < MAX_TERMS:
            pref /= 1 - term
            term *= rm * rm
            m += 1
        coefs = [mpmath.mpf(1)]
        for n in range(1, n_terms):
            coefs.append(-coefs[-1] * rm ** (2 * (n - 1)) / (1 - rm ** (2 * n)))
        for i, yi in enumerate(np.asarray(y, dtype=float).ravel()):
            ym = mpmath.mpf(repr(float(yi)))
            s = mpmath.mpf(0)
            for n, c in enumerate(coefs):
                s += c * mpmath.exp(-(rm ** (-2 * n)) * ym * ym / 2)
            out.ravel()[i] = float(pref * s)
    return out


def _unit_density(r: float, y: np.ndarray) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if r == 0.0:
        vals = math.sqrt(2.0 / math.pi) * np.exp(-0.5 * y * y)
    elif r <= R_EXTENDED:
        vals = _unit_density_f64(r, y)
    else:
        vals = _unit_density_mp(r, y)
    bad = vals < -1e-12
    if np.any(bad):
        raise SeriesError(
            f"stationary-density series lost precision at r={r} "
            f"(value {vals[bad].min():.3e} < 0); use a smaller r"
        )
    return np.maximum(vals, 0.0)


def stationary_density(r: float, rho: float, x) -> np.ndarray:
    """Stationary throughput density H_{r,rho} at x (scalar or array).

    Vanishes for negative arguments; mean is sqrt(rho) * psi(r).
    """
    _check_r(r)
    if not (np.isfinite(rho) and rho > 0.0):
        raise ModelError("stationary density requires rho > 0")
    xs = np.asarray(x, dtype=float)
    scalar = xs.ndim == 0
    xs = np.atleast_1d(xs)
    sr = math.sqrt(rho)
    out = np.zeros(xs.shape)
    nz = xs >= 0.0
    out[nz] = _unit_density(r, xs[nz] / sr) / sr
    return float(out[0]) if scalar else out


def _unit_tail_cutoff(r: float) -> float:
    """y beyond which the unit density carries < ~1e-14 mass.

    The n-th term is bounded by |q_n| C exp(-y^2/2), so sum |q_n| C
    exp(-y^2/2) dominates the tail; solve for the 1e-14 level.
    """
    logs = _coef_logs(r)
    log_bound = _log_prefactor(r) + logs.max() + math.log(len(logs))
    return math.sqrt(2.0 * (max(log_bound, 0.0) + 32.0)) + 1.0


# 8-point Gauss-Legendre nodes/weights on [0, 1]
_GL_X, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class StationaryDistribution:
    """Stationary law of one class: density, CDF, quantiles, sampling.

    The CDF is built once, lazily: cell integrals of the density on a graded
    grid out to the far tail (cumulative mass beyond the cutoff < 1e-13),
    accumulated so the table is monotone by construction.  The table may
    contain flat stretches where the density underflows (near the origin the
    density vanishes faster than any power, so for larger r whole cells
    carry no double-precision mass); quantile() is the generalized inverse
    inf{x : F(x) >= q}, which jumps across such stretches, and
    cdf(quantile(q)) = q to floating-point accuracy away from them.
    """

    def __init__(self, r: float, rho: float, cells: int = 1600):
        _check_r(r)
        if not (np.isfinite(rho) and rho > 0.0):
            raise ModelError("stationary law requires rho > 0")
        self.r = float(r)
        self.rho = float(rho)
        self._cells = int(cells) if r <= R_EXTENDED else min(400, int(cells))
        self._grid = None
        self._cdf = None

    @property
    def mean(self) -> float:
        return math.sqrt(self.rho) * unit_stationary_mean(self.r)

    def pdf(self, x):
        return stationary_density(self.r, self.rho, x)

    def _build(self):
        if self._grid is not None:
            return
        y_hi = _unit_tail_cutoff(self.r)
        m = self._cells
        edges = y_hi * (np.arange(m + 1) / m) ** 1.4
        widths = np.diff(edges)
        pts = edges[:-1, None] + widths[:, None] * _GL_X[None, :]
        vals = _unit_density(self.r, pts.ravel()).reshape(m, len(_GL_X))
        cells = np.maximum(vals @ _GL_W, 0.0) * widths
        cdf = np.concatenate([[0.0], np.cumsum(cells)])
        total = cdf[-1]
        if abs(total - 1.0) > 1e-9:
            raise SeriesError(
                f"stationary CDF mass {total!r} differs from 1 beyond 1e-9 "
                f"at r={self.r}; use a smaller r"
            )
        self._grid = edges * math.sqrt(self.rho)
        self._cdf = cdf / total  # renormalization <= 1e-9, documented

    def cdf(self, x):
        self._build()
        xs = np.asarray(x, dtype=float)
        out = np.interp(xs, self._grid, self._cdf, left=0.0, right=1.0)
        return float(out) if np.ndim(x) == 0 else out

    def quantile(self, q):
        self._build()
        qs = np.asarray(q, dtype=float)
        if np.any(qs < 0.0) or np.any(qs > 1.0):
            raise ValueError("quantile levels must lie in [0, 1]")
        # generalized inverse: find the first knot with cdf >= q, then
        # interpolate inside that single cell (ties in the cdf are skipped,
        # never interpolated across)
        idx = np.clip(np.searchsorted(self._cdf, qs, side="left"), 1, self._cdf.size - 1)
        lo = self._cdf[idx - 1]
        gap = self._cdf[idx] - lo
        frac = np.where(gap > 0.0, (qs - lo) / np.where(gap > 0.0, gap, 1.0), 1.0)
        frac = np.clip(frac, 0.0, 1.0)
        out = self._grid[idx - 1] + frac * (self._grid[idx] - self._grid[idx - 1])
        return float(out) if np.ndim(q) == 0 else out

    def sample(self, gen: np.random.Generator, n: int) -> np.ndarray:
        return self.quantile(gen.random(n))


# ---------------------------------------------------------------------------
# fixed-point solvers


def _psi_vector(model: NetworkModel) -> np.ndarray:
    return np.array([unit_stationary_mean(c.r) for c in model.classes])


def _require_multiplicative(model: NetworkModel):
    for k, c in enumerate(model.classes):
        if not isinstance(c.loss, MultiplicativeLoss):
            raise ModelError(
                f"class {k}: equilibrium analysis requires multiplicative loss"
            )


def _throughput_map(model: NetworkModel) -> Callable[[np.ndarray], np.ndarray]:
    """F(u) = A (p_k psi(r_k) sqrt(a_k(u)/beta_k(u))); raises if beta <= 0."""
    _require_multiplicative(model)
    psi = _psi_vector(model)
    p = model.weights

    def f(u: np.ndarray) -> np.ndarray:
        means = np.empty(model.num_classes)
        for k in range(model.num_classes):
            beta = class_beta(model, k, u)
            if not (beta > 0.0):
                raise ModelError(
                    f"class {k}: loss scale beta={beta!r} is not positive at u={u!r}"
                )
            means[k] = psi[k] * math.sqrt(eval_drift(model, k, u) / beta)
        return model.allocation @ (p * means)

    return f


@dataclass
class StationaryLaw:
    """Equilibrium of the limit dynamics: fixed point u*, per-class scale
    rho_k = a_k(u*)/beta_k(u*), mean throughput psi(r_k) sqrt(rho_k), and
    the per-node residual |u* - F(u*)|."""

    model: NetworkModel
    u_star: np.ndarray
    rho: np.ndarray
    mean_throughput: np.ndarray
    residual: np.ndarray
    method: str
    solutions: tuple = ()
    diagnostics: dict = field(default_factory=dict)
    _dists: dict = field(default_factory=dict, repr=False)

    @property
    def r(self) -> np.ndarray:
        return np.array([c.r for c in self.model.classes])

    def distribution(self, k: int) -> StationaryDistribution:
        if k not in self._dists:
            self._dists[k] = StationaryDistribution(self.model.classes[k].r, self.rho[k])
        return self._dists[k]

    def sample_initial(self, stream: RngStream, counts) -> list:
        """Per-class stationary samples, one array per class."""
        out = []
        for k, n in enumerate(counts):
            gen = stream.child("init", k).generator()
            out.append(self.distribution(k).sample(gen, int(n)))
        return out


def _build_law(model, u, method, solutions=(), diagnostics=None) -> StationaryLaw:
    fmap = _throughput_map(model)
    u = np.asarray(u, dtype=float)
    psi = _psi_vector(model)
    rho = np.empty(model.num_classes)
    for k in range(model.num_classes):
        rho[k] = eval_drift(model, k, u) / class_beta(model, k, u)
    return StationaryLaw(
        model=model,
        u_star=u,
        rho=rho,
        mean_throughput=psi * np.sqrt(rho),
        residual=np.abs(u - fmap(u)),
        method=method,
        solutions=tuple(solutions) if len(solutions) else (u.copy(),),
        diagnostics=diagnostics or {},
    )


def solve_fixed_point(
    model: NetworkModel,
    u0=None,
    damping: float = 0.5,
    tol: float = 1e-10,
    max_iter: int = 500,
    multistart: int = 8,
    stream: Optional[RngStream] = None,
) -> StationaryLaw:
    """Damped fixed-point iteration u <- (1-theta) u + theta F(u), restarted
    from log-uniformly scaled variants of u0; converged solutions are
    clustered (relative distance 1e-6) and ALL clusters reported via
    ``law.solutions`` (the lexicographically smallest is returned as u*),
    since the fixed-point equation may have several solutions.
    """
    if not (0.0 < damping <= 1.0):
        raise ValueError("damping must lie in (0, 1]")
    if not (tol > 0.0):
        raise ValueError("tol must be positive")
    fmap = _throughput_map(model)
    j = model.num_nodes
    base = np.full(j, 1.0) if u0 is None else np.asarray(u0, dtype=float)
    if base.shape != (j,) or np.any(base < 0.0):
        raise ValueError("u0 must be a nonnegative vector of length J")
    if stream is None:
        stream = RngStream(NUMERIC_SEED).child("fixed-point-multistart")
    gen = stream.generator()
    starts = [np.maximum(base, U_FLOOR)]
    for _ in range(max(0, multistart - 1)):
        scale = np.exp(gen.uniform(math.log(0.05), math.log(20.0), size=j))
        starts.append(np.maximum(base * scale, U_FLOOR))
    solutions = []
    histories = []
    for u in starts:
        u = u.copy()
        hist = []
        ok = False
        for _ in range(max_iter):
            try:
                fu = fmap(u)
            except ModelError:
                break  # iterate left the admissible region; abandon this start
            res = float(np.max(np.abs(u - fu)))
            hist.append(res)
            if res <= tol:
                ok = True
                break
            u = np.maximum((1.0 - damping) * u + damping * fu, U_FLOOR)
        histories.append(hist)
        if ok:
            solutions.append(u)
    if not solutions:
        raise FixedPointError(
            f"no multistart converged within {max_iter} iterations "
            f"(best residuals: {[min(h) if h else None for h in histories]})",
            histories=histories,
        )
    clusters = []
    for s in solutions:
        for c in clusters:
            if np.max(np.abs(s - c)) <= 1e-6 * (1.0 + np.max(np.abs(c))):
                break
        else:
            clusters.append(s)
    clusters.sort(key=lambda v: tuple(v))
    if len(clusters) > 1:
        warnings.warn(
            f"fixed-point equation has {len(clusters)} distinct solutions; "
            "returning the smallest (all are reported in law.solutions)"
        )
    return _build_law(
        model,
        clusters[0],
        "general",
        solutions=clusters,
        diagnostics={"histories": histories, "n_starts": len(starts)},
    )


def _effective_constant_drifts(model: NetworkModel) -> Optional[np.ndarray]:
    out = np.empty(model.num_classes)
    for k, c in enumerate(model.classes):
        d = c.drift
        if isinstance(d, ConstantDrift):
            out[k] = d.a
        elif isinstance(d, ReciprocalDrift) and d.effectively_constant:
            out[k] = 1.0 / d.tau
        else:
            return None
    return out


def solve_single_node(model: NetworkModel, tol: float = 1e-12) -> StationaryLaw:
    """Single-node equilibrium by bisection on the strictly increasing

        G(u) = u - sum_k psi(r_k) p_k sqrt(a_k / beta_k(u)).

    Requires J = 1, multiplicative losses, and constant drifts; with
    utilization-dependent drifts the monotone reduction is unavailable and
    the general multistart solver is used instead (with a warning).
    """
    if model.num_nodes != 1:
        raise TopologyError("solve_single_node requires a one-node network")
    _require_multiplicative(model)
    a = _effective_constant_drifts(model)
    if a is None:
        warnings.warn(
            "utilization-dependent drift: single-node bisection unavailable, "
            "falling back to the general fixed-point solver"
        )
        return solve_fixed_point(model, tol=min(tol, 1e-10))
    psi = _psi_vector(model)
    p = model.weights

    def g(u: float) -> float:
        total = 0.0
        for k in range(model.num_classes):
            beta = class_beta(model, k, np.array([u]))
            if not (beta > 0.0):
                return -math.inf  # below the admissible region; G is negative there
            total += psi[k] * p[k] * math.sqrt(a[k] / beta)
        return u - total

    hi = 1.0
    for _ in range(200):
        if g(hi) > 0.0:
            break
        hi *= 2.0
    else:
        raise SolverError("single-node bracket search failed")
    root = bisect(g, U_FLOOR, hi, tol)
    return _build_law(model, np.array([root]), "single-node")


def _scalar_beta_fn(model: NetworkModel, k: int) -> Callable[[float], float]:
    """Class k loss scale as a function of its aggregate utilization."""
    loss = model.classes[k].loss
    if not isinstance(loss, MultiplicativeLoss):
        raise TopologyError(f"class {k}: multiplicative loss required")
    if loss.scope == "aggregate":
        if loss.rate.is_zero:
            raise SolverError(f"class {k}: loss scale is identically zero")
        return lambda x: float(loss.rate.value(x))
    col = model.allocation[:, k]
    nodes = np.nonzero(col)[0]
    if len(nodes) != 1:
        raise TopologyError(
            f"class {k}: per-node loss on a multi-node route does not reduce "
            "to a function of the aggregate utilization; use aggregate form"
        )
    jx = int(nodes[0])
    term = loss.node_terms[jx] if loss.node_terms else None
    delta = loss.delta
    if term is None:
        return lambda x: delta
    return lambda x: delta + float(term.value(x))


def _is_01_matrix(a: np.ndarray) -> bool:
    return bool(np.all((a == 0.0) | (a == 1.0)))


def _alphas(model: NetworkModel, a: np.ndarray) -> np.ndarray:
    return _psi_vector(model) * model.weights * np.sqrt(a)


_BIG = 1e18


def solve_linear_network(model: NetworkModel, tol: float = 1e-10) -> StationaryLaw:
    """Linear network: J nodes, classes 1..J each on its own node, class J+1
    crossing all of them.  With alpha_k = psi(r_k) p_k sqrt(a_k), the
    equilibrium solves

        u_j = alpha_j / sqrt(beta_j(u_j)) + alpha_{J+1} / sqrt(beta_{J+1}(T)),
        T = u_1 + ... + u_J,

    via nested bisections: phi_j(x) = x - alpha_j/sqrt(beta_j(x)) is strictly
    increasing, so u_j = phi_j^{-1}(target(T)) for the long-route target
    target(T) = alpha_{J+1}/sqrt(beta_{J+1}(T)), and T itself is the root of
    the strictly decreasing s -> sum_j phi_j^{-1}(target(s)) - s.
    """
    j = model.num_nodes
    if model.num_classes != j + 1:
        raise TopologyError("linear network requires K = J + 1 classes")
    a01 = model.allocation
    if not _is_01_matrix(a01):
        raise TopologyError("linear network requires a 0/1 allocation matrix")
    if not (np.array_equal(a01[:, :j], np.eye(j)) and np.all(a01[:, j] == 1.0)):
        raise TopologyError(
            "linear network requires classes 1..J on their own nodes and "
            "class J+1 on every node"
        )
    a = _effective_constant_drifts(model)
    if a is None:
        raise TopologyError("linear network solver requires constant drifts")
    betas = [_scalar_beta_fn(model, k) for k in range(j + 1)]
    alpha = _alphas(model, a)
    inner_tol = min(tol, 1e-10) * 1e-2

    def inv_phi(k: int, v: float) -> float:
        # solve x - alpha_k / sqrt(beta_k(x)) = v, x >= 0
        if alpha[k] == 0.0:
            return max(v, 0.0)
        if v >= _BIG:
            return _BIG

        def f(x: float) -> float:
            b = betas[k](x)
            if not (b > 0.0):
                return -math.inf
            return x - alpha[k] / math.sqrt(b) - v

        hi = max(2.0 * v, 1.0)
        for _ in range(200):
            if f(hi) > 0.0:
                break
            hi *= 2.0
        else:
            raise SolverError(f"class {k}: inner bracket search failed")
        return bisect(f, U_FLOOR, hi, inner_tol)

    def target(s: float) -> float:
        b = betas[j](s)
        if not (b > 0.0):
            return _BIG
        return min(alpha[j] / math.sqrt(b), _BIG) if alpha[j] > 0.0 else 0.0

    def g(s: float) -> float:
        return sum(inv_phi(k, target(s)) for k in range(j)) - s

    hi = 1.0
    for _ in range(200):
        if g(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise SolverError("linear network outer bracket search failed")
    s_star = bisect(g, U_FLOOR, hi, inner_tol)
    u = np.array([inv_phi(k, target(s_star)) for k in range(j)])
    total = float(np.sum(u))
    res = np.array(
        [
            abs(u[k] - alpha[k] / math.sqrt(betas[k](u[k])) - target(total))
            for k in range(j)
        ]
    )
    if np.max(res) > max(tol, 1e-9):
        raise SolverError(
            f"linear-network residual {np.max(res):.3e} exceeds tolerance"
        )
    return _build_law(model, u, "linear", diagnostics={"structural_residual": res})


def solve_torus(model: NetworkModel, tol: float = 1e-10) -> StationaryLaw:
    """Three-node ring: class k occupies nodes k and k+1 (cyclically).

    Writing phi_k(x) = 1/sqrt(beta_k(x)) and alpha_k = psi(r_k) p_k
    sqrt(a_k), the equilibrium reduces to scalar inner problems
    x_i = c_i phi_{m_i}(x_i + S) coupled only through S = sum_i x_i, with the
    per-node profile recovered from the x_i.  Two index conventions for the
    (c_i, m_i) pairing are in circulation; both candidates are computed and
    the one whose profile actually annuls the fixed-point residual
    |u - F(u)| on this model is returned.  If neither does, that is an
    error, never a silent choice.
    """
    if model.num_nodes != 3 or model.num_classes != 3:
        raise TopologyError("ring solver requires J = K = 3")
    a01 = model.allocation
    if not _is_01_matrix(a01):
        raise TopologyError("ring solver requires a 0/1 allocation matrix")
    want = np.zeros((3, 3))
    for k in range(3):
        want[k, k] = 1.0
        want[(k + 1) % 3, k] = 1.0
    if not np.array_equal(a01, want):
        raise TopologyError(
            "ring solver requires class k on nodes k and k+1 (cyclically)"
        )
    a = _effective_constant_drifts(model)
    if a is None:
        raise TopologyError("ring solver requires constant drifts")
    betas = [_scalar_beta_fn(model, k) for k in range(3)]
    alpha = _alphas(model, a)
    fmap = _throughput_map(model)
    inner_tol = min(tol, 1e-10) * 1e-2

    def phi(m: int, x: float) -> float:
        b = betas[m](x)
        if not (b > 0.0):
            return _BIG
        return 1.0 / math.sqrt(b)

    def inner(c: float, m: int, s: float) -> float:
        # solve x = c * phi_m(x + s)
        if c == 0.0:
            return 0.0

        def f(x: float) -> float:
            return x - c * phi(m, x + s)

        hi = c * phi(m, s) + 1.0
        for _ in range(200):
            if f(hi) > 0.0:
                break
            hi *= 2.0
        else:
            raise SolverError("ring inner bracket search failed")
        return bisect(f, 0.0, hi, inner_tol)

    def solve_candidate(pairs, recover) -> np.ndarray:
        def g(s: float) -> float:
            return sum(inner(c, m, s) for c, m in pairs) - s

        hi = 1.0
        for _ in range(200):
            if g(hi) < 0.0:
                break
            hi *= 2.0
        else:
            raise SolverError("ring outer bracket search failed")
        s_star = bisect(g, U_FLOOR, hi, inner_tol)
        x = [inner(c, m, s_star) for c, m in pairs]
        return recover(x)

    candidates = {
        # class-indexed pairing: x_k = alpha_k phi_k(x_k + S), u_j = x_{j-1} + x_j
        "class-indexed": (
            [(alpha[k], k) for k in range(3)],
            lambda x: np.array([x[(jj - 1) % 3] + x[jj] for jj in range(3)]),
        ),
        # shifted pairing: x_j = alpha_{j-1} phi_j(x_j + S), u_j = x_j + x_{j+1}
        "shifted": (
            [(alpha[(jj - 1) % 3], jj) for jj in range(3)],
            lambda x: np.array([x[jj] + x[(jj + 1) % 3] for jj in range(3)]),
        ),
    }
    results = {}
    residuals = {}
    for name, (pairs, recover) in candidates.items():
        try:
            u = solve_candidate(pairs, recover)
            results[name] = u
            residuals[name] = float(np.max(np.abs(u - fmap(u))))
        except (SolverError, ModelError) as exc:
            residuals[name] = math.inf
            results[name] = None
            warnings.warn(f"ring candidate {name} failed: {exc}")
    tol_eff = max(tol, 1e-9)
    admissible = {n: r for n, r in residuals.items() if r <= tol_eff}
    if not admissible:
        raise SolverError(
            "neither ring index convention annuls the fixed-point residual: "
            + ", ".join(f"{n}: {r:.3e}" for n, r in residuals.items())
        )
    best = min(admissible, key=lambda n: admissible[n])
    return _build_law(
        model,
        results[best],
        "torus",
        diagnostics={"candidate_residuals": residuals, "convention": best},
    )


def detect_topology(model: NetworkModel) -> str:
    """Classify the network for solver dispatch: single_node, linear, torus3,
    or general."""
    j, k = model.num_nodes, model.num_classes
    a = model.allocation
    if j == 1:
        return "single_node"
    if _is_01_matrix(a) and k == j + 1 and np.array_equal(a[:, :j], np.eye(j)) and np.all(a[:, j] == 1.0):
        return "linear"
    if j == 3 and k == 3 and _is_01_matrix(a):
        want = np.zeros((3, 3))
        for i in range(3):
            want[i, i] = 1.0
            want[(i + 1) % 3, i] = 1.0
        if np.array_equal(a, want):
            return "torus3"
    return "general"


def solve_auto(model: NetworkModel, tol: float = 1e-10) -> StationaryLaw:
    """Solve with the specialized solver matching the detected topology,
    falling back to the general damped iteration when the structure does not
    qualify (e.g. non-constant drifts on a linear network)."""
    topology = detect_topology(model)
    try:
        if topology == "single_node":
            return solve_single_node(model, tol=min(tol, 1e-12))
        if topology == "linear":
            return solve_linear_network(model, tol=tol)
        if topology == "torus3":
            return solve_torus(model, tol=tol)
    except TopologyError as exc:
        warnings.warn(f"{topology} solver declined the model ({exc}); "
                      "using the general iteration")
    return solve_fixed_point(model, tol=tol)
