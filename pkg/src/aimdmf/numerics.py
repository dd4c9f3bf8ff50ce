"""Shared numerical utilities: seeded random streams, root finding, quadrature,
and distribution distances.

Random streams
--------------
Reproducibility across runs, replicates, and thread counts is built on
counter-based generators.  A :class:`RngStream` is an immutable (root seed,
path) pair; the path is a tuple of labels (ints or strings) identifying where
in the program the stream is used, e.g. ``root.child("chaos", "rep", 3,
"class", 0, 7)`` for particle 7 of class 0 in replicate 3.  The 128-bit Philox
key is derived by hashing the root seed together with the encoded path
(SHA-256, first 16 bytes), so

* the same (seed, path) always yields the same draw sequence,
* distinct paths yield statistically independent streams,
* no global state is involved: any worker thread can reconstruct its
  generator from the value alone, which is what makes output bitwise
  independent of the thread count.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad as _scipy_quad

__all__ = [
    "RngStream",
    "exp_sample",
    "exp_samples",
    "bisect",
    "quad",
    "ks_distance",
    "BracketError",
    "QuadratureError",
]


class BracketError(ValueError):
    """Raised when a bisection bracket does not enclose a sign change."""


class QuadratureError(RuntimeError):
    """Raised when adaptive quadrature cannot reach the requested accuracy."""


_KEY_DOMAIN = b"aimdmf/rng/v1"


def _encode_part(part) -> bytes:
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ValueError("stream path labels must be non-negative integers")
        return b"i" + int(part).to_bytes(8, "little")
    if isinstance(part, str):
        raw = part.encode("utf-8")
        return b"s" + len(raw).to_bytes(4, "little") + raw
    raise TypeError(f"stream path labels must be int or str, got {type(part)!r}")


@dataclass(frozen=True)
class RngStream:
    """Immutable handle for a reproducible random stream.

    ``generator()`` returns a fresh numpy Generator over a Philox counter
    engine keyed by SHA-256(domain tag, root seed, path).  Calling it twice
    gives two generators that replay the identical sequence.
    """

    seed: int
    path: tuple = field(default_factory=tuple)

    def __post_init__(self):
        if not (0 <= int(self.seed) < 2**64):
            raise ValueError("root seed must fit in an unsigned 64-bit integer")

    def child(self, *parts) -> "RngStream":
        for p in parts:
            _encode_part(p)  # validate eagerly
        return RngStream(self.seed, self.path + tuple(parts))

    def key(self) -> int:
        h = hashlib.sha256()
        h.update(_KEY_DOMAIN)
        h.update(int(self.seed).to_bytes(8, "little"))
        for part in self.path:
            h.update(_encode_part(part))
        return int.from_bytes(h.digest()[:16], "little")

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(key=self.key()))


def exp_sample(gen: np.random.Generator) -> float:
    """One unit-rate exponential draw, E = -ln(U) with U uniform on (0, 1].

    ``gen.random()`` is uniform on [0, 1); U = 1 - raw maps it onto (0, 1],
    so E = 0 is attained (at raw = 0) and E = +inf is not.
    """
    return -np.log1p(-gen.random())


def exp_samples(gen: np.random.Generator, n: int) -> np.ndarray:
    return -np.log1p(-gen.random(n))


def bisect(f, lo: float, hi: float, tol: float, max_iter: int = 200) -> float:
    """Deterministic bisection root of f on [lo, hi].

    Requires a sign change over the bracket (an endpoint value of exactly
    zero counts).  Returns the bracket midpoint once the bracket width is
    <= tol, so the root location error is at most tol for monotone f.
    Infinite endpoint values are accepted as carrying their sign; NaN is
    rejected.
    """
    if not (lo < hi):
        raise ValueError("bisect requires lo < hi")
    if not (tol > 0.0):
        raise ValueError("bisect requires tol > 0")
    flo = f(lo)
    fhi = f(hi)
    if np.isnan(flo) or np.isnan(fhi):
        raise BracketError("bisect: f is NaN at a bracket endpoint")
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if np.sign(flo) == np.sign(fhi):
        raise BracketError(
            f"bisect: no sign change on [{lo}, {hi}] (f(lo)={flo}, f(hi)={fhi})"
        )
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:  # bracket width at floating-point resolution
            break
        fmid = f(mid)
        if np.isnan(fmid):
            raise BracketError(f"bisect: f is NaN at {mid}")
        if fmid == 0.0:
            return mid
        if np.sign(fmid) == np.sign(flo):
            lo, flo = mid, fmid
        else:
            hi, fhi = mid, fmid
    return 0.5 * (lo + hi)


def quad(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Adaptive quadrature of f over [lo, hi] with absolute-error target tol.

    Thin wrapper over scipy's QUADPACK; raises QuadratureError when the
    reported error estimate exceeds tol or the routine signals
    non-convergence.  ``hi`` may be numpy.inf.
    """
    if not (tol > 0.0):
        raise ValueError("quad requires tol > 0")
    out = _scipy_quad(f, lo, hi, epsabs=0.5 * tol, epsrel=1e-12, limit=400, full_output=1)
    value, abserr = out[0], out[1]
    if len(out) > 3:  # QUADPACK attached a warning message
        raise QuadratureError(f"quadrature did not converge: {out[3]}")
    if abserr > tol:
        raise QuadratureError(
            f"quadrature error estimate {abserr:.3e} exceeds target {tol:.3e}"
        )
    return value


def ks_distance(samples, cdf) -> float:
    """Kolmogorov-Smirnov statistic between a sample and a reference CDF.

    D = max_i max(i/n - F(x_(i)), F(x_(i)) - (i-1)/n) over the sorted sample.
    ``cdf`` must accept a vector of points.
    """
    xs = np.sort(np.asarray(samples, dtype=float))
    n = xs.size
    if n == 0:
        raise ValueError("ks_distance requires a non-empty sample")
    fx = np.asarray(cdf(xs), dtype=float)
    if fx.shape != xs.shape:
        raise ValueError("cdf must return one value per sample point")
    if np.any(fx < -1e-12) or np.any(fx > 1.0 + 1e-12):
        raise ValueError("cdf values outside [0, 1]")
    fx = np.clip(fx, 0.0, 1.0)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - fx), np.max(fx - (i - 1) / n)))
