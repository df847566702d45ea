"""Closed-form and combinatorial analysis: channel fixed points, cost curves,
typicality, and error decay.

The superoperator convention is row-major: a channel matrix ``S`` acts on
``rho.reshape(-1)`` and ``S[i*d + j, k*d + l]`` is the (i, j) component of
the image of the matrix unit ``|k><l|``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import bisect
from scipy.special import gammaln, logsumexp

from . import qmath
from .model import GateSpec

CHANNEL_TP_TOL = 1e-8
CHANNEL_CP_TOL = 1e-8
CESARO_MAX_TERMS = 10**6


class AnalysisError(Exception):
    pass


# ---------------------------------------------------------------------------
# channels


@dataclass(frozen=True, init=False)
class ChannelMatrix:
    """Verified CPTP superoperator on a d-dimensional system."""

    matrix: np.ndarray
    d: int

    def __init__(self, matrix: np.ndarray, d: int):
        mat = np.asarray(matrix, dtype=complex).copy()
        if mat.shape != (d * d, d * d):
            raise AnalysisError(f"superoperator shape {mat.shape} != {(d*d, d*d)}")
        s4 = mat.reshape(d, d, d, d)
        # trace preservation: Tr[E(|k><l|)] = delta_kl
        traces = np.einsum("iikl->kl", s4)
        tp_dev = float(np.max(np.abs(traces - np.eye(d))))
        if tp_dev > CHANNEL_TP_TOL:
            raise AnalysisError(f"channel is not trace preserving (deviation {tp_dev:.3e})")
        choi = np.einsum("ijkl->kilj", s4).reshape(d * d, d * d)
        eigs = np.linalg.eigvalsh((choi + choi.conj().T) / 2)
        if float(eigs.min()) < -CHANNEL_CP_TOL:
            raise AnalysisError(f"channel is not completely positive (min Choi eig {eigs.min():.3e})")
        mat.setflags(write=False)
        object.__setattr__(self, "matrix", mat)
        object.__setattr__(self, "d", d)

    def apply(self, rho: np.ndarray) -> np.ndarray:
        out = self.matrix @ np.asarray(rho, dtype=complex).reshape(-1)
        return out.reshape(self.d, self.d)

    def choi(self) -> np.ndarray:
        s4 = self.matrix.reshape(self.d, self.d, self.d, self.d)
        return np.einsum("ijkl->kilj", s4).reshape(self.d * self.d, self.d * self.d)


def superoperator_from_map(apply_fn: Callable[[np.ndarray], np.ndarray], d: int) -> np.ndarray:
    cols = []
    for k in range(d):
        for l in range(d):
            unit = np.zeros((d, d), dtype=complex)
            unit[k, l] = 1.0
            cols.append(apply_fn(unit).reshape(-1))
    return np.stack(cols, axis=1)


def apply_channel_to_factor(
    channel: ChannelMatrix, rho: np.ndarray, dims: Sequence[int], position: int
) -> np.ndarray:
    """Apply the channel to one tensor factor of a multipartite operator."""
    dims = tuple(dims)
    d = dims[position]
    if d != channel.d:
        raise AnalysisError(f"factor dimension {d} != channel dimension {channel.d}")
    n = len(dims)
    x = np.asarray(rho, dtype=complex).reshape(dims + dims)
    x = np.moveaxis(x, (position, n + position), (0, 1))
    rest = x.shape[2:]
    s4 = channel.matrix.reshape(d, d, d, d)
    x = np.einsum("ijkl,kl...->ij...", s4, x)
    x = np.moveaxis(x.reshape((d, d) + rest), (0, 1), (position, n + position))
    total = int(np.prod(dims))
    return x.reshape(total, total)


def round_trip_channel(gate: GateSpec) -> ChannelMatrix:
    """Channel on one side induced by undoing and redoing the gate.

    tau -> Tr_{B RB}[ U ( Tr_B[ U+ (tau (x) I_B / d) U ] (x) Phi_d^{B RB} ) U+ ].
    The maximally mixed ancilla keeps the composition trace preserving.
    """
    d = gate.local_dim
    u = gate.matrix
    bell = np.zeros(d * d, dtype=complex)
    for t in range(d):
        bell[t * d + t] = 1.0 / math.sqrt(d)
    phi = np.outer(bell, bell.conj())  # on (B, RB)
    eye_b = np.eye(d, dtype=complex) / d

    def apply_fn(tau: np.ndarray) -> np.ndarray:
        joint = u.conj().T @ np.kron(tau, eye_b) @ u
        on_a = _trace_second(joint, d, d)
        big = np.kron(on_a, phi)  # factors (A, B, RB)
        big = _apply_two_site(u, big, (d, d, d), (0, 1))
        return _trace_out_rest(big, (d, d, d), keep=0)

    return ChannelMatrix(superoperator_from_map(apply_fn, d), d)


def _trace_second(rho: np.ndarray, d1: int, d2: int) -> np.ndarray:
    x = rho.reshape(d1, d2, d1, d2)
    return np.einsum("aibi->ab", x)


def _trace_out_rest(rho: np.ndarray, dims: Sequence[int], keep: int) -> np.ndarray:
    dims = tuple(dims)
    n = len(dims)
    x = rho.reshape(dims + dims)
    x = np.moveaxis(x, (keep, n + keep), (0, 1))
    k = dims[keep]
    rest = int(np.prod(dims)) // k
    x = x.reshape(k, k, rest, rest)
    return np.einsum("abii->ab", x)


def _apply_two_site(u: np.ndarray, rho: np.ndarray, dims: Sequence[int], sites: tuple[int, int]) -> np.ndarray:
    dims = tuple(dims)
    total = int(np.prod(dims))
    vec_cols = []
    # conjugate via the vector embedding on both sides
    x = rho.reshape(dims + dims)
    n = len(dims)
    i, j = sites
    x = np.moveaxis(x, (i, j, n + i, n + j), (0, 1, n, n + 1))
    moved = x.shape
    dd = dims[i] * dims[j]
    x = x.reshape(dd, total // dd, dd, total // dd)
    x = np.einsum("ab,bmcn,cd->amdn", u, x, u.conj().T)
    x = x.reshape(moved)
    x = np.moveaxis(x, (0, 1, n, n + 1), (i, j, n + i, n + j))
    return x.reshape(total, total)


def cesaro_fixed_state(channel: ChannelMatrix, tol: float = 1e-8) -> np.ndarray:
    """Long-run Cesaro mean of channel iterates on half a maximally entangled pair.

    Works on the doubled system (A, RA): only the fixed sector (eigenvalue
    exactly 1) survives Cesaro averaging, so the limit is the eigenvalue-1
    spectral projection of the lifted superoperator applied to the pair
    projector.  Falls back to explicit running means when the spectral
    decomposition is ill conditioned.
    """
    d = channel.d
    dims = (d, d)
    bell = np.zeros(d * d, dtype=complex)
    for t in range(d):
        bell[t * d + t] = 1.0 / math.sqrt(d)
    start = np.outer(bell, bell.conj())

    lifted = superoperator_from_map(
        lambda rho: apply_channel_to_factor(channel, rho, dims, 0), d * d
    )
    try:
        w, v = np.linalg.eig(lifted)
        cond = np.linalg.cond(v)
        if cond > 1e10:
            raise np.linalg.LinAlgError("eigenbasis ill conditioned")
        coeffs = np.linalg.solve(v, start.reshape(-1))
        sel = np.abs(w - 1.0) <= 1e-10
        limit = (v[:, sel] @ coeffs[sel]).reshape(d * d, d * d)
        limit = (limit + limit.conj().T) / 2
        evals = np.linalg.eigvalsh(limit)
        if float(evals.min()) < -1e-8 or abs(float(np.trace(limit).real) - 1.0) > 1e-8:
            raise np.linalg.LinAlgError("projected limit is not a state")
        return limit
    except np.linalg.LinAlgError:
        pass

    # iterative fallback: running Cesaro mean of channel iterates
    current = start
    mean = np.zeros_like(start)
    prev_mean = None
    for k in range(1, CESARO_MAX_TERMS + 1):
        current = apply_channel_to_factor(channel, current, dims, 0)
        mean = mean + (current - mean) / k
        if k % 64 == 0:
            if prev_mean is not None and float(np.max(np.abs(mean - prev_mean))) < tol:
                return (mean + mean.conj().T) / 2
            prev_mean = mean.copy()
    raise AnalysisError(f"Cesaro iteration did not settle within {CESARO_MAX_TERMS} terms")


def markovianizing_cost(gate: GateSpec) -> float:
    """Entropy (bits) of the Cesaro fixed state of the round-trip channel."""
    return qmath.von_neumann_entropy(cesaro_fixed_state(round_trip_channel(gate)))


# ---------------------------------------------------------------------------
# cost curve


def success_probability(theta: float, alpha: float | None = None) -> float:
    """Heralded-branch success probability sin^2(alpha) / (2 (1 - cos theta cos alpha)).

    Defaults to the alpha = sqrt(theta) resource choice.
    """
    if alpha is None:
        alpha = math.sqrt(theta)
    denom = 2.0 * (1.0 - math.cos(theta) * math.cos(alpha))
    if denom == 0.0:
        raise ValueError("success probability undefined at theta = alpha = 0")
    return math.sin(alpha) ** 2 / denom


def resource_spectrum(theta: float) -> tuple[float, float]:
    """Schmidt spectrum (cos^2, sin^2 of sqrt(theta)/2) of the resource pair."""
    x = math.cos(math.sqrt(theta) / 2) ** 2
    return (x, 1.0 - x)


@dataclass(frozen=True)
class CostCurvePoint:
    """Average ebit cost of the retry protocol at one angle."""

    theta: float
    p_theta: float
    h_theta: float
    e_bar: float

    @classmethod
    def at(cls, theta: float) -> "CostCurvePoint":
        p = success_probability(theta)
        h = qmath.binary_entropy(resource_spectrum(theta)[0])
        return cls(theta=theta, p_theta=p, h_theta=h, e_bar=1.0 - p + h)


def expected_ebits(theta: float) -> CostCurvePoint:
    if not 0.0 < theta <= math.pi / 2:
        raise ValueError(f"theta {theta} outside (0, pi/2]")
    return CostCurvePoint.at(theta)


def break_even_theta(
    grid_points: int = 1000, lo: float = 1e-4, hi: float = math.pi / 2
) -> float | None:
    """Smallest root of e_bar(theta) = 1, bracketed on a grid then bisected.

    Returns None when no sign change is found on the grid.
    """
    thetas = np.linspace(lo, hi, grid_points)
    values = np.array([CostCurvePoint.at(t).e_bar - 1.0 for t in thetas])
    sign_change = np.nonzero(np.diff(np.sign(values)) != 0)[0]
    if sign_change.size == 0:
        return None
    i = int(sign_change[0])
    return float(
        bisect(lambda t: CostCurvePoint.at(t).e_bar - 1.0, thetas[i], thetas[i + 1], xtol=1e-10)
    )


# ---------------------------------------------------------------------------
# typicality


@dataclass(frozen=True)
class TypicalSet:
    """Weak typicality data for a binary product distribution.

    Membership and weights are handled through the count of ones, never by
    enumerating the 2^n sequences.
    """

    n: int
    delta: float
    probs: tuple[float, float]
    entropy: float
    typical_counts: tuple[int, ...]
    weight: float
    complement: float  # 1 - weight, computed from the atypical side
    log_weight: float  # natural log
    log_complement: float

    @functools.cached_property
    def count(self) -> int:
        """Exact number of typical sequences (big-integer arithmetic; lazy)."""
        return int(sum(math.comb(self.n, k) for k in self.typical_counts))

    def is_typical(self, sequence: Sequence[int]) -> bool:
        if len(sequence) != self.n:
            raise ValueError(f"sequence length {len(sequence)} != n = {self.n}")
        return int(sum(sequence)) in set(self.typical_counts)


def _log_binom_pmf(n: int, ks: np.ndarray, p1: float) -> np.ndarray:
    log_p1 = math.log(p1) if p1 > 0 else -math.inf
    log_p0 = math.log1p(-p1) if p1 < 1 else -math.inf
    out = gammaln(n + 1) - gammaln(ks + 1) - gammaln(n - ks + 1)
    return out + ks * log_p1 + (n - ks) * log_p0


def typical_set(n: int, delta: float, probs: Sequence[float]) -> TypicalSet:
    """Sequences whose product probability is within 2^{+-n delta} of 2^{-nH}."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if delta <= 0:
        raise ValueError("delta must be positive")
    lam = qmath.as_distribution(probs)
    if lam.size != 2:
        raise ValueError("only binary spectra are supported")
    lam0, lam1 = float(lam[0]), float(lam[1])
    entropy = qmath.shannon_entropy(lam)
    ks = np.arange(n + 1)
    if lam1 in (0.0, 1.0):
        # degenerate spectrum: the single sequence has probability 1 = 2^{-n 0}
        log2_prob = np.where(ks == (n if lam1 == 1.0 else 0), 0.0, -np.inf)
    else:
        log2_prob = (n - ks) * math.log2(lam0) + ks * math.log2(lam1)
    eps = 1e-12  # absorb float fuzz at the window edges
    typical = (log2_prob >= -n * (entropy + delta) - eps) & (
        log2_prob <= -n * (entropy - delta) + eps
    )
    t_counts = tuple(int(k) for k in ks[typical])
    log_pmf = _log_binom_pmf(n, ks, lam1)
    if typical.any():
        log_weight = float(logsumexp(log_pmf[typical]))
    else:
        log_weight = -math.inf
    if (~typical).any():
        log_complement = float(logsumexp(log_pmf[~typical]))
    else:
        log_complement = -math.inf
    return TypicalSet(
        n=n,
        delta=delta,
        probs=(lam0, lam1),
        entropy=entropy,
        typical_counts=t_counts,
        weight=float(math.exp(log_weight)) if log_weight > -math.inf else 0.0,
        complement=float(math.exp(log_complement)) if log_complement > -math.inf else 0.0,
        log_weight=log_weight,
        log_complement=log_complement,
    )


def enumerate_typical_weight(n: int, delta: float, probs: Sequence[float]) -> float:
    """Brute-force check of the typical weight; only sensible for small n."""
    if n > 20:
        raise ValueError("enumeration beyond n = 20 is deliberately unsupported")
    tset = typical_set(n, delta, probs)
    lam0, lam1 = tset.probs
    total = 0.0
    for x in range(2**n):
        ones = bin(x).count("1")
        if tset.is_typical([(x >> i) & 1 for i in range(n)]):
            total += lam0 ** (n - ones) * lam1**ones
    return total


@dataclass(frozen=True)
class TypicalityReport:
    """Error budget of the batched protocol at block length n."""

    theta: float
    n: int
    delta: float
    entropy: float
    typical_weight: float
    epsilon_n: float  # trace-distance error of the typical projection
    epsilon_prime: float  # probability of too many heralded failures
    total_error: float  # epsilon_n + 2 epsilon_prime
    dilution_ebits: float  # n (H + delta)
    log_epsilon_n: float  # natural logs, finite even when the floats underflow
    log_epsilon_prime: float
    hoeffding_epsilon_prime: float


def projection_error(n: int, delta: float, theta: float) -> float:
    """Exact trace distance 2 sqrt(1 - w) between the projected and ideal resources."""
    tset = typical_set(n, delta, resource_spectrum(theta))
    return 2.0 * math.sqrt(max(tset.complement, 0.0))


def excess_failure_prob(n: int, delta: float, theta: float) -> float:
    """Exact lower binomial tail: fewer than n (p - delta) heralded successes."""
    return math.exp(_log_excess_failure(n, delta, theta))


def _log_excess_failure(n: int, delta: float, theta: float) -> float:
    p = success_probability(theta)
    cutoff = n * (p - delta)
    k_max = math.ceil(cutoff - 1.0) if abs(cutoff - round(cutoff)) > 1e-9 else int(round(cutoff)) - 1
    k_max = min(k_max, n)
    if k_max < 0:
        return -math.inf
    ks = np.arange(k_max + 1)
    return float(logsumexp(_log_binom_pmf(n, ks, p)))


def error_budget(n: int, delta: float, theta: float) -> TypicalityReport:
    tset = typical_set(n, delta, resource_spectrum(theta))
    log_eps_prime = _log_excess_failure(n, delta, theta)
    eps_prime = math.exp(log_eps_prime) if log_eps_prime > -math.inf else 0.0
    eps_n = 2.0 * math.sqrt(max(tset.complement, 0.0))
    log_eps_n = (
        math.log(2.0) + 0.5 * tset.log_complement
        if tset.log_complement > -math.inf
        else -math.inf
    )
    return TypicalityReport(
        theta=theta,
        n=n,
        delta=delta,
        entropy=tset.entropy,
        typical_weight=tset.weight,
        epsilon_n=eps_n,
        epsilon_prime=eps_prime,
        total_error=eps_n + 2.0 * eps_prime,
        dilution_ebits=n * (tset.entropy + delta),
        log_epsilon_n=log_eps_n,
        log_epsilon_prime=log_eps_prime,
        hoeffding_epsilon_prime=math.exp(-2.0 * delta**2 * n),
    )


def log_linear_fit(ns: Sequence[int], log_values: Sequence[float]) -> tuple[float, float, float]:
    """Least-squares fit log v = a n + b; returns (a, b, r_squared)."""
    x = np.asarray(ns, dtype=float)
    y = np.asarray(log_values, dtype=float)
    if np.any(~np.isfinite(y)):
        raise ValueError("fit requires finite log values")
    a, b = np.polyfit(x, y, 1)
    pred = a * x + b
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(a), float(b), r2
