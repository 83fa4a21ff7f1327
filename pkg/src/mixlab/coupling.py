"""Scalar mass bookkeeping of the coupling construction.

Two families of mass arrive at the base set with first-arrival sequences
``a^1, a^2``.  At each time k a fraction ``d_k^i = c0 min(s^1_k, s^2_k) / s^i_k``
of the mass present is coupled; the rest returns after a delay drawn from
``p`` (perturbed within ``[1 - eps_d, 1 + eps_d]``) and is offered again.

The recursion is evaluated in push form: once ``s_j`` is final, its uncoupled
mass is spread over all later times.  That also gives the in-flight mass, so
the uncoupled tail is exact bookkeeping rather than a fitted quantity.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit, InvalidBand
from .fitting import fit_power_law
from .renewal import point_mass_p, power_law_a, power_law_p

MODES = ("exact", "low", "high", "random")


@dataclass(frozen=True)
class CouplingBudget:
    p: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    eps_d: float = 1e-5
    c0: float = 0.4
    seed: int = 0

    def __post_init__(self):
        p, a1, a2 = (np.asarray(v, dtype=float) for v in (self.p, self.a1, self.a2))
        if not (p.ndim == a1.ndim == a2.ndim == 1 and p.size == a1.size == a2.size):
            raise ValueError("p, a1, a2 must be 1-d arrays of equal length")
        if (p < 0).any() or (a1 < 0).any() or (a2 < 0).any():
            raise ValueError("mass sequences must be nonnegative")
        if p[0] != 0.0:
            raise ValueError("p[0] must be 0")
        if not 0.0 < self.c0 <= 1.0:
            raise ValueError("c0 must lie in (0, 1]")
        if self.eps_d < 0:
            raise InvalidBand("eps_d must be nonnegative")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "a1", a1)
        object.__setattr__(self, "a2", a2)

    @property
    def N(self) -> int:
        return self.p.size - 1


@dataclass
class CouplingTrace:
    s1: np.ndarray
    s2: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    eta1: np.ndarray
    eta2: np.ndarray
    tail1: np.ndarray         # uncoupled mass after time n: not yet arrived + in flight
    tail2: np.ndarray
    leak1: np.ndarray         # cumulative mass created (+) or destroyed (-) by the band
    leak2: np.ndarray
    mode: str = "exact"
    c0: float = 0.4
    eps_d: float = 0.0

    @property
    def d(self) -> np.ndarray:
        return np.minimum(self.d1, self.d2)

    @property
    def uncoupled_tail(self) -> np.ndarray:
        return self.tail1


def default_budget(alpha0: float = 2.0, N: int = 10_000, eps_d: float = 1e-5,
                   c0: float = 0.4, seed: int = 0, shifted: bool = False) -> CouplingBudget:
    """The alpha0 test budget: ``p_k ~ k^-(1+alpha0)`` and ``a_k ~ k^-alpha0``.

    Both families share the arrival law; in random mode their band
    perturbations are drawn independently.  ``shifted=True`` gives the second
    family the law ``(k + 3)^-alpha0`` with a smaller atom at 0 instead.
    """
    p, _ = power_law_p(alpha0, N)
    a1 = power_law_a(alpha0, N, 0.5)
    if not shifted:
        return CouplingBudget(p, a1, a1.copy(), eps_d, c0, seed)
    k = np.arange(1, N + 1, dtype=float)
    w = (k + 3.0) ** (-alpha0)
    a2 = np.empty(N + 1)
    a2[0] = 0.3
    a2[1:] = 0.7 * w / w.sum()
    return CouplingBudget(p, a1, a2, eps_d, c0, seed)


def geometric_budget(N: int = 200, c0: float = 0.5) -> CouplingBudget:
    a = np.zeros(N + 1)
    a[0] = 1.0
    return CouplingBudget(point_mass_p(1, N), a, a.copy(), 0.0, c0)


def _factors(mode: str, eps: float, rng, p: np.ndarray):
    """Multipliers of ``p_l`` for one source time.

    Random mode draws ``1 + eps u_l`` and then removes the p-weighted mean of
    ``u`` (rescaling so ``|u_l| <= 1``): perturbed return laws keep the total
    mass of p, as conditional probabilities must.
    """
    if mode == "exact":
        return 1.0
    if mode == "low":
        return 1.0 - eps
    if mode == "high":
        return 1.0 + eps
    u = rng.uniform(-1.0, 1.0, p.size)
    u -= np.dot(p, u) / p.sum()
    u /= max(1.0, float(np.abs(u).max()))
    return 1.0 + eps * u


def simulate_coupling(budget: CouplingBudget, mode: str = "exact") -> CouplingTrace:
    """Runs the coupled mass recursion for both families to horizon N."""
    if budget.eps_d >= 1.0:
        raise InvalidBand(f"eps_d = {budget.eps_d} leaves the band [1 - eps_d, 1 + eps_d] degenerate")
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    p, c0, eps = budget.p, budget.c0, budget.eps_d
    N = budget.N
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(budget.seed).spawn(2)]
    a = (budget.a1, budget.a2)
    incoming = [a[0].copy(), a[1].copy()]
    s = [np.zeros(N + 1), np.zeros(N + 1)]
    d = [np.zeros(N + 1), np.zeros(N + 1)]
    eta = [np.zeros(N + 1), np.zeros(N + 1)]
    tail = [np.zeros(N + 1), np.zeros(N + 1)]
    leak = [np.zeros(N + 1), np.zeros(N + 1)]
    not_arrived = [np.concatenate((np.cumsum(x[::-1])[::-1][1:], [0.0])) for x in a]
    in_flight = [0.0, 0.0]
    created = [0.0, 0.0]
    for k in range(N + 1):
        s1, s2 = incoming[0][k], incoming[1][k]
        m = min(s1, s2)
        for i, si in enumerate((s1, s2)):
            s[i][k] = si
            d[i][k] = c0 * m / si if si > 0.0 else 0.0
            eta[i][k] = c0 * m
            rest = si - c0 * m
            in_flight[i] -= si - a[i][k]
            if rest > 0.0:
                fac = _factors(mode, eps, rngs[i], p[1:])
                kernel = p[1:] * fac
                total = float(kernel.sum())
                in_flight[i] += rest * total
                created[i] += rest * (total - float(p[1:].sum()))
                if k < N:
                    incoming[i][k + 1:] += rest * kernel[:N - k]
            tail[i][k] = not_arrived[i][k] + in_flight[i]
            leak[i][k] = created[i]
    return CouplingTrace(s[0], s[1], d[0], d[1], eta[0], eta[1], tail[0], tail[1],
                         leak[0], leak[1], mode, c0, eps)


def envelope_constants(trace: CouplingTrace, alpha0: float):
    """``(c1, c2)`` with ``c1 (1 - eps)/2 k^-a0 <= s_k^i <= c2 k^-a0`` over all k >= 1."""
    k = np.arange(1, trace.s1.size, dtype=float)
    scaled = np.concatenate((trace.s1[1:] * k ** alpha0, trace.s2[1:] * k ** alpha0))
    lower = float(scaled.min())
    return 2.0 * lower / (1.0 - trace.eps_d), float(scaled.max())


def classify_tail(tail, window):
    """Compares power-law and exponential fits of the tail on ``window``.

    Returns ``("power", exponent)`` or ``("exponential", rate)``.
    """
    lo, hi = window
    n = np.arange(lo, hi + 1)
    y = np.asarray(tail, dtype=float)[lo:hi + 1]
    keep = y > 0
    n, y = n[keep], y[keep]
    if n.size < 4:
        raise DegenerateFit("tail vanishes on the fit window")
    ly = np.log(y)
    pw = np.polyfit(np.log(n), ly, 1, full=True)
    ex = np.polyfit(n.astype(float), ly, 1, full=True)
    res_pw = float(pw[1][0]) if pw[1].size else 0.0
    res_ex = float(ex[1][0]) if ex[1].size else 0.0
    if res_ex < res_pw:
        return "exponential", float(ex[0][0])
    return "power", float(pw[0][0])


def verify_coupling_bounds(trace: CouplingTrace, alpha0: float = 2.0,
                           s_band=(-2.2, -1.8), tail_band=(-1.2, -0.8)) -> dict:
    """Checks the s_k power law, the uniform lower bound on d_k and the tail decay."""
    N = trace.s1.size - 1
    lo = max(1, N // 100)
    pts = np.unique(np.round(np.geomspace(lo, N, 60)).astype(int))
    report = {"mode": trace.mode, "alpha0": alpha0}
    try:
        s_exp = [fit_power_law(pts, x[pts])[0] for x in (trace.s1, trace.s2)]
    except DegenerateFit:
        s_exp = [float("nan"), float("nan")]
    c1, c2 = envelope_constants(trace, alpha0)
    d_fit = trace.c0 * c1 * (1.0 - trace.eps_d) / (2.0 * c2)
    d_min = float(trace.d[1:].min())
    # cumulative tails feel the truncation of p and a near N; stop a decade short
    shape, value = classify_tail(trace.tail1, (lo, max(lo + 4, N // 10)))
    report.update({
        "s_exponents": s_exp,
        "c1": c1, "c2": c2, "d_fitted": d_fit, "d_min": d_min,
        "d_margin": d_min - 0.9 * d_fit,
        "tail_shape": shape,
        "tail_exponent": value if shape == "power" else None,
        "tail_rate": value if shape == "exponential" else None,
        "power_law_applicable": shape == "power",
    })
    s_ok = all(s_band[0] <= e <= s_band[1] for e in s_exp)
    d_ok = d_min >= 0.9 * d_fit
    t_ok = shape == "power" and tail_band[0] <= value <= tail_band[1]
    report.update({"s_pass": bool(s_ok), "d_pass": bool(d_ok), "tail_pass": bool(t_ok),
                   "pass": bool(s_ok and d_ok and t_ok)})
    return report


def mass_balance(trace: CouplingTrace, a_total: float, family: int = 1) -> np.ndarray:
    """``sum_{k<=n} eta_k + tail_n - leak_n - sum a``; zero up to rounding."""
    eta = trace.eta1 if family == 1 else trace.eta2
    tail = trace.tail1 if family == 1 else trace.tail2
    leak = trace.leak1 if family == 1 else trace.leak2
    return np.cumsum(eta) + tail - leak - a_total


def write_trace_csv(path, trace: CouplingTrace):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("k", "s1", "s2", "d", "eta1", "eta2", "uncoupled_tail"))
        for k in range(trace.s1.size):
            w.writerow((k, repr(float(trace.s1[k])), repr(float(trace.s2[k])),
                        repr(float(trace.d[k])), repr(float(trace.eta1[k])),
                        repr(float(trace.eta2[k])), repr(float(trace.tail1[k]))))


def geometric_oracle(c0: float, N: int) -> np.ndarray:
    """Uncoupled mass for point-mass p, unit atom at 0 and equal families: (1 - c0)^(n+1)."""
    return (1.0 - c0) ** (np.arange(N + 1) + 1.0)


__all__ = ["CouplingBudget", "CouplingTrace", "simulate_coupling", "verify_coupling_bounds",
           "default_budget", "geometric_budget", "mass_balance", "write_trace_csv", "MODES"]

