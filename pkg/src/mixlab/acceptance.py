"""The thirteen acceptance criteria as callable checks.

Each check runs at the documented scale (``quick=True`` shrinks budgets for
smoke runs; the tolerances never change) and returns a CriterionResult with
the measured values.  ``tests/test_acceptance.py`` and ``mixlab accept-all``
both go through ``run_criterion``.
"""
from __future__ import annotations

import filecmp
import os
import shutil
import tempfile
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from . import cell_chain as cc
from . import coupling as cp
from . import renewal as rn
from .config import resolve
from .experiments import RUNNERS


@dataclass
class CriterionResult:
    cid: int
    title: str
    passed: bool
    measured: dict
    tolerance: str
    seconds: float = 0.0
    files: list = field(default_factory=list)

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{flag}] criterion {self.cid:2d} {self.title}: {shown} | need {self.tolerance} ({self.seconds:.1f}s)"


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _sub_seed(seed: int, cid: int) -> int:
    return int(np.random.SeedSequence([seed, cid]).generate_state(1, np.uint64)[0])


def _experiment(kind, params, seed, out, workers):
    cfg = resolve({"kind": kind, "seed": seed, **params})
    os.makedirs(out, exist_ok=True)
    return RUNNERS[kind](cfg, out, workers)


# canonical experiment parameters per criterion; quick variants shrink budgets only
CANON = {
    1: ("renewal", {"family": "power_law", "alpha0": 2.0, "N": 10_000, "alpha": 0.5}, {}),
    5: ("tails", {"system": "linked_twist", "returns": 10 ** 6, "orbits": 10}, {"returns": 10 ** 5}),
    7: ("cnb", {"system": "linked_twist", "n_grid": [64, 128, 256], "b": 2.0, "budget": 10 ** 6},
        {"budget": 10 ** 4}),
    8: ("correlate", {"system": "linked_twist", "steps": 3 * 10 ** 8, "orbits": 300},
        {"steps": 10 ** 7, "orbits": 10}),
    10: ("clt", {"system": "linked_twist", "n": 10_000, "samples": 10_000, "corr_budget": 10 ** 7},
         {"samples": 1000, "n": 1000, "corr_budget": 10 ** 6}),
    11: ("couple", {"alpha0": 2.0, "N": 10_000, "eps_d": 1e-5, "c0": 0.4, "mode": "random"},
         {"N": 2000}),
    12: ("chain", {"m_max": 10 ** 5, "n_grid": [1000, 10_000, 100_000], "samples": 10_000},
         {"samples": 1000}),
}

CHAIN_GRIDS = {
    "stadium": [1000, 10_000, 100_000],
    "cusps": [1000, 10_000, 100_000, 1_000_000],
    "semidispersing": [1000, 10_000, 100_000, 1_000_000],
    "point_mass": [1000, 10_000, 100_000],
}


def _params(cid, quick, **over):
    kind, full, small = CANON[cid]
    p = dict(full)
    if quick:
        p.update(small)
    p.update(over)
    return kind, p


# --------------------------------------------------------------------------

def c1_renewal(seed, workers, out, quick):
    kind, p = _params(1, quick)
    r = _experiment(kind, p, seed, out, workers)
    s = r.summary
    ok = (-2.15 <= s["exponent"] <= -1.85) and s["convolution_deviation"] <= 1e-10
    return ok, {"exponent": s["exponent"], "conv_dev": s["convolution_deviation"],
                "lost_mass": s["discarded_mass"]}, "exponent in [-2.15, -1.85], conv dev <= 1e-10", r.files


def _long_division(p, alpha, N):
    """Independent oracle: solve the lower-triangular Toeplitz system (I - alpha P) q = e_0."""
    col = np.zeros(N + 1)
    col[1:min(p.size, N + 1)] = -alpha * p[1:N + 1]
    col[0] = 1.0
    idx = np.arange(N + 1)
    T = np.where(idx[:, None] >= idx[None, :], col[np.abs(idx[:, None] - idx[None, :])], 0.0)
    e0 = np.zeros(N + 1)
    e0[0] = 1.0
    return solve_triangular(T, e0, lower=True)


def c2_identities(seed, workers, out, quick):
    rng = np.random.default_rng(seed)
    worst = {"long_division": 0.0, "convolution": 0.0, "row_norm": 0.0, "telescoping": 0.0}
    instances = 100
    for _ in range(instances):
        N = int(rng.integers(16, 257))
        p = np.zeros(N + 1)
        p[1:] = rng.random(N) * (rng.random(N) < 0.5)
        p[1] += 1e-3
        p /= p.sum()
        alpha = float(rng.uniform(0.05, 0.95))
        q = rn.inverse_series(p, alpha)
        worst["long_division"] = max(worst["long_division"],
                                     float(np.abs(q - _long_division(p, alpha, N)).max()))
        a = rng.random(N + 1)
        a /= a.sum()
        delta = rn.renewal_recursion(rn.RenewalSequence(p, a, alpha))
        dev = rn.convolution_check(q, a, delta) / np.abs(delta).max()
        worst["convolution"] = max(worst["convolution"], dev)
        fam = cc.KernelFamily.named(str(rng.choice(["stadium", "linked_twist", "cusps",
                                                    "semidispersing"])), m_max=10 ** 6)
        m = int(rng.integers(1, 3000))
        row = cc.kernel_row(fam, m)
        worst["row_norm"] = max(worst["row_norm"], abs(float(row.probs(fam).sum()) - 1.0))
        pc, _ = rn.power_law_p(float(rng.uniform(1.2, 3.0)), N)
        a1 = rng.random(N + 1)
        a2 = rng.random(N + 1)
        a1 /= a1.sum()
        a2 /= a2.sum()
        budget = cp.CouplingBudget(pc, a1, a2, float(rng.uniform(0, 1e-5)),
                                   float(rng.uniform(0.1, 0.9)), int(rng.integers(2 ** 31)))
        tr = cp.simulate_coupling(budget, str(rng.choice(cp.MODES)))
        worst["telescoping"] = max(worst["telescoping"],
                                   float(np.abs(cp.mass_balance(tr, 1.0)).max()),
                                   float(np.abs(cp.mass_balance(tr, 1.0, 2)).max()))
    ok = all(v <= 1e-12 for v in worst.values())
    return ok, {**worst, "instances": instances}, "all four deviations <= 1e-12 over 100 instances", []


def c3_drift(seed, workers, out, quick):
    v = cc.expected_log_ratio(cc.KernelFamily.named("stadium"), 10 ** 4)
    return (abs(v - cc.STADIUM_DRIFT) <= 0.02,
            {"eta_bar": v, "reference": cc.STADIUM_DRIFT}, "|eta_bar - (1 - 1.25 ln 3)| <= 0.02", [])


def c4_stationary(seed, workers, out, quick):
    res = cc.chain_stationary(cc.KernelFamily.named("stadium"), 10 ** 5)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "stationary.csv")
    cc.write_vector_csv(path, res.pi, ("m", "pi"))
    return (-3.2 <= res.exponent <= -2.8, {"exponent": res.exponent, "iterations": res.iterations},
            "exponent in [-3.2, -2.8] over m in [30, m_max/10]", [path])


def c5_tails(seed, workers, out, quick):
    kind, p = _params(5, quick)
    r = _experiment(kind, p, seed, out, workers)
    s = r.summary
    return (s["exponent_pass"], {"exponent": s["level_exponent"], "stderr": s["level_exponent_stderr"],
                                 "records": s["records"]},
            "exponent of mu_M(M_n) in [-3.3, -2.7] over [8, 128]", r.files)


def c6_kac(seed, workers, out, quick):
    kind, p = _params(5, quick)
    r = _experiment(kind, p, seed, out, workers)
    s = r.summary
    return (s["kac_pass"], {"kac": s["kac_product"], "mean_return": s["mean_return"]},
            "mean return x 1/3 in [0.97, 1.03]", r.files)


def c7_cnb(seed, workers, out, quick):
    kind, p = _params(7, quick)
    r = _experiment(kind, p, seed, out, workers)
    s = r.summary
    measured = {"slope_given_M": s["exponent_conditioned"], "slope": s["exponent_unconditioned"],
                "psi": s["psi"]}
    return (s["conditioned_pass"] and s["unconditioned_pass"], measured,
            "given-M slope in [-2.4, -1.6], unconditioned in [-1.4, -0.6] at b = 2", r.files)


_corr_cache: dict = {}


def _correlate(seed, workers, out, quick):
    key = (seed, quick, workers)
    if key not in _corr_cache:
        kind, p = _params(8, quick)
        _corr_cache[key] = _experiment(kind, p, seed, out, workers)
    return _corr_cache[key]


def c8_ratio(seed, workers, out, quick):
    r = _correlate(seed, workers, out, quick)
    s = r.summary
    return (s["ratio_pass"], {"ratio": s["ratio_window_mean"], "stderr": s["ratio_window_stderr"],
                              "steps": s["steps"]},
            "window mean of C_n / (mu(R>n) mu(f) mu(g)) over [64, 512] in [0.7, 1.3]", r.files)


def c9_fastzero(seed, workers, out, quick):
    r = _correlate(seed, workers, out, quick)
    s = r.summary
    return (s["gap_pass"], {"corr_exp": s["meanzero_corr_exponent"], "tail_exp": s["tail_exponent"],
                            "gap": s["exponent_gap"]},
            "mean-zero correlation exponent steeper than tail exponent by >= 0.5", r.files)


def c10_clt(seed, workers, out, quick):
    kind, p = _params(10, quick)
    r = _experiment(kind, p, seed, out, workers)
    s = r.summary
    return (s["ks_pass"] and s["sigma_pass"],
            {"ks": s["ks"], "sigma_gk": s["sigma_green_kubo"], "sigma_emp": s["sigma_empirical"],
             "trunc_lag": s["truncation_lag"]},
            "KS < 0.05 and |sigma_GK - sigma_emp| <= 10%", r.files)


def c11_coupling(seed, workers, out, quick):
    kind, p = _params(11, quick)
    r = _experiment(kind, p, seed, out, workers)
    s = r.summary
    return (s["pass"], {"s_exp": s["s_exponents"], "d_min": s["d_min"], "d_fit": s["d_fitted"],
                        "tail_exp": s["tail_exponent"]},
            "s_k exponent in [-2.2, -1.8], min d_k >= 0.9 d, tail exponent in [-1.2, -0.8]", r.files)


def c12_conditions(seed, workers, out, quick):
    files, measured, flags = [], {}, {}
    for idx, (fam, grid) in enumerate(CHAIN_GRIDS.items()):
        kind, p = _params(12, quick, family=fam, n_grid=grid)
        r = _experiment(kind, p, _sub_seed(seed, idx), os.path.join(out, fam), workers)
        files += r.files
        cond = r.summary["conditions"]
        if fam == "stadium":
            measured["stadium_rate_geo"] = cond["a1"]["rate_geometric"]
            measured["stadium_rate_arith"] = cond["a1"]["rate_arithmetic"]
            measured["exp_eta_bar"] = cond["a1"]["exp_eta_bar"]
            flags["stadium"] = r.summary["checks"]["A1"] and r.summary["checks"]["A1_rate"]
        elif fam == "point_mass":
            measured["point_mass_A1"] = cond["a1"]["pass"]
            flags["point_mass_flagged"] = not cond["a1"]["pass"]
        else:
            measured[f"{fam}_p"] = cond["h2b"]["p"]
            measured[f"{fam}_p_exact"] = cond["h2b"]["p_exact"]
            flags[fam] = cond["h2b"]["pass"]
    measured["flags"] = flags
    return (all(flags.values()), measured,
            "stadium geometric rate within 15% of exp(eta_bar); cusps/semidispersing p > 1 at q = 0.45; "
            "point mass flagged", files)


QUICK_SET = {
    "renewal": {"N": 2000},
    "tails": {"returns": 20_000, "orbits": 4},
    "correlate": {"steps": 400_000, "orbits": 4, "burn_in": 1000},
    "cnb": {"budget": 2000},
    "clt": {"n": 200, "samples": 200, "corr_budget": 20_000, "max_lag": 20},
    "chain": {"m_max": 2000, "n_grid": [100, 1000], "samples": 200},
    "couple": {"N": 500},
    "simulate": {"steps": 20_000, "orbits": 4},
}


def c13_determinism(seed, workers, out, quick):
    """Every experiment kind run three times: twice with one worker, once with several."""
    mismatched = []
    compared = 0
    with tempfile.TemporaryDirectory() as tmp:
        for kind, params in QUICK_SET.items():
            dirs = []
            for tag, w in (("a", 1), ("b", 1), ("c", max(3, workers))):
                d = os.path.join(tmp, f"{kind}_{tag}")
                _experiment(kind, params, seed, d, w)
                dirs.append(d)
            names = sorted(f for f in os.listdir(dirs[0]) if f.endswith(".csv"))
            for other in dirs[1:]:
                match, mis, err = filecmp.cmpfiles(dirs[0], other, names, shallow=False)
                compared += len(names)
                mismatched += [f"{kind}/{n}" for n in mis + err]
    return (not mismatched, {"files_compared": compared, "mismatched": mismatched},
            "byte-identical CSVs across reruns and worker counts", [])


CRITERIA = {
    1: ("renewal envelope", c1_renewal),
    2: ("exact identities", c2_identities),
    3: ("stadium drift", c3_drift),
    4: ("stadium stationary exponent", c4_stationary),
    5: ("linked-twist tail law", c5_tails),
    6: ("Kac identity", c6_kac),
    7: ("C_{n,b} scaling", c7_cnb),
    8: ("correlation ratio", c8_ratio),
    9: ("mean-zero speedup", c9_fastzero),
    10: ("CLT", c10_clt),
    11: ("coupling budget", c11_coupling),
    12: ("condition checks", c12_conditions),
    13: ("determinism", c13_determinism),
}

SHARED_OUT = {6: 5, 9: 8}


def run_criterion(cid: int, seed: int = 20240521, workers: int = 1, out: str | None = None,
                  quick: bool = False) -> CriterionResult:
    title, fn = CRITERIA[cid]
    owner = SHARED_OUT.get(cid, cid)
    tmp = None
    if out is None:
        tmp = tempfile.mkdtemp(prefix="mixlab-accept-")
        out = tmp
    sub = os.path.join(out, f"criterion_{owner:02d}")
    t0 = time.perf_counter()
    try:
        passed, measured, tol, files = fn(_sub_seed(seed, owner), workers, sub, quick)
    finally:
        if tmp is not None:
            shutil.rmtree(tmp, ignore_errors=True)
    dt = time.perf_counter() - t0
    return CriterionResult(cid, title, bool(passed), measured, tol, dt,
                           [os.path.relpath(f, out) for f in files])


def run_all(seed: int = 20240521, workers: int = 1, out: str | None = None, quick: bool = False,
            criteria=None, echo=None) -> list[CriterionResult]:
    results = []
    for cid in criteria or sorted(CRITERIA):
        res = run_criterion(cid, seed, workers, out, quick)
        if echo:
            echo(res.line())
        results.append(res)
    return results

