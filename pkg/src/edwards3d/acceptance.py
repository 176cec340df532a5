"""The full desk-scale verification suite.

Each criterion is a pure function of an AcceptanceConfig returning a
CriterionResult with a pass flag, a one-line summary, and the numeric rows
behind the verdict.  The CLI `verify` subcommand and the acceptance tests
both run exactly these functions, so there is a single source of truth for
what "verified" means.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import girsanov, measure, oracle, quantize, renorm
from .localtime import Regularization, local_time, local_time_batch, local_time_gradient
from .paths import Path, TimeGrid, make_stream, preset_direction
from .renorm import wiener_ensemble

__all__ = ["AcceptanceConfig", "CriterionResult", "CRITERIA", "run_suite",
           "serialize_results"]

K1_LIMIT = -2.0 * (2.0 * np.pi) ** (-1.5)
VAR_SLOPE_LIMIT = -2.0 * (2.0 * np.pi) ** (-2)
KAPPA2_SLOPE_LIMIT = -((2.0 * np.pi) ** (-2))


@dataclass(frozen=True)
class AcceptanceConfig:
    """Pinned parameters of the verification suite.

    replicas_scale shrinks every ensemble and chain proportionally; it exists
    for the determinism criterion (which replays a tiny suite twice) and for
    quick smoke runs.  Verdicts are calibrated at scale 1.
    """

    seed: int = 20260824
    replicas_scale: float = 1.0
    lam: float = 1.0
    eps0: float = measure.DEFAULT_EPS0
    delta1: float = measure.DEFAULT_DELTA1
    beta_pcn: float = 0.2
    tau_langevin: float | None = None
    direction_preset: str = "linear"
    levels_lo: int = 3
    levels_hi: int = 7

    def m(self, base: int, floor: int = 16) -> int:
        return max(floor, int(round(base * self.replicas_scale)))


@dataclass(frozen=True)
class CriterionResult:
    index: int
    name: str
    passed: bool
    summary: str
    rows: list = field(default_factory=list)

    @property
    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] criterion {self.index:2d} {self.name}: {self.summary}"


def _grid_for(eps: float, a: float) -> TimeGrid:
    need = max(4.0 / a, 8.0 / eps)
    return TimeGrid(1 << max(0, int(np.ceil(np.log2(need)))))


def criterion_1(cfg: AcceptanceConfig) -> CriterionResult:
    """MC mean of the local time vs the closed-form mean, 9 cutoff/width combos."""
    m = cfg.m(20000)
    a_values = (0.02, 0.05, 0.1)
    rows, worst = [], 0.0
    for k, eps in enumerate((0.05, 0.1, 0.2)):
        grid = _grid_for(eps, min(a_values))
        pos = wiener_ensemble(grid, cfg.seed, m, stream_offset=k * m)
        j = local_time_batch(pos, grid, eps, a_values)
        for col, a in enumerate(a_values):
            mean = float(np.mean(np.sort(j[:, col])))
            se = float(np.std(j[:, col], ddof=1) / np.sqrt(m))
            exact = oracle.exact_mean_J(eps, a)
            z = (mean - exact) / se
            worst = max(worst, abs(z))
            rows.append({"eps": eps, "a": a, "mc_mean": mean, "se": se,
                         "exact": exact, "z": z})
    return CriterionResult(1, "closed-form mean", worst <= 3.0,
                           f"worst |z| = {worst:.2f} over 9 combos (limit 3)", rows)


def criterion_2(cfg: AcceptanceConfig) -> CriterionResult:
    """Centered-mean constant vs the analytic curve, plus the limit bracket."""
    eps_values = (0.2, 0.1, 0.05)
    res = renorm.estimate_K1(eps_values, cfg.m(2500), cfg.seed + 1)
    rows, ok = [], True
    for r in res:
        target = 2.0 * (2.0 * np.pi) ** (-1.5) * (np.sqrt(r.eps) - 1.0)
        z = (r.estimate - target) / r.se
        ok &= abs(z) <= 3.0
        rows.append({"eps": r.eps, "estimate": r.estimate, "se": r.se,
                     "curve": target, "z": z})
    # the exact centered mean at eps=0.05 sits 22% from the limit, so this
    # bracket fails for any precise unbiased estimator; kept as specified
    last = res[-1]
    bracket = abs(last.estimate - K1_LIMIT) <= 0.1 * abs(K1_LIMIT) + 3.0 * last.se
    ok &= bracket
    rows.append({"eps": 0.0, "estimate": K1_LIMIT, "se": last.se,
                 "curve": last.estimate, "z": float(bracket)})
    return CriterionResult(2, "limit constant of the centered mean", ok,
                           f"curve tracked at 3 SE: {all(abs(r['z']) <= 3 for r in rows[:-1])}, "
                           f"limit {K1_LIMIT:.5f} bracketed: {bracket}", rows)


def criterion_3(cfg: AcceptanceConfig) -> CriterionResult:
    """Variance log-slope vs the renormalization constant, oracle and MC fits.

    With the smoothing width comparable to the cutoff the exact slope in this
    window is ~10x smaller than the asymptotic constant; the check is kept as
    specified and fails for the oracle and MC alike.
    """
    eps_values = (0.04, 0.02, 0.01)
    a = 0.01
    variances = [oracle.exact_var_J(e, a, rtol=1e-7) for e in eps_values]
    x = np.log(eps_values)
    xc = x - x.mean()
    oracle_slope = float(np.dot(xc, variances) / np.dot(xc, xc))
    oracle_ok = abs(oracle_slope - VAR_SLOPE_LIMIT) <= 0.1 * abs(VAR_SLOPE_LIMIT)
    mc = renorm.estimate_var_slope(eps_values, cfg.m(1000), cfg.seed + 2, a=a)
    mc_ok = abs(mc.slope - VAR_SLOPE_LIMIT) <= 0.2 * abs(VAR_SLOPE_LIMIT)
    rows = [{"kind": 0.0, "slope": oracle_slope, "se": 0.0,
             "target": VAR_SLOPE_LIMIT},
            {"kind": 1.0, "slope": mc.slope, "se": mc.se,
             "target": VAR_SLOPE_LIMIT}]
    rows += [{"kind": 2.0, "slope": e, "se": 0.0, "target": v}
             for e, v in zip(eps_values, variances)]
    return CriterionResult(
        3, "variance log-slope", oracle_ok and mc_ok,
        f"oracle slope {oracle_slope:.5f} (target {VAR_SLOPE_LIMIT:.5f} "
        f"+-10%: {oracle_ok}), MC slope {mc.slope:.5f} +- {mc.se:.5f} "
        f"(+-20%: {mc_ok})", rows)


def criterion_4(cfg: AcceptanceConfig) -> CriterionResult:
    """Central-difference slope of the second counterterm near zero cutoff.

    Convergence to the limit constant is O(sqrt(eps)); the coarser cutoff
    point is 6.3% off and fails the 5% band, the finer one passes.
    """
    rows, ok = [], True
    for eps in (0.01, 0.005):
        h = 0.05 * eps
        cd = eps * (renorm.kappa2(eps + h, rtol=1e-7)
                    - renorm.kappa2(eps - h, rtol=1e-7)) / (2.0 * h)
        rel = abs(cd - KAPPA2_SLOPE_LIMIT) / abs(KAPPA2_SLOPE_LIMIT)
        ok &= rel <= 0.05
        rows.append({"eps": eps, "eps_times_slope": cd,
                     "target": KAPPA2_SLOPE_LIMIT, "rel_off": rel})
    offs = ", ".join(f"{r['rel_off'] * 100:.2f}%" for r in rows)
    return CriterionResult(4, "second-counterterm slope", ok,
                           f"eps*slope off target by {offs} (limit 5%)", rows)


def _qi_observables():
    def end_exp(p):
        return np.exp(-measure.obs_end_norm_sq(p))

    def mid_exp(p):
        return np.exp(-measure.obs_mid_norm_sq(p))

    def end_cos(p):
        return np.cos(p[:, -1, 0])

    return {"cyl": measure.obs_cylinder_exp, "end_exp": end_exp,
            "mid_exp": mid_exp, "end_cos": end_cos}


def criterion_5(cfg: AcceptanceConfig) -> CriterionResult:
    """Exact Gaussian shift identity at zero coupling, six combos."""
    m = cfg.m(50000)
    grid = TimeGrid(128)
    reg = Regularization(eps=0.1, a=0.05)
    obs = _qi_observables()
    combos = [("cyl", "linear", 0.5), ("end_exp", "linear", 0.5),
              ("mid_exp", "sine", 1.0), ("cyl", "sine", -0.8),
              ("end_cos", "poly", 1.5), ("cyl", "poly", -1.0)]
    rows, ok = [], True
    for i, (fname, hname, u) in enumerate(combos):
        h = preset_direction(hname, grid)
        rep = girsanov.quasi_invariance_check(obs[fname], u, h, 0.0, m,
                                              cfg.seed + 3, reg=reg, n_steps=128)
        ok &= rep.passed
        rows.append({"combo": float(i), "u": u, "lhs": rep.lhs, "rhs": rep.rhs,
                     "combined_se": rep.combined_se, "passed": float(rep.passed)})
    return CriterionResult(5, "shift identity at zero coupling", ok,
                           f"{sum(r['passed'] for r in rows):.0f}/6 combos within 3 SE",
                           rows)


def _resample_indices(log_weights, count, rng):
    w = np.exp(log_weights - np.max(log_weights))
    w = w / w.sum()
    positions = (rng.uniform() + np.arange(count)) / count
    return np.searchsorted(np.cumsum(w), positions)


def _batch_mean_se(series: np.ndarray, n_batches: int = 32):
    n = series.size - series.size % n_batches
    b = series[:n].reshape(n_batches, -1).mean(axis=1)
    return float(series.mean()), float(np.std(b, ddof=1) / np.sqrt(n_batches))


def criterion_6(cfg: AcceptanceConfig) -> CriterionResult:
    """Importance, autoregressive MCMC, and Langevin samplers agree on two means."""
    lam, reg = 1.0, Regularization(eps=0.1, a=0.05)
    grid = TimeGrid(128)
    obs = {"end_sq": measure.obs_end_norm_sq,
           "mid_exp": lambda p: np.exp(-measure.obs_mid_norm_sq(p))}

    ens = measure.importance_sample(reg, lam, cfg.m(4000), cfg.seed + 4, n_steps=128)
    is_est = {k: ens.mean_se(f(ens.positions)) for k, f in obs.items()}

    chain = measure.pcn_init(grid, reg, lam, cfg.beta_pcn, make_stream(cfg.seed + 5, 0))
    n_pcn = cfg.m(24000, floor=400)
    chain, series = measure.pcn_run(chain, n_pcn, make_stream(cfg.seed + 5, 1),
                                    observables=obs, thin=4, burn_in=n_pcn // 6)
    pcn_est = {k: _batch_mean_se(v) for k, v in series.items()}

    tau = cfg.tau_langevin or quantize.default_tau(grid)
    lcfg = quantize.LangevinConfig(reg=reg, lam=lam, tau=tau)
    n_chains = cfg.m(16, floor=4)
    steps = cfg.m(1200, floor=60)
    rng_init = make_stream(cfg.seed + 6, 0)
    idx = _resample_indices(ens.log_weights, n_chains, rng_init)
    chain_means = {k: [] for k in obs}
    acc = []
    for c in range(n_chains):
        start = Path(ens.grid, ens.positions[idx[c]])
        st = quantize.langevin_init(start, lcfg)
        st, tr = quantize.langevin_run(st, lcfg, steps, make_stream(cfg.seed + 6, c + 1),
                                       observables=obs, burn_in=steps // 6)
        acc.append(tr.acceptance_rate)
        for k in obs:
            chain_means[k].append(np.mean(tr.series[k]))
    mala_est = {k: (float(np.mean(v)), float(np.std(v, ddof=1) / np.sqrt(len(v))))
                for k, v in chain_means.items()}

    rows, ok = [], True
    estimates = {"is": is_est, "pcn": pcn_est, "mala": mala_est}
    names = list(estimates)
    for k in obs:
        for i in range(len(names)):
            for j in range(i + 1, len(names)):
                m1, s1 = estimates[names[i]][k]
                m2, s2 = estimates[names[j]][k]
                z = (m1 - m2) / np.sqrt(s1 * s1 + s2 * s2)
                ok &= abs(z) <= 3.0
                rows.append({"pair": float(i * 3 + j), "obs": float(k == "end_sq"),
                             "mean_a": m1, "mean_b": m2, "z": z})
    return CriterionResult(
        6, "sampler cross-validation", ok,
        "end_sq: " + ", ".join(f"{n}={estimates[n]['end_sq'][0]:.3f}" for n in names)
        + f"; worst |z| = {max(abs(r['z']) for r in rows):.2f}"
        + f"; langevin acc {np.mean(acc):.2f}", rows)


def criterion_7(cfg: AcceptanceConfig) -> CriterionResult:
    """Analytic local-time gradient vs central differences on random paths."""
    grid = TimeGrid(64)
    reg = Regularization(eps=0.2, a=0.1)
    step = 1e-5
    worst = 0.0
    rows = []
    for k in range(10):
        pos = wiener_ensemble(grid, cfg.seed + 7, 1, stream_offset=k)[0]
        path = Path(grid, pos)
        g = local_time_gradient(path, reg)
        fd = np.zeros_like(g)
        for i in range(1, grid.n_steps + 1):
            for d in range(3):
                for sgn in (1.0, -1.0):
                    p = pos.copy()
                    p[i, d] += sgn * step
                    fd[i, d] += sgn * local_time(Path(grid, p), reg).value
        fd /= 2.0 * step
        # node 0 cannot be perturbed (origin pin); the value depends only on
        # position differences, so its gradient row is minus the others' sum
        fd[0] = -fd[1:].sum(axis=0)
        rel = float(np.max(np.abs(fd - g)) / np.max(np.abs(g)))
        worst = max(worst, rel)
        rows.append({"path": float(k), "max_rel_err": rel})
    return CriterionResult(7, "gradient vs central differences", worst <= 1e-6,
                           f"worst relative error {worst:.2e} (limit 1e-6)", rows)


def criterion_8(cfg: AcceptanceConfig) -> CriterionResult:
    """Geometric decay of successive shift-gap moments along the schedule.

    The exact successive-difference moments still grow at these levels (the
    decay regime starts far beyond desk scale), so this criterion fails for
    reasons the exact cross-moment oracle confirms are not sampling noise.
    """
    levels = tuple(range(cfg.levels_lo, cfg.levels_hi + 1))
    n_steps = 1 << int(np.ceil(np.log2(4.0 * 2.0 ** cfg.levels_hi)))
    h = preset_direction(cfg.direction_preset, TimeGrid(n_steps))
    m = cfg.m(400)
    ref_pass = wt_pass = 0
    rows = []
    for s in range(5):
        rep = girsanov.moment_decay_report(1.0, 0.0, h, cfg.lam, 2.0, levels,
                                           m, cfg.seed + 8 + s, eps0=cfg.eps0)
        ref_ok = all(r >= 1.5 for r in rep.ratios_reference)
        wt_ok = all(r > 1.0 for r in rep.ratios_weighted)
        ref_pass += ref_ok
        wt_pass += wt_ok
        for i, (rr, rw) in enumerate(zip(rep.ratios_reference, rep.ratios_weighted)):
            rows.append({"seed": float(s), "pair": float(levels[i]),
                         "ratio_reference": rr, "ratio_weighted": rw})
    ok = ref_pass >= 4 and wt_pass >= 4
    med = np.median([r["ratio_reference"] for r in rows])
    return CriterionResult(
        8, "schedule moment decay", ok,
        f"decay >= 1.5/level in {ref_pass}/5 seeds (need 4); weighted decay in "
        f"{wt_pass}/5; median per-level ratio {med:.2f}", rows)


def criterion_9(cfg: AcceptanceConfig) -> CriterionResult:
    """Stationary law of the tabulated toy chain vs the target, by power iteration."""
    xs = np.linspace(-1.5, 1.5, 5)
    states = np.array([[x1, x2] for x1 in xs for x2 in xs])
    grid = TimeGrid(2)
    reg = Regularization(eps=0.25, a=0.5)
    energies = np.empty(len(states))
    for i, (x1, x2) in enumerate(states):
        pos = np.zeros((3, 3))
        pos[1, 0], pos[2, 0] = x1, x2
        energies[i] = cfg.lam * local_time(Path(grid, pos), reg, unsafe=True).value
    p, target = measure.toy_pcn_matrix(states, 0.7, energies)
    pi = np.full(len(states), 1.0 / len(states))
    for _ in range(2000):
        pi = pi @ p
        pi /= pi.sum()
    tv = 0.5 * float(np.abs(pi - target).sum())
    rows = [{"state": float(i), "stationary": pi[i], "target": target[i]}
            for i in range(len(states))]
    return CriterionResult(9, "detailed-balance oracle", tv <= 1e-6,
                           f"total variation {tv:.2e} (limit 1e-6)", rows)


def criterion_10(cfg: AcceptanceConfig) -> CriterionResult:
    """Bit-identical replay: the reduced suite serialized twice from one seed."""
    tiny = replace(cfg, replicas_scale=0.02 * cfg.replicas_scale)
    blobs = []
    for _ in range(2):
        results = [crit(tiny) for crit in CRITERIA[:9]]
        blobs.append(serialize_results(results))
    identical = blobs[0] == blobs[1]
    return CriterionResult(10, "determinism", identical,
                           f"replayed suite bytes identical: {identical} "
                           f"({len(blobs[0])} bytes)", [])


CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10)


def run_suite(cfg: AcceptanceConfig, indices=None, progress=None):
    """Run the requested criteria (all by default); returns a list of results."""
    results = []
    for i, crit in enumerate(CRITERIA, start=1):
        if indices is not None and i not in indices:
            continue
        t0 = time.perf_counter()
        res = crit(cfg)
        if progress is not None:
            progress(f"{res.line}  [{time.perf_counter() - t0:.1f}s]")
        results.append(res)
    return results


def serialize_results(results) -> bytes:
    """Canonical CSV serialization of criteria verdicts plus numeric rows."""
    buf = io.StringIO()
    buf.write("criterion_index,name,passed,summary\n")
    for r in results:
        buf.write(f"{r.index},{r.name},{int(r.passed)},\"{r.summary}\"\n")
    buf.write("criterion_index,row,key,value\n")
    for r in results:
        for k, row in enumerate(r.rows):
            for key, value in row.items():
                buf.write(f"{r.index},{k},{key},{float(value):.17g}\n")
    return buf.getvalue().encode()
