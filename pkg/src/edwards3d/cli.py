"""Experiment runner: config parsing, orchestration, CSV/JSON persistence.

Subcommands mirror the library layers: renorm (counterterm tables), moments
(MC vs exact oracles), sample (importance ensembles), quantize (Langevin
traces), girsanov (shift-identity and decay reports), verify (the full
acceptance suite).  Every run writes CSV data files plus a JSON manifest
with the config echo, seeds, a content hash, and wall time.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
import time
from pathlib import Path as FilePath

import numpy as np

from . import acceptance, girsanov, measure, oracle, quantize, renorm
from .localtime import Regularization, local_time_batch
from .paths import TimeGrid, make_stream, preset_direction
from .renorm import wiener_ensemble

_FLOAT_FMT = "%.17g"

_DEFAULTS = {
    "lambda": "1.0",
    "eps0": repr(measure.DEFAULT_EPS0),
    "n_steps": "128",
    "replicas": "2000",
    "levels_lo": "3",
    "levels_hi": "7",
    "seed": "",
    "beta_pcn": "0.2",
    "tau_langevin": "",
    "delta1": repr(measure.DEFAULT_DELTA1),
    "direction_preset": "linear",
    "output_dir": ".",
    "eps_list": "0.25,0.125,0.0625",
    "a_list": "0.1,0.05,0.02",
    "eps": "0.1",
    "a": "0.05",
    "rtol": "1e-6",
    "chain_steps": "5000",
    "u_shift": "0.5",
    "replicas_scale": "1.0",
}


class ConfigError(ValueError):
    pass


def load_config(config_file: str | None, overrides) -> dict:
    """Merge defaults, an INI [run] section, and key=value overrides."""
    cfg = dict(_DEFAULTS)
    if config_file:
        parser = configparser.ConfigParser()
        read = parser.read(config_file)
        if not read:
            raise ConfigError(f"config file {config_file!r} not found")
        for section in parser.sections():
            for key, value in parser.items(section):
                if key not in _DEFAULTS:
                    raise ConfigError(f"unknown config key {key!r}")
                cfg[key] = value
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in _DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = value.strip()
    return cfg


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad numeric list {text!r}") from exc


def _float(cfg, key):
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key} must be a number, got {cfg[key]!r}") from exc


def _int(cfg, key):
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"config key {key} must be an integer, got {cfg[key]!r}") from exc


def _seed(cfg, required: bool) -> int:
    raw = cfg["seed"].strip()
    if not raw:
        if required:
            raise ConfigError("a seed is mandatory for verify runs")
        seed = int(np.random.SeedSequence().entropy % (2**31))
        cfg["seed"] = str(seed)
        return seed
    return _int(cfg, "seed")


def write_csv(path: FilePath, header: list[str], rows) -> bytes:
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, str):
                cells.append(cell)
            else:
                cells.append(_FLOAT_FMT % float(cell))
        lines.append(",".join(cells))
    body = ("\n".join(lines) + "\n").encode()
    path.write_bytes(body)
    return body


def write_manifest(out_dir: FilePath, command: str, cfg: dict, bodies: list[bytes],
                   wall_time: float):
    digest = hashlib.sha256()
    for body in bodies:
        digest.update(body)
    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "content_hash": digest.hexdigest(),
        "wall_time_s": round(wall_time, 3),
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    (out_dir / f"{command}_manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def cmd_renorm(cfg, out_dir):
    eps_list = _floats(cfg["eps_list"])
    rtol = _float(cfg, "rtol")
    rows = []
    for eps in eps_list:
        rc = renorm.renorm_constants(eps, rtol=rtol)
        rows.append((rc.eps, rc.kappa1, rc.kappa2, rc.method, rtol))
    body = write_csv(out_dir / "renorm_constants.csv",
                     ["eps_cutoff", "kappa1_mean_counterterm",
                      "kappa2_variance_counterterm", "kappa2_method", "rtol"],
                     rows)
    return [body]


def cmd_moments(cfg, out_dir):
    seed = _seed(cfg, required=False)
    m = _int(cfg, "replicas")
    rows = []
    for eps in _floats(cfg["eps_list"]):
        a_values = [a for a in _floats(cfg["a_list"])]
        grid = acceptance._grid_for(eps, min(a_values))
        pos = wiener_ensemble(grid, seed, m)
        j = local_time_batch(pos, grid, eps, a_values)
        for col, a in enumerate(a_values):
            mean = float(np.mean(np.sort(j[:, col])))
            se = float(np.std(j[:, col], ddof=1) / np.sqrt(m))
            rows.append((eps, a, grid.n_steps, mean, se,
                         oracle.exact_mean_J(eps, a),
                         float(np.var(j[:, col], ddof=1)),
                         oracle.exact_var_J(eps, a, rtol=_float(cfg, "rtol"))))
    body = write_csv(out_dir / "moments.csv",
                     ["eps_cutoff", "a_width", "n_steps", "mc_mean", "mc_mean_se",
                      "exact_mean", "mc_var", "exact_var"], rows)
    return [body]


def cmd_sample(cfg, out_dir):
    seed = _seed(cfg, required=False)
    reg = Regularization(eps=_float(cfg, "eps"), a=_float(cfg, "a"))
    lam = _float(cfg, "lambda")
    ens = measure.importance_sample(reg, lam, _int(cfg, "replicas"), seed,
                                    n_steps=_int(cfg, "n_steps"))
    obs = {"end_norm_sq": measure.obs_end_norm_sq,
           "mid_norm_sq": measure.obs_mid_norm_sq,
           "cylinder_exp": measure.obs_cylinder_exp}
    rows = []
    for name, f in obs.items():
        mean, se = ens.mean_se(f(ens.positions))
        rows.append((name, mean, se))
    body1 = write_csv(out_dir / "sample_observables.csv",
                      ["observable", "weighted_mean", "weighted_se"], rows)
    body2 = write_csv(out_dir / "sample_summary.csv",
                      ["replicas", "ess", "normalizer_estimate", "low_ess_flag"],
                      [(ens.size, ens.ess, ens.normalizer_estimate, float(ens.low_ess))])
    return [body1, body2]


def cmd_quantize(cfg, out_dir):
    seed = _seed(cfg, required=False)
    grid = TimeGrid(_int(cfg, "n_steps"))
    reg = Regularization(eps=_float(cfg, "eps"), a=_float(cfg, "a"))
    tau = float(cfg["tau_langevin"]) if cfg["tau_langevin"].strip() else quantize.default_tau(grid)
    lcfg = quantize.LangevinConfig(reg=reg, lam=_float(cfg, "lambda"), tau=tau)
    obs = {"end_norm_sq": measure.obs_end_norm_sq,
           "mid_norm_sq": measure.obs_mid_norm_sq}
    steps = _int(cfg, "chain_steps")
    from .paths import sample_wiener

    rows = []
    for c in range(4):
        start = sample_wiener(grid, make_stream(seed, 2 * c))
        st = quantize.langevin_init(start, lcfg)
        st, tr = quantize.langevin_run(st, lcfg, steps, make_stream(seed, 2 * c + 1),
                                       observables=obs, burn_in=steps // 5)
        for name in obs:
            rows.append((c, name, float(np.mean(tr.series[name])), tr.acceptance_rate, tau))
    body = write_csv(out_dir / "quantize_traces.csv",
                     ["chain", "observable", "post_burn_in_mean",
                      "acceptance_rate", "tau_step_size"], rows)
    return [body]


def cmd_girsanov(cfg, out_dir):
    seed = _seed(cfg, required=False)
    n_steps = _int(cfg, "n_steps")
    grid = TimeGrid(n_steps)
    h = preset_direction(cfg["direction_preset"], grid)
    lam = _float(cfg, "lambda")
    u = _float(cfg, "u_shift")
    reg = Regularization(eps=_float(cfg, "eps"), a=_float(cfg, "a"))
    rep = girsanov.quasi_invariance_check(measure.obs_cylinder_exp, u, h, lam,
                                          _int(cfg, "replicas"), seed, reg=reg,
                                          n_steps=n_steps)
    body1 = write_csv(out_dir / "girsanov_identity.csv",
                      ["u_shift", "coupling", "shifted_mean", "reweighted_mean",
                       "combined_se", "passed_3se"],
                      [(rep.u, rep.lam, rep.lhs, rep.rhs, rep.combined_se,
                        float(rep.passed))])
    levels = range(_int(cfg, "levels_lo"), _int(cfg, "levels_hi") + 1)
    fine = 1 << int(np.ceil(np.log2(4.0 * 2.0 ** max(levels))))
    h_fine = preset_direction(cfg["direction_preset"], TimeGrid(fine))
    dec = girsanov.moment_decay_report(u, 0.0, h_fine, lam, 2.0, list(levels),
                                       _int(cfg, "replicas"), seed,
                                       eps0=_float(cfg, "eps0"))
    rows = [(lvl, mr, mw) for lvl, mr, mw in
            zip(dec.levels[:-1], dec.moments_reference, dec.moments_weighted)]
    body2 = write_csv(out_dir / "girsanov_decay.csv",
                      ["level", "gap_moment_reference", "gap_moment_weighted"], rows)
    return [body1, body2]


def cmd_verify(cfg, out_dir):
    seed = _seed(cfg, required=True)
    acfg = acceptance.AcceptanceConfig(
        seed=seed,
        replicas_scale=_float(cfg, "replicas_scale"),
        lam=_float(cfg, "lambda"),
        eps0=_float(cfg, "eps0"),
        delta1=_float(cfg, "delta1"),
        beta_pcn=_float(cfg, "beta_pcn"),
        tau_langevin=(float(cfg["tau_langevin"]) if cfg["tau_langevin"].strip() else None),
        direction_preset=cfg["direction_preset"],
        levels_lo=_int(cfg, "levels_lo"),
        levels_hi=_int(cfg, "levels_hi"),
    )
    results = acceptance.run_suite(acfg, progress=print)
    verdict_rows = [(r.index, r.name, float(r.passed), r.summary.replace(",", ";"))
                    for r in results]
    body1 = write_csv(out_dir / "verify_criteria.csv",
                      ["criterion_index", "name", "passed", "summary"], verdict_rows)
    detail_rows = []
    for r in results:
        for k, row in enumerate(r.rows):
            for key, value in row.items():
                detail_rows.append((r.index, k, key, float(value)))
    body2 = write_csv(out_dir / "verify_details.csv",
                      ["criterion_index", "row", "key", "value"], detail_rows)
    if not all(r.passed for r in results):
        return [body1, body2], 2
    return [body1, body2], 0


_COMMANDS = {
    "renorm": cmd_renorm,
    "moments": cmd_moments,
    "sample": cmd_sample,
    "quantize": cmd_quantize,
    "girsanov": cmd_girsanov,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="edwards3d",
        description="Experiments on regularized self-intersection local times "
                    "and the associated path measures.")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", help="INI config file (single [run] section)")
    parser.add_argument("--set", dest="overrides", action="append", metavar="KEY=VALUE",
                        help="override a config key (repeatable)")
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = load_config(args.config, args.overrides)
        out_dir = FilePath(cfg["output_dir"])
        out_dir.mkdir(parents=True, exist_ok=True)
        result = _COMMANDS[args.command](cfg, out_dir)
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if isinstance(result, tuple):
        bodies, code = result
    else:
        bodies, code = result, 0
    write_manifest(out_dir, args.command, cfg, bodies, time.perf_counter() - t0)
    return code


if __name__ == "__main__":
    sys.exit(main())
