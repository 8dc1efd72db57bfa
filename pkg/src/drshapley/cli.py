"""Command-line harness.

Subcommands map one-to-one onto the experiment drivers; every run is
deterministic given its flags and seed, and emits plot-ready CSV plus a
JSON report.  Wall-clock timings go to the console only, never into the
output files, so identical reruns produce byte-identical artifacts.

Player labels in all outputs are one-indexed (1..n) for generated games;
games read from CSV keep the file's id column verbatim.  The `stratum`
column is a coalition size and stays zero-based.
"""

import argparse
import csv
import json
import math
import os
import sys
import time

import numpy as np

from . import _backend
from .estimator import estimate_shapley, neyman_sigma_matrix
from .exact import SizeCapError, shapley_exact_subsets
from .experiments import (benefit_report, mspe_table, regret_curve,
                          variance_curve)
from .games import (GameDataError, ReserveGame, generate_load_profiles,
                    generate_load_follow_game, generate_reserve_game,
                    ingest_load_csv, load_follow_from_profiles,
                    read_reserve_csv, write_load_csv)
from .policies import POLICY_NAMES, make_policy


class ConfigError(ValueError):
    pass


# one table of defaults; a config file may override any of them and
# explicit flags override both
DEFAULTS = {
    "game": "reserve",
    "n": 8,
    "samples": 1000,
    "reps": 50,
    "policy": ["sigmoid"],
    "seed": 0,
    "gamma": 0.2,
    "beta": 0.075,
    "out": ".",
    "threads": None,
    "delta_m": None,
    "q": 1.0,
    "dx_low": 0.7,
    "dx_high": 0.8,
    "n_grid": [500, 1000, 2000, 5000],
    "pilot": None,
}

PILOT_SIGMA_DEFAULT = 10 ** 6   # oracle-policy sigma estimation
PILOT_BENEFIT_DEFAULT = 20000   # benefit-ratio check


def _parse_grid(text: str):
    try:
        grid = [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad N grid {text!r}")
    if not grid or any(N < 1 for N in grid):
        raise argparse.ArgumentTypeError(f"bad N grid {text!r}")
    return grid


def _add_common(sp, grid: bool = False):
    S = argparse.SUPPRESS
    sp.add_argument("--game", default=S,
                    help="reserve | loadfollow | csv:<path> (default reserve)")
    sp.add_argument("--n", type=int, default=S, help="players (generated games)")
    sp.add_argument("--samples", type=int, default=S,
                    help="sample budget N per player")
    sp.add_argument("--reps", type=int, default=S, help="repetitions R")
    sp.add_argument("--policy", action="append", default=S,
                    choices=list(POLICY_NAMES) + ["stepped"],
                    help="allocation policy; repeatable")
    sp.add_argument("--seed", type=int, default=S, help="master seed")
    sp.add_argument("--gamma", type=float, default=S,
                    help="schedule midpoint as a fraction of the budget")
    sp.add_argument("--beta", type=float, default=S, help="schedule width")
    sp.add_argument("--out", default=S, help="output directory")
    sp.add_argument("--threads", type=int, default=S, help="worker threads")
    sp.add_argument("--delta-m", dest="delta_m", type=float, default=S,
                    help="reserve margin (default: half of total curtailment)")
    sp.add_argument("--q", type=float, default=S, help="shortfall penalty rate")
    sp.add_argument("--dx-low", dest="dx_low", type=float, default=S)
    sp.add_argument("--dx-high", dest="dx_high", type=float, default=S)
    sp.add_argument("--pilot", type=int, default=S,
                    help="pilot samples per player for sigma estimation "
                         "(default 10^6 for the oracle policy, 2*10^4 for "
                         "the benefit check)")
    sp.add_argument("--config", default=S,
                    help="JSON file mirroring these flags; flags win")
    if grid:
        sp.add_argument("--n-grid", dest="n_grid", type=_parse_grid, default=S,
                        help="comma-separated budgets, e.g. 500,1000,5000")


def build_parser():
    p = argparse.ArgumentParser(
        prog="drshapley",
        description="Shapley-value payouts for demand-response games via "
                    "variance-optimal stratified sampling")
    sub = p.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser(
        "exact", help="exhaustive Shapley values (small games)"))
    _add_common(sub.add_parser(
        "estimate", help="stratified sampling estimate with budget balancing"))
    _add_common(sub.add_parser(
        "variance-curve", help="empirical vs analytic variance across budgets"),
        grid=True)
    _add_common(sub.add_parser(
        "regret-curve", help="excess variance over the oracle allocation"),
        grid=True)
    _add_common(sub.add_parser(
        "mspe-table", help="normalized mean squared prediction error table"))
    _add_common(sub.add_parser(
        "benefit", help="is sigma-proportional sampling worth it for this game"))
    g = sub.add_parser("gen-loads", help="write a synthetic load-profile CSV")
    S = argparse.SUPPRESS
    g.add_argument("--n", type=int, default=S)
    g.add_argument("--seed", type=int, default=S)
    g.add_argument("--out", default=S)
    g.add_argument("--config", default=S)
    return p


def resolve_config(ns) -> dict:
    explicit = {k: v for k, v in vars(ns).items() if k != "command"}
    cfg = dict(DEFAULTS)
    path = explicit.pop("config", None)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                loaded = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}")
        if not isinstance(loaded, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        for key, val in loaded.items():
            norm = key.replace("-", "_")
            if norm not in DEFAULTS:
                raise ConfigError(f"config {path}: unknown key {key!r}")
            cfg[norm] = val
        if isinstance(cfg.get("policy"), str):
            cfg["policy"] = [cfg["policy"]]
    cfg.update(explicit)
    return cfg


def _validate(cfg: dict) -> None:
    if not cfg["policy"]:
        raise ConfigError("policy list is empty")
    if cfg["reps"] < 1:
        raise ConfigError(f"reps must be >= 1, got {cfg['reps']}")
    if cfg["samples"] < 1:
        raise ConfigError(f"samples must be >= 1, got {cfg['samples']}")
    if cfg["seed"] < 0:
        raise ConfigError(f"seed must be >= 0, got {cfg['seed']}")
    if cfg["threads"] is not None and cfg["threads"] < 1:
        raise ConfigError(f"threads must be >= 1, got {cfg['threads']}")
    if cfg["pilot"] is not None and cfg["pilot"] < 1:
        raise ConfigError(f"pilot must be >= 1, got {cfg['pilot']}")


def build_game(cfg: dict):
    """Returns (game, labels): labels are the strings used for the player
    column, one-indexed for generated games, verbatim ids for CSV games."""
    spec = cfg["game"]
    seed = cfg["seed"]
    if not isinstance(spec, str):
        raise ConfigError(f"bad game spec {spec!r}")
    if spec == "reserve":
        game = generate_reserve_game(cfg["n"], seed, dx_low=cfg["dx_low"],
                                     dx_high=cfg["dx_high"],
                                     delta_m=cfg["delta_m"], q=cfg["q"])
        return game, [str(i + 1) for i in range(cfg["n"])]
    if spec == "loadfollow":
        game = generate_load_follow_game(cfg["n"], seed)
        return game, [str(i + 1) for i in range(cfg["n"])]
    if spec.startswith("csv:"):
        path = spec[4:]
        if not path:
            raise ConfigError("empty path in csv:<path> game spec")
        try:
            with open(path, "r", encoding="utf-8", newline="") as f:
                first = next(csv.reader(f), None)
        except OSError as e:
            raise ConfigError(f"cannot read {path}: {e}")
        if first is None:
            raise ConfigError(f"{path}: no players in file")
        if len(first) == 2:
            ids, dx = read_reserve_csv(path)
            if len(ids) == 0:
                raise ConfigError(f"{path}: no players in file")
            dm = cfg["delta_m"]
            if dm is None:
                dm = 0.5 * float(np.sum(dx))
            return ReserveGame(dx, dm, cfg["q"]), [str(i) for i in ids]
        profiles = ingest_load_csv(path)
        if not profiles:
            raise ConfigError(f"{path}: no players in file")
        game = load_follow_from_profiles(profiles, seed=seed)
        return game, [str(p.id) for p in profiles]
    raise ConfigError(f"unknown game {spec!r} (want reserve, loadfollow, "
                      f"or csv:<path>)")


def _check_budget(cfg, game) -> None:
    # the stratified statistic needs at least one sample per stratum
    if cfg["samples"] < game.n_players:
        raise ConfigError(f"samples ({cfg['samples']}) must be >= number of "
                          f"players ({game.n_players})")


def _check_grid(cfg, game) -> None:
    low = min(cfg["n_grid"])
    if low < game.n_players:
        raise ConfigError(f"every N in the grid must be >= number of players "
                          f"({game.n_players}); got {low}")


def _outdir(cfg: dict) -> str:
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    return out


def _write_csv(path: str, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(header)
        w.writerows(rows)


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _fmt(x) -> str:
    return repr(float(x))


def _floats(vec):
    return [None if not math.isfinite(v) else float(v)
            for v in np.asarray(vec, np.float64).ravel()]


def cmd_exact(cfg: dict) -> int:
    game, labels = build_game(cfg)
    res = shapley_exact_subsets(game)
    out = _outdir(cfg)
    _write_json(os.path.join(out, "exact_shapley.json"), {
        "game": cfg["game"], "n": game.n_players, "seed": cfg["seed"],
        "players": labels, "phi": [float(v) for v in res.phi],
        "eval_count": int(res.evals), "method": res.method,
        "total_value": float(np.sum(res.phi)),
    })
    _write_csv(os.path.join(out, "exact_shapley.csv"), ["player", "phi"],
               [(lab, _fmt(v)) for lab, v in zip(labels, res.phi)])
    print(f"exact values for {game.n_players} players "
          f"({res.evals} evaluations, {res.elapsed:.3f}s) -> {out}")
    return 0


def cmd_estimate(cfg: dict) -> int:
    game, labels = build_game(cfg)
    _check_budget(cfg, game)
    if len(cfg["policy"]) != 1:
        raise ConfigError("estimate takes exactly one --policy")
    name = cfg["policy"][0]
    smat = None
    if name == "neyman":
        smat = neyman_sigma_matrix(
            game, cfg["seed"],
            pilot_budget=cfg["pilot"] or PILOT_SIGMA_DEFAULT,
            threads=cfg["threads"])
    policy = make_policy(name, gamma=cfg["gamma"], beta=cfg["beta"],
                         sigma_matrix=smat)
    rep = estimate_shapley(game, policy, cfg["samples"], cfg["seed"],
                           threads=cfg["threads"])
    out = _outdir(cfg)
    n = game.n_players
    _write_json(os.path.join(out, "report.json"), {
        "game": cfg["game"], "n": n, "seed": rep.seed, "N": rep.N,
        "policy": rep.policy, "backend": rep.backend,
        "players": labels,
        "T": [float(v) for v in rep.T],
        "var_T": [float(v) for v in rep.var_T],
        "phi_hat": [float(v) for v in rep.phi_hat],
        "budget": rep.budget, "v_hat": rep.v_hat,
        "eval_count": int(rep.eval_count),
        "samples_used": [int(v) for v in rep.samples_used],
        "strata": {
            "count": [[int(c) for c in row] for row in rep.counts],
            "mean": [[float(v) for v in row] for row in rep.means],
            "sigma": [[float(v) for v in row] for row in rep.sigma],
        },
    })
    _write_csv(os.path.join(out, "estimates.csv"),
               ["player", "T", "var_T", "phi_hat"],
               [(labels[i], _fmt(rep.T[i]), _fmt(rep.var_T[i]),
                 _fmt(rep.phi_hat[i])) for i in range(n)])
    _write_csv(os.path.join(out, "strata.csv"),
               ["player", "stratum", "count", "mean", "sigma"],
               [(labels[i], j, int(rep.counts[i, j]), _fmt(rep.means[i, j]),
                 _fmt(rep.sigma[i, j]))
                for i in range(n) for j in range(n)])
    print(f"estimated {n} players with policy {rep.policy}, N={rep.N} "
          f"({rep.elapsed:.3f}s, backend {rep.backend}) -> {out}")
    print(f"payout total {np.sum(rep.phi_hat):.6g} against budget "
          f"{rep.budget:.6g}")
    return 0


def cmd_variance_curve(cfg: dict) -> int:
    game, _ = build_game(cfg)
    _check_grid(cfg, game)
    t0 = time.perf_counter()
    rows = variance_curve(game, cfg["policy"], cfg["n_grid"], cfg["reps"],
                          cfg["seed"], gamma=cfg["gamma"], beta=cfg["beta"],
                          threads=cfg["threads"],
                          pilot_budget=cfg["pilot"] or PILOT_SIGMA_DEFAULT)
    out = _outdir(cfg)
    _write_csv(os.path.join(out, "variance_curve.csv"),
               ["policy", "N", "empirical_var", "analytic_var"],
               [(r.policy, r.N, _fmt(r.empirical_var), _fmt(r.analytic_var))
                for r in rows])
    print(f"{len(rows)} curve points ({time.perf_counter() - t0:.3f}s) "
          f"-> {out}/variance_curve.csv")
    return 0


def cmd_regret_curve(cfg: dict) -> int:
    game, _ = build_game(cfg)
    _check_grid(cfg, game)
    t0 = time.perf_counter()
    rows = regret_curve(game, cfg["policy"], cfg["n_grid"], cfg["reps"],
                        cfg["seed"], gamma=cfg["gamma"], beta=cfg["beta"],
                        threads=cfg["threads"],
                        pilot_budget=cfg["pilot"] or PILOT_SIGMA_DEFAULT)
    out = _outdir(cfg)
    _write_csv(os.path.join(out, "regret_curve.csv"),
               ["schedule", "N", "regret"],
               [(r.schedule, r.N, _fmt(r.regret)) for r in rows])
    print(f"{len(rows)} regret points ({time.perf_counter() - t0:.3f}s) "
          f"-> {out}/regret_curve.csv")
    return 0


def cmd_mspe_table(cfg: dict) -> int:
    game, labels = build_game(cfg)
    _check_budget(cfg, game)
    t0 = time.perf_counter()
    rep = mspe_table(game, cfg["policy"], cfg["samples"], cfg["reps"],
                     cfg["seed"], gamma=cfg["gamma"], beta=cfg["beta"],
                     threads=cfg["threads"],
                     pilot_budget=cfg["pilot"] or PILOT_SIGMA_DEFAULT)
    out = _outdir(cfg)
    _write_csv(os.path.join(out, "mspe_table.csv"),
               ["policy", "mspe", "normalized_mspe"],
               [(name, _fmt(rep.mspe[name]),
                 "inf" if math.isinf(rep.normalized[name])
                 else _fmt(rep.normalized[name]))
                for name in rep.policies])
    _write_json(os.path.join(out, "mspe_report.json"), {
        "game": cfg["game"], "n": game.n_players, "seed": rep.seed,
        "N": rep.N, "reps": rep.reps, "players": labels,
        "policies": list(rep.policies),
        "mspe": {k: float(v) for k, v in rep.mspe.items()},
        "normalized_mspe": {k: (None if math.isinf(v) else float(v))
                            for k, v in rep.normalized.items()},
        "per_player_mse": {k: [float(x) for x in v]
                           for k, v in rep.per_player.items()},
        "truth": [float(v) for v in rep.truth],
    })
    parts = ", ".join(f"{name}={rep.normalized[name]:.3g}"
                      for name in rep.policies)
    print(f"normalized MSPE: {parts} ({time.perf_counter() - t0:.3f}s) "
          f"-> {out}")
    return 0


def cmd_benefit(cfg: dict) -> int:
    game, labels = build_game(cfg)
    t0 = time.perf_counter()
    rep = benefit_report(game, cfg["seed"],
                         pilot_budget=cfg["pilot"] or PILOT_BENEFIT_DEFAULT,
                         threads=cfg["threads"])
    out = _outdir(cfg)
    _write_json(os.path.join(out, "benefit.json"), {
        "game": cfg["game"], "n": game.n_players, "seed": cfg["seed"],
        "players": labels,
        "ratios": _floats(rep.ratios),
        "median_ratio": rep.median_ratio,
        "recommendation": rep.recommendation,
        "skipped_players": [labels[i] for i in rep.skipped],
        "threshold": 1.2,
    })
    print(f"median variance ratio {rep.median_ratio:.3f}: "
          f"{rep.recommendation} ({time.perf_counter() - t0:.3f}s) -> {out}")
    return 0


def cmd_gen_loads(cfg: dict) -> int:
    if cfg["n"] < 1:
        raise ConfigError(f"n must be >= 1, got {cfg['n']}")
    demands, max_delays = generate_load_profiles(cfg["n"], cfg["seed"])
    out = _outdir(cfg)
    path = os.path.join(out, "loads.csv")
    write_load_csv(path, demands, max_delays,
                   ids=list(range(1, cfg["n"] + 1)))
    print(f"wrote {cfg['n']} load profiles -> {path}")
    return 0


COMMANDS = {
    "exact": cmd_exact,
    "estimate": cmd_estimate,
    "variance-curve": cmd_variance_curve,
    "regret-curve": cmd_regret_curve,
    "mspe-table": cmd_mspe_table,
    "benefit": cmd_benefit,
    "gen-loads": cmd_gen_loads,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        cfg = resolve_config(ns)
        if ns.command != "gen-loads":
            _validate(cfg)
        return COMMANDS[ns.command](cfg)
    except SizeCapError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (ConfigError, GameDataError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
