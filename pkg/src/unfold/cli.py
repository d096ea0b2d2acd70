"""Command line interface: ``unfold fit-static|fit-dynamic|simulate|report``.

Settings resolve as flags over an optional ``--config`` JSON file over
built-in defaults. The resolved settings are written into every output
directory, so a run can be repeated exactly.

Exit codes: 0 success, 2 input or validation error, 3 convergence failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .data import (EmptyDataError, ParseError, ValidationError, VoteMatrix, align_terms,
                   load_vote_matrix, preprocess, write_vote_matrix)
from .dynamic import DynamicHyper, run_dynamic_chain
from .inference import (FingerprintMismatchError, UndefinedCorrelationError, apply_sign_anchor,
                        check_fingerprint, dispersion_ratio, gelman_rubin, loglik_draws,
                        rank_summary, response_curve, spearman, spearman_draws, waic)
from .model import (PriorHyper, items_to_arrays, scenario_items, simulate_trajectories,
                    simulate_votes)
from .rngstats import RngStream
from .samples import InsufficientSamplesError, StoreError, concat_samples, read_store, write_store
from .static import ChainConfig, run_static_chain

log = logging.getLogger("unfold")

EXIT_OK, EXIT_INPUT, EXIT_CONVERGENCE = 0, 2, 3

FIT_DEFAULTS = {
    "seed": 0,
    "chains": 4,
    "iterations": 1000,
    "burnin": 500,
    "thin": 1,
    "omega2": 25.0,
    "kappa2": 10.0,
    "mu": [-2.0, 10.0],
    "anchor": None,
    "check_convergence": None,
    "absence_threshold": 0.4,
    "monotone": False,
}
DYNAMIC_DEFAULTS = {"eta": 0.9, "lambda": 0.04, "tau2": 1.0, "adapt": True}
SIMULATE_DEFAULTS = {
    "seed": 0,
    "scenario": "mixed",
    "legislators": 50,
    "votes": 200,
    "terms": 0,
    "rho": 0.9,
    "missing": 0.0,
    "nonmonotone_fraction": 0.37,
}
REPORT_DEFAULTS = {"metric": "range", "grid": [-3.0, 3.0, 121], "vote": [], "other": None,
                   "group_a": None, "group_b": None}

RHAT_DEFAULT_THRESHOLD = 1.1
SIMULATE_STREAM = 1_000_000


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# argument parsing and configuration
# ---------------------------------------------------------------------------

def _pair(text: str):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}") from None
    return [a, b]


def _grid(text: str):
    try:
        lo, hi, n = text.split(",")
        return [float(lo), float(hi), int(n)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'lo,hi,n', got {text!r}") from None


def _add_fit_flags(p: argparse.ArgumentParser, dynamic: bool) -> None:
    p.add_argument("--input", required=True, help="vote matrix CSV")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="JSON file with settings named like the flags")
    p.add_argument("--seed", type=int)
    p.add_argument("--chains", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--omega2", type=float)
    p.add_argument("--kappa2", type=float)
    p.add_argument("--mu", type=_pair, metavar="A,B")
    p.add_argument("--anchor", help="legislator whose ideal point is fixed positive")
    p.add_argument("--check-convergence", nargs="?", type=float, const=RHAT_DEFAULT_THRESHOLD,
                   metavar="RHAT", help="exit 3 if any monitored R-hat exceeds RHAT (default 1.1)")
    p.add_argument("--absence-threshold", type=float)
    if dynamic:
        p.add_argument("--eta", type=float)
        p.add_argument("--lambda", type=float, dest="lambda")
        p.add_argument("--tau2", type=float)
        p.add_argument("--no-adapt", action="store_false", dest="adapt")
    else:
        p.add_argument("--monotone", action="store_true",
                       help="monotone baseline: pin the second probit component far away")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="unfold", allow_abbrev=False,
                                     argument_default=argparse.SUPPRESS,
                                     description="Bayesian probit unfolding for roll-call votes.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    kw = dict(allow_abbrev=False, argument_default=argparse.SUPPRESS)
    _add_fit_flags(sub.add_parser("fit-static", help="fit the static model", **kw), False)
    _add_fit_flags(sub.add_parser("fit-dynamic", help="fit the dynamic model", **kw), True)

    p = sub.add_parser("simulate", help="simulate a vote matrix with known truth", **kw)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--seed", type=int)
    p.add_argument("--scenario", choices=["partisan", "ends-against-middle", "mixed"])
    p.add_argument("--legislators", type=int)
    p.add_argument("--votes", type=int, help="votes (per term when --terms > 0)")
    p.add_argument("--terms", type=int, help="number of terms; 0 gives static data")
    p.add_argument("--rho", type=float)
    p.add_argument("--missing", type=float)
    p.add_argument("--nonmonotone-fraction", type=float)

    p = sub.add_parser("report", help="summaries from sample stores", **kw)
    p.add_argument("kind", choices=["waic", "ranks", "compare", "dispersion", "curves"])
    p.add_argument("--input", required=True, help="the vote CSV the stores were fitted to")
    p.add_argument("--store", action="append", required=True,
                   help="store directory or fit output directory; repeat to pool")
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--other", action="append", help="second store for 'compare'")
    p.add_argument("--metric", choices=["range", "sd", "iqr"])
    p.add_argument("--group-a", help="comma-separated ids, or party:LABEL")
    p.add_argument("--group-b", help="comma-separated ids, or party:LABEL")
    p.add_argument("--vote", action="append", help="vote id for 'curves'; repeatable")
    p.add_argument("--grid", type=_grid, metavar="LO,HI,N")
    return parser


def resolve_config(defaults: dict, args: dict) -> dict:
    """Merge defaults, the optional JSON config file, then explicit flags."""
    cfg = dict(defaults)
    path = args.pop("config", None)
    if path:
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise InputError("config file must hold a JSON object")
        for key, value in raw.items():
            k = key.replace("-", "_")
            if k == "no_adapt":
                k, value = "adapt", not value
            if k == "check_convergence" and value is True:
                value = RHAT_DEFAULT_THRESHOLD
            if k == "check_convergence" and value is False:
                value = None
            if k == "mu" and isinstance(value, str):
                value = _pair(value)
            if k not in cfg and k not in args:
                raise InputError(f"unknown config key {key!r}")
            cfg[k] = value
    cfg.update(args)
    return cfg


# ---------------------------------------------------------------------------
# fitting
# ---------------------------------------------------------------------------

def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _default_anchor(data: VoteMatrix) -> str:
    for lid, ok in zip(data.legislator_ids, data.anchor_eligible):
        if ok:
            return lid
    raise InputError("no anchor-eligible legislator")


def _monitored(chains, data: VoteMatrix, anchor: str):
    """Scalar traces per chain for R-hat: log-likelihood, a few betas, rho."""
    I = len(data.legislator_ids)
    a = data.legislator_ids.index(anchor)
    picks = [a] + [int(i) for i in np.linspace(0, I - 1, 4).round() if int(i) != a][:3]
    out = {"loglik": [loglik_draws(c, data)[0].sum(axis=1) for c in chains]}
    for i in picks:
        out[f"beta[{data.legislator_ids[i]}]"] = [c.beta_summary()[:, i] for c in chains]
    if chains[0].dynamic:
        out["rho"] = [c.rho for c in chains]
    return out


def cmd_fit(cfg: dict, dynamic: bool) -> int:
    raw = load_vote_matrix(cfg["input"])
    data = preprocess(raw, absence_threshold=float(cfg["absence_threshold"]))
    anchor = cfg["anchor"] or _default_anchor(data)
    if anchor not in data.legislator_ids:
        raise InputError(f"anchor {anchor!r} not present after preprocessing")
    if int(cfg["chains"]) < 1:
        raise InputError("--chains must be at least 1")
    hyper = PriorHyper(mu=tuple(cfg["mu"]), omega2=cfg["omega2"], kappa2=cfg["kappa2"])
    config = ChainConfig(iterations=int(cfg["iterations"]), burn_in=int(cfg["burnin"]),
                         thin=int(cfg["thin"]), seed=int(cfg["seed"]), anchor=anchor,
                         hyper=hyper, monotone=bool(cfg.get("monotone", False)))
    if dynamic:
        dd = align_terms(data)
        dyn = DynamicHyper(eta=float(cfg["eta"]), lam=float(cfg["lambda"]),
                           tau2=float(cfg["tau2"]), adapt=bool(cfg["adapt"]))
        fit_data = dd.base

        def run(c):
            return run_dynamic_chain(dd, config, dyn, RngStream(config.seed, c))
    else:
        fit_data = data

        def run(c):
            return run_static_chain(data, config, RngStream(config.seed, c))

    n_chains = int(cfg["chains"])
    # each chain owns its stream, so thread scheduling cannot change results
    with ThreadPoolExecutor(max_workers=n_chains) as pool:
        chains = list(pool.map(run, range(n_chains)))
    chains = [apply_sign_anchor(c, anchor) for c in chains]

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    command = "fit-dynamic" if dynamic else "fit-static"
    # the output location is not part of the run, so reruns elsewhere stay byte-identical
    run_config = {"command": command, **{k: v for k, v in cfg.items() if k != "out"}}
    for c, samples in enumerate(chains, start=1):
        samples.manifest["run_config"] = run_config
        samples.manifest["preprocess"] = {"absence_threshold": float(cfg["absence_threshold"]),
                                          "drop_unanimous": True}
        write_store(samples, out / f"chain_{c}")
    _dump_json(run_config, out / "run_config.json")

    diag = {"chains": n_chains, "n_stored": config.n_stored, "rhat": {}}
    if dynamic:
        rates = [c.manifest["metadata"]["post_burnin_acceptance_rate"] for c in chains]
        diag["acceptance_rate"] = rates
        shown = ", ".join("n/a" if r is None else f"{r:.3f}" for r in rates)
        print(f"rho MH acceptance rate after burn-in: {shown}")
    if n_chains >= 2 and config.n_stored >= 10:
        for name, traces in _monitored(chains, fit_data, anchor).items():
            diag["rhat"][name] = gelman_rubin(traces)
        for name, value in diag["rhat"].items():
            print(f"R-hat {name}: {value:.4f}")
    else:
        print("R-hat skipped: needs at least 2 chains and 10 stored draws")
    _dump_json(diag, out / "diagnostics.json")

    threshold = cfg["check_convergence"]
    if threshold is not None:
        if not diag["rhat"]:
            raise InputError("--check-convergence needs at least 2 chains and 10 stored draws")
        worst = max(diag["rhat"].values())
        if not worst <= threshold:
            print(f"convergence check failed: max R-hat {worst:.4f} > {threshold}", file=sys.stderr)
            return EXIT_CONVERGENCE
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------

def cmd_simulate(cfg: dict) -> int:
    I, J, T = int(cfg["legislators"]), int(cfg["votes"]), int(cfg["terms"])
    if I < 2 or J < 1 or T < 0:
        raise InputError("need at least 2 legislators, 1 vote and a nonnegative term count")
    rng = RngStream(int(cfg["seed"]), SIMULATE_STREAM)
    n_items = J * max(T, 1)
    items = scenario_items(cfg["scenario"], n_items, rng,
                           nonmonotone_fraction=float(cfg["nonmonotone_fraction"]))
    if T > 0:
        beta = simulate_trajectories(I, T, float(cfg["rho"]), rng)
        vote_term = np.repeat(np.arange(T), J)
        summary = beta.mean(axis=1)
    else:
        beta = rng.normal(I)
        vote_term = None
        summary = beta
    parties = ["R" if b > 0 else "D" for b in summary]
    m = simulate_votes(beta, items, float(cfg["missing"]), rng, vote_term=vote_term,
                       parties=parties)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    write_vote_matrix(m, out / "votes.csv")
    alpha, delta, z = items_to_arrays(items)
    truth = {
        "config": {"command": "simulate", **{k: v for k, v in cfg.items() if k != "out"}},
        "legislator_ids": list(m.legislator_ids),
        "vote_ids": list(m.vote_ids),
        "beta": beta.tolist(),
        "alpha": alpha.tolist(),
        "delta": delta.tolist(),
        "z": z.tolist(),
    }
    if T > 0:
        truth["rho"] = float(cfg["rho"])
        truth["vote_term"] = vote_term.tolist()
    _dump_json(truth, out / "truth.json")
    print(f"wrote {out / 'votes.csv'} ({I} legislators, {n_items} votes)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _store_dirs(path: str):
    p = Path(path)
    if (p / "manifest.json").exists():
        return [p]
    found = sorted(d for d in p.glob("chain_*") if (d / "manifest.json").exists())
    if not found:
        raise InputError(f"no sample store under {path}")
    return found


def _load_pooled(paths):
    stores = [read_store(d) for path in paths for d in _store_dirs(path)]
    return concat_samples(stores)


def _report_data(raw: VoteMatrix, samples) -> VoteMatrix:
    settings = samples.manifest.get("preprocess", {})
    data = preprocess(raw, absence_threshold=float(settings.get("absence_threshold", 0.4)))
    if samples.dynamic:
        data = align_terms(data).base
    check_fingerprint(samples, data)
    return data


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header, rows) -> None:
    lines = [",".join(header)]
    lines += [",".join(str(v) if isinstance(v, str) else _fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _interval(x):
    x = np.asarray(x, dtype=float)
    lo, hi = np.percentile(x, [2.5, 97.5])
    return {"mean": float(x.mean()), "median": float(np.median(x)),
            "q025": float(lo), "q975": float(hi), "n": int(x.size)}


def _group(spec: str | None, data: VoteMatrix, name: str):
    if not spec:
        raise InputError(f"--{name} is required for 'dispersion'")
    if spec.startswith("party:"):
        label = spec.split(":", 1)[1]
        ids = [l for l, p in zip(data.legislator_ids, data.parties) if p == label]
    else:
        ids = [s for s in spec.split(",") if s]
    return ids


def cmd_report(cfg: dict) -> int:
    raw = load_vote_matrix(cfg["input"])
    samples = _load_pooled(cfg["store"])
    data = _report_data(raw, samples)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    kind = cfg["kind"]

    if kind == "waic":
        rep = waic(samples, data, check=False)
        _write_csv(out / "waic_per_unit.csv", ["legislator", "waic", "lppd", "penalty"],
                   [(lid, w, l, p) for lid, w, l, p in zip(
                       data.legislator_ids, rep.per_unit, rep.lppd_unit, rep.penalty_unit)])
        _write_csv(out / "waic_per_vote.csv", ["vote", "waic", "lppd", "penalty"],
                   [(vid, w, l, p) for vid, w, l, p in zip(
                       data.vote_ids, rep.per_vote, rep.lppd_vote, rep.penalty_vote)])
        _dump_json({"total": rep.total, "n_draws": samples.n_draws}, out / "waic.json")
        print(f"WAIC total: {rep.total:.6f}")

    elif kind == "ranks":
        rs = rank_summary(samples)
        mean_beta = samples.beta_summary().mean(axis=0)
        _write_csv(out / "ranks.csv", ["legislator", "median_rank", "mean_beta"],
                   [(lid, r, b) for lid, r, b in zip(data.legislator_ids, rs.median_rank, mean_beta)])
        if rs.term_rank_draws is not None:
            med = np.nanmedian(rs.term_rank_draws, axis=0)
            terms = samples.manifest.get("term_labels", list(range(1, med.shape[1] + 1)))
            rows = [(lid, *row) for lid, row in zip(data.legislator_ids, med)]
            _write_csv(out / "term_ranks.csv", ["legislator", *(f"term_{t}" for t in terms)], rows)
        print(f"wrote ranks for {len(data.legislator_ids)} legislators")

    elif kind == "compare":
        if not cfg.get("other"):
            raise InputError("'compare' needs --other")
        other = _load_pooled(cfg["other"])
        _report_data(raw, other)
        if tuple(other.legislator_ids) != tuple(samples.legislator_ids):
            raise InputError("stores cover different legislators")
        rho_draws = spearman_draws(samples, other)
        med = spearman(rank_summary(samples).median_rank, rank_summary(other).median_rank)
        result = {"spearman_draws": _interval(rho_draws), "spearman_median_ranks": med}
        _dump_json(result, out / "compare.json")
        print(f"Spearman posterior mean: {result['spearman_draws']['mean']:.4f}")

    elif kind == "dispersion":
        ga = _group(cfg["group_a"], data, "group-a")
        gb = _group(cfg["group_b"], data, "group-b")
        res = dispersion_ratio(samples, ga, gb, cfg["metric"])
        result = {"metric": cfg["metric"], "mean": res.mean, "excluded_draws": res.excluded}
        if res.ratios.size:
            result["summary"] = _interval(res.ratios)
        _dump_json(result, out / "dispersion.json")
        print(f"dispersion ratio ({cfg['metric']}): {res.mean:.6g} ({res.excluded} draws excluded)")

    elif kind == "curves":
        votes = cfg["vote"] or []
        if not votes:
            raise InputError("'curves' needs at least one --vote")
        lo, hi, n = cfg["grid"]
        grid = np.linspace(float(lo), float(hi), int(n))
        rows = []
        for vid in votes:
            rc = response_curve(samples, vid, grid)
            rows += [(vid, g, m, l, u) for g, m, l, u in zip(rc.grid, rc.mean, rc.lower, rc.upper)]
        _write_csv(out / "curves.csv", ["vote", "beta", "mean", "lower", "upper"], rows)
        print(f"wrote curves for {len(votes)} votes")
    return EXIT_OK


# ---------------------------------------------------------------------------

_INPUT_ERRORS = (InputError, ParseError, ValidationError, EmptyDataError, FingerprintMismatchError,
                 StoreError, InsufficientSamplesError, UndefinedCorrelationError, KeyError,
                 ValueError, OSError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = vars(parser.parse_args(argv))
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.pop("verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    command = args.pop("command")
    try:
        if command in ("fit-static", "fit-dynamic"):
            dynamic = command == "fit-dynamic"
            defaults = {**FIT_DEFAULTS, **(DYNAMIC_DEFAULTS if dynamic else {})}
            return cmd_fit(resolve_config(defaults, args), dynamic)
        if command == "simulate":
            return cmd_simulate(resolve_config(SIMULATE_DEFAULTS, args))
        return cmd_report(resolve_config(REPORT_DEFAULTS, args))
    except _INPUT_ERRORS as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
