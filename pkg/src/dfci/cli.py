"""Command-line entry point.

Exit codes: 0 success, 2 input validation, 3 I/O, 4 internal invariant breach.

For ``simulate`` and ``scaling`` the experiment is described by one JSON
document; command-line flags override its fields. The master seed is taken
from ``--seed``, then the config's ``seed``, then ``$DFCI_SEED``, then 0.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import rng
from .core import INF, CIParams, DataError, ParameterError, construct_ci
from .distributions import (
    Bernoulli,
    law_from_json,
    near_uniform,
    random_bernoulli_laws,
    sample_dataset,
    uniform,
)
from .estimators import fit_plugin_mean, order_support_by_frequency
from .fileio import read_dataset, read_mean, read_spec, read_support, write_dataset, write_mean, write_support
from .harness import (
    ExperimentConfig,
    lemma_rows,
    run_coverage_experiment,
    run_scaling_study,
    write_csv,
    write_results_csv,
)
from .plots import loglog_svg

EXIT_OK, EXIT_INPUT, EXIT_IO, EXIT_INVARIANT = 0, 2, 3, 4


class InvariantBreach(RuntimeError):
    pass


def resolve_seed(flag, config: dict | None = None) -> int:
    if flag is not None:
        return int(flag)
    if config and config.get("seed") is not None:
        return int(config["seed"])
    env = os.environ.get("DFCI_SEED")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ParameterError(f"DFCI_SEED={env!r} is not an integer") from None
    return 0


def _params(args, config: dict | None = None) -> CIParams:
    config = config or {}
    pick = lambda name, dflt: getattr(args, name) if getattr(args, name) is not None else config.get(name, dflt)
    return CIParams(float(pick("alpha", 0.1)), float(pick("gamma", 0.02)), float(pick("delta", 0.02)))


def build_spec(doc: dict, seed: int, base_dir: str = "."):
    if "file" in doc:
        return read_spec(os.path.join(base_dir, doc["file"]))
    gen = doc.get("generator")
    M = int(doc.get("M", 0))
    if M < 1:
        raise ParameterError("spec generator needs M >= 1")
    spec_seed = int(doc.get("seed", rng.derive_seed(seed, 2**61)))
    resp = doc.get("response", {"type": "bernoulli", "mean": 0.5})
    if resp.get("type") == "bernoulli_random":
        laws = random_bernoulli_laws(M, spec_seed)
    else:
        laws = (law_from_json(resp),) * M
    if gen == "uniform":
        return uniform(M, laws=laws)
    if gen == "near_uniform":
        return near_uniform(M, float(doc.get("eta", 2.0)), spec_seed, laws=laws)
    raise ParameterError(f"unknown spec generator {gen!r}")


def load_config(path: str, args) -> tuple[ExperimentConfig, dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise ParameterError(f"{path}: config must be a JSON object")
    seed = resolve_seed(args.seed, doc)
    spec = build_spec(doc.get("spec", {}), seed, os.path.dirname(os.path.abspath(path)))
    mean = doc.get("mean", {"source": "oracle"})
    if isinstance(mean, str):
        mean = {"source": mean}
    try:
        cfg = ExperimentConfig(
            spec=spec,
            n_grid=tuple(doc["n_grid"]),
            trials=int(doc.get("trials", 100)),
            params=_params(args, doc),
            mean_source=mean.get("source", "oracle"),
            mean_err=float(mean.get("err", 0.0)),
            split_fraction=float(mean.get("fraction", doc.get("split_fraction", 0.5))),
            support_source=doc.get("support", "true"),
            seed=seed,
            default_mean=float(doc.get("default_mean", 0.5)),
            label=doc.get("label", ""),
        )
    except KeyError as exc:
        raise ParameterError(f"{path}: missing field {exc}") from None
    return cfg, doc


def _prepare_out(out: str) -> str:
    os.makedirs(out, exist_ok=True)
    probe = os.path.join(out, ".write_test")
    with open(probe, "w"):
        pass
    os.remove(probe)
    return out


def _fmt_bound(v: float) -> str:
    return "inf" if v == INF else f"{v:.6g}"


def cmd_ci(args) -> int:
    params = _params(args)
    data = read_dataset(args.data)
    support = read_support(args.support)
    mean = read_mean(args.mean)
    rep = construct_ci(data, support, mean, params)
    print(f"n={rep.n} off_support={rep.off_support}")
    print(f"M_hat={_fmt_bound(rep.m_hat_gamma)} Z={rep.z:.6g} Z_plus={rep.z_plus:.6g} "
          f"N_geq2={rep.n_geq2} delta_hat={_fmt_bound(rep.delta_hat)} halfwidth={_fmt_bound(rep.halfwidth)}")
    if rep.trivial:
        print("WARN: effective support estimate is infinite; every interval is [0,1]")
    queries = args.query or sorted(set(data.keys), key=str)
    for q in queries:
        lo, hi = rep.interval_at(q)
        note = "" if mean.knows(q) else "  NOTE: key absent from mean file, default mean used"
        print(f"{q}\t[{lo:.6g}, {hi:.6g}]{note}")
    if any(not (0.0 <= rep.interval_at(q)[0] <= rep.interval_at(q)[1] <= 1.0) for q in queries):
        raise InvariantBreach("interval endpoints escaped [0, 1]")
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg, _ = load_config(args.config, args)
    print(f"seed={cfg.seed}")
    out = _prepare_out(args.out)
    res = run_coverage_experiment(cfg, threads=args.threads)
    for c in res.cells:
        print(f"n={c.n} M={c.M} coverage={c.coverage_hat:.4f} [{c.cov_lo:.4f}, {c.cov_hi:.4f}] "
              f"mean_length={c.mean_length:.4g} frac_mhat_inf={c.frac_mhat_inf:.3f}")
        if not (0.0 <= c.cov_lo <= c.coverage_hat <= c.cov_hi <= 1.0):
            raise InvariantBreach("coverage interval outside [0, 1]")
    write_results_csv(os.path.join(out, "results.csv"), res.cells)
    if args.format == "csv+svg":
        ns = [c.n for c in res.cells]
        svg = loglog_svg([("mean length", ns, [c.mean_length for c in res.cells]),
                          ("mean delta_hat", ns, [c.mean_delta_hat for c in res.cells])],
                         "interval length vs n", "n", "length")
        with open(os.path.join(out, "length_vs_n.svg"), "w", encoding="utf-8") as fh:
            fh.write(svg)
    return EXIT_OK


def cmd_scaling(args) -> int:
    cfg, doc = load_config(args.config, args)
    print(f"seed={cfg.seed}")
    out = _prepare_out(args.out)
    M_grid = doc.get("M_grid", [len(cfg.spec)])
    resp = doc.get("spec", {}).get("response", {"type": "bernoulli", "mean": 0.5})
    law = law_from_json(resp) if resp.get("type") != "bernoulli_random" else Bernoulli(0.5)
    res = run_scaling_study(cfg, M_grid, lambda M: uniform(M, law), threads=args.threads,
                            lb_beta=float(doc.get("lb_beta", 0.05)), lb_gamma=float(doc.get("lb_gamma", 0.5)))
    for c in res.cells:
        print(f"n={c.n} M={c.M} coverage={c.coverage_hat:.4f} mean_length={c.mean_length:.4g} "
              f"mean_delta_hat={c.mean_delta_hat:.4g} frac_mhat_inf={c.frac_mhat_inf:.3f}")
    for key, why in ((k, "M_hat infinite in >50% of trials") for k in res.excluded):
        print(f"excluded n={key[0]} M={key[1]}: {why}")
    write_results_csv(os.path.join(out, "scaling.csv"), res.cells, {"lower_bound": res.lower_bounds})
    slope_rows = [("n", f"M={M}", f.slope, f.stderr, f.points) for M, f in res.n_slopes.items()]
    slope_rows += [("M", f"n={n}", f.slope, f.stderr, f.points) for n, f in res.M_slopes.items()]
    for r in slope_rows:
        print(f"slope of log length on log {r[0]} at {r[1]}: {r[2]:.4f} (se {r[3]:.3g})")
    write_csv(os.path.join(out, "slopes.csv"), ("variable", "fixed", "slope", "stderr", "points"), slope_rows)
    if args.format == "csv+svg":
        for var, fixed_name, slopes in (("n", "M", res.n_slopes), ("M", "n", res.M_slopes)):
            groups = sorted({getattr(c, fixed_name) for c in res.cells})
            series, fits = [], []
            for g in groups:
                row = sorted((c for c in res.cells if getattr(c, fixed_name) == g), key=lambda c: getattr(c, var))
                if len(row) < 2:
                    continue
                xs = [getattr(c, var) for c in row]
                series.append((f"length, {fixed_name}={g}", xs, [c.mean_length for c in row]))
                series.append((f"lower bound, {fixed_name}={g}", xs,
                               [res.lower_bounds[(c.n, c.M)] for c in row]))
                if g in slopes:
                    f = slopes[g]
                    fits.append((f"fit slope {f.slope:.3f}", f.slope, f.intercept))
            if series:
                svg = loglog_svg(series, f"interval length vs {var}", var, "length", fits)
                with open(os.path.join(out, f"length_vs_{var}.svg"), "w", encoding="utf-8") as fh:
                    fh.write(svg)
    return EXIT_OK


def cmd_check_lemmas(args) -> int:
    seed = resolve_seed(args.seed)
    print(f"seed={seed}")
    out = _prepare_out(args.out)
    rows = lemma_rows(seed, n_max=args.n_max, p_steps=args.p_steps, kl_max_n=args.kl_max_n,
                      n_laws=args.laws, n_tv=args.tv_instances)
    write_csv(os.path.join(out, "lemmas.csv"), ("lemma", "instance", "lhs", "rhs", "pass"), rows)
    failures = [r for r in rows if not r[4]]
    by_lemma: dict[str, list] = {}
    for r in rows:
        by_lemma.setdefault(r[0], []).append(r[4])
    for name, flags in by_lemma.items():
        print(f"{name}: {sum(flags)}/{len(flags)} pass")
    if failures:
        raise InvariantBreach(f"{len(failures)} lemma checks failed")
    return EXIT_OK


def cmd_sample(args) -> int:
    seed = resolve_seed(args.seed)
    print(f"seed={seed}")
    spec = read_spec(args.spec)
    write_dataset(args.output, sample_dataset(spec, args.n, seed))
    return EXIT_OK


def cmd_fit(args) -> int:
    data = read_dataset(args.data)
    out = _prepare_out(args.out)
    write_support(os.path.join(out, "support.txt"), order_support_by_frequency(data))
    write_mean(os.path.join(out, "mean.csv"), fit_plugin_mean(data, args.default))
    return EXIT_OK


def _add_common(p, params=True, files=True):
    if params:
        p.add_argument("--alpha", type=float)
        p.add_argument("--gamma", type=float)
        p.add_argument("--delta", type=float)
    p.add_argument("--seed", type=int)
    if files:
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default="out")
        p.add_argument("--format", choices=("csv", "csv+svg"), default="csv")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dfci", description="Distribution-free confidence intervals for E[Y|X=x].")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ci", help="build intervals from data, support and mean files")
    p.add_argument("--data", required=True)
    p.add_argument("--support", required=True)
    p.add_argument("--mean", required=True)
    p.add_argument("--query", action="append", help="key to report (repeatable); default all data keys")
    _add_common(p, files=False)
    p.set_defaults(func=cmd_ci)

    for name, func, help_ in (("simulate", cmd_simulate, "coverage/length Monte Carlo"),
                              ("scaling", cmd_scaling, "length scaling study with slope fits")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config")
        _add_common(p)
        p.set_defaults(func=func)

    p = sub.add_parser("check-lemmas", help="grid and random-instance checks of the supporting inequalities")
    _add_common(p, params=False)
    p.add_argument("--n-max", type=int, default=200)
    p.add_argument("--p-steps", type=int, default=2000)
    p.add_argument("--kl-max-n", type=int, default=40)
    p.add_argument("--laws", type=int, default=1000)
    p.add_argument("--tv-instances", type=int, default=100)
    p.set_defaults(func=cmd_check_lemmas)

    p = sub.add_parser("sample", help="draw a dataset from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("fit", help="write frequency-ordered support and plug-in mean files")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--default", type=float, default=0.5)
    p.set_defaults(func=cmd_fit)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParameterError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvariantBreach as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
