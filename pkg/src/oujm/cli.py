"""Command-line entry point: ``oujm simulate | init | fit | gof | summarize``.

Flags take precedence over the config file; every override of a value set in the file
is logged and recorded in the run manifest.  ``OUJM_THREADS`` limits the CPU threads
used by the array backend.
"""

import argparse
import hashlib
import json
import logging
import os
import platform
import sys

log = logging.getLogger("oujm")


def _limit_threads():
    n = os.environ.get("OUJM_THREADS")
    if n and "XLA_FLAGS" not in os.environ:
        os.environ["XLA_FLAGS"] = f"--xla_cpu_multi_thread_eigen=false intra_op_parallelism_threads={int(n)}"
        os.environ.setdefault("OMP_NUM_THREADS", str(int(n)))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions():
    import jax
    import numpy
    import scipy

    from . import __version__

    return {"oujm": __version__, "python": platform.python_version(), "numpy": numpy.__version__, "scipy": scipy.__version__, "jax": jax.__version__}


def write_manifest(path, command, cfg, seed, inputs, outputs, overrides=()):
    from .config import dump_config

    text = dump_config(cfg)
    manifest = {
        "command": command,
        "config_sha256": hashlib.sha256(text.encode()).hexdigest(),
        "seed": seed,
        "inputs": {os.path.basename(p): _sha256(p) for p in inputs if os.path.exists(p)},
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs if os.path.exists(p)},
        "overrides": list(overrides),
        "versions": _versions(),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    return manifest


def _load_cfg(args):
    from .config import load_config, parse_config

    return load_config(args.config) if getattr(args, "config", None) else parse_config("")


def _override(cfg, overrides, section, key, value, explicit):
    """Apply a flag value; logs when it replaces a config-file value."""
    if value is None:
        return
    target = getattr(cfg, section) if section else cfg
    old = getattr(target, key)
    if old != value:
        where = f"{section}.{key}" if section else key
        if explicit:
            log.warning("flag overrides config value %s: %r -> %r", where, old, value)
        overrides.append({"key": where, "config": old, "flag": value})
    setattr(target, key, value)


def _revalidate(cfg):
    from .config import validate

    return validate(cfg.model_dump())


def _data_paths(cfg, data_dir):
    d = data_dir or cfg.data.dir
    long_path = cfg.data.long or (os.path.join(d, "long.csv") if d else None)
    surv_path = cfg.data.surv or (os.path.join(d, "surv.csv") if d else None)
    if not long_path or not surv_path:
        from .errors import DataError

        raise DataError("no data given (use --data DIR or the data section of the config)")
    return long_path, surv_path


def build_problem(cfg, data_dir=None):
    """Load data, build grids and the posterior for a validated config."""
    import numpy as np

    from .hazard import build_grid
    from .io import load_data
    from .posterior import JointPosterior, ModelSpec

    long_path, surv_path = _data_paths(cfg, data_dir)
    subjects = load_data(long_path, surv_path, cfg.items())
    grids = [build_grid(s.meas_times, s.event_time, cfg.model.grid_width) for s in subjects]
    m = cfg.model
    model = ModelSpec(
        mask=np.array(m.mask),
        baseline=m.baseline,
        n_segments=m.segments,
        cutpoints=None if m.cutpoints is None else np.array(m.cutpoints),
        n_covariates=subjects[0].covariates.size if subjects else 0,
        priors=cfg.priors.spec(),
    )
    return subjects, grids, model, JointPosterior(subjects, grids, model), (long_path, surv_path)


def _init_point(cfg, subjects, grids, model, post):
    from . import initfit

    mode = cfg.init.mode
    if mode == "fixed":
        return initfit.assemble_init(post, fixed=True, seed=cfg.seed)
    if mode == "file":
        return read_init(cfg.init.path, post.layout)
    x, s1, s2, _ = initfit.two_stage_init(subjects, grids, model, method=cfg.init.stage1_method, seed=cfg.seed)
    return x


def read_init(path, layout):
    import csv

    import numpy as np

    from .errors import DataError

    with open(path, newline="") as fh:
        rows = {r["name"]: float(r["value"]) for r in csv.DictReader(fh)}
    missing = [n for n in layout.names if n not in rows]
    if missing:
        raise DataError(f"init file {path} lacks {len(missing)} coordinates, e.g. {missing[:5]}")
    return np.array([rows[n] for n in layout.names])


def write_init(path, x, layout):
    from .io import write_csv

    write_csv(path, ["name", "value"], zip(layout.names, x))


def write_draws_csv(path, draws, layout):
    import numpy as np

    from .io import write_csv

    struct = layout.constrained_struct(draws.draws)
    header = ["chain", "draw", "lp__", "divergent__"] + layout.struct_names
    rows = []
    for c in range(draws.n_chains):
        for k in range(draws.n_draws):
            rows.append([c + 1, k + 1, draws.log_density[c, k], int(draws.divergent[c, k])] + list(struct[c, k]))
    write_csv(path, header, rows)
    return np.asarray(struct)


def read_draws_csv(path):
    import numpy as np

    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header, data


def write_summary(path, draws, layout, probs=(0.05, 0.95)):
    from . import hmc
    from .io import write_csv

    struct = layout.constrained_struct(draws.draws)
    summ = hmc.summarize(struct.reshape(-1, struct.shape[-1]), probs=probs, names=layout.struct_names)
    diag = hmc.rhat_ess(struct) if draws.n_draws >= 4 else None
    rows = []
    for k, name in enumerate(layout.struct_names):
        s = summ[name]
        r = [name, struct[..., k].mean(), s["median"]] + [s[f"q{p:g}"] for p in probs]
        r += [diag[k, 0], diag[k, 1]] if diag is not None else [float("nan")] * 2
        rows.append(r)
    write_csv(path, ["name", "mean", "median"] + [f"q{p:g}" for p in probs] + ["rhat", "ess_bulk"], rows)
    return rows


# -- commands -------------------------------------------------------------------------


def cmd_simulate(args):
    from .simulate import SimConfig, emit_dataset

    cfg = _load_cfg(args)
    overrides = []
    _override(cfg, overrides, None, "seed", args.seed, bool(args.config))
    _override(cfg, overrides, "simulate", "setting", args.setting, bool(args.config))
    _override(cfg, overrides, "simulate", "pattern", None if args.pattern is None else str(args.pattern), bool(args.config))
    _override(cfg, overrides, "simulate", "n", args.n, bool(args.config))
    _override(cfg, overrides, "simulate", "timing_file", args.timing_file, bool(args.config))
    cfg = _revalidate(cfg)
    sc = cfg.simulate
    emit_dataset(SimConfig(setting=sc.setting, pattern=sc.pattern, n=sc.n, seed=cfg.seed, timing_file=sc.timing_file), args.out)
    outs = [os.path.join(args.out, f) for f in ("long.csv", "surv.csv", "truth.csv", "truth_subjects.csv", "simconfig.json")]
    write_manifest(os.path.join(args.out, "manifest.json"), "simulate", cfg, cfg.seed, [], outs, overrides)
    print(f"wrote simulated dataset ({sc.n} subjects) to {args.out}")
    return 0


def _apply_fit_flags(cfg, args):
    overrides = []
    explicit = bool(getattr(args, "config", None))
    _override(cfg, overrides, None, "seed", args.seed, explicit)
    if getattr(args, "grid", None) is not None:
        width = None if str(args.grid).lower() == "none" else float(args.grid)
        _override(cfg, overrides, "model", "grid_width", width, explicit)
        if width is None:
            cfg.model.grid_width = None
    for key in ("baseline",):
        _override(cfg, overrides, "model", key, getattr(args, key, None), explicit)
    for key in ("iterations", "warmup", "chains"):
        _override(cfg, overrides, "sampler", key, getattr(args, key, None), explicit)
    init = getattr(args, "init", None)
    if init is not None:
        if init in ("fixed", "two-stage"):
            _override(cfg, overrides, "init", "mode", init, explicit)
        else:
            _override(cfg, overrides, "init", "mode", "file", explicit)
            _override(cfg, overrides, "init", "path", init, explicit)
    return _revalidate(cfg), overrides


def cmd_init(args):
    from .config import dump_config

    cfg = _load_cfg(args)
    cfg, overrides = _apply_fit_flags(cfg, args)
    subjects, grids, model, post, inputs = build_problem(cfg, args.data)
    if cfg.init.mode == "file":
        cfg.init.mode = "two-stage"
    x = _init_point(cfg, subjects, grids, model, post)
    out_dir = os.path.dirname(os.path.abspath(args.out))
    os.makedirs(out_dir, exist_ok=True)
    write_init(args.out, x, post.layout)
    base = os.path.splitext(args.out)[0]
    with open(base + ".config.yaml", "w") as fh:
        fh.write(dump_config(cfg))
    write_manifest(base + ".manifest.json", "init", cfg, cfg.seed, list(inputs), [args.out], overrides)
    print(f"wrote initial point ({post.dim} coordinates, log posterior {post.log_posterior(x):.6g}) to {args.out}")
    return 0


def cmd_fit(args):
    from . import hmc
    from .config import dump_config

    cfg = _load_cfg(args)
    cfg, overrides = _apply_fit_flags(cfg, args)
    subjects, grids, model, post, inputs = build_problem(cfg, args.data)
    x0 = _init_point(cfg, subjects, grids, model, post)
    s = cfg.sampler
    scfg = hmc.SamplerConfig(
        chains=s.chains, iterations=s.iterations, warmup=s.warmup, seed=cfg.seed,
        target_accept=s.target_accept, max_leapfrog=s.max_leapfrog, init=x0, parallel=s.parallel,
    )
    draws = hmc.sample(scfg, post)
    out = args.out
    os.makedirs(out, exist_ok=True)
    paths = {k: os.path.join(out, k) for k in ("draws.csv", "draws_raw.npz", "metadata.json", "summary.csv", "config.yaml", "init.csv")}
    write_draws_csv(paths["draws.csv"], draws, post.layout)
    hmc.save_raw(draws, paths["draws_raw.npz"])
    write_init(paths["init.csv"], x0, post.layout)
    hmc.write_metadata(draws, paths["metadata.json"], extra={
        "seed": cfg.seed,
        "layout": post.layout.to_dict(),
        "grid_width": cfg.model.grid_width,
        "n_subjects": len(subjects),
        "grid_points": int(sum(g.M for g in grids)),
        "init_mode": cfg.init.mode,
        "open_settings": {"target_accept": s.target_accept, "max_leapfrog": s.max_leapfrog},
    })
    write_summary(paths["summary.csv"], draws, post.layout)
    with open(paths["config.yaml"], "w") as fh:
        fh.write(dump_config(cfg))
    write_manifest(os.path.join(out, "manifest.json"), "fit", cfg, cfg.seed, list(inputs), [paths[k] for k in ("draws.csv", "summary.csv", "metadata.json")], overrides)
    print(f"fit complete: {draws.n_chains} chain(s) x {draws.n_draws} draws, "
          f"{int(draws.divergent.sum())} divergent post-warm-up transitions; output in {out}")
    return 0


def cmd_gof(args):
    import numpy as np

    from . import gof, hmc
    from .config import load_config
    from .io import write_csv

    cfg = load_config(os.path.join(args.fit, "config.yaml"))
    subjects, grids, model, post, inputs = build_problem(cfg, args.data)
    draws = hmc.load_raw(os.path.join(args.fit, "draws_raw.npz"))
    if list(draws.names) != list(post.layout.names):
        from .errors import StructuralError

        raise StructuralError("fit draws do not match the data (layout names differ)")
    os.makedirs(args.out, exist_ok=True)
    pooled = draws.pooled()
    outs = []

    km = gof.kaplan_meier([s.event_time for s in subjects], [s.event for s in subjects])
    p = os.path.join(args.out, "km.csv")
    write_csv(p, ["time", "surv", "n_risk", "n_event"], zip(km.time, km.surv, km.n_risk, km.n_event))
    outs.append(p)

    curves, _ = gof.survival_calibration(post, pooled, n_curves=cfg.gof.n_curves, seed=cfg.seed)
    rows = [[k + 1, t, s] for k, c in enumerate(curves) for t, s in zip(c.time, c.surv)]
    p = os.path.join(args.out, "calibration.csv")
    write_csv(p, ["curve", "u", "surv"], rows)
    outs.append(p)

    lay = post.layout
    theta = pooled[:, lay.slices["theta"]].reshape(-1, model.p, model.p)
    rho = model.priors.rho_bound * np.tanh(pooled[:, lay.slices["rho"]])
    dts = np.linspace(0.0, cfg.gof.dt_max, cfg.gof.dt_points)
    _, bands = gof.correlation_decay(theta, rho, dts, probs=tuple(cfg.gof.band))
    keys = list(bands)
    rows = []
    for j, dt in enumerate(dts):
        for a in range(2 * model.p):
            for b in range(2 * model.p):
                rows.append([dt, a + 1, b + 1] + [bands[k][j, a, b] for k in keys])
    p = os.path.join(args.out, "decay.csv")
    write_csv(p, ["dt", "row", "col"] + keys, rows)
    outs.append(p)

    sim_meta = os.path.join(args.data, "simconfig.json")
    if os.path.exists(sim_meta):
        with open(sim_meta) as fh:
            truth = json.load(fh)["truth"]
        struct = lay.constrained_struct(pooled)
        scores = gof.score_simulation(struct, lay.struct_names, truth)
        p = os.path.join(args.out, "scores.csv")
        write_csv(p, ["name", "truth", "median", "bias", "lower", "upper", "covered"],
                  [[k, v["truth"], v["median"], v["bias"], v["lower"], v["upper"], int(v["covered"])] for k, v in scores.items()])
        outs.append(p)
    write_manifest(os.path.join(args.out, "manifest.json"), "gof", cfg, cfg.seed, list(inputs) + [os.path.join(args.fit, "draws_raw.npz")], outs)
    print(f"wrote {', '.join(os.path.basename(o) for o in outs)} to {args.out}")
    return 0


def cmd_summarize(args):
    from . import hmc
    from .config import load_config
    from .posterior import Layout, ModelSpec

    draws = hmc.load_raw(os.path.join(args.fit, "draws_raw.npz"))
    with open(os.path.join(args.fit, "metadata.json")) as fh:
        meta = json.load(fh)
    cfg = load_config(os.path.join(args.fit, "config.yaml"))
    import numpy as np

    m = cfg.model
    model = ModelSpec(mask=np.array(m.mask), baseline=m.baseline, n_segments=m.segments,
                      n_covariates=sum(n.startswith("alpha[") for n in meta["layout"]["names"]), priors=cfg.priors.spec())
    layout = Layout(model, meta["layout"]["grid_sizes"])
    probs = tuple(args.probs)
    out = args.out or os.path.join(args.fit, "summary.csv")
    rows = write_summary(out, draws, layout, probs=probs)
    head = f"{'name':<16}{'mean':>10}{'median':>10}" + "".join(f"{'q' + format(p, 'g'):>10}" for p in probs) + f"{'rhat':>8}{'ess':>8}"
    print(head)
    for r in rows:
        print(f"{r[0]:<16}" + "".join(f"{v:>10.4f}" for v in r[1:-2]) + f"{r[-2]:>8.3f}{r[-1]:>8.0f}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="oujm", description="Joint OU factor / survival model toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a dataset")
    p.add_argument("--config")
    p.add_argument("--setting", type=int)
    p.add_argument("--pattern")
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--timing-file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    for name, func, help_text in (("init", cmd_init, "two-stage initial point"), ("fit", cmd_fit, "run the HMC sampler")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config")
        p.add_argument("--data", help="directory with long.csv and surv.csv")
        p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int)
        p.add_argument("--grid", help="filler grid width, or 'none' for measurement and event times only")
        p.add_argument("--baseline", choices=["constant", "weibull", "piecewise"])
        p.add_argument("--iterations", type=int)
        p.add_argument("--warmup", type=int)
        p.add_argument("--chains", type=int)
        p.add_argument("--init", help="'two-stage', 'fixed' or a path to an init CSV")
        p.set_defaults(func=func)

    p = sub.add_parser("gof", help="goodness-of-fit tables for a fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gof)

    p = sub.add_parser("summarize", help="posterior summary table for a fit")
    p.add_argument("--fit", required=True)
    p.add_argument("--probs", type=float, nargs="+", default=[0.05, 0.95])
    p.add_argument("--out")
    p.set_defaults(func=cmd_summarize)
    return parser


def main(argv=None):
    _limit_threads()
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    from .errors import OUJMError

    try:
        return args.func(args)
    except OUJMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
