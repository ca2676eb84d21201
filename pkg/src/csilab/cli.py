"""Command-line front end.

Exit status: 0 on success, 2 for configuration errors, 3 when a pipeline
stage fails. Heavy modules are imported only after ``--threads`` has been
applied to the thread-pool environment variables.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

OUTPUT_ROOT_ENV = "CSILAB_OUTPUT_ROOT"
THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMBA_NUM_THREADS")
EXIT_OK, EXIT_CONFIG, EXIT_PIPELINE = 0, 2, 3


def _common(p, config_required=True):
    p.add_argument("--config", required=config_required, help="experiment config (YAML)")
    p.add_argument("--seed", type=int, help="override the config's master seed")
    p.add_argument("--out", help="output directory (default: $%s/<kind>-seed<seed>)" % OUTPUT_ROOT_ENV)
    p.add_argument("--threads", type=int, help="cap BLAS/numba worker threads")


def build_parser():
    ap = argparse.ArgumentParser(prog="csilab", description="Remote-site CSI simulation and inference experiments.")
    sub = ap.add_subparsers(dest="command", required=True)

    scene = sub.add_parser("scene", help="scene utilities").add_subparsers(dest="action", required=True)
    p = scene.add_parser("sample", help="draw one scene and write it as YAML")
    _common(p, config_required=False)
    p.add_argument("--family", help="standard family when no --config is given")
    p.add_argument("--users", type=int, help="number of users to draw")

    ds = sub.add_parser("dataset", help="dataset utilities").add_subparsers(dest="action", required=True)
    p = ds.add_parser("build", help="build the dataset of a static, sequence or grouping config")
    _common(p)

    p = sub.add_parser("train", help="train the config's model on a dataset file")
    _common(p)
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    _common(p)
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", required=True)

    an = sub.add_parser("analyze", help="dependence and scaling analyses").add_subparsers(dest="action", required=True)
    p = an.add_parser("dependence")
    _common(p)
    p = an.add_parser("scaling")
    _common(p, config_required=False)

    grp = sub.add_parser("group", help="user grouping").add_subparsers(dest="action", required=True)
    p = grp.add_parser("eval", help="grouping sum-rate table")
    _common(p)
    p.add_argument("--model", help="trained APS checkpoint; trained from scratch when omitted")

    p = sub.add_parser("run", help="run a config's full pipeline")
    p.add_argument("config_path", metavar="config")
    _common(p, config_required=False)
    return ap


def _apply_threads(n):
    if n is None:
        return
    if n < 1:
        raise SystemExit("--threads must be >= 1")
    for var in THREAD_VARS:
        os.environ[var] = str(n)


def _load(args, kind=None, default=None):
    from .config import ConfigError, parse_config, parse_config_dict

    path = getattr(args, "config_path", None) or args.config
    if path is None:
        if args.seed is None:
            raise ConfigError(["seed: required (pass --seed or a --config)"])
        cfg = parse_config_dict({**(default or {}), "kind": kind, "seed": args.seed})
    else:
        cfg = parse_config(path)
        if args.seed is not None:
            cfg.seed = args.seed
    if kind is not None and cfg.kind != kind:
        raise ConfigError([f"kind: this command needs a '{kind}' config, got '{cfg.kind}'"])
    return cfg


def _out_dir(args, cfg):
    if args.out:
        return Path(args.out)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / f"{cfg.kind}-seed{cfg.seed}"


def _cmd_scene_sample(args):
    from dataclasses import replace

    from .config import ConfigError, scene_config
    from .families import FAMILIES
    from .io import save_scene
    from .scene import sample_scene

    if args.config:
        cfg = _load(args)
        if not cfg.scene:
            raise ConfigError([f"scene: kind '{cfg.kind}' has no scene section"])
        sc, seed = scene_config(cfg), cfg.seed
    else:
        if args.family not in FAMILIES:
            raise ConfigError([f"--family: must be one of {sorted(FAMILIES)} when no --config is given"])
        if args.seed is None:
            raise ConfigError(["seed: required (pass --seed)"])
        sc, seed = FAMILIES[args.family](), args.seed
    if args.users is not None:
        sc = replace(sc, num_users=args.users)
    scene = sample_scene(sc, seed)
    out = Path(args.out) if args.out else Path(os.environ.get(OUTPUT_ROOT_ENV, "runs")) / f"scene-seed{seed}.yaml"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_scene(out, scene)
    print(out)


def _stage(name, fn, *a, **kw):
    from .experiments import PipelineError
    try:
        return fn(*a, **kw)
    except PipelineError:
        raise
    except Exception as e:  # noqa: BLE001 - any module error is a pipeline failure here
        raise PipelineError(name, e) from e


def _build_dataset(cfg):
    from .config import scene_config
    from .experiments import aps_config
    from .tasks.aps import build_aps_dataset
    from .tasks.sequence import TrajectoryConfig, build_sequence_dataset
    from .tasks.static import build_static_dataset

    f, ev = cfg.features, cfg.evaluation
    if cfg.kind == "static":
        return build_static_dataset(scene_config(cfg), ev["n_train"] + ev["n_test"], cfg.seed,
                                    tuple(f["source_sites"]), f["target_site"], f["oversampling"])
    if cfg.kind == "sequence":
        tcfg = TrajectoryConfig(scene_config(cfg), ev["n_trajectories"], ev["windows_per_trajectory"],
                                f["source_site"], f["target_site"], f["oversampling"], tuple(f["delays"]))
        return build_sequence_dataset(tcfg, f["l_in"], f["l_out"], cfg.seed)
    if cfg.kind == "grouping":
        return build_aps_dataset(aps_config(cfg), ev["n_train"], cfg.seed)
    from .config import ConfigError
    raise ConfigError([f"kind: '{cfg.kind}' has no dataset"])


def _split(cfg, ds):
    ev = cfg.evaluation
    if cfg.kind == "static":
        return ds.split(ev["n_train"])
    if cfg.kind == "sequence":
        return ds.split_by_trajectory(max(1, int(ev["train_fraction"] * ev["n_trajectories"])))
    return ds, None


def _cmd_dataset_build(args):
    from .experiments import _Run
    cfg = _load(args)
    ds = _stage("build dataset", _build_dataset, cfg)
    run = _Run(cfg, _out_dir(args, cfg))
    name = {"static": "static_dataset.txt", "sequence": "sequence_dataset.txt", "grouping": "aps_dataset.txt"}[cfg.kind]
    run.dataset(name, ds)
    print(run.out / name)


def _cmd_train(args):
    from .experiments import _Run, _train_cfg
    from .io import load_dataset
    from .neural import init_gru, init_mlp, train
    from .tasks.aps import aps_input_features, log_spectrum_target

    cfg = _load(args)
    ds = _stage("load dataset", load_dataset, args.dataset)
    tr, _ = _split(cfg, ds)
    run = _Run(cfg, _out_dir(args, cfg))
    m = cfg.model
    if cfg.kind == "static":
        k = tr.channels.shape[1] * cfg.features["oversampling"]
        init = init_mlp(tr.features.shape[1], k, tuple(m["hidden"]), seed=cfg.seed)
        res = _stage("train", train, init, tr.features, tr.targets, _train_cfg(cfg.training, cfg.seed))
        name = "static_mlp.txt"
    elif cfg.kind == "sequence":
        k = tr.channels.shape[2] * cfg.features["oversampling"]
        init = init_gru(tr.inputs.shape[2], m["hidden"], k, seed=cfg.seed)
        res = _stage("train", train, init, tr.inputs, tr.targets, _train_cfg(cfg.training, cfg.seed))
        name = "sequence_gru.txt"
    elif cfg.kind == "grouping":
        x, y = aps_input_features(tr.source_aps), log_spectrum_target(tr.target_aps)
        init = init_mlp(x.shape[1], y.shape[1], tuple(m["hidden"]), head="log_spectrum", seed=cfg.seed)
        res = _stage("train", train, init, x, y, _train_cfg(cfg.training, cfg.seed))
        name = "aps_mlp.txt"
    else:
        from .config import ConfigError
        raise ConfigError([f"kind: '{cfg.kind}' has no trainable model"])
    run.model(name, res.model)
    print(run.out / name)


def _cmd_eval(args):
    from .config import ConfigError, scene_config
    from .experiments import _Run
    from .features import build_dft_codebook
    from .io import load_dataset, load_model
    from .tasks.sequence import evaluate_sequence
    from .tasks.static import evaluate_static

    cfg = _load(args)
    ds = _stage("load dataset", load_dataset, args.dataset)
    model = _stage("load model", load_model, args.model)
    tr, te = _split(cfg, ds)
    run = _Run(cfg, _out_dir(args, cfg))
    cols = ["point_id", "delay", "top1_error", "top2_error", "lo_error", "gain_ratio"]
    q = cfg.features["oversampling"]
    if cfg.kind == "static":
        cb = build_dft_codebook(te.channels.shape[1], q)
        rep = _stage("evaluate", evaluate_static, model, te, cb, tr.record_hashes())
        rows = [(i, None, a, b, None, 1.0 - a) for i, (a, b) in enumerate(zip(rep.top1_errors, rep.top2_errors))]
    elif cfg.kind == "sequence":
        site = next(s for s in scene_config(cfg).sites if s.id == cfg.features["target_site"])
        cb = build_dft_codebook(site.array.num_elements, q)
        rep = _stage("evaluate", evaluate_sequence, model, te, site, cb, cfg.evaluation["lo_std"], cfg.seed)
        rows = [(i, int(d), 1.0 - g, None, 1.0 - lo, g)
                for i, (d, g, lo) in enumerate(zip(te.delays, rep.point_model, rep.point_lo))]
    else:
        raise ConfigError([f"kind: eval supports static and sequence configs, got '{cfg.kind}'"])
    run.csv("eval_points.csv", cols, rows)
    print(run.out / "eval_points.csv")


def _cmd_run(args, kind=None, default=None):
    from .experiments import run_experiment
    cfg = _load(args, kind, default)
    res = run_experiment(cfg, _out_dir(args, cfg))
    for f in res["files"]:
        print(f)


def _cmd_group_eval(args):
    if args.model is None:
        return _cmd_run(args, "grouping")
    from .experiments import _Run, aps_config
    from .io import load_model
    from .scheduling import GroupingConfig, evaluate_grouping_experiment

    cfg = _load(args, "grouping")
    model = _stage("load model", load_model, args.model)
    ev = cfg.evaluation
    gcfg = GroupingConfig(aps_config(cfg), ev["sinr_min"], tuple(ev["user_counts"]), ev["scenes_per_count"],
                          ev["snr_db"], tuple(ev["taus"]), ev["scatterers_per_user"], cfg.features["oversampling"],
                          tuple(ev["modes"]))
    rep = _stage("evaluate grouping", evaluate_grouping_experiment, gcfg, cfg.seed + 1, model)
    run = _Run(cfg, _out_dir(args, cfg))
    run.csv("grouping.csv", ["user_count", "mode", "tau", "mean_sum_rate", "ci95"],
            [(r.user_count, r.mode, r.tau, r.mean_sum_rate, r.ci95) for r in rep.rows])
    print(run.out / "grouping.csv")


def dispatch(args):
    cmd = (args.command, getattr(args, "action", None))
    if cmd == ("scene", "sample"):
        return _cmd_scene_sample(args)
    if cmd == ("dataset", "build"):
        return _cmd_dataset_build(args)
    if cmd[0] == "train":
        return _cmd_train(args)
    if cmd[0] == "eval":
        return _cmd_eval(args)
    if cmd == ("analyze", "dependence"):
        return _cmd_run(args, "dependence")
    if cmd == ("analyze", "scaling"):
        return _cmd_run(args, "scaling")
    if cmd == ("group", "eval"):
        return _cmd_group_eval(args)
    if cmd[0] == "run":
        return _cmd_run(args)
    raise AssertionError(cmd)


def main(argv=None):
    args = build_parser().parse_args(argv)
    _apply_threads(args.threads)
    from .config import ConfigError
    from .experiments import PipelineError
    from .io import PersistenceError
    try:
        dispatch(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except PipelineError as e:
        print(f"pipeline error: {e}", file=sys.stderr)
        return EXIT_PIPELINE
    except PersistenceError as e:
        print(f"pipeline error: {e}", file=sys.stderr)
        return EXIT_PIPELINE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
