"""End-to-end pipelines, one per experiment kind.

Each pipeline is a pure function of the parsed config: it writes CSV
reports, dataset files and model checkpoints into the output directory,
all stamped with the config hash and master seed. Wall-clock timing goes
only to the ``run.log`` sidecar.
"""
from __future__ import annotations

import contextlib
import time
from pathlib import Path

import numpy as np

from . import io
from .config import ExperimentConfig, config_to_dict, dump_config, scene_config
from .dependence import (AoaGeometry, DiscreteJoint, avg_canonical_correlation, joint_entropies,
                         mutual_information, remote_aoa_scaling, stack_complex)
from .features import build_dft_codebook, quantize
from .neural import TrainConfig, init_gru, init_mlp, train
from .scene import batch_channels, sample_ensemble
from .scheduling import GroupingConfig, evaluate_grouping_experiment
from .tasks.aps import ApsConfig, aps_input_features, build_aps_dataset, log_spectrum_target
from .tasks.sequence import (TrajectoryConfig, build_sequence_dataset, evaluate_sequence,
                             oracle_sequence_predictor, paired_difference_ci)
from .tasks.static import ErrorCdf, build_static_dataset, evaluate_static, oracle_predictor, random_codeword_errors


class PipelineError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.cause = cause


class _Run:
    """Output directory, provenance stamp and the timing sidecar for one run."""

    def __init__(self, cfg: ExperimentConfig, out_dir):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        hashed = config_to_dict(cfg)
        hashed.pop("output_dir", None)
        self.digest = io.config_hash(hashed)
        self.seed = cfg.seed
        self.files = []
        self._log = []

    @contextlib.contextmanager
    def stage(self, name):
        t0 = time.time()
        try:
            yield
        except Exception as e:  # surfaced with the stage name
            self._log.append(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {name} FAILED {type(e).__name__}: {e}")
            self.flush_log()
            raise PipelineError(name, e) from e
        self._log.append(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {name} {time.time() - t0:.2f}s")

    def meta(self, **extra):
        return {"config_hash": self.digest, "seed": int(self.seed), **extra}

    def path(self, name):
        p = self.out / name
        self.files.append(p)
        return p

    def csv(self, name, columns, rows):
        io.write_csv(self.path(name), columns, rows, self.digest, self.seed)

    def dataset(self, name, ds):
        ds.metadata.update(self.meta())
        io.save_dataset(self.path(name), ds)

    def model(self, name, model):
        io.save_model(self.path(name), model, self.meta())

    def flush_log(self):
        (self.out / "run.log").write_text("\n".join(self._log) + "\n")


def _train_cfg(t, seed, lr_key="learning_rate", epochs_key="epochs"):
    return TrainConfig(learning_rate=t[lr_key], batch_size=t["batch_size"], epochs=t[epochs_key],
                       optimizer=t["optimizer"], seed=int(seed), patience=t["patience"], lr_decay=t["lr_decay"])


def _trace_rows(result):
    val = result.val_trace + [None] * (len(result.loss_trace) - len(result.val_trace))
    return [(i + 1, tl, vl) for i, (tl, vl) in enumerate(zip(result.loss_trace, val))]


# ---------------------------------------------------------------- pipelines


def run_dependence(cfg: ExperimentConfig, run: _Run):
    f, ev = cfg.features, cfg.evaluation
    counts = sorted(ev["sample_counts"])
    with run.stage("sample scenes"):
        scenes = sample_ensemble(scene_config(cfg), counts[-1], cfg.seed)
        hs = batch_channels(scenes, f["source_site"], "u0")
        ht = batch_channels(scenes, f["target_site"], "u0")
    with run.stage("quantize"):
        cb_s = build_dft_codebook(hs.shape[1], f["oversampling"])
        cb_t = build_dft_codebook(ht.shape[1], f["oversampling"])
        a, b = quantize(hs, cb_s), quantize(ht, cb_t)
    rows = []
    with run.stage("estimate dependence"):
        for n in counts:
            joint = DiscreteJoint.from_samples(a[:n], b[:n], cb_s.size, cb_t.size)
            _, h_t = joint_entropies(joint)
            cca = avg_canonical_correlation(stack_complex(hs[:n]), stack_complex(ht[:n]), ev["ridge"])
            rows.append((n, h_t, mutual_information(joint), cca, cb_s.size, cb_t.size))
    with run.stage("write reports"):
        run.csv("dependence.csv", ["samples", "H_sbs_bits", "MI_bits", "avg_cca", "alphabet_source", "alphabet_target"],
                rows)
    return {"rows": rows}


def run_static(cfg: ExperimentConfig, run: _Run):
    f, m, ev = cfg.features, cfg.model, cfg.evaluation
    n_train, n_test = ev["n_train"], ev["n_test"]
    with run.stage("build dataset"):
        ds = build_static_dataset(scene_config(cfg), n_train + n_test, cfg.seed, tuple(f["source_sites"]),
                                  f["target_site"], f["oversampling"])
        run.dataset("static_dataset.txt", ds)
        tr, te = ds.split(n_train)
        cb = build_dft_codebook(ds.channels.shape[1], f["oversampling"])
    with run.stage("train"):
        if m["oracle"]:
            model, trace = oracle_predictor(te, cb), []
        else:
            init = init_mlp(tr.features.shape[1], cb.size, tuple(m["hidden"]), seed=cfg.seed)
            res = train(init, tr.features, tr.targets, _train_cfg(cfg.training, cfg.seed),
                        val=(te.features, te.targets))
            model, trace = res.model, _trace_rows(res)
            run.model("static_mlp.txt", model)
    with run.stage("evaluate"):
        rep = evaluate_static(model, te, cb, tr.record_hashes())
        rnd = ErrorCdf(random_codeword_errors(te.channels, cb, np.random.default_rng([cfg.seed, 4])))
    with run.stage("write reports"):
        run.csv("static_points.csv", ["point_id", "delay", "top1_error", "top2_error", "lo_error", "gain_ratio"],
                [(i, None, e1, e2, None, 1.0 - e1) for i, (e1, e2) in enumerate(zip(rep.top1_errors, rep.top2_errors))])
        qs = [p / 10 for p in range(1, 10)]
        run.csv("static_cdf.csv", ["quantile", "model_top1_error", "model_top2_error", "random_error"],
                [(q, rep.top1.quantile(q), rep.top2.quantile(q), rnd.quantile(q)) for q in qs])
        run.csv("static_summary.csv", ["metric", "value"], [
            ("fraction_top1_error_below_0.1", rep.top1.fraction_below(0.1)),
            ("fraction_top2_error_below_0.1", rep.top2.fraction_below(0.1)),
            ("top1_accuracy", rep.top1_accuracy),
            ("top2_accuracy", rep.top2_accuracy),
            ("n_train", n_train), ("n_test", n_test), ("codebook_size", cb.size)])
        if trace:
            run.csv("static_training.csv", ["epoch", "train_loss", "val_loss"], trace)
    return {"report": rep, "random": rnd, "model": model}


def run_sequence(cfg: ExperimentConfig, run: _Run):
    f, m, ev, t = cfg.features, cfg.model, cfg.evaluation, cfg.training
    scfg = scene_config(cfg)
    tcfg = TrajectoryConfig(scfg, ev["n_trajectories"], ev["windows_per_trajectory"], f["source_site"],
                            f["target_site"], f["oversampling"], tuple(f["delays"]))
    with run.stage("build dataset"):
        ds = build_sequence_dataset(tcfg, f["l_in"], f["l_out"], cfg.seed)
        run.dataset("sequence_dataset.txt", ds)
        n_tr = max(1, int(ev["train_fraction"] * ev["n_trajectories"]))
        tr, te = ds.split_by_trajectory(n_tr)
        if len(te) == 0:
            raise ValueError("train_fraction leaves no test trajectories")
        site = next(s for s in scfg.sites if s.id == f["target_site"])
        cb = build_dft_codebook(site.array.num_elements, f["oversampling"])
    with run.stage("train"):
        if m["oracle"]:
            gru, mlp, g_trace = oracle_sequence_predictor(cb), None, []
        else:
            d_in = ds.inputs.shape[2]
            res = train(init_gru(d_in, m["hidden"], cb.size, seed=cfg.seed), tr.inputs, tr.targets,
                        _train_cfg(t, cfg.seed), val=(te.inputs, te.targets))
            gru, g_trace = res.model, _trace_rows(res)
            run.model("sequence_gru.txt", gru)
            res_m = train(init_mlp(d_in, cb.size, tuple(m["mlp_hidden"]), seed=cfg.seed), tr.inputs[:, -1],
                          tr.targets[:, 0], _train_cfg(t, cfg.seed, "mlp_learning_rate", "mlp_epochs"))
            mlp = res_m.model
            run.model("sequence_mlp.txt", mlp)
    with run.stage("evaluate"):
        rep = evaluate_sequence(gru, te, site, cb, ev["lo_std"], cfg.seed)
        rep_m = evaluate_sequence(mlp, te, site, cb, ev["lo_std"], cfg.seed) if mlp is not None else None
    with run.stage("write reports"):
        run.csv("sequence_points.csv", ["point_id", "delay", "top1_error", "top2_error", "lo_error", "gain_ratio"],
                [(i, int(d), 1.0 - g, None, 1.0 - lo, g)
                 for i, (d, g, lo) in enumerate(zip(te.delays, rep.point_model, rep.point_lo))])
        run.csv("sequence_delays.csv", ["delay", "count", "gru_gain_ratio", "mlp_gain_ratio", "lo_gain_ratio"],
                [(d, rep.counts[d], rep.model_ratio[d], rep_m.model_ratio[d] if rep_m else None, rep.lo_ratio[d])
                 for d in rep.delays])
        summary = [("gru_gain_ratio", rep.overall_model), ("gru_loss", 1.0 - rep.overall_model),
                   ("lo_gain_ratio", rep.overall_lo),
                   ("gru_relative_advantage_over_lo", rep.overall_model / rep.overall_lo - 1.0)]
        if rep_m is not None:
            d_max = max(rep.delays)
            sel = te.delays == d_max
            mean, lo, hi = paired_difference_ci(rep.point_model[sel], rep_m.point_model[sel])
            summary += [("mlp_gain_ratio", rep_m.overall_model), ("max_delay", d_max),
                        ("gru_minus_mlp_at_max_delay", mean), ("ci95_low", lo), ("ci95_high", hi)]
        run.csv("sequence_summary.csv", ["metric", "value"], summary)
        if g_trace:
            run.csv("sequence_training.csv", ["epoch", "train_loss", "val_loss"], g_trace)
    return {"report": rep, "mlp_report": rep_m, "test": te, "model": gru, "mlp": mlp}


def aps_config(cfg: ExperimentConfig) -> ApsConfig:
    f = cfg.features
    return ApsConfig(scene_config(cfg), f["source_site"], f["target_site"], f["source_grid"], f["target_grid"],
                     f["snapshots"], f["jitter_radius"])


def run_grouping(cfg: ExperimentConfig, run: _Run):
    ev = cfg.evaluation
    acfg = aps_config(cfg)
    model = None
    if "inferred-aps" in ev["modes"]:
        with run.stage("build dataset"):
            ds = build_aps_dataset(acfg, ev["n_train"], cfg.seed)
            run.dataset("aps_dataset.txt", ds)
        with run.stage("train"):
            x, y = aps_input_features(ds.source_aps), log_spectrum_target(ds.target_aps)
            init = init_mlp(x.shape[1], y.shape[1], tuple(cfg.model["hidden"]), head="log_spectrum", seed=cfg.seed)
            res = train(init, x, y, _train_cfg(cfg.training, cfg.seed))
            model = res.model
            run.model("aps_mlp.txt", model)
            run.csv("aps_training.csv", ["epoch", "train_loss", "val_loss"], _trace_rows(res))
    with run.stage("evaluate grouping"):
        gcfg = GroupingConfig(acfg, ev["sinr_min"], tuple(ev["user_counts"]), ev["scenes_per_count"], ev["snr_db"],
                              tuple(ev["taus"]), ev["scatterers_per_user"], cfg.features["oversampling"],
                              tuple(ev["modes"]))
        # evaluation scenes use a seed stream disjoint from the training draws
        rep = evaluate_grouping_experiment(gcfg, cfg.seed + 1, model)
    with run.stage("write reports"):
        run.csv("grouping.csv", ["user_count", "mode", "tau", "mean_sum_rate", "ci95"],
                [(r.user_count, r.mode, r.tau, r.mean_sum_rate, r.ci95) for r in rep.rows])
    return {"report": rep, "model": model}


def run_scaling(cfg: ExperimentConfig, run: _Run):
    g, ev = cfg.geometry, cfg.evaluation
    geom = AoaGeometry(tuple(tuple(s) for s in g["known_sites"]), tuple(g["target_site"]),
                       tuple(tuple(r) for r in g["user_region"]), g["wavelength"], g["spacing"], g["min_bearing_sine"])
    reports = []
    with run.stage("monte carlo"):
        for mode in ev["modes"]:
            reports.append(remote_aoa_scaling(geom, ev["m_values"], ev["snr_db"], ev["trials"], mode, cfg.seed))
    with run.stage("write reports"):
        run.csv("scaling.csv", ["mode", "M", "mse", "fitted_slope", "trials", "discarded"],
                [(r.mode, m_, mse, r.fitted_slope, r.trials, disc)
                 for r in reports for m_, mse, disc in zip(r.m_values, r.mse_values, r.discarded)])
    return {"reports": reports}


PIPELINES = {"dependence": run_dependence, "static": run_static, "sequence": run_sequence,
             "grouping": run_grouping, "scaling": run_scaling}


def run_experiment(cfg: ExperimentConfig, out_dir):
    """Run ``cfg``'s pipeline into ``out_dir``; returns the pipeline's in-memory results."""
    run = _Run(cfg, out_dir)
    with run.stage("write config"):
        p = run.path("config.yaml")
        p.write_text(f"# config_hash={run.digest} seed={cfg.seed}\n" + dump_config(cfg))
    result = PIPELINES[cfg.kind](cfg, run)
    run.flush_log()
    result["files"] = list(run.files)
    result["config_hash"] = run.digest
    return result
