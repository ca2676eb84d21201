import math
from dataclasses import replace

import numpy as np
import pytest

from csilab.families import grouping, mobility, street
from csilab.features import build_dft_codebook, gain_ratio, quantize
from csilab.io import save_dataset
from csilab.neural import TrainConfig, init_mlp, mlp_forward, train
from csilab.scene import ArrayGeometry, Site, generate_channel, sample_ensemble, steering_vector
from csilab.tasks.aps import ApsConfig, aps_input_features, build_aps_dataset, log_spectrum_target, snapshot_positions
from csilab.tasks.sequence import (TrajectoryConfig, build_sequence_dataset, evaluate_sequence, lo_baseline,
                                   oracle_sequence_predictor, paired_difference_ci)
from csilab.tasks.static import (CodebookMismatchError, ErrorCdf, LeakageError, build_static_dataset,
                                 evaluate_static, oracle_predictor, random_codeword_errors)


def _los_only(cfg):
    return replace(cfg, num_scatterers=0)


# ---------------------------------------------------------------- static


def test_static_single_los_record_matches_geometry():
    cfg = _los_only(street())
    ds = build_static_dataset(cfg, 1, 5)
    sc = sample_ensemble(cfg, 1, 5)[0]
    sbs = sc.site("sbs")
    u = np.array(sc.users[0].position)
    ang = math.atan2(u[1] - sbs.position[1], u[0] - sbs.position[0])
    a = steering_vector(sbs.array, sbs.carrier_wavelength, ang)
    assert len(ds) == 1
    assert ds.targets[0] == quantize(a, build_dft_codebook(20))


def test_static_dataset_deterministic_files(tmp_path):
    cfg = street()
    save_dataset(tmp_path / "a.txt", build_static_dataset(cfg, 30, 2))
    save_dataset(tmp_path / "b.txt", build_static_dataset(cfg, 30, 2))
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()


def test_static_feature_lengths():
    cfg = street()
    assert build_static_dataset(cfg, 3, 0).features.shape == (3, 100)
    two = build_static_dataset(cfg, 3, 0, source_sites=("mbs", "sbs"))
    assert two.features.shape == (3, 120)
    assert np.all((two.targets >= 0) & (two.targets < 20))


def test_oracle_step_at_zero():
    ds = build_static_dataset(street(), 200, 1)
    cb = build_dft_codebook(20)
    rep = evaluate_static(oracle_predictor(ds, cb), ds, cb)
    assert np.all(rep.top1_errors == 0) and rep.top1_accuracy == 1.0
    assert rep.top1.cdf(0.0) == 1.0


def test_random_predictor_median_matches_simulation():
    ds = build_static_dataset(_los_only(street()), 4000, 3)
    cb = build_dft_codebook(20)
    rng = np.random.default_rng(0)
    model = lambda f: np.eye(20)[rng.integers(0, 20, len(f))]  # noqa: E731
    rep = evaluate_static(model, ds, cb)
    # brute force: pick a codeword per point and evaluate the gain by explicit inner products
    r2 = np.random.default_rng(1)
    sim = []
    for h in ds.channels:
        gains = [abs(np.vdot(w, h)) ** 2 for w in cb.codewords]
        sim.append(1 - gains[r2.integers(20)] / max(gains))
    assert rep.top1.quantile(0.5) == pytest.approx(np.median(sim), abs=0.03)


def test_top2_dominates_top1_and_errors():
    ds = build_static_dataset(street(), 300, 4)
    cb = build_dft_codebook(20)
    m = init_mlp(100, 20, (16,), seed=0)
    rep = evaluate_static(m, ds, cb)
    assert np.all(rep.top2_errors <= rep.top1_errors)
    assert rep.top2_accuracy >= rep.top1_accuracy
    with pytest.raises(CodebookMismatchError):
        evaluate_static(m, ds, build_dft_codebook(16))
    with pytest.raises(LeakageError):
        evaluate_static(m, ds, cb, ds.record_hashes()[:5])


def test_error_cdf():
    c = ErrorCdf([0.5, 0.1, 0.0, 1.2])
    np.testing.assert_array_equal(c.values, [0.0, 0.1, 0.5, 1.0])
    assert c.quantile(0.5) == 0.1
    assert c.fraction_below(0.1) == 0.25
    assert c.cdf(0.1) == 0.5
    assert len(c.deciles()) == 9


def test_oracle_sandwich_at_deciles():
    ds = build_static_dataset(street(), 3000, 8)
    tr, te = ds.split(2500)
    cb = build_dft_codebook(20)
    res = train(init_mlp(100, 20, (32, 32), seed=0), tr.features, tr.targets, TrainConfig(epochs=5))
    model = ErrorCdf(evaluate_static(res.model, te, cb, tr.record_hashes()).top1_errors)
    oracle = ErrorCdf(evaluate_static(oracle_predictor(te, cb), te, cb).top1_errors)
    rnd = ErrorCdf(random_codeword_errors(te.channels, cb, np.random.default_rng(0)))
    for o, m, r in zip(oracle.deciles(), model.deciles(), rnd.deciles()):
        assert o <= m <= r


def test_evaluation_deterministic():
    ds = build_static_dataset(street(), 100, 9)
    cb = build_dft_codebook(20)
    m = init_mlp(100, 20, (8,), seed=1)
    a, b = evaluate_static(m, ds, cb), evaluate_static(m, ds, cb)
    np.testing.assert_array_equal(a.top1_errors, b.top1_errors)


# ---------------------------------------------------------------- location baseline


def _rsu():
    return mobility().sites[1]


def test_lo_baseline_matches_los_quantize():
    site = Site("t", (0.0, 0.0), ArrayGeometry(32, 0.5, math.pi / 2), 0.01)
    cb = build_dft_codebook(32)
    from csilab.scene import Scene, User
    for x in (-60.0, -5.0, 0.0, 17.0, 80.0):
        sc = Scene((site,), users=(User("u", (x, 100.0)),))
        assert lo_baseline((x, 100.0), 0.0, site, cb) == quantize(generate_channel(sc, "t", "u").h, cb)
    assert lo_baseline((3.0, 50.0), 0, site, cb) == lo_baseline((3.0, 50.0), 0, site, cb)
    with pytest.raises(ValueError):
        lo_baseline((3.0, 50.0), -1, site, cb)


def test_lo_baseline_one_metre_noise():
    site = Site("t", (0.0, 0.0), ArrayGeometry(32, 0.5, math.pi / 2), 0.01)
    cb = build_dft_codebook(32)
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-40, 40, 2000), np.full(2000, 0.0)])
    pts[:, 1] = np.sqrt(100.0 ** 2 - pts[:, 0] ** 2)
    clean = lo_baseline(pts, 0.0, site, cb)
    noisy = lo_baseline(pts, 1.0, site, cb, rng)
    d = np.abs((noisy - clean + 16) % 32 - 16)
    assert np.mean(d <= 1) >= 0.95


# ---------------------------------------------------------------- sequence


def _traj(scene=None, **kw):
    return TrajectoryConfig(scene or mobility(), **{"n_trajectories": 20, "windows_per_trajectory": 4, **kw})


def test_sequence_record_count_and_shapes():
    ds = build_sequence_dataset(_traj(), 3, 6, 0)
    assert len(ds) == 80
    assert ds.inputs.shape == (80, 3, 64) and ds.targets.shape == (80, 6) and ds.channels.shape == (80, 6, 16)
    assert set(np.unique(ds.delays)) <= {1, 2, 3, 4, 5}


def test_sequence_zero_velocity_constant_targets():
    ds = build_sequence_dataset(_traj(replace(mobility(), velocity_region=((0.0, 0.0), (0.0, 0.0))), delays=(0, 1, 3)), 2, 4, 1)
    assert np.all(ds.targets == ds.targets[:, :1])


def test_sequence_zero_delay_contiguous():
    ds = build_sequence_dataset(_traj(delays=(0,)), 2, 1, 2)
    assert np.all(ds.delays == 0)
    tcfg = _traj()
    cb = build_dft_codebook(16)
    scenes_site = "rsu"
    from csilab.scene import channels_for_positions
    scenes = sample_ensemble(tcfg.scene, 20, 2)
    for i in (0, 13, 40):
        h = channels_for_positions(scenes[ds.trajectory[i]], scenes_site, ds.positions[i:i + 1])[0]
        assert ds.scored_targets()[i] == quantize(h, cb)


def test_sequence_config_validation():
    with pytest.raises(ValueError):
        build_sequence_dataset(_traj(), 2, 3, 0)  # delay 5 needs six output steps
    with pytest.raises(ValueError):
        _traj(delays=(-1,))


def test_sequence_oracle_and_bounds():
    ds = build_sequence_dataset(_traj(), 3, 6, 3)
    cb = build_dft_codebook(16)
    rep = evaluate_sequence(oracle_sequence_predictor(cb), ds, _rsu(), cb)
    assert all(v == 1.0 for v in rep.model_ratio.values())
    mlp = init_mlp(64, 16, (8,), seed=0)
    rep = evaluate_sequence(mlp, ds, _rsu(), cb)
    assert np.all(rep.point_model <= 1.0 + 1e-12) and np.all(rep.point_lo <= 1.0 + 1e-12)
    assert sum(rep.counts.values()) == len(ds)


def test_split_by_trajectory_disjoint():
    ds = build_sequence_dataset(_traj(), 2, 6, 4)
    tr, te = ds.split_by_trajectory(15)
    assert not set(tr.trajectory) & set(te.trajectory)
    assert not set(tr.record_hashes()) & set(te.record_hashes())


def test_static_mlp_gain_non_increasing_with_delay():
    tcfg = TrajectoryConfig(mobility(), 400, 8)
    ds = build_sequence_dataset(tcfg, 1, 6, 5)
    tr, te = ds.split_by_trajectory(300)
    res = train(init_mlp(64, 16, (64, 64), seed=0), tr.inputs[:, -1], tr.targets[:, 0], TrainConfig(epochs=15))
    cb = build_dft_codebook(16)
    pred = np.argmax(mlp_forward(res.model, te.inputs[:, -1]), axis=1)
    # paired: the same records scored at every horizon step
    ratios = [gain_ratio(te.channels[:, d], pred, cb) for d in range(1, 6)]
    for a, b in zip(ratios, ratios[1:]):
        mean, lo, hi = paired_difference_ci(a, b)
        assert hi >= 0.0  # no significant increase from delay d to d+1


def test_paired_ci():
    mean, lo, hi = paired_difference_ci([1.0, 2.0, 3.0], [1.0, 1.0, 1.0])
    assert mean == 1.0 and lo < 1.0 < hi


# ---------------------------------------------------------------- APS


def _lobe_fraction(spectrum, m):
    g = len(spectrum)
    u = -1 + 2 * np.arange(g) / g
    k = np.argmax(spectrum)
    d = np.abs((u - u[k] + 1) % 2 - 1)
    return spectrum[d < 2 / m].sum() / spectrum.sum()


def test_aps_single_path_one_dominant_lobe():
    ds = build_aps_dataset(ApsConfig(_los_only(grouping())), 10, 0)
    assert ds.target_aps.shape == (10, 1024)
    for s, t in zip(ds.source_aps, ds.target_aps):
        assert _lobe_fraction(s, 100) >= 0.9
        assert _lobe_fraction(t, 32) >= 0.9


def test_aps_dataset_deterministic():
    cfg = ApsConfig(grouping(), snapshots=3)
    a, b = build_aps_dataset(cfg, 5, 7), build_aps_dataset(cfg, 5, 7)
    np.testing.assert_array_equal(a.source_aps, b.source_aps)
    np.testing.assert_array_equal(a.target_aps, b.target_aps)
    with pytest.raises(ValueError):
        ApsConfig(grouping(), snapshots=0)


def test_snapshot_positions():
    rng = np.random.default_rng(0)
    p = snapshot_positions((1.0, 2.0), 50, 1.5, rng)
    assert tuple(p[0]) == (1.0, 2.0)
    assert np.all(np.linalg.norm(p - [1.0, 2.0], axis=1) <= 1.5)


def test_aps_feature_transforms():
    x = np.array([[0.0, 1.0, 4.0, 2.0]])
    f = aps_input_features(x)
    assert np.all(np.isfinite(f)) and abs(f.mean()) < 1e-12
    t = log_spectrum_target(x, floor=1e-3)
    assert t.max() == 0.0 and t.min() == pytest.approx(math.log(1e-3))
