import math
from dataclasses import replace

import numpy as np
import pytest

from ctsim.model import BehaviorParams, ModelError, PriorSpec, ProcessParams, time_for_share
from ctsim.montecarlo import (
    McConfig,
    Mode,
    Target,
    closed_form,
    compare_mc_closed_form,
    derive_seed,
    estimate_all,
    estimate_welfare_mc,
    grid_cells,
    per_replication,
    simulate,
    simulate_replication,
    summarize,
)

PROC = ProcessParams(1.0)
PR = PriorSpec.equal(0.5, 0.2)


def _cfg(**kw):
    base = dict(behavior=BehaviorParams(0.75, 1.0), process=PROC, prior=PR,
                t=time_for_share(PROC, 0.5), replications=100_000, seed=11)
    base.update(kw)
    return McConfig(**base)


def test_linear_wp_and_bias_match_examples():
    reps = estimate_all(_cfg())
    wp, b = reps[Target.WP], reps[Target.BIAS]
    assert abs(wp.estimate - (-0.0105882)) <= 3 * wp.std_error
    assert abs(b.estimate - 0.00066176) <= 3 * b.std_error


def test_pbar_mean_target():
    cfg = _cfg(behavior=BehaviorParams(0.5, 0.7), replications=20_000)
    rep = estimate_welfare_mc(cfg, Target.PBAR_MEAN)
    assert abs(rep.estimate - closed_form(cfg, Target.PBAR_MEAN)) <= 4 * rep.std_error


def test_degenerate_prior_gives_exact_zero_spread():
    pr = PriorSpec(0.4, 0.0, 0.6, 0.0)
    cfg = _cfg(prior=pr, replications=50)
    rows = compare_mc_closed_form([cfg])
    assert all(r.status == "exact" and r.z is None for r in rows)


def test_offset_negative_control_flags_every_cell():
    rows = compare_mc_closed_form([_cfg(replications=5_000)], closed_form_offset=0.01)
    assert all(r.flagged for r in rows)


def test_microfounded_binomial_oracle():
    pr = PriorSpec(0.5, 0.0, 0.3, 0.0)
    cfg = McConfig(BehaviorParams(1.0, 1.0), PROC, pr, t=0.0, replications=1,
                   mode=Mode.MICROFOUNDED, agents=1_000_000, seed=5)
    rec = simulate_replication(cfg, 0)
    assert abs(rec.p_bar - 0.3) <= 4 * math.sqrt(0.21 / 1_000_000)


def test_microfounded_pbar_mean_tracks_closed_form():
    cfg = McConfig(BehaviorParams(0.6, 0.8), PROC, PriorSpec.equal(0.5, 0.1), t=0.5,
                   replications=400, mode=Mode.MICROFOUNDED, agents=2_000, seed=9)
    rep = estimate_welfare_mc(cfg, Target.PBAR_MEAN)
    # finite agents add binomial noise, which the per-replication spread already includes
    assert abs(rep.estimate - closed_form(cfg, Target.PBAR_MEAN)) <= 4 * rep.std_error


def test_microfounded_counts_clamps():
    pr = PriorSpec.equal(0.5, 2.0)
    cfg = McConfig(BehaviorParams(0.5), PROC, pr, replications=50,
                   mode=Mode.MICROFOUNDED, agents=10, seed=1)
    assert simulate(cfg).clamp_events > 0


def test_serial_and_threaded_runs_identical():
    cfg = _cfg(replications=50_000, block_size=4096)
    a, b = simulate(cfg), simulate(cfg, workers=4)
    for x, y in zip((a.p, a.p_s, a.p_bar, a.p_hat), (b.p, b.p_s, b.p_bar, b.p_hat)):
        np.testing.assert_array_equal(x, y)


def test_replication_lookup_matches_batch():
    cfg = _cfg(replications=10_000, block_size=3000)
    sim = simulate(cfg)
    for i in (0, 2999, 3000, 9999):
        rec = simulate_replication(cfg, i)
        assert (rec.p, rec.p_hat) == (sim.p[i], sim.p_hat[i])
    with pytest.raises(ModelError):
        simulate_replication(cfg, 10_000)


def test_seed_changes_stream():
    a = simulate(_cfg(replications=10, seed=1)).p
    b = simulate(_cfg(replications=10, seed=2)).p
    assert not np.array_equal(a, b)


def test_derive_seed_is_stable_and_distinct():
    assert derive_seed(7, 0) == derive_seed(7, 0)
    assert len({derive_seed(7, k) for k in range(100)}) == 100


def test_summarize_single_replication():
    rep = summarize(np.array([0.25]), Target.WP)
    assert rep.std_error == 0.0 and rep.estimate == 0.25


def test_per_replication_targets_identity():
    sim = simulate(_cfg(replications=1000))
    wi = per_replication(sim, Target.WI)
    wp = per_replication(sim, Target.WP)
    b = per_replication(sim, Target.BIAS)
    # E[(p_bar - p)^2] = E[(p_hat - p)^2] + E[(p_bar - p_hat)^2] holds only in expectation
    assert abs(wi.mean() - (wp.mean() - b.mean())) < 5e-3


def test_grid_cells_shape_and_validation():
    base = _cfg(replications=10)
    cells = grid_cells(base, [0.25, 0.5], [0.5, 1.0], eta_s=[0.2, 0.5, 0.9])
    assert len(cells) == 12
    assert cells[0].eta_s == pytest.approx(0.2)
    assert len({c.seed for c in cells}) == 12
    with pytest.raises(ModelError):
        grid_cells(base, [0.5], [1.0])
    with pytest.raises(ModelError):
        grid_cells(base, [0.5], [1.0], eta_s=[0.5], times=[1.0])


def test_comparison_rejects_microfounded():
    with pytest.raises(ModelError):
        compare_mc_closed_form([_cfg(mode=Mode.MICROFOUNDED, replications=2, agents=2)])


@pytest.mark.parametrize("kw", [dict(replications=0), dict(block_size=0), dict(t=-1.0),
                                dict(seed=-1), dict(mode=Mode.MICROFOUNDED, agents=0)])
def test_config_validation(kw):
    with pytest.raises(ModelError):
        _cfg(**kw)


def test_unequal_priors_and_reentry_cell():
    cfg = _cfg(behavior=BehaviorParams(0.6, 0.7), prior=PriorSpec(0.4, 0.15, 0.6, 0.25),
               process=ProcessParams(1.0, 0.3), t=0.8, replications=100_000)
    rows = compare_mc_closed_form([cfg])
    assert all(abs(r.z) <= 4 for r in rows)


def test_threaded_comparison_identical():
    cells = grid_cells(_cfg(replications=2000), [0.3, 0.8], [0.6], times=[0.0, 1.0])
    a = compare_mc_closed_form(cells)
    b = compare_mc_closed_form(cells, workers=3)
    assert a == b
    assert replace(a[0]) == a[0]
