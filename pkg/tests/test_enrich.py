"""Randomization-window planning and the enrichment controller."""
import numpy as np
import pytest
import scipy.stats

from chillerplant import enrich
from chillerplant.enrich import (
    DoesNotFit,
    EnrichmentPlan,
    SpeedRanges,
    enrichment_controller,
    perturb,
    plan_for_days,
    plan_windows,
    window_mask,
)
from chillerplant.simplant import (
    MINUTES_PER_DAY,
    ControlCommand,
    ControlVector,
    fixed_regime_controller,
    simulate,
)

from conftest import noiseless_scenario


class TestPlanWindows:
    def test_windows_fit_inside_day_and_do_not_overlap(self):
        for seed in range(20):
            plan = plan_windows(MINUTES_PER_DAY, 3, 30, seed=seed)
            spans = sorted((s, s + d) for s, d in plan.windows)
            assert all(0 <= a and b <= MINUTES_PER_DAY for a, b in spans)
            assert all(b0 >= a1 for (_, a1), (b0, _) in zip(spans, spans[1:]))

    def test_impossible_packing_raises(self):
        with pytest.raises(DoesNotFit):
            plan_windows(MINUTES_PER_DAY, 49, 30)

    def test_zero_windows_gives_empty_plan(self):
        plan = plan_windows(MINUTES_PER_DAY, 0, 30)
        assert plan.windows == ()

    def test_start_minutes_roughly_uniform_over_the_day(self):
        # Aggregate many seeds; a KS test against uniform should not reject.
        starts = []
        for seed in range(300):
            plan = plan_windows(MINUTES_PER_DAY, 1, 30, seed=seed)
            starts.append(plan.windows[0][0] / (MINUTES_PER_DAY - 30))
        _, p = scipy.stats.kstest(starts, "uniform")
        assert p > 0.01

    def test_overlapping_windows_rejected_at_construction(self):
        with pytest.raises(ValueError):
            EnrichmentPlan(windows=((0, 30), (20, 30)))


class TestPlanForDays:
    def test_every_day_gets_its_windows(self):
        plan = plan_for_days(5, 3, 30, seed=1)
        assert len(plan.windows) == 15
        for day in range(5):
            lo, hi = day * MINUTES_PER_DAY, (day + 1) * MINUTES_PER_DAY
            todays = [w for w in plan.windows if lo <= w[0] < hi]
            assert len(todays) == 3
            assert all(s + d <= hi for s, d in todays)

    def test_mask_counts_window_minutes(self):
        plan = plan_for_days(2, 3, 30, seed=1)
        mask = window_mask(plan, 2 * MINUTES_PER_DAY)
        assert mask.sum() == 6 * 30

    def test_round_trip_through_dict(self):
        plan = plan_for_days(3, 2, 20, seed=9)
        assert EnrichmentPlan.from_dict(plan.to_dict()) == plan


class TestPerturb:
    def test_draws_stay_in_range(self):
        rng = np.random.default_rng(0)
        ranges = SpeedRanges(cwp=(30, 60), chwp=(20, 90), ct=(50, 55))
        for _ in range(200):
            cv = perturb(ranges, rng)
            assert 30 <= cv.cwp_speed <= 60
            assert 20 <= cv.chwp_speed <= 90
            assert 50 <= cv.ct_speed <= 55

    def test_degenerate_range_pins_the_speed(self):
        rng = np.random.default_rng(0)
        cv = perturb(SpeedRanges(cwp=(40, 40), chwp=(40, 40), ct=(40, 40)), rng)
        assert cv == ControlVector(40.0, 40.0, 40.0)

    def test_ranges_validated_against_plant_bounds(self):
        scn = noiseless_scenario()
        with pytest.raises(ValueError):
            SpeedRanges(cwp=(10, 60)).validate(scn.plant)


class TestEnrichmentController:
    def test_empty_plan_is_transparent(self):
        scn = noiseless_scenario(days=1)
        plan = EnrichmentPlan(windows=())
        base = fixed_regime_controller(scn)
        a = simulate(scn, base, 300)
        b = simulate(scn, enrichment_controller(plan, fixed_regime_controller(scn)), 300)
        assert a == b

    def test_controls_differ_inside_window_and_resume_after(self):
        scn = noiseless_scenario(days=1)
        plan = EnrichmentPlan(windows=((100, 30),))
        base = fixed_regime_controller(scn)
        recs = simulate(scn, enrichment_controller(plan, fixed_regime_controller(scn), seed=3),
                        200)
        plain = simulate(scn, base, 200)
        inside = [r.ts for r in recs if 100 <= r.ts < 130]
        assert all(recs[t].control != plain[t].control for t in inside)
        assert all(recs[t].control == plain[t].control for t in range(131, 200))

    def test_redraw_cadence(self):
        scn = noiseless_scenario(days=1)
        plan = EnrichmentPlan(windows=((0, 30),), redraw_period=5)
        recs = simulate(scn, enrichment_controller(plan, None, seed=3), 30)
        speeds = [r.ct_speed for r in recs]
        # Constant within each 5-minute block, changing across blocks.
        for block in range(6):
            vals = set(speeds[5 * block:5 * block + 5])
            assert len(vals) == 1
        assert len(set(speeds)) == 6

    def test_never_touches_onoff_or_chsp(self):
        scn = noiseless_scenario(days=1)
        plan = EnrichmentPlan(windows=((0, 60),))

        def base(record):
            return ControlCommand(chsp=8.5)

        recs = simulate(scn, enrichment_controller(plan, base, seed=3), 60)
        for r in recs:
            assert r.on_ch == (1, 1, 1) and r.on_ct == (1, 1, 1)
            assert r.chsp == 8.5

    def test_safety_speed_bounds_always_respected(self):
        scn = noiseless_scenario(days=1)
        plan = plan_for_days(1, 3, 30, seed=5)
        recs = simulate(scn, enrichment_controller(plan, fixed_regime_controller(scn), seed=5),
                        MINUTES_PER_DAY)
        for r in recs:
            for s in (r.cwp_speed, r.chwp_speed, r.ct_speed):
                assert scn.plant.speed_min <= s <= scn.plant.speed_max

    def test_one_day_coverage_of_admissible_ranges(self):
        scn = noiseless_scenario(days=1)
        plan = plan_for_days(1, 3, 30, seed=10)
        recs = simulate(scn, enrichment_controller(plan, fixed_regime_controller(scn), seed=10),
                        MINUTES_PER_DAY)
        mask = window_mask(plan, MINUTES_PER_DAY)
        enriched = [r for r in recs if mask[r.ts]]
        span = scn.plant.speed_max - scn.plant.speed_min
        for attr in ("cwp_speed", "chwp_speed", "ct_speed"):
            vals = [getattr(r, attr) for r in enriched]
            assert (max(vals) - min(vals)) / span >= 0.90
