"""Remediation tests: knob algebra, planner behavior, the replay-based
mitigation model, and outcome metrics."""

import pytest

from rftlab.detection import detect
from rftlab.faults import FaultSpec, InjectionMode, build_schedule, generate_fault_run
from rftlab.remediation import (
    DISCRETE_KNOBS,
    EFFICACY,
    EmptyOutcomeSet,
    FLOAT_KNOBS,
    InterventionAction,
    InterventionState,
    KNOB_NAMES,
    MAX_KNOBS_PER_ACTION,
    MissingInjectionMeta,
    NormalLabelRejected,
    REMEDIES,
    RFTConfig,
    RemediationOutcome,
    SIDE_EFFECT_SIGNAL,
    UnknownKnob,
    attenuation,
    build_state,
    clamp_knob,
    execute,
    knob_range,
    mitigation_metrics,
    plan_action_random,
    plan_action_rule,
    revalidate,
)
from rftlab.simulate import healthy_defaults, simulate_healthy
from rftlab.taxonomy import DifficultyRegime, FAULT_TYPES, FaultLabel, FaultType


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def _easy_run(fault_type=FaultType.RF_1, seed=55):
    config = healthy_defaults()
    spec = FaultSpec(fault_type, DifficultyRegime.EASY, 1.0,
                     mode=InjectionMode.ALWAYS_ON)
    sched = build_schedule(spec, config.steps, seed)
    return generate_fault_run(config, spec, sched, seed)


def _state_for(run, profile, tau):
    decision = detect(run, profile, tau, 20)
    return build_state(decision, run.label, RFTConfig.baseline(), run.regime)


# ---------------------------------------------------------------------------
# Knob algebra
# ---------------------------------------------------------------------------

def test_knob_tables_are_disjoint_and_complete():
    assert set(FLOAT_KNOBS) | set(DISCRETE_KNOBS) == set(KNOB_NAMES)
    assert not set(FLOAT_KNOBS) & set(DISCRETE_KNOBS)
    assert set(SIDE_EFFECT_SIGNAL) == set(KNOB_NAMES)
    assert len(KNOB_NAMES) == 12


def test_knob_range_and_unknown():
    assert knob_range("kl_coef") == 1.0
    assert knob_range("tool_retry") == 3.0
    with pytest.raises(UnknownKnob):
        knob_range("warp_drive")


def test_clamp_knob_bounds_floats():
    lo, hi = FLOAT_KNOBS["reward_clip"]
    assert clamp_knob("reward_clip", -100.0) == lo
    assert clamp_knob("reward_clip", 100.0) == hi
    assert clamp_knob("reward_clip", 1.5) == 1.5


def test_clamp_knob_snaps_discrete_values():
    assert clamp_knob("tool_retry", 2.4) == 2
    assert clamp_knob("tool_retry", 9) == 3
    assert clamp_knob("advantage_norm", 0.5) == 0
    with pytest.raises(UnknownKnob):
        clamp_knob("warp_drive", 1)


def test_config_validates_bounds():
    RFTConfig.baseline()
    with pytest.raises(ValueError):
        RFTConfig(reward_clip=99.0)
    with pytest.raises(ValueError):
        RFTConfig(tool_retry=7)


def test_action_limits_knob_count_and_names():
    InterventionAction({"kl_coef": 0.5}, "test")
    with pytest.raises(ValueError):
        InterventionAction(
            {"kl_coef": 0.5, "reward_clip": 1.0, "entropy_bonus": 0.1,
             "gae_lambda": 0.9},
            "too many",
        )
    with pytest.raises(UnknownKnob):
        InterventionAction({"warp_drive": 1}, "bad knob")


def test_remedies_cover_every_fault_type():
    assert set(REMEDIES) == set(FAULT_TYPES)
    for remedy in REMEDIES.values():
        assert 1 <= len(remedy) <= MAX_KNOBS_PER_ACTION
        for name in remedy:
            assert name in KNOB_NAMES


def test_execute_applies_and_validates():
    base = RFTConfig.baseline()
    new = execute(base, InterventionAction({"kl_coef": 0.5, "tool_retry": 2}, "x"))
    assert new.kl_coef == 0.5
    assert new.tool_retry == 2
    assert new.reward_clip == base.reward_clip
    with pytest.raises(ValueError):
        execute(base, InterventionAction({"kl_coef": 3.0}, "out of bounds"))


# ---------------------------------------------------------------------------
# Planner input
# ---------------------------------------------------------------------------

def test_build_state_ranks_top_deviations(profile20, tau20):
    run = _easy_run(FaultType.RF_2)
    state = _state_for(run, profile20, tau20)
    assert len(state.top_deviations) == 3
    zs = [z for _, z in state.top_deviations]
    assert zs == sorted(zs, reverse=True)
    assert state.label.fault_type is FaultType.RF_2
    d = state.to_dict()
    assert d["fault_type"] == "RF-2"
    assert d["config"]["kl_coef"] == 0.1


def test_build_state_rejects_normal_label(profile20, tau20):
    run = _easy_run()
    decision = detect(run, profile20, tau20, 20)
    with pytest.raises(NormalLabelRejected):
        build_state(decision, FaultLabel.normal(), RFTConfig.baseline())


# ---------------------------------------------------------------------------
# Planners
# ---------------------------------------------------------------------------

def test_rule_planner_returns_reference_remedy(profile20, tau20):
    run = _easy_run(FaultType.TE_1)
    state = _state_for(run, profile20, tau20)
    action = plan_action_rule(state)
    assert action.changes == REMEDIES[FaultType.TE_1]
    assert not action.fallback


def test_random_planner_is_seeded_and_valid(profile20, tau20):
    run = _easy_run()
    state = _state_for(run, profile20, tau20)
    a = plan_action_random(state, seed=5)
    b = plan_action_random(state, seed=5)
    c = plan_action_random(state, seed=6)
    assert a == b
    assert a != c
    assert 1 <= len(a.changes) <= MAX_KNOBS_PER_ACTION
    execute(RFTConfig.baseline(), a)


# ---------------------------------------------------------------------------
# Mitigation model
# ---------------------------------------------------------------------------

def test_attenuation_shrinks_strength_for_remedy_knobs():
    base = RFTConfig.baseline()
    # RF-1's remedy is reward_clip; move it by half its range.
    new = execute(base, InterventionAction({"reward_clip": 4.25}, "x"))
    scale, mults = attenuation(FaultType.RF_1, base, new)
    assert scale == pytest.approx(1.0 - EFFICACY * 0.5)
    assert mults == {}


def test_attenuation_widens_noise_for_blind_knobs():
    base = RFTConfig.baseline()
    new = execute(base, InterventionAction({"kl_coef": 0.6}, "x"))
    scale, mults = attenuation(FaultType.RF_1, base, new)
    assert scale == 1.0
    assert mults == {"kl_mean": pytest.approx(1.25)}


def test_attenuation_identity_with_no_change():
    base = RFTConfig.baseline()
    scale, mults = attenuation(FaultType.RF_1, base, base)
    assert scale == 1.0
    assert mults == {}


def test_revalidate_identity_change_is_exactly_zero(profile20, tau20):
    run = _easy_run(FaultType.OD_1, seed=77)
    outcome = revalidate(run, RFTConfig.baseline(), profile20, tau20, 20)
    assert outcome.delta_pct == 0.0
    assert outcome.post_severity == outcome.original_severity
    assert not outcome.mitigated


def test_revalidate_remedy_reduces_severity(profile20, tau20):
    for ft in (FaultType.RF_1, FaultType.TE_1, FaultType.PG_2):
        run = _easy_run(ft, seed=88)
        updated = execute(RFTConfig.baseline(),
                          InterventionAction(dict(REMEDIES[ft]), "remedy"))
        outcome = revalidate(run, updated, profile20, tau20, 20)
        assert outcome.mitigated, ft
        assert outcome.post_severity < outcome.original_severity
        assert outcome.delta_pct > 0


def test_mitigated_means_strict_reduction(profile20, tau20):
    run = _easy_run(FaultType.CA_2, seed=91)
    updated = execute(RFTConfig.baseline(),
                      InterventionAction(dict(REMEDIES[FaultType.CA_2]), "r"))
    outcome = revalidate(run, updated, profile20, tau20, 20)
    assert outcome.mitigated == (outcome.post_severity < outcome.original_severity)
    assert outcome.below_threshold == (outcome.post_severity <= tau20)


def test_revalidate_rejects_normal_runs(profile20, tau20):
    healthy = simulate_healthy(healthy_defaults(), seed=3)
    with pytest.raises(MissingInjectionMeta):
        revalidate(healthy, RFTConfig.baseline(), profile20, tau20, 20)


def test_stronger_remedy_moves_attenuate_more():
    base = RFTConfig.baseline()
    small = execute(base, InterventionAction({"reward_clip": 1.8}, "x"))
    large = execute(base, InterventionAction({"reward_clip": 0.5}, "x"))
    s_small, _ = attenuation(FaultType.RF_1, base, small)
    s_large, _ = attenuation(FaultType.RF_1, base, large)
    assert s_large < s_small < 1.0


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def _outcome(mitigated, delta):
    return RemediationOutcome(
        run_id="r", fault_type=FaultType.RF_1,
        original_severity=10.0, post_severity=10.0 - delta / 10.0,
        mitigated=mitigated, below_threshold=False, delta_pct=delta,
    )


def test_mitigation_metrics_formulas():
    outcomes = [_outcome(True, 40.0), _outcome(True, 20.0), _outcome(False, -5.0)]
    metrics = mitigation_metrics(outcomes)
    assert metrics["MR"] == pytest.approx(2 / 3)
    assert metrics["MSC"] == pytest.approx(20.0)


def test_mitigation_metrics_need_outcomes():
    with pytest.raises(EmptyOutcomeSet):
        mitigation_metrics([])
