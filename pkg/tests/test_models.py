import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from persistent_agent.models import (
    DEFAULT_CREED,
    LEARNING_NOTE,
    OutOfOrderFeed,
    SelfModel,
    UserModel,
    add_capability,
    check_creed,
    creed_ids,
    detect_gap,
    stress_streak_oracle,
    update_user,
)
from persistent_agent.sandbox import Activity, Emotion, UserFeedEntry


def test_creed_must_have_five_sentences():
    with pytest.raises(ValueError):
        SelfModel(creed=DEFAULT_CREED[:4])


def test_creed_is_read_only():
    model = SelfModel()
    with pytest.raises(AttributeError):
        model.creed = ("x",) * 5
    assert model.creed_sentence(2) == DEFAULT_CREED[1]


@pytest.mark.parametrize("text,ids,violation", [
    ("Help with the report [creed:2]", {2}, False),
    ("Care [creed:1] and learn [creed:3]", {1, 3}, False),
    ("Nothing cited here", set(), True),
    ("Out of range [creed:9]", set(), True),
])
def test_check_creed(text, ids, violation):
    res = check_creed(SelfModel(), text)
    assert set(res.ids) == ids and res.violation is violation


def test_creed_ids_parses_all_markers():
    assert creed_ids("[creed:1] a [creed:5] b [creed:1]") == {1, 5}


def test_duplicate_capability_is_a_logged_noop(caplog):
    model = SelfModel()
    assert add_capability(model, "OCR API proficiency", "first")
    with caplog.at_level("WARNING"):
        assert not add_capability(model, "OCR API proficiency", "again")
    assert len(model.capabilities) == 1 and model.capabilities[0].note == "first"
    assert "already present" in caplog.text


def test_gap_fires_on_third_failure_in_window():
    model = SelfModel()
    for ok in (False, True, False):
        model.record_outcome("OCR API", ok)
    assert detect_gap(model) is None
    model.record_outcome("OCR API", False)
    gap = detect_gap(model)
    assert gap.skill == "OCR API" and gap.failures == 3 and gap.target == "master the OCR API"


def test_gap_window_only_sees_last_ten():
    model = SelfModel()
    for ok in [False] * 3 + [True] * 10:
        model.record_outcome("s", ok)
    assert detect_gap(model) is None


@given(st.lists(st.booleans(), max_size=40))
def test_gap_matches_window_oracle(outcomes):
    model = SelfModel()
    for ok in outcomes:
        model.record_outcome("s", ok)
    expected = outcomes[-10:].count(False) >= 3
    assert (detect_gap(model, "s") is not None) is expected


def test_reset_skill_clears_gap():
    model = SelfModel()
    for _ in range(3):
        model.record_outcome("s", False)
    model.reset_skill("s")
    assert detect_gap(model) is None


def test_record_outcome_returns_proficiency_delta():
    model = SelfModel()
    assert model.record_outcome("s", True) == 1.0
    assert model.record_outcome("s", False) == -0.5


def test_self_model_round_trip():
    model = SelfModel(beta=0.68)
    model.add_capability("x", "note")
    model.set_drive("curiosity", 2.0)
    clone = SelfModel.from_dict(model.to_dict())
    assert clone.to_dict() == model.to_dict() and clone.drives["curiosity"] == 1.0


# -- user model ----------------------------------------------------------------

feeds = st.lists(
    st.tuples(st.integers(1, 30), st.sampled_from(list(Emotion)), st.sampled_from(list(Activity))),
    max_size=60,
)


def build(raw):
    t, out = 0, []
    for gap, emo, act in raw:
        t += gap
        out.append(UserFeedEntry(t, emo, act))
    return out


@given(feeds)
@settings(max_examples=500)
def test_stress_streak_matches_oracle(raw):
    entries = build(raw)
    model = UserModel()
    for i, e in enumerate(entries):
        update_user(model, e)
        assert model.stress_streak == stress_streak_oracle(entries[: i + 1])
        assert model.stress_streak >= 0


def test_stress_armed_after_45_minutes_and_handled_once():
    model = UserModel()
    for t in range(5, 56, 5):
        update_user(model, UserFeedEntry(t, Emotion.STRESSED))
    assert model.stress_streak == 50 and model.stress_armed
    model.mark_stress_handled()
    update_user(model, UserFeedEntry(60, Emotion.STRESSED))
    assert not model.stress_armed
    update_user(model, UserFeedEntry(65, Emotion.CALM))
    assert model.stress_streak == 0


def test_reading_docs_adds_learning_interest_once():
    model = UserModel()
    update_user(model, UserFeedEntry(5, activity=Activity.READING_DOCS))
    update_user(model, UserFeedEntry(10, activity=Activity.READING_DOCS))
    assert model.inferred_goals == [LEARNING_NOTE] and model.interest_pending
    assert model.knowledge_level == "intermediate"


def test_out_of_order_feed_rejected():
    model = UserModel()
    update_user(model, UserFeedEntry(10))
    with pytest.raises(OutOfOrderFeed):
        update_user(model, UserFeedEntry(10))
