import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from episurv import cohort as co
from episurv.synth import generate_calibrated

from conftest import make_subject

HEADER = "id,name,age_years,sex,allegiance,occupation,region,entry_episode,exit_episode,event,cause"


def test_parse_minimal_row():
    c = co.parse_cohort(HEADER + "\nA,Alpha,30,male,Stark,HouseMember,North,1,67,0,\n")
    assert len(c) == 1
    s = c.subjects[0]
    assert (s.entry_episode, s.exit_episode, s.event, s.cause) == (1, 67, False, None)
    assert s.screen_minutes is None and not s.killed_by_white_walker and not s.supernatural_non_aging


def test_parse_is_case_insensitive():
    c = co.parse_cohort(HEADER + "\nA,Alpha,30,MALE,targaryen,advisor,essos,2,10,1,Burn\n")
    s = c.subjects[0]
    assert (s.sex, s.allegiance, s.occupation, s.region, s.cause) == (
        co.Sex.MALE,
        co.Allegiance.TARGARYEN,
        co.Occupation.ADVISOR,
        co.Region.ESSOS,
        co.Cause.BURN,
    )


def test_unknown_allegiance_names_row():
    text = HEADER + "\nA,Alpha,30,male,Stark,HouseMember,North,1,67,0,\nB,Beta,30,male,Dothraki,Other,Essos,1,5,1,\n"
    with pytest.raises(co.CohortError, match=r"row 3.*Dothraki") as info:
        co.parse_cohort(text)
    assert info.value.row == 3


@pytest.mark.parametrize(
    "row, pattern",
    [
        ("A,Alpha,abc,male,Stark,HouseMember,North,1,67,0,", "age_years"),
        ("A,Alpha,,male,Stark,HouseMember,North,1,67,0,", "age_years"),
        ("A,Alpha,30,male,Stark,HouseMember,North,9,3,0,", "entry_episode > exit_episode"),
        ("A,Alpha,30,male,Stark,HouseMember,North,1,68,0,", "horizon"),
        ("A,Alpha,30,male,Stark,HouseMember,North,1,6,0,burn", "cause"),
        ("A,Alpha,30,male,Stark,HouseMember,North,1,6,2,", "event"),
        ("A,Alpha,-3,male,Stark,HouseMember,North,1,6,0,", "age_years"),
    ],
)
def test_row_errors(row, pattern):
    with pytest.raises(co.CohortError, match=pattern) as info:
        co.parse_cohort(HEADER + "\n" + row + "\n")
    assert info.value.row == 2


def test_duplicate_id():
    row = "A,Alpha,30,male,Stark,HouseMember,North,1,67,0,"
    with pytest.raises(co.CohortError, match="row 3.*duplicate"):
        co.parse_cohort(HEADER + "\n" + row + "\n" + row + "\n")


def test_missing_column():
    with pytest.raises(co.CohortError, match="region"):
        co.parse_cohort(HEADER.replace(",region", "") + "\n")


def test_optional_columns_parsed():
    text = HEADER + ",screen_minutes,killed_by_white_walker,supernatural_non_aging\n"
    text += "A,Alpha,30,male,Stark,HouseMember,North,1,67,0,,12.5,0,1\n"
    s = co.parse_cohort(text).subjects[0]
    assert s.screen_minutes == 12.5 and s.supernatural_non_aging and not s.killed_by_white_walker


def test_golden_file_has_132_subjects(golden):
    assert len(golden) == 132


def test_round_trip_golden(golden):
    text = co.serialize_cohort(golden)
    assert co.parse_cohort(text) == golden
    assert co.serialize_cohort(co.parse_cohort(text)) == text


subject_strategy = st.builds(
    make_subject,
    age_years=st.floats(min_value=0, max_value=120, allow_nan=False),
    sex=st.sampled_from(list(co.Sex)),
    allegiance=st.sampled_from(list(co.Allegiance)),
    occupation=st.sampled_from(list(co.Occupation)),
    region=st.sampled_from(list(co.Region)),
    entry_episode=st.integers(1, 30),
    exit_episode=st.integers(30, 67),
    screen_minutes=st.one_of(st.none(), st.floats(min_value=0, max_value=500, allow_nan=False)),
    killed_by_white_walker=st.booleans(),
    supernatural_non_aging=st.booleans(),
)


@settings(max_examples=100, deadline=None)
@given(st.lists(subject_strategy, min_size=0, max_size=6))
def test_round_trip_property(subjects):
    subjects = [co.Subject(**{**s.__dict__, "id": f"S{i}", "name": f"n,{i}"}) for i, s in enumerate(subjects)]
    c = co.Cohort(tuple(subjects))
    assert co.parse_cohort(co.serialize_cohort(c)) == c


def test_exclusion_rules():
    c = co.Cohort(
        (
            make_subject("ww", killed_by_white_walker=True),
            make_subject("short", screen_minutes=4.9),
            make_subject("edge", screen_minutes=5.0),
            make_subject("ghost", supernatural_non_aging=True),
            make_subject("keep"),
        )
    )
    kept, report = co.apply_exclusions(c, 5.0)
    assert [s.id for s in kept] == ["edge", "keep"]
    assert {(e.subject_id, e.rule) for e in report} == {
        ("ww", "white_walker"),
        ("short", "screen_time"),
        ("ghost", "supernatural"),
    }


def test_exclusions_identity_without_flags(golden):
    kept, report = co.apply_exclusions(golden)
    assert kept == golden and report == []


@settings(max_examples=50, deadline=None)
@given(st.lists(subject_strategy, max_size=8), st.floats(min_value=0, max_value=20))
def test_exclusions_idempotent(subjects, threshold):
    subjects = [co.Subject(**{**s.__dict__, "id": f"S{i}"}) for i, s in enumerate(subjects)]
    once, _ = co.apply_exclusions(co.Cohort(tuple(subjects)), threshold)
    twice, report = co.apply_exclusions(once, threshold)
    assert twice == once and report == []


def test_encode_reference_row():
    d = co.encode_design(co.Cohort((make_subject(age_years=35.0),)))
    assert d.column_names == (
        "age_dec", "male", "Baratheon", "Greyjoy", "Lannister", "Martell", "Targaryen", "Tyrell",
        "OtherAllegiance", "Advisor", "KnightSoldier", "OtherOccupation", "South", "Essos",
    )
    np.testing.assert_array_equal(d.rows[0], [3.5, 1] + [0] * 12)


def test_encode_dummies():
    s = make_subject(
        age_years=20.0,
        sex=co.Sex.FEMALE,
        allegiance=co.Allegiance.MARTELL,
        occupation=co.Occupation.ADVISOR,
        region=co.Region.ESSOS,
    )
    d = co.encode_design(co.Cohort((s,)))
    row = dict(zip(d.column_names, d.rows[0]))
    assert row.pop("age_dec") == 2.0
    assert {k for k, v in row.items() if v} == {"Martell", "Advisor", "Essos"}


def test_encode_golden_shape(golden):
    d = co.encode_design(golden)
    assert d.shape == (132, 14)
    assert d.row_ids == tuple(s.id for s in golden)


def test_encode_empty():
    with pytest.raises(co.CohortError):
        co.encode_design(co.Cohort(()))


GROUPS = {
    "allegiance": ["Baratheon", "Greyjoy", "Lannister", "Martell", "Targaryen", "Tyrell", "OtherAllegiance"],
    "occupation": ["Advisor", "KnightSoldier", "OtherOccupation"],
    "region": ["South", "Essos"],
}


def test_dummy_groups_one_hot(golden):
    d = co.encode_design(golden)
    for cols in GROUPS.values():
        sums = sum(d.column(c) for c in cols)
        assert set(np.unique(sums)) <= {0.0, 1.0}
    assert np.all(np.isfinite(d.rows))


def test_encode_permutation_equivariant(golden, rng):
    perm = rng.permutation(len(golden))
    shuffled = co.Cohort(tuple(golden.subjects[i] for i in perm))
    np.testing.assert_array_equal(co.encode_design(shuffled).rows, co.encode_design(golden).rows[perm])


@pytest.mark.parametrize(
    "variable, level, dropped",
    [("allegiance", "Lannister", "Lannister"), ("region", "Essos", "Essos"), ("sex", "male", "male")],
)
def test_reference_change_keeps_width(golden, variable, level, dropped):
    spec = co.CovariateSpec().with_reference(variable, level)
    d = co.encode_design(golden, spec)
    assert len(d.column_names) == 14 and dropped not in d.column_names


def test_reference_must_be_declared_level():
    with pytest.raises(ValueError):
        co.CovariateSpec(reference_levels={"allegiance": "Dothraki"})


def test_baseline_table_golden(golden):
    bt = co.baseline_table(golden)
    stark = bt.get("allegiance", "Stark")
    assert (stark.population_count, stark.population_pct, stark.death_count, stark.death_pct) == (26, 19.7, 13, 50.0)
    assert bt.totals == (132, 89, 67.4)
    for variable in co.TABLE_ORDER:
        assert sum(s.population_count for s in bt.strata if s.variable == variable) == 132
        assert sum(s.death_count for s in bt.strata if s.variable == variable) == 89
    assert all(s.death_count <= s.population_count for s in bt.strata)


def test_baseline_single_living_subject():
    bt = co.baseline_table(co.Cohort((make_subject(),)))
    st_ = bt.get("allegiance", "Stark")
    assert (st_.population_count, st_.population_pct, st_.death_count, st_.death_pct) == (1, 100.0, 0, 0.0)


def test_follow_up():
    c = co.Cohort((make_subject(entry_episode=5, exit_episode=5),))
    assert co.follow_up_summary(c) == (1.0, [1])
    c = co.Cohort(tuple(make_subject(str(d), entry_episode=1, exit_episode=d) for d in (10, 20, 30, 40)))
    assert co.follow_up_summary(c)[0] == 25.0


def test_follow_up_golden(golden):
    median, durations = co.follow_up_summary(golden)
    assert abs(median - 32) <= 3 and len(durations) == 132


def test_cause_summary_two_denominators(golden):
    rows = {r.cause: r for r in co.cause_summary(golden)}
    assert rows["invasive_injury"].count == 59
    assert rows["invasive_injury"].pct_of_cohort == 44.7
    assert rows["invasive_injury"].pct_of_deaths == 66.3
    assert sum(r.count for r in rows.values()) == 89


def test_subject_invariants():
    with pytest.raises(co.CohortError):
        make_subject(event=False, cause=co.Cause.BURN)
    with pytest.raises(co.CohortError):
        make_subject(entry_episode=0)
    with pytest.raises(co.CohortError):
        co.Cohort((make_subject("x"), make_subject("x")))


def test_calibrated_generation_round_trips():
    c = generate_calibrated(seed=3)
    assert co.parse_cohort(co.serialize_cohort(c)) == c
