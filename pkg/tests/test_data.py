import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dentalfusion.data import (
    FEATURE_NAMES,
    INCLUDED_TEETH,
    JAW_ORDER,
    LONG_COLUMNS,
    WIDE_COLUMNS,
    AgeGroup,
    Dataset,
    Gender,
    Jaw,
    MeasurementConsistencyError,
    SubjectRecord,
    Task,
    Tooth,
    ToothMeasurement,
    ValidationError,
    bin_age,
    compute_tci,
    feature_index,
    filter_teeth,
    pivot_long_to_wide,
    read_long_csv,
    read_wide_csv,
    tooth_view,
    validate_dataset,
    write_long_csv,
    write_wide_csv,
)


def subject_rows(sid, base=0.0, teeth=INCLUDED_TEETH):
    rows = []
    for i, tooth in enumerate(teeth):
        for j, jaw in enumerate(JAW_ORDER):
            rows.append(ToothMeasurement(sid, jaw, tooth, 3.0 + 0.1 * i + base, 7.0 + 0.2 * j + base))
    return rows


# --- TCI and age bins --------------------------------------------------------


@pytest.mark.parametrize("cpch, ch, expected", [(3.5, 7.0, 50.0), (7.0, 7.0, 100.0), (2.13, 6.40, 33.28125)])
def test_compute_tci_examples(cpch, ch, expected):
    assert compute_tci(cpch, ch) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("cpch, ch", [(0.0, 5.0), (-1.0, 5.0), (1.0, 0.0), (math.nan, 5.0), (1.0, math.inf)])
def test_compute_tci_rejects_bad_input(cpch, ch):
    with pytest.raises(ValidationError):
        compute_tci(cpch, ch)


def test_compute_tci_cpch_above_ch():
    with pytest.raises(MeasurementConsistencyError):
        compute_tci(7.5, 7.0)


@given(st.floats(0.01, 50), st.floats(0.0, 1.0))
def test_tci_in_unit_range(ch, ratio):
    cpch = max(ch * ratio, 1e-6)
    if cpch > ch:
        return
    t = compute_tci(cpch, ch)
    assert 0 < t <= 100


@pytest.mark.parametrize("age, group", [
    (27, AgeGroup.EARLY_ADULT), (20, AgeGroup.YOUNG), (0, AgeGroup.YOUNG), (21, AgeGroup.EARLY_ADULT),
    (30, AgeGroup.EARLY_ADULT), (31, AgeGroup.MID_ADULT), (40, AgeGroup.MID_ADULT),
    (41, AgeGroup.MATURE_ADULT), (50, AgeGroup.MATURE_ADULT), (51, AgeGroup.SENIOR), (150, AgeGroup.SENIOR),
])
def test_bin_age_edges(age, group):
    assert bin_age(age) is group


@pytest.mark.parametrize("age", [-1, 151, 2.5])
def test_bin_age_out_of_range(age):
    with pytest.raises(ValidationError):
        bin_age(age)


def test_bin_age_total_and_monotone():
    groups = [int(bin_age(a)) for a in range(151)]
    assert all(a <= b for a, b in zip(groups, groups[1:]))
    assert sorted(set(groups)) == [0, 1, 2, 3, 4]


# --- layout ------------------------------------------------------------------


def test_feature_layout():
    assert len(FEATURE_NAMES) == 18
    assert FEATURE_NAMES[0] == "CPCH_mm_Second_Pre-molar_Mandible"
    assert FEATURE_NAMES[6].startswith("CH_mm_") and FEATURE_NAMES[12].startswith("TCI_")
    assert WIDE_COLUMNS[0] == "UniqueID" and WIDE_COLUMNS[-3:] == ["Age", "Gender", "age_group"]
    assert len(WIDE_COLUMNS) == 22


def test_tooth_views_partition_columns():
    cols = sorted(c for t in INCLUDED_TEETH for c in tooth_view(t))
    assert cols == list(range(18))
    for t in INCLUDED_TEETH:
        assert len(tooth_view(t)) == 6
    with pytest.raises(ValueError):
        tooth_view(Tooth.CANINE)


# --- filtering and pivoting --------------------------------------------------


def test_filter_teeth_examples():
    c = ToothMeasurement("S", Jaw.MANDIBLE, Tooth.CANINE, 3, 7)
    sp = ToothMeasurement("S", Jaw.MANDIBLE, Tooth.SECOND_PREMOLAR, 3, 7)
    fm = ToothMeasurement("S", Jaw.MANDIBLE, Tooth.FIRST_MOLAR, 3, 7)
    tm = ToothMeasurement("S", Jaw.MANDIBLE, Tooth.THIRD_MOLAR, 3, 7)
    sm = ToothMeasurement("S", Jaw.MANDIBLE, Tooth.SECOND_MOLAR, 3, 7)
    assert filter_teeth([c, sp]) == [sp]
    assert filter_teeth([]) == []
    assert filter_teeth([fm, tm, sm]) == [fm, sm]


@given(st.lists(st.sampled_from(list(Tooth)), max_size=12))
def test_filter_teeth_idempotent(teeth):
    rows = [ToothMeasurement("S", Jaw.MAXILLA, t, 2.0, 6.0) for t in teeth]
    once = filter_teeth(rows)
    assert filter_teeth(once) == once
    assert all(r.tooth in INCLUDED_TEETH for r in once)


def test_measurement_rejects_cpch_above_ch():
    with pytest.raises(MeasurementConsistencyError, match="S9"):
        ToothMeasurement("S9", Jaw.MAXILLA, Tooth.FIRST_MOLAR, 8.0, 7.0)


def test_pivot_single_subject():
    res = pivot_long_to_wide(subject_rows("S1"), {"S1": (27, Gender.MALE)})
    assert len(res.dataset) == 1 and res.excluded == []
    rec = res.dataset.records[0]
    assert len(rec.features) == 18
    assert rec.age_group is AgeGroup.EARLY_ADULT
    assert rec.gender is Gender.MALE
    i = feature_index("TCI", Tooth.FIRST_MOLAR, Jaw.MAXILLA)
    cp = rec.features[feature_index("CPCH_mm", Tooth.FIRST_MOLAR, Jaw.MAXILLA)]
    ch = rec.features[feature_index("CH_mm", Tooth.FIRST_MOLAR, Jaw.MAXILLA)]
    assert rec.features[i] == cp * 100 / ch


def test_pivot_drops_incomplete_subject():
    rows = subject_rows("S1") + subject_rows("S2")[:5]
    res = pivot_long_to_wide(rows, {"S1": (30, Gender.FEMALE), "S2": (40, Gender.MALE)})
    assert res.dataset.subject_ids == ["S1"]
    assert [sid for sid, _ in res.excluded] == ["S2"]
    assert "missing" in res.excluded[0][1]


def test_pivot_conflicting_duplicate_names_subject():
    rows = subject_rows("S1")
    first = rows[2]
    rows.append(ToothMeasurement("S1", first.jaw, first.tooth, first.cpch_mm, first.ch_mm + 0.5))
    with pytest.raises(ValidationError, match="S1"):
        pivot_long_to_wide(rows, {"S1": (30, Gender.FEMALE)})


def test_pivot_identical_duplicate_is_excluded():
    rows = subject_rows("S1")
    rows.append(rows[0])
    res = pivot_long_to_wide(rows, {"S1": (30, Gender.FEMALE)})
    assert len(res.dataset) == 0 and res.excluded[0][0] == "S1"


def test_pivot_missing_demographics():
    with pytest.raises(ValidationError, match="S7"):
        pivot_long_to_wide(subject_rows("S7"), {})


@given(st.lists(st.integers(0, 6), min_size=1, max_size=8))
def test_pivot_accounts_for_every_subject(n_cells):
    rows, demo = [], {}
    for k, n in enumerate(n_cells):
        sid = f"S{k}"
        rows += subject_rows(sid)[:n]
        demo[sid] = (25 + k, Gender.FEMALE)
    res = pivot_long_to_wide(rows, demo)
    present = {r.subject_id for r in rows}
    assert len(res.dataset) + len(res.excluded) == len(present)
    assert len(res.dataset) == sum(1 for n in n_cells if n == 6)


# --- validation --------------------------------------------------------------


def _record(features, age=33):
    return SubjectRecord("R1", tuple(features), age, bin_age(age), Gender.FEMALE)


def _clean_features():
    res = pivot_long_to_wide(subject_rows("R1"), {"R1": (33, Gender.FEMALE)})
    return list(res.dataset.records[0].features)


def test_validate_clean():
    rep = validate_dataset(Dataset((_record(_clean_features()),)))
    assert rep.ok
    assert rep.class_counts["age"][2] == 1 and rep.class_counts["gender"][0] == 1


def test_validate_tci_out_of_range():
    f = _clean_features()
    cp = feature_index("CPCH_mm", Tooth.SECOND_MOLAR, Jaw.MANDIBLE)
    ch = feature_index("CH_mm", Tooth.SECOND_MOLAR, Jaw.MANDIBLE)
    ti = feature_index("TCI", Tooth.SECOND_MOLAR, Jaw.MANDIBLE)
    f[cp], f[ch] = 6.0, 5.0
    f[ti] = 120.0  # consistent with the pair, but out of range
    rep = validate_dataset(Dataset((_record(f),)))
    assert len(rep.violations) == 1 and "outside" in rep.violations[0]


def test_validate_tci_inconsistent():
    f = _clean_features()
    ti = feature_index("TCI", Tooth.FIRST_MOLAR, Jaw.MANDIBLE)
    f[ti] += 0.5
    rep = validate_dataset(Dataset((_record(f),)))
    assert len(rep.violations) == 1 and "CPCH*100/CH" in rep.violations[0]


def test_validate_nan():
    f = _clean_features()
    f[3] = math.nan
    assert not validate_dataset(Dataset((_record(f),))).ok


def test_dataset_rejects_duplicate_ids():
    r = _record(_clean_features())
    with pytest.raises(ValidationError):
        Dataset((r, r))


# --- CSV ---------------------------------------------------------------------


def test_long_csv_round_trip(tmp_path):
    rows = subject_rows("A") + subject_rows("B", base=0.3)
    demo = {"A": (19, Gender.FEMALE), "B": (64, Gender.MALE)}
    path = tmp_path / "long.csv"
    write_long_csv(path, rows, demo)
    assert path.read_text().splitlines()[0] == ",".join(LONG_COLUMNS)
    rows2, demo2 = read_long_csv(path)
    assert rows2 == rows and demo2 == demo


def test_wide_csv_round_trip(tmp_path):
    rows = subject_rows("A") + subject_rows("B", base=0.3)
    ds = pivot_long_to_wide(rows, {"A": (19, Gender.FEMALE), "B": (64, Gender.MALE)}).dataset
    path = tmp_path / "wide.csv"
    write_wide_csv(path, ds)
    back = read_wide_csv(path, Task.GENDER)
    assert np.array_equal(back.X, ds.X)
    assert back.y.tolist() == [0, 1]
    assert back.with_task(Task.AGE).y.tolist() == [0, 4]


def test_long_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("subject_id,age_years,gender,jaw,tooth,cpch_mm\nS1,20,M,maxilla,canine,3.0\n")
    with pytest.raises(ValidationError, match="ch_mm"):
        read_long_csv(path)


def test_long_csv_missing_header(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(ValidationError, match="header"):
        read_long_csv(path)


def test_long_csv_bad_gender(tmp_path):
    path = tmp_path / "g.csv"
    path.write_text(",".join(LONG_COLUMNS) + "\nS1,20,X,maxilla,first_molar,3.0,7.0\n")
    with pytest.raises(ValidationError, match="gender"):
        read_long_csv(path)
