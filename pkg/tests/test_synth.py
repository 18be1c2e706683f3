import numpy as np
import pytest

from dentalfusion.data import (
    INCLUDED_TEETH,
    JAW_ORDER,
    LONG_COLUMNS,
    Gender,
    Jaw,
    Task,
    read_long_csv,
    validate_dataset,
)
from dentalfusion.synth import Cohort, GeneratorConfig, GeneratorConfigError, generate_cohort, write_cohort_csv

QUIET = dict(ch_noise_sd=0.0, cpch_noise_sd=0.0, tci_noise_sd=0.0)


def test_same_seed_same_bytes(tmp_path):
    cfg = GeneratorConfig(n_subjects=40, seed=9)
    write_cohort_csv(tmp_path / "a.csv", generate_cohort(cfg))
    write_cohort_csv(tmp_path / "b.csv", generate_cohort(cfg))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    write_cohort_csv(tmp_path / "c.csv", generate_cohort(GeneratorConfig(n_subjects=40, seed=10)))
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_prefix_stable_under_larger_cohorts():
    small = generate_cohort(GeneratorConfig(n_subjects=10, seed=1))
    large = generate_cohort(GeneratorConfig(n_subjects=100, seed=1))
    assert small.measurements == large.measurements[:60]
    assert all(small.demographics[k] == large.demographics[k] for k in small.demographics)


@pytest.mark.parametrize("signal", ["cpch", "tci"])
def test_zero_noise_is_monotone_in_age(signal):
    cfg = GeneratorConfig(signal=signal, **QUIET)
    for tooth in INCLUDED_TEETH:
        for jaw in JAW_ORDER:
            for g in Gender:
                _, cp20, t20 = cfg.mean_measurements(tooth.value, jaw, g, 20)
                _, cp60, t60 = cfg.mean_measurements(tooth.value, jaw, g, 60)
                assert cp20 > cp60 and t20 > t60


def test_zero_noise_male_crowns_taller():
    cfg = GeneratorConfig(**QUIET)
    for tooth in INCLUDED_TEETH:
        f = cfg.mean_measurements(tooth.value, Jaw.MANDIBLE, Gender.FEMALE, 30)[0]
        m = cfg.mean_measurements(tooth.value, Jaw.MANDIBLE, Gender.MALE, 30)[0]
        assert m - f == pytest.approx(cfg.gender_ch_offset)


def test_empty_cohort(tmp_path):
    c = generate_cohort(GeneratorConfig(n_subjects=0))
    assert len(c) == 0 and c.measurements == []
    write_cohort_csv(tmp_path / "e.csv", c)
    assert (tmp_path / "e.csv").read_text().splitlines() == [",".join(LONG_COLUMNS)]


def test_hundred_subjects_shape(tmp_path):
    c = generate_cohort(GeneratorConfig(n_subjects=100, seed=3))
    write_cohort_csv(tmp_path / "c.csv", c)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert len(lines) == 601
    genders = {ln.split(",")[2] for ln in lines[1:]}
    assert genders <= {"M", "F"}


@pytest.mark.parametrize("signal", ["cpch", "tci"])
def test_round_trip_validates(tmp_path, signal):
    c = generate_cohort(GeneratorConfig(n_subjects=150, seed=4, signal=signal))
    write_cohort_csv(tmp_path / "c.csv", c)
    rows, demo = read_long_csv(tmp_path / "c.csv")
    back = Cohort(rows, demo).to_dataset(Task.GENDER)
    assert len(back) == 150
    assert validate_dataset(back).ok
    assert np.array_equal(back.X, c.to_dataset(Task.GENDER).X)


def test_age_correlates_with_tci():
    ds = generate_cohort(GeneratorConfig(n_subjects=600, seed=5)).to_dataset()
    ages = np.array([r.age_years for r in ds.records], dtype=float)
    tci = ds.X[:, 12:18].mean(axis=1)
    assert np.corrcoef(ages, tci)[0, 1] < -0.3


def test_default_cohort_covers_every_class():
    ds = generate_cohort(GeneratorConfig(n_subjects=300)).to_dataset()
    counts = validate_dataset(ds).class_counts
    assert all(n > 0 for n in counts["age"].values())
    assert all(n > 0 for n in counts["gender"].values())


@pytest.mark.parametrize("kwargs", [
    dict(n_subjects=-1),
    dict(age_min=50, age_max=20),
    dict(male_fraction=1.5),
    dict(signal="ch"),
    dict(ch_noise_sd=-0.1),
    dict(cpch_slope_per_decade=2.0),  # CPCH would overtake CH in old subjects
    dict(ch_baseline={"first_molar": 6.0}),
])
def test_config_errors(kwargs):
    with pytest.raises(GeneratorConfigError):
        GeneratorConfig(**kwargs)


def test_noise_too_large_is_reported():
    cfg = GeneratorConfig(n_subjects=5, cpch_noise_sd=1e9, ch_noise_sd=0.0)
    with pytest.raises(GeneratorConfigError, match="noise"):
        generate_cohort(cfg)
