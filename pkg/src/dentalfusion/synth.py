"""Seeded synthetic cohorts with age- and gender-dependent crown measurements.

Pulp chamber height shrinks linearly with age (so CPCH and TCI fall) and
male crowns are taller by a fixed offset.  In ``signal="tci"`` mode the age
trend is placed on the index itself: CH is drawn with wide spread and CPCH is
derived as CH * TCI / 100, leaving CPCH and CH individually weak.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import (
    INCLUDED_TEETH,
    JAW_ORDER,
    Dataset,
    Gender,
    Jaw,
    Task,
    ToothMeasurement,
    pivot_long_to_wide,
    write_long_csv,
)

_MAX_REDRAWS = 1000


class GeneratorConfigError(ValueError):
    pass


@dataclass(frozen=True)
class GeneratorConfig:
    n_subjects: int = 1000
    age_min: int = 11
    age_max: int = 70
    male_fraction: float = 0.53
    # per-tooth zero-noise crown height of a female mandibular tooth (mm)
    ch_baseline: dict = field(default_factory=lambda: {
        "second_premolar": 7.6, "first_molar": 6.6, "second_molar": 6.2})
    # per-tooth pulp chamber height extrapolated to age 0 (mm)
    cpch_baseline: dict = field(default_factory=lambda: {
        "second_premolar": 4.8, "first_molar": 4.1, "second_molar": 3.9})
    cpch_slope_per_decade: float = -0.45
    gender_ch_offset: float = 0.6
    maxilla_ch_offset: float = 0.2
    ch_noise_sd: float = 0.35
    cpch_noise_sd: float = 0.08
    signal: str = "cpch"
    # used only when signal == "tci"
    tci_baseline: float = 70.0
    tci_slope_per_decade: float = -6.0
    tci_noise_sd: float = 0.3
    seed: int = 20240601

    def __post_init__(self):
        if self.n_subjects < 0:
            raise GeneratorConfigError("n_subjects must be >= 0")
        if not 0 <= self.age_min <= self.age_max <= 150:
            raise GeneratorConfigError("age range must satisfy 0 <= age_min <= age_max <= 150")
        if not 0 <= self.male_fraction <= 1:
            raise GeneratorConfigError("male_fraction must lie in [0, 1]")
        if self.signal not in ("cpch", "tci"):
            raise GeneratorConfigError("signal must be 'cpch' or 'tci'")
        if min(self.ch_noise_sd, self.cpch_noise_sd, self.tci_noise_sd) < 0:
            raise GeneratorConfigError("noise standard deviations must be >= 0")
        for tooth in INCLUDED_TEETH:
            if tooth.value not in self.ch_baseline or tooth.value not in self.cpch_baseline:
                raise GeneratorConfigError(f"missing baseline for {tooth.value}")
            if self.ch_baseline[tooth.value] <= 0 or self.cpch_baseline[tooth.value] <= 0:
                raise GeneratorConfigError("baselines must be positive")
            for age in (self.age_min, self.age_max):
                for gender in Gender:
                    for jaw in JAW_ORDER:
                        ch, cpch, tci = self.mean_measurements(tooth.value, jaw, gender, age)
                        if ch <= 0 or not 0 < cpch <= ch or not 0 < tci <= 100:
                            raise GeneratorConfigError(
                                f"zero-noise means violate 0 < CPCH <= CH for {tooth.value}/{jaw.value} "
                                f"at age {age} ({gender.name.lower()})"
                            )

    def mean_measurements(self, tooth: str, jaw: Jaw, gender: Gender, age: float) -> tuple[float, float, float]:
        ch = (self.ch_baseline[tooth] + self.gender_ch_offset * int(gender)
              + (self.maxilla_ch_offset if jaw is Jaw.MAXILLA else 0.0))
        if self.signal == "tci":
            tci = self.tci_baseline + self.tci_slope_per_decade * age / 10
            return ch, ch * tci / 100, tci
        cpch = self.cpch_baseline[tooth] + self.cpch_slope_per_decade * age / 10
        return ch, cpch, cpch * 100 / ch

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Cohort:
    measurements: list[ToothMeasurement]
    demographics: dict[str, tuple[int, Gender]]

    def __len__(self) -> int:
        return len(self.demographics)

    def to_dataset(self, task: Task = Task.AGE) -> Dataset:
        return pivot_long_to_wide(self.measurements, self.demographics, task).dataset


def _draw_tooth(cfg: GeneratorConfig, rng, tooth: str, jaw: Jaw, gender: Gender, age: int) -> tuple[float, float]:
    ch_mean, cpch_mean, tci_mean = cfg.mean_measurements(tooth, jaw, gender, age)
    for _ in range(_MAX_REDRAWS):
        ch = ch_mean + cfg.ch_noise_sd * rng.standard_normal()
        if cfg.signal == "tci":
            tci = tci_mean + cfg.tci_noise_sd * rng.standard_normal()
            cpch = ch * tci / 100
        else:
            cpch = cpch_mean + cfg.cpch_noise_sd * rng.standard_normal()
        if ch > 0 and 0 < cpch <= ch:
            return float(cpch), float(ch)
    raise GeneratorConfigError(f"could not draw a valid {tooth} measurement; noise too large")


def generate_cohort(cfg: GeneratorConfig | None = None) -> Cohort:
    """Subjects ``S0000``..; each subject has its own RNG stream keyed by index."""
    cfg = cfg or GeneratorConfig()
    width = max(4, len(str(max(cfg.n_subjects - 1, 0))))
    measurements: list[ToothMeasurement] = []
    demographics: dict[str, tuple[int, Gender]] = {}
    for i in range(cfg.n_subjects):
        rng = np.random.default_rng([cfg.seed, i])
        sid = f"S{i:0{width}d}"
        age = int(rng.integers(cfg.age_min, cfg.age_max + 1))
        gender = Gender.MALE if rng.random() < cfg.male_fraction else Gender.FEMALE
        demographics[sid] = (age, gender)
        for tooth in INCLUDED_TEETH:
            for jaw in JAW_ORDER:
                cpch, ch = _draw_tooth(cfg, rng, tooth.value, jaw, gender, age)
                measurements.append(ToothMeasurement(sid, jaw, tooth, cpch, ch))
    return Cohort(measurements, demographics)


def write_cohort_csv(path: str | Path, cohort: Cohort) -> None:
    write_long_csv(path, cohort.measurements, cohort.demographics)
