"""Dental measurement domain model and the long-to-wide preprocessing pipeline.

Raw input is one row per (subject, jaw, tooth) with two crown measurements in
millimetres.  After dropping the tooth classes that are too often missing, each
subject becomes one row of 18 features (CPCH, CH and TCI for the second
premolar, first molar and second molar of both jaws) plus age and gender.
"""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np


class ValidationError(ValueError):
    """Input data violates a domain invariant."""


class MeasurementConsistencyError(ValidationError):
    """CPCH exceeds CH for a single tooth."""


class Jaw(enum.Enum):
    MANDIBLE = "mandible"
    MAXILLA = "maxilla"


class Tooth(enum.Enum):
    CANINE = "canine"
    FIRST_PREMOLAR = "first_premolar"
    SECOND_PREMOLAR = "second_premolar"
    FIRST_MOLAR = "first_molar"
    SECOND_MOLAR = "second_molar"
    THIRD_MOLAR = "third_molar"


class AgeGroup(enum.IntEnum):
    YOUNG = 0
    EARLY_ADULT = 1
    MID_ADULT = 2
    MATURE_ADULT = 3
    SENIOR = 4


class Gender(enum.IntEnum):
    FEMALE = 0
    MALE = 1

    @classmethod
    def parse(cls, code: str) -> "Gender":
        try:
            return {"F": cls.FEMALE, "M": cls.MALE}[code.strip().upper()]
        except KeyError:
            raise ValidationError(f"gender must be M or F, got {code!r}") from None

    @property
    def code(self) -> str:
        return "M" if self is Gender.MALE else "F"


class Task(enum.Enum):
    AGE = "age"
    GENDER = "gender"

    @property
    def n_classes(self) -> int:
        return len(AgeGroup) if self is Task.AGE else len(Gender)

    @property
    def class_labels(self) -> list[str]:
        members = AgeGroup if self is Task.AGE else Gender
        return [m.name.lower() for m in members]


INCLUDED_TEETH = (Tooth.SECOND_PREMOLAR, Tooth.FIRST_MOLAR, Tooth.SECOND_MOLAR)
JAW_ORDER = (Jaw.MANDIBLE, Jaw.MAXILLA)

# inclusive upper edges; the last group is open-ended up to MAX_AGE
AGE_UPPER_EDGES = (20, 30, 40, 50)
MAX_AGE = 150

_TOOTH_LABEL = {
    Tooth.SECOND_PREMOLAR: "Second_Pre-molar",
    Tooth.FIRST_MOLAR: "First_Molar",
    Tooth.SECOND_MOLAR: "Second_Molar",
}
_JAW_LABEL = {Jaw.MANDIBLE: "Mandible", Jaw.MAXILLA: "Maxilla"}
_MEASURES = ("CPCH_mm", "CH_mm", "TCI")


def _feature_layout() -> list[tuple[str, Tooth, Jaw]]:
    return [
        (measure, tooth, jaw)
        for measure in _MEASURES
        for tooth in INCLUDED_TEETH
        for jaw in JAW_ORDER
    ]


FEATURE_LAYOUT = _feature_layout()
FEATURE_NAMES = [
    f"{measure}_{_TOOTH_LABEL[tooth]}_{_JAW_LABEL[jaw]}"
    for measure, tooth, jaw in FEATURE_LAYOUT
]
N_FEATURES = len(FEATURE_NAMES)
WIDE_COLUMNS = ["UniqueID", *FEATURE_NAMES, "Age", "Gender", "age_group"]
LONG_COLUMNS = ["subject_id", "age_years", "gender", "jaw", "tooth", "cpch_mm", "ch_mm"]


def feature_index(measure: str, tooth: Tooth, jaw: Jaw) -> int:
    return FEATURE_LAYOUT.index((measure, tooth, jaw))


def tooth_view(tooth: Tooth) -> list[int]:
    """Column indices of the six features describing one tooth (both jaws)."""
    if tooth not in INCLUDED_TEETH:
        raise ValueError(f"{tooth.value} is not part of the feature table")
    return [i for i, (_, t, _) in enumerate(FEATURE_LAYOUT) if t is tooth]


def compute_tci(cpch_mm: float, ch_mm: float) -> float:
    """Tooth coronal index, CPCH * 100 / CH."""
    for name, value in (("cpch_mm", cpch_mm), ("ch_mm", ch_mm)):
        if not math.isfinite(value) or value <= 0:
            raise ValidationError(f"{name} must be a positive finite number, got {value!r}")
    if cpch_mm > ch_mm:
        raise MeasurementConsistencyError(
            f"CPCH {cpch_mm} mm exceeds CH {ch_mm} mm"
        )
    return cpch_mm * 100.0 / ch_mm


def bin_age(age_years: int) -> AgeGroup:
    if isinstance(age_years, bool) or int(age_years) != age_years:
        raise ValidationError(f"age must be an integer, got {age_years!r}")
    age_years = int(age_years)
    if not 0 <= age_years <= MAX_AGE:
        raise ValidationError(f"age {age_years} outside [0, {MAX_AGE}]")
    for group, upper in zip(AgeGroup, AGE_UPPER_EDGES):
        if age_years <= upper:
            return group
    return AgeGroup.SENIOR


@dataclass(frozen=True)
class ToothMeasurement:
    subject_id: str
    jaw: Jaw
    tooth: Tooth
    cpch_mm: float
    ch_mm: float

    def __post_init__(self):
        try:
            compute_tci(self.cpch_mm, self.ch_mm)
        except ValidationError as exc:
            raise type(exc)(f"subject {self.subject_id} {self.tooth.value}/{self.jaw.value}: {exc}") from None


@dataclass(frozen=True)
class SubjectRecord:
    subject_id: str
    features: tuple[float, ...]
    age_years: int
    age_group: AgeGroup
    gender: Gender

    def label(self, task: Task) -> int:
        return int(self.age_group if task is Task.AGE else self.gender)


@dataclass(frozen=True)
class Dataset:
    records: tuple[SubjectRecord, ...]
    task: Task = Task.AGE
    feature_names: tuple[str, ...] = tuple(FEATURE_NAMES)

    def __post_init__(self):
        if list(self.feature_names) != FEATURE_NAMES:
            raise ValidationError("feature names must follow the fixed 18-column layout")
        ids = [r.subject_id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValidationError("subject ids are not unique")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def X(self) -> np.ndarray:
        if not self.records:
            return np.empty((0, N_FEATURES))
        return np.array([r.features for r in self.records], dtype=float)

    @property
    def y(self) -> np.ndarray:
        return np.array([r.label(self.task) for r in self.records], dtype=np.int64)

    @property
    def n_classes(self) -> int:
        return self.task.n_classes

    @property
    def subject_ids(self) -> list[str]:
        return [r.subject_id for r in self.records]

    def with_task(self, task: Task) -> "Dataset":
        return Dataset(self.records, task, self.feature_names)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(tuple(self.records[i] for i in indices), self.task, self.feature_names)


def filter_teeth(records: Iterable[ToothMeasurement]) -> list[ToothMeasurement]:
    return [r for r in records if r.tooth in INCLUDED_TEETH]


@dataclass
class PivotResult:
    dataset: Dataset
    excluded: list[tuple[str, str]] = field(default_factory=list)


def pivot_long_to_wide(
    records: Iterable[ToothMeasurement],
    demographics: Mapping[str, tuple[int, Gender]],
    task: Task = Task.AGE,
) -> PivotResult:
    """Build one complete 18-feature row per subject.

    Subjects with a missing (tooth, jaw) cell, or a cell recorded twice with
    identical values, are dropped and listed in ``excluded``.  A cell recorded
    twice with different values raises.
    """
    cells: dict[str, dict[tuple[Tooth, Jaw], list[ToothMeasurement]]] = {}
    for rec in records:
        cells.setdefault(rec.subject_id, {}).setdefault((rec.tooth, rec.jaw), []).append(rec)

    kept: list[SubjectRecord] = []
    excluded: list[tuple[str, str]] = []
    for sid, by_cell in cells.items():
        if sid not in demographics:
            raise ValidationError(f"subject {sid} has no age/gender entry")
        duplicated = False
        for (tooth, jaw), rows in by_cell.items():
            if len(rows) > 1:
                if len({(r.cpch_mm, r.ch_mm) for r in rows}) > 1:
                    raise ValidationError(
                        f"subject {sid}: conflicting measurements for {tooth.value}/{jaw.value}"
                    )
                duplicated = True
        missing = [
            f"{t.value}/{j.value}" for t in INCLUDED_TEETH for j in JAW_ORDER if (t, j) not in by_cell
        ]
        if missing:
            excluded.append((sid, "missing " + ";".join(missing)))
            continue
        if duplicated:
            excluded.append((sid, "duplicated tooth measurement"))
            continue
        features = []
        for measure, tooth, jaw in FEATURE_LAYOUT:
            m = by_cell[(tooth, jaw)][0]
            if measure == "CPCH_mm":
                features.append(float(m.cpch_mm))
            elif measure == "CH_mm":
                features.append(float(m.ch_mm))
            else:
                features.append(compute_tci(m.cpch_mm, m.ch_mm))
        age, gender = demographics[sid]
        kept.append(SubjectRecord(sid, tuple(features), int(age), bin_age(age), Gender(gender)))
    return PivotResult(Dataset(tuple(kept), task), excluded)


@dataclass
class ValidationReport:
    feature_ranges: dict[str, tuple[float, float]]
    violations: list[str]
    class_counts: dict[str, dict[int, int]]

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_dataset(ds: Dataset, tol: float = 1e-9) -> ValidationReport:
    violations: list[str] = []
    X = ds.X
    ranges = {}
    for j, name in enumerate(ds.feature_names):
        col = X[:, j] if len(X) else np.empty(0)
        finite = col[np.isfinite(col)]
        ranges[name] = (float(finite.min()), float(finite.max())) if finite.size else (math.nan, math.nan)

    tci_pairs = [
        (feature_index("TCI", t, j), feature_index("CPCH_mm", t, j), feature_index("CH_mm", t, j))
        for t in INCLUDED_TEETH
        for j in JAW_ORDER
    ]
    for rec in ds.records:
        f = rec.features
        if len(f) != N_FEATURES:
            violations.append(f"{rec.subject_id}: expected {N_FEATURES} features, got {len(f)}")
            continue
        bad = [ds.feature_names[j] for j, v in enumerate(f) if not math.isfinite(v)]
        if bad:
            violations.append(f"{rec.subject_id}: non-finite {', '.join(bad)}")
            continue
        for ti, ci, hi in tci_pairs:
            name = ds.feature_names[ti]
            if not 0 < f[ti] <= 100:
                violations.append(f"{rec.subject_id}: {name}={f[ti]} outside (0, 100]")
            if f[ci] <= 0 or f[hi] <= 0:
                violations.append(f"{rec.subject_id}: non-positive measurement for {name}")
                continue
            expected = f[ci] * 100.0 / f[hi]
            if abs(f[ti] - expected) > tol:
                violations.append(
                    f"{rec.subject_id}: {name}={f[ti]} but CPCH*100/CH={expected}"
                )
        try:
            if bin_age(rec.age_years) != rec.age_group:
                violations.append(f"{rec.subject_id}: age_group does not match age {rec.age_years}")
        except ValidationError as exc:
            violations.append(f"{rec.subject_id}: {exc}")

    counts: dict[str, dict[int, int]] = {}
    for task in Task:
        tally = {c: 0 for c in range(task.n_classes)}
        for rec in ds.records:
            tally[rec.label(task)] = tally.get(rec.label(task), 0) + 1
        counts[task.value] = tally
    return ValidationReport(ranges, violations, counts)


# --- CSV surfaces -----------------------------------------------------------


def _require_columns(header: list[str] | None, required: list[str], path) -> None:
    if not header:
        raise ValidationError(f"{path}: missing header, expected columns {','.join(required)}")
    missing = [c for c in required if c not in header]
    if missing:
        raise ValidationError(f"{path}: missing column(s) {', '.join(missing)}")


def read_long_csv(path: str | Path) -> tuple[list[ToothMeasurement], dict[str, tuple[int, Gender]]]:
    """Parse the long-format measurement file.

    Returns every tooth row (including teeth later filtered out) and the
    per-subject demographics.  Inconsistent demographics for one subject raise.
    """
    measurements: list[ToothMeasurement] = []
    demographics: dict[str, tuple[int, Gender]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, LONG_COLUMNS, path)
        for lineno, row in enumerate(reader, start=2):
            try:
                sid = row["subject_id"].strip()
                if not sid:
                    raise ValidationError("empty subject_id")
                age = int(row["age_years"])
                gender = Gender.parse(row["gender"])
                jaw = Jaw(row["jaw"].strip().lower())
                tooth = Tooth(row["tooth"].strip().lower())
                cpch, ch = float(row["cpch_mm"]), float(row["ch_mm"])
            except (ValueError, TypeError, AttributeError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            bin_age(age)
            if demographics.setdefault(sid, (age, gender)) != (age, gender):
                raise ValidationError(f"{path}:{lineno}: subject {sid} has inconsistent age/gender")
            measurements.append(ToothMeasurement(sid, jaw, tooth, cpch, ch))
    return measurements, demographics


def write_long_csv(
    path: str | Path,
    measurements: Iterable[ToothMeasurement],
    demographics: Mapping[str, tuple[int, Gender]],
) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LONG_COLUMNS)
        for m in measurements:
            age, gender = demographics[m.subject_id]
            w.writerow([m.subject_id, age, Gender(gender).code, m.jaw.value, m.tooth.value,
                        repr(float(m.cpch_mm)), repr(float(m.ch_mm))])


def write_wide_csv(path: str | Path, ds: Dataset) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WIDE_COLUMNS)
        for r in ds.records:
            w.writerow([r.subject_id, *(repr(v) for v in r.features), r.age_years,
                        r.gender.code, int(r.age_group)])


def read_wide_csv(path: str | Path, task: Task = Task.AGE) -> Dataset:
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _require_columns(reader.fieldnames, WIDE_COLUMNS[:-1], path)
        for lineno, row in enumerate(reader, start=2):
            try:
                feats = tuple(float(row[name]) for name in FEATURE_NAMES)
                age = int(row["Age"])
                gender = Gender.parse(row["Gender"])
            except (ValueError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            records.append(SubjectRecord(row["UniqueID"], feats, age, bin_age(age), gender))
    return Dataset(tuple(records), task)


def write_exclusion_log(path: str | Path, excluded: Iterable[tuple[str, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "reason"])
        w.writerows(excluded)
