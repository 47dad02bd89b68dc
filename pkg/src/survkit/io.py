"""File ingestion and experiment configuration.

Two comma-separated inputs define a cohort: a feature table
(``subject_id`` plus one numeric column per feature) and a survival table
(``subject_id``, ``time``, ``event``). Parsing is strict: every error
carries the file, row and column it came from, and missing values are
rejected rather than imputed.

Experiment configuration is a plain-text INI document; parse and
serialize round-trip exactly.
"""

from __future__ import annotations

import configparser
import csv
import io as _stringio
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import Cohort
from .cox import FitConfig
from .errors import DataValidationError
from .harness import PIPELINE_KINDS, PipelineSpec, SplitPlan, SyntheticSpec
from .net import HEADS, TrainConfig
from .selection import SelectionConfig

__all__ = [
    "FeatureTable",
    "SurvivalTable",
    "LoadedCohort",
    "read_feature_table",
    "read_survival_table",
    "load_cohort",
    "cohort_from_survival",
    "write_feature_table",
    "write_survival_table",
    "write_cohort",
    "ExperimentConfig",
    "parse_experiment_config",
    "serialize_experiment_config",
    "default_experiment_config",
]


@dataclass(frozen=True)
class FeatureTable:
    """Parsed feature file: one numeric row per subject."""

    feature_names: tuple[str, ...]
    ids: tuple[str, ...]
    values: np.ndarray


@dataclass(frozen=True)
class SurvivalTable:
    """Parsed survival file: follow-up time and event flag per subject."""

    ids: tuple[str, ...]
    times: np.ndarray
    events: np.ndarray


@dataclass(frozen=True)
class LoadedCohort:
    """Join result plus the ids that appeared in only one of the files."""

    cohort: Cohort
    features_only: tuple[str, ...]
    survival_only: tuple[str, ...]


def _read_rows(path) -> list[list[str]]:
    p = Path(path)
    if not p.exists():
        raise DataValidationError(f"{p}: file not found")
    with open(p, newline="") as f:
        rows = [row for row in csv.reader(f)]
    if not rows:
        raise DataValidationError(f"{p}: file is empty")
    return rows


def _parse_number(cell: str, path, row: int, column: str) -> float:
    text = cell.strip()
    if text == "":
        raise DataValidationError(
            f"{path}: row {row}, column '{column}': empty cell (missing values are rejected)"
        )
    try:
        value = float(text)
    except ValueError:
        raise DataValidationError(
            f"{path}: row {row}, column '{column}': cannot parse {cell!r} as a number"
        ) from None
    if not np.isfinite(value):
        raise DataValidationError(
            f"{path}: row {row}, column '{column}': value must be finite, got {cell!r}"
        )
    return value


def read_feature_table(path) -> FeatureTable:
    """Parse ``subject_id,<feature...>`` with full row/column provenance."""
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "subject_id":
        raise DataValidationError(f"{path}: row 1: first column must be 'subject_id'")
    names = header[1:]
    if not names:
        raise DataValidationError(f"{path}: row 1: no feature columns after 'subject_id'")
    if len(set(names)) != len(names):
        raise DataValidationError(f"{path}: row 1: duplicate feature column names")
    ids: list[str] = []
    seen: dict[str, int] = {}
    values = np.empty((len(rows) - 1, len(names)))
    for i, row in enumerate(rows[1:]):
        rn = i + 2
        if len(row) != len(header):
            raise DataValidationError(
                f"{path}: row {rn}: expected {len(header)} cells, got {len(row)}"
            )
        sid = row[0].strip()
        if sid == "":
            raise DataValidationError(f"{path}: row {rn}: empty subject_id")
        if sid in seen:
            raise DataValidationError(
                f"{path}: row {rn}: duplicate subject_id {sid!r} (first at row {seen[sid]})"
            )
        seen[sid] = rn
        ids.append(sid)
        for j, cell in enumerate(row[1:]):
            values[i, j] = _parse_number(cell, path, rn, names[j])
    return FeatureTable(feature_names=tuple(names), ids=tuple(ids), values=values)


def read_survival_table(path) -> SurvivalTable:
    """Parse ``subject_id,time,event``; any column order, no extras."""
    rows = _read_rows(path)
    header = [h.strip() for h in rows[0]]
    required = ("subject_id", "time", "event")
    for col in required:
        if col not in header:
            raise DataValidationError(f"{path}: row 1: missing required column '{col}'")
    extra = [h for h in header if h not in required]
    if extra:
        raise DataValidationError(f"{path}: row 1: unexpected column(s) {extra}")
    if len(header) != 3:
        raise DataValidationError(f"{path}: row 1: duplicate columns in header")
    col = {name: header.index(name) for name in required}
    ids: list[str] = []
    seen: dict[str, int] = {}
    times = np.empty(len(rows) - 1)
    events = np.empty(len(rows) - 1, dtype=int)
    for i, row in enumerate(rows[1:]):
        rn = i + 2
        if len(row) != 3:
            raise DataValidationError(f"{path}: row {rn}: expected 3 cells, got {len(row)}")
        sid = row[col["subject_id"]].strip()
        if sid == "":
            raise DataValidationError(f"{path}: row {rn}: empty subject_id")
        if sid in seen:
            raise DataValidationError(
                f"{path}: row {rn}: duplicate subject_id {sid!r} (first at row {seen[sid]})"
            )
        seen[sid] = rn
        ids.append(sid)
        t = _parse_number(row[col["time"]], path, rn, "time")
        if t < 0:
            raise DataValidationError(f"{path}: row {rn}, column 'time': must be >= 0, got {t}")
        times[i] = t
        ev_raw = row[col["event"]].strip()
        if ev_raw not in ("0", "1"):
            raise DataValidationError(
                f"{path}: row {rn}, column 'event': must be 0 or 1, got {ev_raw!r}"
            )
        events[i] = int(ev_raw)
    return SurvivalTable(ids=tuple(ids), times=times, events=events)


def load_cohort(features_path, survival_path) -> LoadedCohort:
    """Inner join of the two files on subject id, rows sorted by id."""
    ft = read_feature_table(features_path)
    st = read_survival_table(survival_path)
    f_ids = set(ft.ids)
    s_ids = set(st.ids)
    common = sorted(f_ids & s_ids)
    if not common:
        raise DataValidationError(
            f"no overlapping subject ids between {features_path} and {survival_path}"
        )
    f_index = {sid: i for i, sid in enumerate(ft.ids)}
    s_index = {sid: i for i, sid in enumerate(st.ids)}
    rows_f = [f_index[sid] for sid in common]
    rows_s = [s_index[sid] for sid in common]
    cohort = Cohort.from_arrays(
        common,
        st.times[rows_s],
        st.events[rows_s],
        ft.values[rows_f],
        ft.feature_names,
    )
    return LoadedCohort(
        cohort=cohort,
        features_only=tuple(sorted(f_ids - s_ids)),
        survival_only=tuple(sorted(s_ids - f_ids)),
    )


def cohort_from_survival(st: SurvivalTable) -> Cohort:
    """Featureless cohort (for curve estimation), rows sorted by id."""
    order = sorted(range(len(st.ids)), key=lambda i: st.ids[i])
    return Cohort.from_arrays(
        [st.ids[i] for i in order],
        st.times[order],
        st.events[order],
        np.zeros((len(st.ids), 0)),
        (),
    )


def write_feature_table(path, ids: Sequence[str], values: np.ndarray, names: Sequence[str]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["subject_id", *names])
        for sid, row in zip(ids, np.asarray(values)):
            w.writerow([sid, *[repr(float(v)) for v in row]])


def write_survival_table(path, ids: Sequence[str], times: np.ndarray, events: np.ndarray) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["subject_id", "time", "event"])
        for sid, t, e in zip(ids, times, events):
            w.writerow([sid, repr(float(t)), int(e)])


def write_cohort(cohort: Cohort, features_path, survival_path) -> None:
    write_feature_table(features_path, cohort.ids, cohort.features, cohort.feature_names)
    write_survival_table(survival_path, cohort.ids, cohort.times, cohort.events)


# ---------------------------------------------------------------------------
# Experiment configuration (INI text)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything an experiment run needs, parseable from one INI file."""

    split: SplitPlan = SplitPlan()
    pipelines: tuple[str, ...] = ("cox_provided_features",)
    selection: SelectionConfig = SelectionConfig()
    fit: FitConfig = FitConfig()
    train: TrainConfig = TrainConfig()
    net_head: str = "hazard_linear"
    hidden: tuple[int, ...] = (32, 16)
    workers: int = 1
    synthetic: Optional[SyntheticSpec] = None

    def __post_init__(self):
        for kind in self.pipelines:
            if kind not in PIPELINE_KINDS:
                raise DataValidationError(f"unknown pipeline kind {kind!r}")
        if not self.pipelines:
            raise DataValidationError("at least one pipeline is required")
        if self.net_head not in HEADS:
            raise DataValidationError(f"unknown net head {self.net_head!r}")
        if self.workers < 1:
            raise DataValidationError("workers must be >= 1")

    def pipeline_specs(self) -> tuple[PipelineSpec, ...]:
        return tuple(
            PipelineSpec(
                kind=kind,
                selection=self.selection,
                fit=self.fit,
                train=self.train,
                head=self.net_head,
                hidden=self.hidden,
            )
            for kind in self.pipelines
        )


_SCHEMA = {
    "split": ("n_repeats", "train_fraction", "val_fraction", "test_fraction", "master_seed"),
    "experiment": ("pipelines", "net_head", "hidden", "workers"),
    "selection": ("correlation_threshold", "max_features", "min_univariate_cindex"),
    "fit": ("max_iterations", "tolerance", "ridge", "step_halving_max", "beta_norm_limit"),
    "train": (
        "batch_size",
        "epochs",
        "learning_rate",
        "early_stopping_patience",
        "validation_metric",
        "weight_decay",
        "rng_seed",
    ),
    "synthetic": ("n", "beta_true", "baseline_rate", "censoring_rate", "noise_features", "seed"),
}


def _check_schema(cp: configparser.ConfigParser) -> None:
    for section in cp.sections():
        if section not in _SCHEMA:
            raise DataValidationError(f"config: unknown section [{section}]")
        for key in cp[section]:
            if key not in _SCHEMA[section]:
                raise DataValidationError(f"config: unknown key '{key}' in section [{section}]")


class _Section:
    def __init__(self, cp: configparser.ConfigParser, name: str):
        self.name = name
        self.sec = cp[name] if cp.has_section(name) else {}

    def _get(self, key, cast, default):
        if key not in self.sec:
            return default
        raw = self.sec[key]
        try:
            return cast(raw)
        except (ValueError, TypeError):
            raise DataValidationError(
                f"config: [{self.name}] {key} = {raw!r} is not a valid value"
            ) from None

    def int(self, key, default):
        return self._get(key, int, default)

    def float(self, key, default):
        return self._get(key, float, default)

    def str(self, key, default):
        return self._get(key, lambda s: s.strip(), default)

    def floats(self, key, default):
        return self._get(
            key, lambda s: tuple(float(x) for x in s.split(",") if x.strip()), default
        )

    def ints(self, key, default):
        return self._get(key, lambda s: tuple(int(x) for x in s.split(",") if x.strip()), default)

    def strs(self, key, default):
        return self._get(
            key, lambda s: tuple(x.strip() for x in s.split(",") if x.strip()), default
        )


def parse_experiment_config(text: str) -> ExperimentConfig:
    """Parse the INI experiment document; absent keys take their defaults."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise DataValidationError(f"config parse error: {exc}") from None
    _check_schema(cp)

    sp = _Section(cp, "split")
    split = SplitPlan(
        n_repeats=sp.int("n_repeats", 100),
        fractions=(
            sp.float("train_fraction", 0.60),
            sp.float("val_fraction", 0.15),
            sp.float("test_fraction", 0.25),
        ),
        master_seed=sp.int("master_seed", 0),
    )
    se = _Section(cp, "selection")
    selection = SelectionConfig(
        correlation_threshold=se.float("correlation_threshold", 0.8),
        max_features=se.int("max_features", 10),
        min_univariate_cindex=se.float("min_univariate_cindex", 0.5),
    )
    fi = _Section(cp, "fit")
    fit = FitConfig(
        max_iterations=fi.int("max_iterations", 100),
        tolerance=fi.float("tolerance", 1e-8),
        ridge=fi.float("ridge", 1e-9),
        step_halving_max=fi.int("step_halving_max", 30),
        beta_norm_limit=fi.float("beta_norm_limit", 50.0),
    )
    tr = _Section(cp, "train")
    train = TrainConfig(
        batch_size=tr.int("batch_size", 32),
        epochs=tr.int("epochs", 100),
        learning_rate=tr.float("learning_rate", 0.01),
        early_stopping_patience=tr.int("early_stopping_patience", 10),
        validation_metric=tr.str("validation_metric", "cindex"),
        weight_decay=tr.float("weight_decay", 0.0),
        rng_seed=tr.int("rng_seed", 0),
    )
    ex = _Section(cp, "experiment")
    synthetic = None
    if cp.has_section("synthetic"):
        sy = _Section(cp, "synthetic")
        if "n" not in cp["synthetic"]:
            raise DataValidationError("config: [synthetic] requires 'n'")
        synthetic = SyntheticSpec(
            n=sy.int("n", 0),
            beta_true=sy.floats("beta_true", ()),
            baseline_rate=sy.float("baseline_rate", 0.1),
            censoring_rate=sy.float("censoring_rate", 0.04),
            noise_features=sy.int("noise_features", 0),
            seed=sy.int("seed", 0),
        )
    return ExperimentConfig(
        split=split,
        pipelines=ex.strs("pipelines", ("cox_provided_features",)),
        selection=selection,
        fit=fit,
        train=train,
        net_head=ex.str("net_head", "hazard_linear"),
        hidden=ex.ints("hidden", (32, 16)),
        workers=ex.int("workers", 1),
        synthetic=synthetic,
    )


def serialize_experiment_config(cfg: ExperimentConfig) -> str:
    """Canonical INI rendering; parse(serialize(cfg)) == cfg."""
    cp = configparser.ConfigParser()
    cp["split"] = {
        "n_repeats": str(cfg.split.n_repeats),
        "train_fraction": repr(cfg.split.fractions[0]),
        "val_fraction": repr(cfg.split.fractions[1]),
        "test_fraction": repr(cfg.split.fractions[2]),
        "master_seed": str(cfg.split.master_seed),
    }
    cp["experiment"] = {
        "pipelines": ", ".join(cfg.pipelines),
        "net_head": cfg.net_head,
        "hidden": ", ".join(str(h) for h in cfg.hidden),
        "workers": str(cfg.workers),
    }
    cp["selection"] = {
        "correlation_threshold": repr(cfg.selection.correlation_threshold),
        "max_features": str(cfg.selection.max_features),
        "min_univariate_cindex": repr(cfg.selection.min_univariate_cindex),
    }
    cp["fit"] = {
        "max_iterations": str(cfg.fit.max_iterations),
        "tolerance": repr(cfg.fit.tolerance),
        "ridge": repr(cfg.fit.ridge),
        "step_halving_max": str(cfg.fit.step_halving_max),
        "beta_norm_limit": repr(cfg.fit.beta_norm_limit),
    }
    cp["train"] = {
        "batch_size": str(cfg.train.batch_size),
        "epochs": str(cfg.train.epochs),
        "learning_rate": repr(cfg.train.learning_rate),
        "early_stopping_patience": str(cfg.train.early_stopping_patience),
        "validation_metric": cfg.train.validation_metric,
        "weight_decay": repr(cfg.train.weight_decay),
        "rng_seed": str(cfg.train.rng_seed),
    }
    if cfg.synthetic is not None:
        cp["synthetic"] = {
            "n": str(cfg.synthetic.n),
            "beta_true": ", ".join(repr(b) for b in cfg.synthetic.beta_true),
            "baseline_rate": repr(cfg.synthetic.baseline_rate),
            "censoring_rate": repr(cfg.synthetic.censoring_rate),
            "noise_features": str(cfg.synthetic.noise_features),
            "seed": str(cfg.synthetic.seed),
        }
    buf = _stringio.StringIO()
    cp.write(buf)
    return buf.getvalue()


def default_experiment_config() -> ExperimentConfig:
    return ExperimentConfig()
