"""Multiview data model, CSV ingestion and preprocessing transforms.

A view is an ``N x p x t`` array (subjects, variables, time points); ``t == 1``
marks a cross-sectional view.  Class labels are stored 0-based internally and
mapped back to the original label strings through ``class_names``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd


class DataError(ValueError):
    """Raised when input files or tensors violate the data contract."""


@dataclass(frozen=True)
class ViewTensor:
    """One view of the data.

    ``mask`` is ``None`` for complete tensors.  Raw views read with
    :func:`load_raw_view` carry a boolean presence mask and NaN in absent
    cells; only :func:`window_average` and the filters accept those.
    """

    values: np.ndarray
    variable_names: tuple[str, ...]
    time_labels: tuple[float, ...]
    mask: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 3 or min(values.shape) < 1:
            raise DataError(f"view values must be a non-empty 3-d array, got shape {values.shape}")
        n, p, t = values.shape
        names = tuple(str(v) for v in self.variable_names)
        times = tuple(float(x) for x in self.time_labels)
        if len(names) != p:
            raise DataError(f"{len(names)} variable names for {p} variables")
        if len(set(names)) != p:
            raise DataError("duplicate variable names")
        if len(times) != t:
            raise DataError(f"{len(times)} time labels for {t} time points")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DataError("time labels must be strictly increasing")
        mask = self.mask
        if mask is None:
            if not np.all(np.isfinite(values)):
                raise DataError("view contains non-finite values")
        else:
            mask = np.asarray(mask, dtype=bool)
            if mask.shape != values.shape:
                raise DataError("mask shape does not match values")
            if not np.all(np.isfinite(values[mask])):
                raise DataError("view contains non-finite present values")
            if mask.all():
                mask = None
            else:
                values = np.where(mask, values, np.nan)
                mask.setflags(write=False)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "variable_names", names)
        object.__setattr__(self, "time_labels", times)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def n_subjects(self) -> int:
        return self.values.shape[0]

    @property
    def n_variables(self) -> int:
        return self.values.shape[1]

    @property
    def n_times(self) -> int:
        return self.values.shape[2]

    @property
    def is_longitudinal(self) -> bool:
        return self.values.shape[2] > 1

    @property
    def present(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.values.shape, dtype=bool)
        return self.mask

    def take_subjects(self, idx) -> "ViewTensor":
        idx = np.asarray(idx, dtype=int)
        mask = None if self.mask is None else self.mask[idx]
        return ViewTensor(self.values[idx], self.variable_names, self.time_labels, mask)

    def take_variables(self, idx) -> "ViewTensor":
        idx = np.asarray(idx, dtype=int)
        mask = None if self.mask is None else self.mask[:, idx]
        names = tuple(self.variable_names[i] for i in idx)
        return ViewTensor(self.values[:, idx], names, self.time_labels, mask)

    def with_values(self, values: np.ndarray) -> "ViewTensor":
        return replace(self, values=values)


@dataclass(frozen=True)
class MultiViewDataset:
    views: tuple[ViewTensor, ...]
    labels: np.ndarray
    subject_ids: tuple[str, ...]
    class_names: tuple[str, ...] = field(default=())
    view_names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        views = tuple(self.views)
        if not views:
            raise DataError("a dataset needs at least one view")
        labels = np.asarray(self.labels, dtype=int)
        n = len(labels)
        if labels.ndim != 1 or n == 0:
            raise DataError("labels must be a non-empty 1-d sequence")
        for d, v in enumerate(views):
            if v.n_subjects != n:
                raise DataError(f"view {d} has {v.n_subjects} subjects, labels have {n}")
        ids = tuple(str(s) for s in self.subject_ids)
        if len(ids) != n:
            raise DataError("subject_ids and labels differ in length")
        if labels.min() < 0:
            raise DataError("labels must be non-negative class indices")
        k = int(labels.max()) + 1
        names = tuple(self.class_names) or tuple(str(c + 1) for c in range(k))
        if len(names) < k:
            raise DataError("fewer class names than classes")
        if len(names) < 2:
            raise DataError("at least two classes are required")
        vnames = tuple(self.view_names) or tuple(f"view{d + 1}" for d in range(len(views)))
        labels.setflags(write=False)
        object.__setattr__(self, "views", views)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "subject_ids", ids)
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "view_names", vnames)

    @property
    def n_subjects(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def n_views(self) -> int:
        return len(self.views)

    def subset(self, idx) -> "MultiViewDataset":
        """Rows ``idx`` of every view; repeated indices are allowed (bootstrap)."""
        idx = np.asarray(idx, dtype=int)
        return MultiViewDataset(
            tuple(v.take_subjects(idx) for v in self.views),
            self.labels[idx],
            tuple(self.subject_ids[i] for i in idx),
            self.class_names,
            self.view_names,
        )

    def with_views(self, views: Sequence[ViewTensor]) -> "MultiViewDataset":
        return replace(self, views=tuple(views))


# ---------------------------------------------------------------------------
# file IO


def _read_csv(path) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    # pandas infers gzip from the .gz extension
    return pd.read_csv(path, dtype=str, keep_default_na=False)


def load_labels(path) -> tuple[list[str], np.ndarray, tuple[str, ...]]:
    """Read ``subject,label``; label codes are densified in first-appearance order."""
    df = _read_csv(path)
    missing = {"subject", "label"} - set(df.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    subjects = df["subject"].tolist()
    if len(set(subjects)) != len(subjects):
        raise DataError(f"{path}: duplicate subject rows")
    codes: dict[str, int] = {}
    labels = np.array([codes.setdefault(lab, len(codes)) for lab in df["label"]], dtype=int)
    return subjects, labels, tuple(codes)


def _read_long(path, subjects: Sequence[str]):
    df = _read_csv(path)
    missing = {"subject", "variable", "time", "value"} - set(df.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    unknown = sorted(set(df["subject"]) - set(subjects))
    if unknown:
        raise DataError(f"{path}: unknown subject(s) {unknown[:5]}")
    dup = df.duplicated(["subject", "variable", "time"])
    if dup.any():
        row = df[dup].iloc[0]
        raise DataError(
            f"{path}: duplicate cell (subject={row['subject']}, variable={row['variable']}, time={row['time']})"
        )
    variables = list(dict.fromkeys(df["variable"]))
    times_f = df["time"].astype(float)
    times = sorted(set(times_f))
    s_idx = pd.Index(subjects).get_indexer(df["subject"])
    v_idx = pd.Index(variables).get_indexer(df["variable"])
    t_idx = pd.Index(times).get_indexer(times_f)
    values = np.full((len(subjects), len(variables), len(times)), np.nan)
    mask = np.zeros(values.shape, dtype=bool)
    values[s_idx, v_idx, t_idx] = df["value"].astype(float).to_numpy()
    mask[s_idx, v_idx, t_idx] = True
    return values, mask, variables, times


def load_raw_view(path, subjects: Sequence[str]) -> ViewTensor:
    """Read a long-format view allowing absent cells (kept in ``mask``)."""
    values, mask, variables, times = _read_long(path, subjects)
    return ViewTensor(values, variables, times, mask)


def load_dataset(view_files: Sequence, labels_file) -> MultiViewDataset:
    """Assemble a complete dataset from long-format view CSVs and a labels CSV."""
    subjects, labels, class_names = load_labels(labels_file)
    views = []
    for path in view_files:
        values, mask, variables, times = _read_long(path, subjects)
        if not mask.all():
            n, r, t = np.argwhere(~mask)[0]
            raise DataError(
                f"{path}: missing cell (subject={subjects[n]}, variable={variables[r]}, time={_fmt_time(times[t])})"
            )
        views.append(ViewTensor(values, variables, times))
    names = tuple(_view_name(p) for p in view_files)
    if len(set(names)) != len(names):
        names = ()
    return MultiViewDataset(tuple(views), labels, subjects, class_names, names)


def _view_name(path) -> str:
    name = Path(path).name
    for ext in (".csv.gz", ".csv"):
        if name.endswith(ext):
            return name[: -len(ext)]
    return name


def _fmt_time(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(float(t))


def save_view(view: ViewTensor, subject_ids: Sequence[str], path) -> None:
    n, p, t = view.shape
    s, r, k = np.nonzero(view.present)
    df = pd.DataFrame(
        {
            "subject": np.asarray(subject_ids, dtype=object)[s],
            "variable": np.asarray(view.variable_names, dtype=object)[r],
            "time": [_fmt_time(x) for x in np.asarray(view.time_labels)[k]],
            # repr round-trips float64 exactly
            "value": [repr(float(x)) for x in view.values[s, r, k]],
        }
    )
    df.to_csv(path, index=False)


def save_dataset(dataset: MultiViewDataset, out_dir, view_names: Sequence[str] | None = None) -> list[Path]:
    """Write ``<view>.csv`` per view plus ``labels.csv``; returns the view paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = list(view_names or dataset.view_names)
    paths = []
    for name, view in zip(names, dataset.views):
        path = out / f"{name}.csv"
        save_view(view, dataset.subject_ids, path)
        paths.append(path)
    pd.DataFrame(
        {"subject": dataset.subject_ids, "label": [dataset.class_names[c] for c in dataset.labels]}
    ).to_csv(out / "labels.csv", index=False)
    return paths


# ---------------------------------------------------------------------------
# preprocessing


def window_average(view: ViewTensor, window_len: int, n_groups: int,
                   subject_ids: Sequence[str] | None = None) -> ViewTensor:
    """Average present cells over consecutive week windows.

    Group ``g`` (0-based) covers time labels ``[g*window_len, (g+1)*window_len)``.
    An empty group copies the previous group; an empty first group is an error.
    """
    if window_len < 1 or n_groups < 1:
        raise ValueError("window_len and n_groups must be positive")
    times = np.asarray(view.time_labels)
    present = view.present
    vals = np.where(present, view.values, 0.0)
    n, p, _ = view.shape
    out = np.empty((n, p, n_groups))
    for g in range(n_groups):
        lo, hi = g * window_len, (g + 1) * window_len
        cols = (times >= lo) & (times < hi)
        cnt = present[:, :, cols].sum(axis=2)
        tot = vals[:, :, cols].sum(axis=2)
        with np.errstate(invalid="ignore", divide="ignore"):
            avg = tot / cnt
        if g == 0:
            empty = cnt == 0
            if empty.any():
                s, r = np.argwhere(empty)[0]
                who = subject_ids[s] if subject_ids is not None else f"#{s}"
                raise DataError(
                    f"subject {who} has no data in the first window (variable {view.variable_names[r]})"
                )
            out[:, :, 0] = avg
        else:
            out[:, :, g] = np.where(cnt > 0, avg, out[:, :, g - 1])
    labels = [float(g * window_len) for g in range(n_groups)]
    return ViewTensor(out, view.variable_names, labels)


def log_pseudo(view: ViewTensor, pseudocount: float = 1.0) -> ViewTensor:
    if pseudocount <= 0:
        raise ValueError("pseudocount must be positive")
    present = view.values[view.present]
    if np.any(present < 0):
        raise DataError("log_pseudo requires non-negative values")
    return view.with_values(np.log(view.values + pseudocount))


def _kept(view: ViewTensor, keep: np.ndarray, what: str):
    kept = np.flatnonzero(keep)
    if kept.size == 0:
        raise DataError(f"{what} removed every variable")
    return view.take_variables(kept), kept.tolist()


def zero_fraction_filter(view: ViewTensor, max_zero_frac: float):
    """Keep variables whose fraction of exact zeros is strictly below ``max_zero_frac``."""
    present = view.present
    zeros = ((view.values == 0) & present).sum(axis=(0, 2))
    total = present.sum(axis=(0, 2))
    frac = zeros / np.maximum(total, 1)
    return _kept(view, frac < max_zero_frac, "zero-fraction filter")


def variance_filter(view: ViewTensor, cutoff: float):
    """Keep variables whose sample variance (ddof=1) over all cells exceeds ``cutoff``."""
    if cutoff < 0:
        raise ValueError("cutoff must be non-negative")
    n, p, t = view.shape
    flat = view.values.transpose(1, 0, 2).reshape(p, n * t)
    with np.errstate(invalid="ignore"):
        var = np.nanvar(flat, axis=1, ddof=1) if view.mask is not None else flat.var(axis=1, ddof=1)
    var = np.nan_to_num(var, nan=0.0)
    return _kept(view, var > cutoff, "variance filter")

