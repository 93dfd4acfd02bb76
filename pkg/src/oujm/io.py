"""CSV file formats.

``long.csv``: ``id,time,item,value`` one row per observed outcome value (missing values
are absent rows).  ``surv.csv``: ``id,time,event,cov_*``.  Floats are written with 17
significant digits so that a reload is exact.
"""

import csv
import math
import os

import numpy as np

from .dfm import SubjectRecord
from .errors import DataError, OUJMError


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


def write_dataset(out_dir, subjects, items):
    os.makedirs(out_dir, exist_ok=True)
    long_rows = []
    for s in subjects:
        for j, t in enumerate(s.meas_times):
            for k, item in enumerate(items):
                if math.isfinite(s.y[k, j]):
                    long_rows.append([s.id, t, item, s.y[k, j]])
    write_csv(os.path.join(out_dir, "long.csv"), ["id", "time", "item", "value"], long_rows)
    n_cov = max((s.covariates.size for s in subjects), default=0)
    write_csv(
        os.path.join(out_dir, "surv.csv"),
        ["id", "time", "event"] + [f"cov_{c + 1}" for c in range(n_cov)],
        [[s.id, s.event_time, s.event] + list(s.covariates) for s in subjects],
    )


def _read(path, required):
    if not os.path.exists(path):
        raise DataError(f"file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in required if c not in header]
        if missing:
            raise DataError(f"{path}: missing columns {missing}")
        return header, [(lineno, row) for lineno, row in enumerate(reader, start=2)]


def _num(path, lineno, row, col, cast=float):
    try:
        v = cast(row[col])
    except (TypeError, ValueError):
        raise DataError(f"{path}:{lineno}: cannot parse {col}={row[col]!r}") from None
    if cast is float and not math.isfinite(v):
        raise DataError(f"{path}:{lineno}: non-finite {col}")
    return v


def load_data(long_path, surv_path, items):
    """Assemble :class:`SubjectRecord` objects from the two CSV files.

    ``items`` lists the outcome labels in model (mask row) order.
    """
    items = [str(i) for i in items]
    item_pos = {name: k for k, name in enumerate(items)}
    header, surv_rows = _read(surv_path, ["id", "time", "event"])
    cov_cols = sorted((c for c in header if c.startswith("cov_")), key=lambda c: (len(c), c))
    surv = {}
    for lineno, row in surv_rows:
        sid = row["id"]
        if sid in surv:
            raise DataError(f"{surv_path}:{lineno}: duplicate id {sid}")
        event = _num(surv_path, lineno, row, "event", int)
        surv[sid] = (
            _num(surv_path, lineno, row, "time"),
            event,
            np.array([_num(surv_path, lineno, row, c) for c in cov_cols]),
        )
    _, long_rows = _read(long_path, ["id", "time", "item", "value"])
    obs = {}
    unknown_ids = set()
    for lineno, row in long_rows:
        sid = row["id"]
        if sid not in surv:
            unknown_ids.add(sid)
            continue
        item = row["item"]
        if item not in item_pos:
            raise DataError(f"{long_path}:{lineno}: item {item!r} not in the configured items {items}")
        t = _num(long_path, lineno, row, "time")
        if t > surv[sid][0]:
            raise DataError(f"{long_path}:{lineno}: subject {sid} has a measurement at {t} after its event time {surv[sid][0]}")
        obs.setdefault(sid, {}).setdefault(t, {})[item_pos[item]] = _num(long_path, lineno, row, "value")
    if unknown_ids:
        raise DataError(f"ids in {long_path} missing from {surv_path}: {sorted(unknown_ids)[:10]}")
    subjects = []
    for sid, (t_event, event, cov) in surv.items():
        by_time = obs.get(sid)
        if not by_time:
            raise DataError(f"subject {sid} has no longitudinal observations")
        times = np.array(sorted(by_time))
        y = np.full((len(items), times.size), np.nan)
        for j, t in enumerate(times):
            for k, v in by_time[t].items():
                y[k, j] = v
        try:
            subjects.append(SubjectRecord(id=sid, meas_times=times, y=y, event_time=t_event, event=event, covariates=cov))
        except OUJMError as exc:
            raise DataError(str(exc)) from exc
    return subjects
