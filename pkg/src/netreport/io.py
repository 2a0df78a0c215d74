"""CSV and JSON formats for records, margins, populations and results.

Respondent files have one row per respondent and a fixed block of columns per
detailed-alter slot::

    respondent_id,group,design_weight,degree,n_alters,
    alter1_hidden,alter1_frame,alter1_group,alter1_aware,alter2_hidden,...

The number of slots (``max_alters``) is read from the header width.  Files
written without the ``_aware`` columns are also accepted; their alters are
treated as aware and :attr:`RespondentFile.has_awareness` is False.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import time
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DataError, ValidationError
from .estimators import FrameMargins
from .population import Population
from .records import RespondentRecord, SurveyData, as_survey_data
from .rng import RNG_ALGORITHM

SCHEMA_VERSION = "1"
BASE_COLUMNS = ("respondent_id", "group", "design_weight", "degree", "n_alters")
ALTER_FIELDS = ("hidden", "frame", "group", "aware")
IC_COLUMNS = ("group", "delta", "delta_raw", "k", "ci_low", "ci_high", "n_respondents_in", "n_respondents_out")


def respondent_header(max_alters: int, awareness: bool = True) -> list[str]:
    fields = ALTER_FIELDS if awareness else ALTER_FIELDS[:3]
    return list(BASE_COLUMNS) + [f"alter{k}_{f}" for k in range(1, max_alters + 1) for f in fields]


def format_number(x) -> str:
    """Integers as integers, floats with 17 significant digits."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _format_weight(x: float) -> str:
    # shortest text that reads back to the same double
    x = float(x)
    return str(int(x)) if x.is_integer() and abs(x) < 2**53 else repr(x)


def file_digest(path: str | os.PathLike) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_text(path: str | os.PathLike, text: str) -> None:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise DataError(f"cannot write output: {exc.strerror}", path=str(path)) from None


def _read_rows(path) -> tuple[list[str], list[tuple[int, list[str]]]]:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise DataError("file is empty", path=str(path)) from None
            rows = [(reader.line_num, row) for row in reader if row]
    except FileNotFoundError:
        raise DataError("file not found", path=str(path)) from None
    except UnicodeDecodeError:
        raise DataError("file is not valid UTF-8", path=str(path)) from None
    return header, rows


# -- respondents ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RespondentFile:
    data: SurveyData
    max_alters: int
    has_awareness: bool
    digest: str


def _parse_header(header: list[str], path) -> tuple[int, bool]:
    if tuple(header[:5]) != BASE_COLUMNS:
        raise DataError(f"header must start with {','.join(BASE_COLUMNS)}", row=1, path=path)
    rest = len(header) - 5
    for width, aware in ((4, True), (3, False)):
        if rest > 0 and rest % width == 0 and header == respondent_header(rest // width, aware):
            return rest // width, aware
    raise DataError(
        "alter columns must be alter{k}_hidden,alter{k}_frame,alter{k}_group,alter{k}_aware for k = 1..max_alters",
        row=1,
        path=path,
    )


def _flag(value: str, col: str, line: int, path) -> bool:
    if value == "1":
        return True
    if value == "0":
        return False
    raise DataError(f"{col} must be 0 or 1, got {value!r}", row=line, path=path)


def _int(value: str, col: str, line: int, path) -> int:
    try:
        v = int(value)
    except ValueError:
        raise DataError(f"{col} must be an integer, got {value!r}", row=line, path=path) from None
    if v < 0:
        raise DataError(f"{col} must be non-negative, got {v}", row=line, path=path)
    return v


def read_respondent_file(path, known_groups: Iterable[str] | None = None) -> RespondentFile:
    """Parse and validate a respondent CSV.

    ``known_groups`` (e.g. the margin groups) turns unknown respondent or
    alter group labels into errors.  Every error names the file line.
    """
    path = str(path)
    header, rows = _read_rows(path)
    k, aware_cols = _parse_header(header, path)
    known = None if known_groups is None else set(known_groups)
    width = len(header)
    stride = 4 if aware_cols else 3

    n = len(rows)
    ids = []
    groups = []
    weights = np.empty(n)
    degree = np.empty(n, dtype=np.int64)
    n_alt = np.empty(n, dtype=np.int64)
    hid = np.zeros((n, k), dtype=bool)
    frm = np.zeros((n, k), dtype=bool)
    awr = np.zeros((n, k), dtype=bool)
    agr = np.full((n, k), "", dtype=object)
    seen: dict[str, int] = {}

    for i, (line, row) in enumerate(rows):
        if len(row) != width:
            raise DataError(f"expected {width} fields, found {len(row)}", row=line, path=path)
        rid, grp, w_txt, d_txt, r_txt = row[:5]
        if rid == "":
            raise DataError("respondent_id is empty", row=line, path=path)
        if rid in seen:
            raise DataError(f"duplicate respondent_id {rid!r} (first on row {seen[rid]})", row=line, path=path)
        seen[rid] = line
        if known is not None and grp not in known:
            raise DataError(f"unknown group label {grp!r}", row=line, path=path)
        try:
            w = float(w_txt)
        except ValueError:
            raise DataError(f"design_weight must be a number, got {w_txt!r}", row=line, path=path) from None
        if w < 0:
            raise DataError(f"negative design_weight {w_txt}", row=line, path=path)
        if not (w > 0 and math.isfinite(w)):
            raise DataError(f"design_weight must be positive and finite, got {w_txt}", row=line, path=path)
        d = _int(d_txt, "degree", line, path)
        r = _int(r_txt, "n_alters", line, path)
        if r > d:
            raise DataError(f"n_alters ({r}) exceeds degree ({d})", row=line, path=path)
        if r > k:
            raise DataError(f"n_alters ({r}) exceeds the {k} alter slots in the header", row=line, path=path)
        for j in range(k):
            cells = row[5 + stride * j: 5 + stride * (j + 1)]
            tag = f"alter{j + 1}"
            if j >= r:
                if any(c != "" for c in cells):
                    raise DataError(f"{tag} is filled in but n_alters is {r}", row=line, path=path)
                continue
            hid[i, j] = _flag(cells[0], f"{tag}_hidden", line, path)
            frm[i, j] = _flag(cells[1], f"{tag}_frame", line, path)
            if known is not None and cells[2] not in known:
                raise DataError(f"unknown group label {cells[2]!r} in {tag}_group", row=line, path=path)
            agr[i, j] = cells[2]
            awr[i, j] = _flag(cells[3], f"{tag}_aware", line, path) if aware_cols else True
        ids.append(rid)
        groups.append(grp)
        weights[i] = w
        degree[i] = d
        n_alt[i] = r

    data = SurveyData(
        np.asarray(ids, dtype=object).astype(str),
        np.asarray(groups, dtype=object).astype(str),
        weights,
        degree,
        n_alt,
        hid,
        frm,
        agr.astype(str),
        awr,
    )
    return RespondentFile(data, k, aware_cols, file_digest(path))


def load_respondents(path, known_groups: Iterable[str] | None = None) -> list[RespondentRecord]:
    return read_respondent_file(path, known_groups).data.to_records()


def load_survey_data(path, known_groups: Iterable[str] | None = None) -> SurveyData:
    return read_respondent_file(path, known_groups).data


def respondents_to_csv(records, max_alters: int | None = None, awareness: bool = True) -> str:
    data = as_survey_data(records)
    k = data.max_alters if max_alters is None else max_alters
    if np.any(data.n_alters > k):
        raise ValidationError(f"a record has more than max_alters={k} alters")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(respondent_header(k, awareness))
    for i in range(len(data)):
        r = int(data.n_alters[i])
        row = [
            data.respondent_id[i], data.group[i], _format_weight(data.design_weight[i]),
            str(int(data.degree[i])), str(r),
        ]
        for j in range(k):
            if j < r:
                cells = [
                    "1" if data.alter_hidden[i, j] else "0",
                    "1" if data.alter_frame[i, j] else "0",
                    data.alter_group[i, j],
                    "1" if data.alter_aware[i, j] else "0",
                ]
            else:
                cells = ["", "", "", ""]
            row.extend(cells if awareness else cells[:3])
        writer.writerow(row)
    return buf.getvalue()


def save_respondents(records, path, max_alters: int | None = None, awareness: bool = True) -> None:
    _write_text(path, respondents_to_csv(records, max_alters, awareness))


# -- margins -------------------------------------------------------------------------


def load_margins(path) -> FrameMargins:
    path = str(path)
    header, rows = _read_rows(path)
    if header != ["group", "count"]:
        raise DataError("header must be group,count", row=1, path=path)
    counts: dict[str, int] = {}
    for line, row in rows:
        if len(row) != 2:
            raise DataError(f"expected 2 fields, found {len(row)}", row=line, path=path)
        g, c = row
        if g == "":
            raise DataError("group label is empty", row=line, path=path)
        if g in counts:
            raise DataError(f"duplicate group {g!r}", row=line, path=path)
        try:
            v = int(c)
        except ValueError:
            raise DataError(f"count for group {g!r} must be a positive integer, got {c!r}", row=line, path=path) from None
        if v <= 0:
            raise DataError(f"count for group {g!r} must be positive, got {v}", row=line, path=path)
        counts[g] = v
    if not counts:
        raise DataError("no margin rows", path=path)
    return FrameMargins(counts)


def save_margins(margins: FrameMargins | Mapping[str, int], path) -> None:
    m = margins if isinstance(margins, FrameMargins) else FrameMargins(margins)
    lines = ["group,count"] + [f"{g},{int(c)}" for g, c in m.by_group.items()]
    _write_text(path, "\n".join(lines) + "\n")


def margins_from_population(pop: Population) -> FrameMargins:
    labels, counts = np.unique(pop.groups[pop.frame], return_counts=True)
    return FrameMargins({str(g): int(c) for g, c in zip(labels, counts)})


# -- populations -----------------------------------------------------------------------


def population_paths(prefix) -> tuple[Path, Path]:
    prefix = str(prefix)
    return Path(prefix + "_nodes.csv"), Path(prefix + "_edges.csv")


def save_population(pop: Population, prefix) -> tuple[Path, Path]:
    """Write ``{prefix}_nodes.csv`` and ``{prefix}_edges.csv`` (node ids, not indices)."""
    nodes_path, edges_path = population_paths(prefix)
    with_comm = pop.community is not None
    lines = ["node_id,in_frame,in_hidden,group" + (",community" if with_comm else "")]
    for k in range(pop.n_total):
        row = f"{int(pop.node_ids[k])},{int(pop.frame[k])},{int(pop.hidden[k])},{pop.groups[k]}"
        if with_comm:
            row += f",{int(pop.community[k])}"
        lines.append(row)
    _write_text(nodes_path, "\n".join(lines) + "\n")
    ids = pop.node_ids
    elines = ["source,target"] + [f"{int(ids[a])},{int(ids[b])}" for a, b in pop.edges]
    _write_text(edges_path, "\n".join(elines) + "\n")
    return nodes_path, edges_path


def load_population(prefix) -> Population:
    nodes_path, edges_path = population_paths(prefix)
    header, rows = _read_rows(nodes_path)
    base = ["node_id", "in_frame", "in_hidden", "group"]
    if header not in (base, base + ["community"]):
        raise DataError("header must be node_id,in_frame,in_hidden,group[,community]", row=1, path=str(nodes_path))
    ids, frame, hidden, groups, comm = [], [], [], [], []
    for line, row in rows:
        if len(row) != len(header):
            raise DataError(f"expected {len(header)} fields, found {len(row)}", row=line, path=str(nodes_path))
        ids.append(_int(row[0], "node_id", line, str(nodes_path)))
        frame.append(_flag(row[1], "in_frame", line, str(nodes_path)))
        hidden.append(_flag(row[2], "in_hidden", line, str(nodes_path)))
        groups.append(row[3])
        if len(row) == 5:
            comm.append(_int(row[4], "community", line, str(nodes_path)))
    eheader, erows = _read_rows(edges_path)
    if eheader != ["source", "target"]:
        raise DataError("header must be source,target", row=1, path=str(edges_path))
    edges = []
    for line, row in erows:
        if len(row) != 2:
            raise DataError("expected 2 fields", row=line, path=str(edges_path))
        edges.append((_int(row[0], "source", line, str(edges_path)), _int(row[1], "target", line, str(edges_path))))
    frame_ids = [i for i, f in zip(ids, frame) if f]
    hidden_ids = [i for i, h in zip(ids, hidden) if h]
    try:
        return Population.from_edges(
            ids, edges, frame_ids, hidden_ids, groups, comm if comm else None
        )
    except ValidationError as exc:
        raise DataError(str(exc), path=str(nodes_path)) from None


# -- results ---------------------------------------------------------------------------


@dataclass
class RunMetadata:
    """Provenance written next to every result file.

    ``timestamp`` honours ``SOURCE_DATE_EPOCH`` so reruns can be byte-identical.
    """

    command: str
    seeds: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)
    input_digests: dict = field(default_factory=dict)
    excluded_records: int = 0
    degenerate_replicates: int = 0
    toolkit_version: str = __version__
    rng_algorithm: str = RNG_ALGORITHM
    schema_version: str = SCHEMA_VERSION
    timestamp: str = ""

    def __post_init__(self) -> None:
        if not self.timestamp:
            self.timestamp = current_timestamp()


def current_timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = int(epoch) if epoch else int(time.time())
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _json_value(v) -> str:
    if isinstance(v, Mapping):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_json_value(x)}" for k, x in v.items()) + "}"
    if isinstance(v, (list, tuple, np.ndarray)):
        return "[" + ", ".join(_json_value(x) for x in v) + "]"
    if v is None:
        return "null"
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer, float, np.floating)):
        if isinstance(v, (float, np.floating)) and not math.isfinite(float(v)):
            return "null"
        return format_number(v)
    return json.dumps(str(v), ensure_ascii=False)


def to_json(obj) -> str:
    """JSON with key order preserved and floats at 17 significant digits."""
    return _json_value(obj) + "\n"


def rows_to_csv(rows: Sequence[Mapping], columns: Sequence[str] | None = None) -> str:
    cols = list(columns) if columns is not None else (list(rows[0]) if rows else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for row in rows:
        writer.writerow([
            format_number(row[c]) if isinstance(row[c], (int, float, np.integer, np.floating)) else
            ("" if row[c] is None else str(row[c]))
            for c in cols
        ])
    return buf.getvalue()


def metadata_path(path) -> Path:
    p = Path(path)
    return p.with_name(p.name + ".meta.json")


def emit_results(
    rows: Sequence[Mapping],
    path,
    fmt: str = "csv",
    metadata: RunMetadata | None = None,
    columns: Sequence[str] | None = None,
) -> tuple[Path, Path]:
    """Write tidy result rows as CSV or JSON plus a ``.meta.json`` sidecar.

    ``path`` is used as given; the caller picks the extension.
    """
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unknown output format {fmt!r}")
    path = Path(path)
    if fmt == "csv":
        text = rows_to_csv(rows, columns)
    else:
        cols = list(columns) if columns is not None else None
        text = to_json([{c: r[c] for c in (cols or r)} for r in rows])
    _write_text(path, text)
    meta = metadata if metadata is not None else RunMetadata(command="emit")
    mpath = metadata_path(path)
    _write_text(mpath, to_json(asdict(meta)))
    return path, mpath


def read_result_rows(path) -> list[dict]:
    """Read back a CSV or JSON result file (numbers as float, text as str)."""
    path = Path(path)
    if path.suffix == ".json":
        return json.loads(path.read_text(encoding="utf-8"))
    with open(path, encoding="utf-8", newline="") as fh:
        out = []
        for row in csv.DictReader(fh):
            conv = {}
            for k, v in row.items():
                try:
                    conv[k] = float(v)
                except ValueError:
                    conv[k] = v
            out.append(conv)
        return out


def ic_rows(checks) -> list[dict]:
    return [
        {
            "group": c.group, "delta": c.delta, "delta_raw": c.delta_raw, "k": c.k_factor,
            "ci_low": c.ci_low, "ci_high": c.ci_high,
            "n_respondents_in": c.n_respondents_in, "n_respondents_out": c.n_respondents_out,
        }
        for c in checks
    ]


def replicate_weights_csv(respondent_ids: Sequence[str], weights: np.ndarray) -> str:
    """``respondent_id,rep_001,...`` with one row per respondent."""
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    width = max(3, len(str(w.shape[0])))
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["respondent_id"] + [f"rep_{b + 1:0{width}d}" for b in range(w.shape[0])])
    for i, rid in enumerate(respondent_ids):
        writer.writerow([rid] + [format_number(x) for x in w[:, i]])
    return buf.getvalue()


def save_replicate_weights(respondent_ids, weights, path) -> None:
    _write_text(path, replicate_weights_csv(respondent_ids, weights))


# -- run configuration ------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    """Flat ``key = value`` settings for one command.

    Blank lines and ``#`` comments are ignored.  Paths are resolved relative
    to the config file.
    """

    values: Mapping[str, str]
    schema_version: str = SCHEMA_VERSION
    source: str | None = None


def load_run_config(path, allowed: Iterable[str], path_keys: Iterable[str] = ()) -> RunConfig:
    path = Path(path)
    allowed = set(allowed) | {"schema_version"}
    path_keys = set(path_keys)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"{path}: config file not found") from None
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValidationError(f"{path}:row {lineno}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in allowed:
            raise ValidationError(f"{path}:row {lineno}: unknown key {key!r}")
        if key in values:
            raise ValidationError(f"{path}:row {lineno}: duplicate key {key!r}")
        if key in path_keys:
            p = Path(value)
            if not p.is_absolute():
                p = path.parent / p
            if not p.exists():
                raise ValidationError(f"{path}:row {lineno}: {key} refers to a missing file {value!r}")
            value = str(p)
        values[key] = value
    version = values.pop("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ValidationError(f"{path}: unsupported schema_version {version!r}")
    return RunConfig(values, version, str(path))
