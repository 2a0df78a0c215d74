"""Respondent records, one row per interviewed frame member.

Two equivalent views exist: :class:`RespondentRecord` objects (one per row,
convenient for hand-built fixtures and file I/O) and the columnar
:class:`SurveyData` (numpy arrays, used by every estimator).  Convert with
:meth:`SurveyData.from_records` and :meth:`SurveyData.to_records`.
"""

from __future__ import annotations

from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class AlterReport:
    reported_hidden: bool
    reported_frame: bool
    group: str
    reported_aware: bool = True


@dataclass(frozen=True)
class RespondentRecord:
    respondent_id: str
    group: str
    design_weight: float
    degree: int
    alters: tuple[AlterReport, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        object.__setattr__(self, "alters", tuple(self.alters))
        if self.degree < 0:
            raise ValidationError(f"{self.respondent_id}: negative degree")
        if not self.design_weight > 0:
            raise ValidationError(f"{self.respondent_id}: design weight must be positive")
        if len(self.alters) > self.degree:
            raise ValidationError(f"{self.respondent_id}: more detailed alters than degree")

    @property
    def n_alters(self) -> int:
        return len(self.alters)

    @property
    def n_hidden(self) -> int:
        """``o_i``: detailed alters reported to be in H."""
        return sum(a.reported_hidden for a in self.alters)

    @property
    def n_frame(self) -> int:
        """``f_i``: detailed alters reported to be in F."""
        return sum(a.reported_frame for a in self.alters)

    @property
    def n_frame_aware(self) -> int:
        """``z_i``: detailed alters reported in F and aware of the respondent."""
        return sum(a.reported_frame and a.reported_aware for a in self.alters)


@dataclass(frozen=True, eq=False)
class SurveyData:
    """Columnar survey records.

    Alter columns are ``(n, max_alters)`` arrays; slots at or beyond a row's
    ``n_alters`` are empty (flags 0, group ``""``).
    """

    respondent_id: np.ndarray
    group: np.ndarray
    design_weight: np.ndarray
    degree: np.ndarray
    n_alters: np.ndarray
    alter_hidden: np.ndarray
    alter_frame: np.ndarray
    alter_group: np.ndarray
    alter_aware: np.ndarray
    node: np.ndarray | None = None
    alter_node: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = len(self.respondent_id)
        for name in ("group", "design_weight", "degree", "n_alters"):
            if len(getattr(self, name)) != n:
                raise ValidationError(f"{name} has the wrong length")
        k = self.alter_hidden.shape[1] if self.alter_hidden.ndim == 2 else -1
        for name in ("alter_hidden", "alter_frame", "alter_group", "alter_aware"):
            if getattr(self, name).shape != (n, k):
                raise ValidationError(f"{name} must be an (n, max_alters) array")
        if k < 1:
            raise ValidationError("max_alters must be at least 1")
        if np.any(self.degree < 0):
            raise ValidationError("negative degree")
        if np.any(~(self.design_weight > 0)):
            raise ValidationError("design weights must be positive")
        if np.any(self.n_alters < 0) or np.any(self.n_alters > k):
            raise ValidationError("n_alters outside [0, max_alters]")
        if np.any(self.n_alters > self.degree):
            raise ValidationError("n_alters exceeds degree")
        slot = np.arange(k)[None, :] >= self.n_alters[:, None]
        if np.any(self.alter_hidden[slot]) or np.any(self.alter_frame[slot]) or np.any(self.alter_aware[slot]):
            raise ValidationError("flags set on an empty alter slot")

    def __len__(self) -> int:
        return len(self.respondent_id)

    @property
    def max_alters(self) -> int:
        return self.alter_hidden.shape[1]

    @property
    def alter_present(self) -> np.ndarray:
        return np.arange(self.max_alters)[None, :] < self.n_alters[:, None]

    @property
    def o(self) -> np.ndarray:
        return self.alter_hidden.sum(axis=1)

    @property
    def f(self) -> np.ndarray:
        return self.alter_frame.sum(axis=1)

    @property
    def z(self) -> np.ndarray:
        return (self.alter_frame & self.alter_aware).sum(axis=1)

    def count_alters(self, predicate: Callable[["SurveyData"], np.ndarray]) -> np.ndarray:
        """Per-row count of detailed alters for which ``predicate`` holds.

        ``predicate`` receives this object and returns an ``(n, max_alters)``
        boolean array; empty slots are masked out afterwards.
        """
        hit = np.asarray(predicate(self), dtype=bool)
        if hit.shape != self.alter_hidden.shape:
            raise ValidationError("predicate must return an (n, max_alters) array")
        return (hit & self.alter_present).sum(axis=1)

    def subset(self, rows: np.ndarray) -> "SurveyData":
        rows = np.asarray(rows)
        return SurveyData(
            self.respondent_id[rows],
            self.group[rows],
            self.design_weight[rows],
            self.degree[rows],
            self.n_alters[rows],
            self.alter_hidden[rows],
            self.alter_frame[rows],
            self.alter_group[rows],
            self.alter_aware[rows],
            None if self.node is None else self.node[rows],
            None if self.alter_node is None else self.alter_node[rows],
        )

    def with_design_weights(self, w: np.ndarray) -> "SurveyData":
        w = np.asarray(w, dtype=float)
        return SurveyData(
            self.respondent_id, self.group, w, self.degree, self.n_alters,
            self.alter_hidden, self.alter_frame, self.alter_group, self.alter_aware, self.node,
            self.alter_node,
        )

    @classmethod
    def from_records(cls, records: Iterable[RespondentRecord], max_alters: int | None = None) -> "SurveyData":
        recs = list(records)
        widest = max((r.n_alters for r in recs), default=0)
        k = max(widest, 1) if max_alters is None else max_alters
        if widest > k:
            raise ValidationError(f"a record has {widest} alters, more than max_alters={k}")
        n = len(recs)
        hid = np.zeros((n, k), dtype=bool)
        frm = np.zeros((n, k), dtype=bool)
        awr = np.zeros((n, k), dtype=bool)
        grp = np.full((n, k), "", dtype=object)
        for i, r in enumerate(recs):
            for j, a in enumerate(r.alters):
                hid[i, j] = a.reported_hidden
                frm[i, j] = a.reported_frame
                awr[i, j] = a.reported_aware
                grp[i, j] = a.group
        return cls(
            np.asarray([r.respondent_id for r in recs], dtype=object).astype(str),
            np.asarray([r.group for r in recs], dtype=object).astype(str),
            np.asarray([r.design_weight for r in recs], dtype=float),
            np.asarray([r.degree for r in recs], dtype=np.int64),
            np.asarray([r.n_alters for r in recs], dtype=np.int64),
            hid, frm, grp.astype(str), awr,
        )

    def to_records(self) -> list[RespondentRecord]:
        out = []
        for i in range(len(self)):
            alters = tuple(
                AlterReport(
                    bool(self.alter_hidden[i, j]),
                    bool(self.alter_frame[i, j]),
                    str(self.alter_group[i, j]),
                    bool(self.alter_aware[i, j]),
                )
                for j in range(int(self.n_alters[i]))
            )
            out.append(
                RespondentRecord(
                    str(self.respondent_id[i]),
                    str(self.group[i]),
                    float(self.design_weight[i]),
                    int(self.degree[i]),
                    alters,
                )
            )
        return out


def as_survey_data(records: SurveyData | Sequence[RespondentRecord]) -> SurveyData:
    if isinstance(records, SurveyData):
        return records
    return SurveyData.from_records(records)
