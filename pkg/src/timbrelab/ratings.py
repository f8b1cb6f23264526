"""Dissimilarity-rating data model and aggregation.

Ratings live on a 0-9 scale in 0.5 steps. Each session rates every
unordered stimulus pair once plus one identical pair per stimulus (the
control). Aggregation produces the mean dissimilarity matrix across
included participants; identical-pair ratings are control-only and
never averaged into the matrix.
"""

from __future__ import annotations

import io
import json
import random
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError

RATING_MAX = 9.0
RATING_STEP = 0.5
CONTROL_RATING_MIN = 1.0   # identical-pair rating counted as a control violation
MAX_CONTROL_VIOLATIONS = 2


def is_on_grid(rating: float) -> bool:
    if not 0.0 <= rating <= RATING_MAX:
        return False
    doubled = rating / RATING_STEP
    return abs(doubled - round(doubled)) < 1e-9


@dataclass(frozen=True)
class RatingRecord:
    participant_id: str
    session_id: str
    trial_index: int
    stim_a: str
    stim_b: str
    rating: float
    replay_count_a: int = 1
    replay_count_b: int = 1
    submitted_at: str = ""
    excluded_flag: str | None = None

    def validate(self) -> None:
        if not is_on_grid(self.rating):
            raise ConfigurationError(
                f"rating {self.rating} is not on the 0-{RATING_MAX} grid in {RATING_STEP} steps")
        if self.trial_index < 0:
            raise ConfigurationError(f"trial_index must be >= 0, got {self.trial_index}")

    def to_json(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "session_id": self.session_id,
            "trial_index": self.trial_index,
            "stim_a": self.stim_a,
            "stim_b": self.stim_b,
            "rating": self.rating,
            "replay_count_a": self.replay_count_a,
            "replay_count_b": self.replay_count_b,
            "submitted_at": self.submitted_at,
            "excluded_flag": self.excluded_flag,
        }

    @classmethod
    def from_json(cls, d: dict) -> "RatingRecord":
        record = cls(
            participant_id=str(d["participant_id"]),
            session_id=str(d["session_id"]),
            trial_index=int(d["trial_index"]),
            stim_a=str(d["stim_a"]),
            stim_b=str(d["stim_b"]),
            rating=float(d["rating"]),
            replay_count_a=int(d.get("replay_count_a", 1)),
            replay_count_b=int(d.get("replay_count_b", 1)),
            submitted_at=str(d.get("submitted_at", "")),
            excluded_flag=d.get("excluded_flag"),
        )
        record.validate()
        return record


@dataclass
class DissimilarityMatrix:
    ids: list[str]
    values: np.ndarray  # (n, n), symmetric, zero diagonal

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        n = len(self.ids)
        if self.values.shape != (n, n):
            raise ConfigurationError("matrix shape does not match id count")
        if not np.allclose(self.values, self.values.T, atol=1e-12):
            raise ConfigurationError("dissimilarity matrix must be symmetric")
        if not np.allclose(np.diag(self.values), 0.0, atol=1e-12):
            raise ConfigurationError("dissimilarity matrix must have a zero diagonal")

    @property
    def n(self) -> int:
        return len(self.ids)


def pair_schedule(n: int, seed: int) -> list[tuple[int, int]]:
    """One trial per unordered pair plus one identical trial per stimulus.

    Presentation direction of each non-identical pair is a seeded coin
    flip; the overall trial order is a seeded shuffle. Deterministic for
    a given seed.
    """
    if n < 2:
        raise ConfigurationError(f"need at least 2 stimuli, got {n}")
    rng = random.Random(seed)
    trials: list[tuple[int, int]] = []
    for i in range(n):
        for j in range(i + 1, n):
            trials.append((i, j) if rng.random() < 0.5 else (j, i))
    trials.extend((i, i) for i in range(n))
    rng.shuffle(trials)
    return trials


@dataclass(frozen=True)
class ExclusionResult:
    included: bool
    reason: str | None = None


def exclusion_check(records: list[RatingRecord], n_stimuli: int, *,
                    control_rating_min: float = CONTROL_RATING_MIN,
                    max_control_violations: int = MAX_CONTROL_VIOLATIONS) -> ExclusionResult:
    """Apply the exclusion policy to one participant's session records."""
    flags = {r.excluded_flag for r in records if r.excluded_flag}
    if flags:
        return ExclusionResult(False, sorted(flags)[0])
    expected = n_stimuli * (n_stimuli - 1) // 2 + n_stimuli
    if len({r.trial_index for r in records}) != expected or len(records) != expected:
        return ExclusionResult(False, "incomplete")
    violations = sum(1 for r in records
                     if r.stim_a == r.stim_b and r.rating >= control_rating_min)
    if violations > max_control_violations:
        return ExclusionResult(False, "control")
    return ExclusionResult(True)


def group_by_session(records: list[RatingRecord]) -> dict[str, list[RatingRecord]]:
    sessions: dict[str, list[RatingRecord]] = {}
    for r in records:
        sessions.setdefault(r.session_id, []).append(r)
    return sessions


def mean_matrix(records: list[RatingRecord], stimulus_ids: list[str], *,
                control_rating_min: float = CONTROL_RATING_MIN,
                max_control_violations: int = MAX_CONTROL_VIOLATIONS) -> DissimilarityMatrix:
    """Mean dissimilarity per unordered pair across included participants.

    Presentation direction is ignored; identical-pair (control) ratings
    never enter the matrix. A pair rated by no included participant is
    an error.
    """
    n = len(stimulus_ids)
    index = {sid: k for k, sid in enumerate(stimulus_ids)}
    sums = np.zeros((n, n))
    counts = np.zeros((n, n), dtype=int)
    included_any = False
    for session_records in group_by_session(records).values():
        check = exclusion_check(session_records, n,
                                control_rating_min=control_rating_min,
                                max_control_violations=max_control_violations)
        if not check.included:
            continue
        included_any = True
        for r in session_records:
            if r.stim_a == r.stim_b:
                continue
            if r.stim_a not in index or r.stim_b not in index:
                raise ConfigurationError(f"record references unknown stimulus "
                                         f"({r.stim_a!r}, {r.stim_b!r})")
            i, j = sorted((index[r.stim_a], index[r.stim_b]))
            sums[i, j] += r.rating
            counts[i, j] += 1
    if not included_any:
        raise ConfigurationError("no participant passed the exclusion policy")
    values = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            if counts[i, j] == 0:
                raise ConfigurationError(
                    f"pair ({stimulus_ids[i]!r}, {stimulus_ids[j]!r}) has no included ratings")
            values[i, j] = values[j, i] = sums[i, j] / counts[i, j]
    return DissimilarityMatrix(list(stimulus_ids), values)


def load_records_jsonl(path: str | Path) -> list[RatingRecord]:
    records = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            records.append(RatingRecord.from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, ValueError) as exc:
            raise ConfigurationError(f"{path}:{line_no}: bad rating record: {exc}") from exc
    return records


def write_records_jsonl(records: list[RatingRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def write_matrix_csv(matrix: DissimilarityMatrix, path: str | Path,
                     stamp: str | None = None) -> None:
    buf = io.StringIO()
    if stamp:
        buf.write(f"# {stamp}\n")
    buf.write(",".join(matrix.ids) + "\n")
    for row in matrix.values:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    Path(path).write_text(buf.getvalue())


def read_matrix_csv(path: str | Path) -> DissimilarityMatrix:
    lines = [ln for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.startswith("#")]
    if not lines:
        raise ConfigurationError(f"{path} is empty")
    ids = [c.strip() for c in lines[0].split(",")]
    rows = [[float(c) for c in ln.split(",")] for ln in lines[1:]]
    if len(rows) != len(ids):
        raise ConfigurationError(f"{path}: expected {len(ids)} rows, got {len(rows)}")
    return DissimilarityMatrix(ids, np.array(rows))
