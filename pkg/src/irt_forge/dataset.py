"""Sparse binary response-pattern datasets and synthetic generation.

Responses are held in coordinate form: three parallel arrays giving the
subject index, item index and 0/1 response of every observed cell. Subjects
are rows; a cell that was never answered simply has no entry.

Randomness comes from numpy's ``PCG64`` bit generator seeded through a
``SeedSequence``. ``simulate`` spawns independent child streams for the
generating parameters, the missingness mask and the responses, so the output
for a given seed is fixed across platforms and numpy releases that keep the
PCG64 stream stable.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, FormatError
from .models import AbilityParams, ItemParams, ModelKind, _probability

# cells drawn at once by simulate; bounds peak memory for very wide datasets
_SIM_BLOCK_CELLS = 1 << 22


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.Generator(np.random.PCG64(rng))


@dataclass(frozen=True, eq=False)
class ResponsePatternDataset:
    subject_ids: tuple
    item_ids: tuple
    subject_index: np.ndarray
    item_index: np.ndarray
    response: np.ndarray
    _subject_lookup: dict = field(init=False, repr=False)
    _item_lookup: dict = field(init=False, repr=False)

    def __post_init__(self):
        subject_ids = tuple(self.subject_ids)
        item_ids = tuple(self.item_ids)
        j = np.array(self.subject_index, dtype=np.int64).reshape(-1)
        i = np.array(self.item_index, dtype=np.int64).reshape(-1)
        y = np.array(self.response).reshape(-1)
        if not (j.shape == i.shape == y.shape):
            raise ContractError("observation arrays must have equal length")
        subject_lookup = {s: k for k, s in enumerate(subject_ids)}
        item_lookup = {s: k for k, s in enumerate(item_ids)}
        if len(subject_lookup) != len(subject_ids):
            raise FormatError("duplicate subject id")
        if len(item_lookup) != len(item_ids):
            raise FormatError("duplicate item id")
        if j.size:
            if j.min() < 0 or j.max() >= len(subject_ids):
                raise ContractError("subject index out of range")
            if i.min() < 0 or i.max() >= len(item_ids):
                raise ContractError("item index out of range")
        if not np.all((y == 0) | (y == 1)):
            raise FormatError("responses must be 0 or 1")
        y = y.astype(np.int8)
        cells = j * max(len(item_ids), 1) + i
        if np.unique(cells).size != cells.size:
            raise FormatError("duplicate (subject, item) observation")
        for arr in (j, i, y):
            arr.flags.writeable = False
        object.__setattr__(self, "subject_ids", subject_ids)
        object.__setattr__(self, "item_ids", item_ids)
        object.__setattr__(self, "subject_index", j)
        object.__setattr__(self, "item_index", i)
        object.__setattr__(self, "response", y)
        object.__setattr__(self, "_subject_lookup", subject_lookup)
        object.__setattr__(self, "_item_lookup", item_lookup)

    @property
    def n_subjects(self) -> int:
        return len(self.subject_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    @property
    def n_observations(self) -> int:
        return self.response.shape[0]

    def subject_position(self, subject_id) -> int:
        return self._subject_lookup[subject_id]

    def item_position(self, item_id) -> int:
        return self._item_lookup[item_id]

    def item_counts(self) -> np.ndarray:
        return np.bincount(self.item_index, minlength=self.n_items)

    def subject_counts(self) -> np.ndarray:
        return np.bincount(self.subject_index, minlength=self.n_subjects)

    def to_matrix(self) -> np.ndarray:
        """Dense subjects x items matrix with -1 marking unobserved cells."""
        z = np.full((self.n_subjects, self.n_items), -1, dtype=np.int8)
        z[self.subject_index, self.item_index] = self.response
        return z

    def to_rows(self) -> list:
        """``[(subject_id, {item_id: response})]`` in subject order."""
        rows = [(s, {}) for s in self.subject_ids]
        for j, i, y in zip(self.subject_index.tolist(), self.item_index.tolist(), self.response.tolist()):
            rows[j][1][self.item_ids[i]] = y
        return rows

    def cells(self) -> set:
        """Observed cells keyed by ids, independent of index assignment."""
        return {
            (self.subject_ids[j], self.item_ids[i], y)
            for j, i, y in zip(self.subject_index.tolist(), self.item_index.tolist(), self.response.tolist())
        }

    def __eq__(self, other):
        if not isinstance(other, ResponsePatternDataset):
            return NotImplemented
        return (
            self.subject_ids == other.subject_ids
            and self.item_ids == other.item_ids
            and np.array_equal(self.subject_index, other.subject_index)
            and np.array_equal(self.item_index, other.item_index)
            and np.array_equal(self.response, other.response)
        )

    __hash__ = None


def build(rows: Iterable) -> ResponsePatternDataset:
    """Build a dataset from ``(subject_id, {item_id: 0|1})`` rows.

    Subjects are indexed in row order and items in order of first appearance.
    """
    subject_ids, item_ids = [], {}
    seen_subjects = set()
    js, is_, ys = [], [], []
    for subject_id, responses in rows:
        if subject_id in seen_subjects:
            raise FormatError(f"duplicate subject id {subject_id!r}")
        if not isinstance(responses, Mapping):
            raise FormatError(f"responses for {subject_id!r} must be a mapping")
        seen_subjects.add(subject_id)
        j = len(subject_ids)
        subject_ids.append(subject_id)
        for item_id, value in responses.items():
            if isinstance(value, bool) or value not in (0, 1):
                raise FormatError(
                    f"response of {subject_id!r} to {item_id!r} must be 0 or 1, got {value!r}"
                )
            i = item_ids.setdefault(item_id, len(item_ids))
            js.append(j)
            is_.append(i)
            ys.append(int(value))
    return ResponsePatternDataset(
        tuple(subject_ids),
        tuple(item_ids),
        np.array(js, dtype=np.int64),
        np.array(is_, dtype=np.int64),
        np.array(ys, dtype=np.int8),
    )


@dataclass(frozen=True)
class SimulationSpec:
    """Generating distributions for synthetic data.

    Abilities and difficulties are Normal with the given mean and sd (an sd
    of zero pins every value to the mean). Discrimination is LogNormal(0,
    0.25), guessing is Uniform(0, 0.3) unless ``guessing`` fixes it, and
    feasibility is Uniform(0.7, 1).
    """

    kind: ModelKind = ModelKind.ONE_PARAM
    n_subjects: int = 100
    n_items: int = 20
    missing_rate: float = 0.0
    seed: int = 0
    guessing: float | None = None
    ability_mean: float = 0.0
    ability_sd: float = 1.0
    difficulty_mean: float = 0.0
    difficulty_sd: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        if self.n_subjects < 1 or self.n_items < 1:
            raise ContractError("n_subjects and n_items must be at least 1")
        if not 0.0 <= self.missing_rate < 1.0:
            raise ContractError("missing_rate must lie in [0, 1)")
        if self.ability_sd < 0 or self.difficulty_sd < 0:
            raise ContractError("standard deviations must be non-negative")
        if self.guessing is not None and not 0.0 <= self.guessing <= 1.0:
            raise ContractError("guessing must lie in [0, 1]")


def simulate(spec: SimulationSpec):
    """Draw ``(dataset, true_items, true_abilities)`` from ``spec``."""
    kind = spec.kind
    n_subj, n_items = spec.n_subjects, spec.n_items
    param_ss, mask_ss, resp_ss = np.random.SeedSequence(spec.seed).spawn(3)
    param_rng, mask_rng, resp_rng = (np.random.Generator(np.random.PCG64(s)) for s in (param_ss, mask_ss, resp_ss))

    theta = param_rng.normal(spec.ability_mean, spec.ability_sd, n_subj)
    b = param_rng.normal(spec.difficulty_mean, spec.difficulty_sd, n_items)
    a = param_rng.lognormal(0.0, 0.25, n_items) if kind.has_discrimination else None
    c = None
    if kind.has_guessing:
        c = np.full(n_items, spec.guessing) if spec.guessing is not None else param_rng.uniform(0.0, 0.3, n_items)
    lam = param_rng.uniform(0.7, 1.0, n_items) if kind.has_feasibility else None
    items = ItemParams(b, a, c, lam)
    slopes = items.slopes

    rows_per_block = max(1, _SIM_BLOCK_CELLS // n_items)
    js, is_, ys = [], [], []
    for start in range(0, n_subj, rows_per_block):
        stop = min(start + rows_per_block, n_subj)
        observed = mask_rng.random((stop - start, n_items)) >= spec.missing_rate
        u = resp_rng.random((stop - start, n_items))
        jj, ii = np.nonzero(observed)
        x = slopes[ii] * (theta[start + jj] - b[ii])
        p = _probability(
            kind,
            x,
            c[ii] if c is not None else None,
            lam[ii] if lam is not None else None,
        )
        js.append(start + jj)
        is_.append(ii)
        ys.append((u[jj, ii] < p).astype(np.int8))

    dataset = ResponsePatternDataset(
        tuple(f"subject_{j}" for j in range(n_subj)),
        tuple(f"item_{i}" for i in range(n_items)),
        np.concatenate(js),
        np.concatenate(is_),
        np.concatenate(ys),
    )
    return dataset, items, AbilityParams(theta)


def split_batches(observations, batch_size: int, rng) -> list:
    """Shuffle observation indices and cut them into consecutive chunks.

    ``observations`` is a dataset or an observation count. Every index
    appears exactly once; the last chunk may be short.
    """
    if batch_size < 1:
        raise ContractError("batch_size must be at least 1")
    n = observations if isinstance(observations, (int, np.integer)) else observations.n_observations
    perm = _as_rng(rng).permutation(int(n))
    return [perm[k:k + batch_size] for k in range(0, int(n), batch_size)]
