import numpy as np
import pytest

from irt_forge import ContractError, FormatError, ModelKind, ResponsePatternDataset, SimulationSpec, build, simulate
from irt_forge.dataset import split_batches
from irt_forge.models import icc_1pl


class TestBuild:
    def test_counts(self):
        ds = build([("a", {"q1": 1, "q2": 0}), ("b", {"q2": 1, "q3": 1})])
        assert ds.n_subjects == 2
        assert ds.n_items == 3
        assert ds.n_observations == 4
        assert ds.item_ids == ("q1", "q2", "q3")

    def test_first_appearance_order(self):
        ds = build([("x", {"z": 1, "a": 0}), ("y", {"m": 1, "a": 1})])
        assert ds.item_ids == ("z", "a", "m")
        assert ds.subject_ids == ("x", "y")
        assert ds.item_position("m") == 2

    def test_empty_row(self):
        ds = build([("a", {"q1": 1}), ("b", {})])
        assert ds.n_subjects == 2
        assert ds.subject_counts().tolist() == [1, 0]

    def test_duplicate_subject(self):
        with pytest.raises(FormatError):
            build([("s1", {"q1": 1}), ("s1", {"q2": 0})])

    @pytest.mark.parametrize("value", [2, -1, 0.5, "1", True, None])
    def test_non_binary(self, value):
        with pytest.raises(FormatError):
            build([("s1", {"q1": value})])

    def test_matrix_and_rows(self):
        rows = [("a", {"q1": 1, "q2": 0}), ("b", {"q2": 1})]
        ds = build(rows)
        assert ds.to_matrix().tolist() == [[1, 0], [-1, 1]]
        assert build(ds.to_rows()) == ds


class TestInvariants:
    def test_duplicate_cell(self):
        with pytest.raises(FormatError):
            ResponsePatternDataset(("a",), ("q",), np.array([0, 0]), np.array([0, 0]), np.array([1, 0]))

    def test_index_range(self):
        with pytest.raises(ContractError):
            ResponsePatternDataset(("a",), ("q",), np.array([1]), np.array([0]), np.array([1]))

    def test_duplicate_ids(self):
        with pytest.raises(FormatError):
            ResponsePatternDataset(("a", "a"), ("q",), np.array([0]), np.array([0]), np.array([1]))

    def test_response_values(self):
        with pytest.raises(FormatError):
            ResponsePatternDataset(("a",), ("q",), np.array([0]), np.array([0]), np.array([3]))


class TestSimulate:
    def test_deterministic(self):
        spec = SimulationSpec(kind=ModelKind.ONE_PARAM, n_subjects=1000, n_items=100, seed=7)
        d1, i1, a1 = simulate(spec)
        d2, i2, a2 = simulate(spec)
        assert d1 == d2
        np.testing.assert_array_equal(i1.difficulty, i2.difficulty)
        np.testing.assert_array_equal(a1.ability, a2.ability)

    def test_pinned_output(self):
        # PCG64 through SeedSequence; these values are part of the reproducibility contract
        ds, items, abilities = simulate(SimulationSpec(n_subjects=4, n_items=3, seed=2024))
        assert ds.to_matrix().tolist() == [[0, 1, 1], [1, 1, 0], [1, 1, 0], [0, 0, 0]]
        assert abilities.ability[0] == -0.21172433835112828
        assert items.difficulty[0] == -0.1760606690120198

    def test_easy_items(self):
        spec = SimulationSpec(
            n_subjects=200, n_items=100, seed=3, ability_sd=0.0, difficulty_mean=-4.0, difficulty_sd=0.0
        )
        ds, _, _ = simulate(spec)
        p = icc_1pl(0.0, -4.0)
        n = ds.n_observations
        rate = ds.response.mean()
        assert n == 20_000
        assert rate >= 0.95
        assert abs(rate - p) <= 3 * np.sqrt(p * (1 - p) / n)

    def test_missing_rate(self):
        ds, _, _ = simulate(SimulationSpec(n_subjects=100, n_items=100, missing_rate=0.5, seed=4))
        assert abs(ds.n_observations - 5000) <= 3 * np.sqrt(10_000 * 0.25)

    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_parameter_schema(self, kind):
        _, items, _ = simulate(SimulationSpec(kind=kind, n_subjects=5, n_items=400, seed=1))
        items.check_kind(kind)
        if kind.has_guessing:
            assert np.all((items.guessing >= 0) & (items.guessing <= 0.3))
        if kind.has_feasibility:
            assert np.all((items.feasibility >= 0.7) & (items.feasibility <= 1.0))
        if kind.has_discrimination:
            assert abs(np.log(items.discrimination).std() - 0.25) < 0.05

    def test_fixed_guessing(self):
        _, items, _ = simulate(SimulationSpec(kind="3pl", n_subjects=3, n_items=4, guessing=0.2))
        assert items.guessing.tolist() == [0.2] * 4

    def test_bernoulli_rates(self):
        # one item, many subjects at a fixed ability: rate within 3 sigma of the ICC
        spec = SimulationSpec(kind="2pl", n_subjects=40_000, n_items=1, seed=9, ability_mean=0.5, ability_sd=0.0)
        ds, items, _ = simulate(spec)
        p = float(1 / (1 + np.exp(-items.discrimination[0] * (0.5 - items.difficulty[0]))))
        assert abs(ds.response.mean() - p) <= 3 * np.sqrt(p * (1 - p) / ds.n_observations)

    @pytest.mark.parametrize(
        "kwargs", [dict(n_subjects=0), dict(n_items=0), dict(missing_rate=1.0), dict(missing_rate=-0.1)]
    )
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ContractError):
            SimulationSpec(**kwargs)


class TestSplitBatches:
    def test_sizes(self):
        chunks = split_batches(10, 3, np.random.default_rng(0))
        assert [len(c) for c in chunks] == [3, 3, 3, 1]
        assert sorted(np.concatenate(chunks).tolist()) == list(range(10))

    def test_single_batch(self):
        chunks = split_batches(10, 10, np.random.default_rng(0))
        assert len(chunks) == 1
        assert sorted(chunks[0].tolist()) == list(range(10))
        assert len(split_batches(10, 50, 0)) == 1

    def test_deterministic(self):
        c1 = split_batches(1000, 64, np.random.default_rng(5))
        c2 = split_batches(1000, 64, np.random.default_rng(5))
        assert all(np.array_equal(x, y) for x, y in zip(c1, c2))

    def test_accepts_dataset(self):
        ds = build([("a", {"q1": 1, "q2": 0}), ("b", {"q2": 1})])
        assert sum(len(c) for c in split_batches(ds, 2, 0)) == 3

    def test_bad_size(self):
        with pytest.raises(ContractError):
            split_batches(10, 0, 0)
