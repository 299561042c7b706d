import io as _io
import json
import random

import numpy as np
import pytest

from irt_forge import FormatError, ParseError, SimulationSpec, fit, io, simulate
from irt_forge.io import ParametersDocument, read_jsonlines, read_parameters, write_parameters
from irt_forge.mml_em import MMLConfig
from irt_forge.vi_engine import TrainConfig

EXAMPLE = (
    '{"subject_id": "pedro", "responses": {"q1": 1, "q2": 0, "q3": 1, "q4": 0}}\n'
    '{"subject_id": "pinguino", "responses": {"q1": 1, "q2": 1, "q3": 0, "q4": 0}}\n'
)


class TestReadJsonlines:
    def test_example(self, tmp_path):
        path = tmp_path / "data.jsonlines"
        path.write_text(EXAMPLE, encoding="utf-8")
        ds = read_jsonlines(path)
        assert ds.subject_ids == ("pedro", "pinguino")
        assert ds.item_ids == ("q1", "q2", "q3", "q4")
        assert ds.n_observations == 8

    def test_stream_and_blank_lines(self):
        ds = read_jsonlines(_io.StringIO("\n" + EXAMPLE.replace("\n", "\n\n")))
        assert ds.n_subjects == 2

    def test_empty(self):
        with pytest.raises(FormatError, match="no subjects"):
            read_jsonlines(_io.StringIO(""))
        with pytest.raises(FormatError, match="no subjects"):
            read_jsonlines(_io.StringIO("\n  \n"))

    def test_empty_responses(self):
        ds = read_jsonlines(['{"subject_id": "a", "responses": {"q": 1}}', '{"subject_id": "b", "responses": {}}'])
        assert ds.subject_counts().tolist() == [1, 0]

    def test_malformed_line_reports_position(self):
        lines = EXAMPLE.splitlines() + ['{"subject_id": "x", "responses": {"q1": 1,}}']
        with pytest.raises(ParseError) as info:
            read_jsonlines(lines)
        assert info.value.line == 3
        assert info.value.column is not None
        assert "line 3" in str(info.value)

    @pytest.mark.parametrize(
        "line",
        [
            '["not", "an", "object"]',
            '{"subject": "x", "responses": {}}',
            '{"subject_id": 5, "responses": {}}',
            '{"subject_id": "x", "responses": [1, 0]}',
        ],
    )
    def test_bad_records(self, line):
        with pytest.raises(ParseError):
            read_jsonlines([line])

    @pytest.mark.parametrize("value", ["2", "0.5", "true", '"1"', "null"])
    def test_non_binary(self, value):
        with pytest.raises(FormatError):
            read_jsonlines(['{"subject_id": "x", "responses": {"q": %s}}' % value])

    def test_duplicate_subject(self):
        lines = EXAMPLE.splitlines() + [EXAMPLE.splitlines()[0]]
        with pytest.raises(FormatError, match="line 3"):
            read_jsonlines(lines)

    def test_unicode_ids(self, tmp_path):
        path = tmp_path / "u.jsonlines"
        path.write_text('{"subject_id": "pingüino", "responses": {"q€": 1}}\n', encoding="utf-8")
        ds = read_jsonlines(path)
        assert ds.subject_ids == ("pingüino",)
        assert io.dumps_jsonlines(ds) == path.read_text(encoding="utf-8")


class TestRoundTrips:
    def test_jsonlines_fixpoint(self, tmp_path):
        ds, _, _ = simulate(SimulationSpec(n_subjects=40, n_items=15, missing_rate=0.3, seed=2))
        first = io.write_jsonlines(ds, tmp_path / "a.jsonlines")
        again = read_jsonlines(first)
        # identical up to the item index order, which follows first appearance
        assert again.cells() == ds.cells()
        assert again.subject_ids == ds.subject_ids
        second = io.write_jsonlines(again, tmp_path / "b.jsonlines")
        assert read_jsonlines(second) == again

    @pytest.mark.parametrize("model", ["1pl", "2pl", "3pl", "4pl"])
    def test_parameters_fixpoint(self, tmp_path, model):
        ds, items, abilities = simulate(SimulationSpec(kind=model, n_subjects=30, n_items=7, seed=3))
        doc = io.document_from_params(ds, items, abilities, model)
        path = write_parameters(doc, tmp_path / "out")
        assert path.name == "best_parameters.json"
        back = read_parameters(tmp_path / "out")
        assert back == doc
        np.testing.assert_array_equal(back.diff, items.difficulty)
        np.testing.assert_array_equal(back.ability, abilities.ability)
        write_parameters(back, tmp_path / "again")
        assert (tmp_path / "again" / "best_parameters.json").read_bytes() == path.read_bytes()

    def test_full_pipeline_fixpoint(self, tmp_path):
        ds, _, _ = simulate(SimulationSpec(kind="2pl", n_subjects=60, n_items=8, seed=4))
        data = io.write_jsonlines(ds, tmp_path / "d.jsonlines")
        report = fit(read_jsonlines(data), "2pl", "svi", TrainConfig(epochs=5, seed=1))
        doc = io.document_from_fit(ds, report, "2pl")
        write_parameters(doc, tmp_path)
        back = read_parameters(tmp_path)
        assert back == doc
        assert set(back.scales) == {"diff", "disc", "ability"}
        items = back.item_params()
        np.testing.assert_array_equal(items.discrimination, report.items.discrimination)

    def test_decimal_text_precision(self, tmp_path):
        doc = ParametersDocument("1pl", ["q"], ["s"], diff=[0.1 + 0.2], ability=[-1 / 3])
        text = io.dumps_parameters(doc)
        assert "0.30000000000000004" in text
        value = json.loads(text)["ability"][0]
        assert value == -1 / 3
        assert len(repr(value).lstrip("-0.")) >= 15


class TestSchema:
    def test_field_order_and_minimality(self):
        ds, items, abilities = simulate(SimulationSpec(kind="1pl", n_subjects=3, n_items=2, seed=0))
        data = json.loads(io.dumps_parameters(io.document_from_params(ds, items, abilities, "1pl")))
        assert list(data) == ["model", "diff", "ability", "item_ids", "subject_ids"]
        assert "disc" not in data and "guess" not in data

    def test_3pl_and_4pl_keys(self):
        for model, key in (("3pl", "guess"), ("4pl", "lambda")):
            ds, items, abilities = simulate(SimulationSpec(kind=model, n_subjects=3, n_items=2, seed=0))
            data = io.document_from_params(ds, items, abilities, model).to_json()
            assert list(data)[:4] == ["model", "diff", "disc", key]

    def test_index_bijection(self):
        ds, items, abilities = simulate(SimulationSpec(n_subjects=5, n_items=9, seed=0))
        data = io.document_from_params(ds, items, abilities, "1pl").to_json()
        assert sorted(int(k) for k in data["item_ids"]) == list(range(9))
        assert sorted(data["item_ids"].values()) == sorted(ds.item_ids)

    def test_rejects_gaps_and_lengths(self):
        base = {"model": "1pl", "diff": [0.0, 1.0], "ability": [0.5], "item_ids": {"0": "a", "1": "b"},
                "subject_ids": {"0": "s"}}
        ParametersDocument.from_json(base)
        with pytest.raises(FormatError):
            ParametersDocument.from_json({**base, "item_ids": {"0": "a", "2": "b"}})
        with pytest.raises(FormatError):
            ParametersDocument.from_json({**base, "diff": [0.0]})
        with pytest.raises(FormatError):
            ParametersDocument.from_json({k: v for k, v in base.items() if k != "ability"})

    def test_nan_refused(self):
        doc = ParametersDocument("1pl", ["q"], ["s"], diff=[float("nan")], ability=[0.0])
        with pytest.raises(ValueError):
            io.dumps_parameters(doc)

    def test_training_log(self, tmp_path):
        ds, _, _ = simulate(SimulationSpec(n_subjects=20, n_items=5, seed=0))
        report = fit(ds, "1pl", "svi", TrainConfig(epochs=4, seed=0))
        path = io.write_training_log(report, tmp_path / "training_log.csv")
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,loss,seconds"
        assert len(lines) == 1 + len(report.loss_trace)
        assert float(lines[1].split(",")[1]) == report.loss_trace[0]


class TestShuffleInvariance:
    def test_line_shuffle_keeps_association(self, tmp_path):
        ds, _, _ = simulate(SimulationSpec(kind="1pl", n_subjects=300, n_items=20, missing_rate=0.2, seed=13))
        lines = io.dumps_jsonlines(ds).splitlines(keepends=True)
        random.Random(5).shuffle(lines)
        shuffled = read_jsonlines(lines)
        assert shuffled.subject_ids != ds.subject_ids

        docs = []
        for data in (ds, shuffled):
            report = fit(data, "1pl", "mml", MMLConfig())
            docs.append(io.document_from_fit(data, report, "1pl"))
        a, b = docs
        by_subject = [dict(zip(d.subject_ids, d.ability)) for d in docs]
        by_item = [dict(zip(d.item_ids, d.diff)) for d in docs]
        for sid in a.subject_ids:
            assert by_subject[1][sid] == pytest.approx(by_subject[0][sid], abs=1e-8)
        for iid in a.item_ids:
            assert by_item[1][iid] == pytest.approx(by_item[0][iid], abs=1e-8)
