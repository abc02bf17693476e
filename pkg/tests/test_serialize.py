"""Model files must restore to bit-identical predictors."""

import json
from dataclasses import asdict

import numpy as np
import pytest

from engagekit.classifiers import ClassifierSpec, load_model, save_model, train_classifier
from engagekit.classifiers.serialize import model_from_dict, model_to_dict
from engagekit.errors import DataError, ParseError


def make_frames(n_per_class=20, d=6, seed=5):
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for level in range(3):
        center = np.zeros(d)
        center[level % d] = 4.0 * (level + 1)
        xs.append(center + rng.normal(size=(n_per_class, d)))
        ys.append(np.full(n_per_class, level))
    return np.vstack(xs), np.concatenate(ys)


def make_sequences(n_per_class=12, d=4, seed=6):
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for level in range(3):
        base = rng.normal(size=(n_per_class, 24, d)) + 3.0 * level
        xs.append(base)
        ys.append(np.full(n_per_class, level))
    return np.vstack(xs), np.concatenate(ys)


FRAME_X, FRAME_Y = make_frames()
SEQ_X, SEQ_Y = make_sequences()
FRAME_QUERY = np.random.default_rng(7).normal(size=(10, 6)) * 3.0
SEQ_QUERY = np.random.default_rng(8).normal(size=(5, 24, 4)) * 2.0

SPECS = {
    "svm_linear": ClassifierSpec(family="svm_linear", seed=1, calibration_folds=3),
    "svm_rbf": ClassifierSpec(family="svm_rbf", seed=1, calibration_folds=3),
    "random_forest": ClassifierSpec(family="random_forest", seed=1, trees=10),
    "mlp": ClassifierSpec(
        family="mlp",
        seed=1,
        hidden_size=8,
        learning_rate=0.05,
        mlp_batch_size=16,
        max_epochs=20,
    ),
    "lstm": ClassifierSpec(
        family="lstm",
        seed=1,
        hidden_size=5,
        fc_size=4,
        lstm_epochs=3,
        lstm_batch_size=8,
    ),
}


@pytest.fixture(scope="module", params=sorted(SPECS))
def trained(request):
    spec = SPECS[request.param]
    if spec.family == "lstm":
        model = train_classifier(spec, SEQ_X, SEQ_Y)
        query = SEQ_QUERY
    else:
        model = train_classifier(spec, FRAME_X, FRAME_Y)
        query = FRAME_QUERY
    return model, query


class TestRoundTrip:
    def test_file_round_trip_is_bit_exact(self, trained, tmp_path):
        model, query = trained
        path = tmp_path / "model.json"
        save_model(path, model)
        loaded = load_model(path)
        assert loaded.family == model.family
        assert loaded.spec == model.spec
        assert np.array_equal(loaded.predict_proba(query), model.predict_proba(query))

    def test_dict_round_trip_survives_json(self, trained):
        model, query = trained
        raw = json.loads(json.dumps(model_to_dict(model)))
        loaded = model_from_dict(raw)
        assert np.array_equal(loaded.predict_proba(query), model.predict_proba(query))

    def test_report_restored(self, trained, tmp_path):
        model, _ = trained
        path = tmp_path / "model.json"
        save_model(path, model)
        loaded = load_model(path)
        assert asdict(loaded.report) == asdict(model.report)

    def test_pca_restored_for_svm_only(self, trained, tmp_path):
        model, _ = trained
        path = tmp_path / "model.json"
        save_model(path, model)
        loaded = load_model(path)
        if model.family in ("svm_linear", "svm_rbf"):
            assert model.pca is not None
            assert loaded.pca is not None
            assert np.array_equal(loaded.pca.components, model.pca.components)
            assert np.array_equal(loaded.pca.mean, model.pca.mean)
        else:
            assert model.pca is None
            assert loaded.pca is None


class TestDegenerateModels:
    def test_constant_level_round_trip(self, tmp_path):
        x, y = make_frames(n_per_class=15, seed=9)
        two_level = y != 2
        spec = ClassifierSpec(family="svm_linear", seed=2, calibration_folds=3)
        model = train_classifier(
            spec, x[two_level], y[two_level], allow_missing_levels=True
        )
        path = tmp_path / "model.json"
        save_model(path, model)
        loaded = load_model(path)
        probs = loaded.predict_proba(FRAME_QUERY)
        assert np.array_equal(probs, model.predict_proba(FRAME_QUERY))
        assert np.all(probs[:, 2] == 0.0)


class TestMalformedFiles:
    def good_doc(self):
        spec = ClassifierSpec(family="random_forest", seed=3, trees=5)
        model = train_classifier(spec, FRAME_X, FRAME_Y)
        return model_to_dict(model)

    def test_wrong_format_tag(self):
        doc = self.good_doc()
        doc["format"] = "something-else"
        with pytest.raises(ParseError, match="not a model file"):
            model_from_dict(doc)

    def test_unsupported_version(self):
        doc = self.good_doc()
        doc["version"] = 99
        with pytest.raises(ParseError, match="version"):
            model_from_dict(doc)

    def test_unknown_family(self):
        doc = self.good_doc()
        doc["family"] = "decision_stump"
        with pytest.raises(ParseError, match="family"):
            model_from_dict(doc)

    def test_missing_params(self):
        doc = self.good_doc()
        del doc["params"]
        with pytest.raises(ParseError):
            model_from_dict(doc)

    def test_bad_spec_keys(self):
        doc = self.good_doc()
        doc["spec"]["mystery_knob"] = 3
        with pytest.raises(ParseError):
            model_from_dict(doc)

    def test_invalid_json_file(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ParseError, match="invalid JSON"):
            load_model(path)

    def test_non_object_file(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2, 3]")
        with pytest.raises(ParseError, match="JSON object"):
            load_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError, match="cannot read"):
            load_model(tmp_path / "absent.json")
