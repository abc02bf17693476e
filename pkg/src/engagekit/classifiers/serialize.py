"""Self-describing JSON serialization for trained models.

A model file carries the family, the full spec, the training report, the
attached PCA (if any) and the family-specific parameters.  Loading restores
a model whose predictions are bit-identical to the source model's, because
JSON floats round-trip exactly.
"""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

import numpy as np

from ..errors import DataError, ParseError
from ..pca import pca_from_dict, pca_to_dict
from .base import ClassifierSpec, TrainedModel, TrainingReport
from .forest import ForestModel, Tree
from .lstm import LstmModel, LstmNet
from .mlp import MlpModel, MlpNet
from .svm import BinarySvm, PlattSigmoid, SvmModel, _LevelMachine

FORMAT_NAME = "engagekit-model"
FORMAT_VERSION = 1


def _svm_params(model: SvmModel) -> dict:
    levels = {}
    for lv, lm in model.levels.items():
        if lm.constant is not None:
            levels[str(lv)] = {"constant": lm.constant}
            continue
        machine = lm.machine
        entry = {
            "sv_x": machine._sv_x.tolist(),
            "sv_coef": machine._sv_coef.tolist(),
            "b": machine.b,
            "kernel": machine.kernel,
            "c": machine.c,
            "gamma": machine.gamma,
            "tol": machine.tol,
            "seed": machine.seed,
        }
        if lm.sigmoid is not None:
            entry["sigmoid"] = {
                "a": lm.sigmoid.a,
                "b": lm.sigmoid.b,
                "folds": lm.sigmoid.folds,
            }
        levels[str(lv)] = entry
    return {"levels": levels}


def _svm_restore(spec: ClassifierSpec, report: TrainingReport, params: dict):
    levels = {}
    for key, entry in params["levels"].items():
        lv = int(key)
        if "constant" in entry:
            levels[lv] = _LevelMachine(
                machine=None, sigmoid=None, constant=float(entry["constant"])
            )
            continue
        machine = BinarySvm(
            kernel=entry["kernel"],
            c=float(entry["c"]),
            gamma=None if entry["gamma"] is None else float(entry["gamma"]),
            tol=float(entry["tol"]),
            seed=int(entry["seed"]),
        )
        machine._sv_x = np.asarray(entry["sv_x"], dtype=np.float64)
        machine._sv_coef = np.asarray(entry["sv_coef"], dtype=np.float64)
        machine.b = float(entry["b"])
        sigmoid = None
        if "sigmoid" in entry:
            s = entry["sigmoid"]
            sigmoid = PlattSigmoid(
                a=float(s["a"]), b=float(s["b"]), folds=int(s["folds"])
            )
        levels[lv] = _LevelMachine(machine=machine, sigmoid=sigmoid)
    return SvmModel(spec=spec, levels=levels, report=report)


def _forest_params(model: ForestModel) -> dict:
    return {
        "trees": [
            {
                "feature": t.feature.tolist(),
                "threshold": t.threshold.tolist(),
                "left": t.left.tolist(),
                "right": t.right.tolist(),
                "distribution": t.distribution.tolist(),
            }
            for t in model.trees
        ]
    }


def _forest_restore(spec: ClassifierSpec, report: TrainingReport, params: dict):
    trees = [
        Tree(
            feature=np.asarray(t["feature"], dtype=np.int32),
            threshold=np.asarray(t["threshold"], dtype=np.float64),
            left=np.asarray(t["left"], dtype=np.int32),
            right=np.asarray(t["right"], dtype=np.int32),
            distribution=np.asarray(t["distribution"], dtype=np.float64),
        )
        for t in params["trees"]
    ]
    return ForestModel(spec=spec, trees=trees, report=report)


def _mlp_params(model: MlpModel) -> dict:
    net = model.net
    return {
        "w1": net.w1.tolist(),
        "b1": net.b1.tolist(),
        "w2": net.w2.tolist(),
        "b2": net.b2.tolist(),
    }


def _mlp_restore(spec: ClassifierSpec, report: TrainingReport, params: dict):
    w1 = np.asarray(params["w1"], dtype=np.float64)
    net = MlpNet(w1.shape[0], w1.shape[1], np.random.default_rng(0))
    net.w1 = w1
    net.b1 = np.asarray(params["b1"], dtype=np.float64)
    net.w2 = np.asarray(params["w2"], dtype=np.float64)
    net.b2 = np.asarray(params["b2"], dtype=np.float64)
    return MlpModel(spec=spec, net=net, report=report)


def _lstm_params(model: LstmModel) -> dict:
    net = model.net
    return {
        "layers": [
            {"wx": l.wx.tolist(), "wh": l.wh.tolist(), "b": l.b.tolist()}
            for l in net.layers
        ],
        "wf": net.wf.tolist(),
        "bf": net.bf.tolist(),
        "wo": net.wo.tolist(),
        "bo": net.bo.tolist(),
    }


def _lstm_restore(spec: ClassifierSpec, report: TrainingReport, params: dict):
    first_wx = np.asarray(params["layers"][0]["wx"], dtype=np.float64)
    hidden = first_wx.shape[1] // 4
    wf = np.asarray(params["wf"], dtype=np.float64)
    net = LstmNet(
        d=first_wx.shape[0],
        hidden=hidden,
        fc=wf.shape[1],
        rng=np.random.default_rng(0),
        layers=len(params["layers"]),
    )
    for layer, raw in zip(net.layers, params["layers"]):
        layer.wx = np.asarray(raw["wx"], dtype=np.float64)
        layer.wh = np.asarray(raw["wh"], dtype=np.float64)
        layer.b = np.asarray(raw["b"], dtype=np.float64)
    net.wf = wf
    net.bf = np.asarray(params["bf"], dtype=np.float64)
    net.wo = np.asarray(params["wo"], dtype=np.float64)
    net.bo = np.asarray(params["bo"], dtype=np.float64)
    return LstmModel(spec=spec, net=net, report=report)


_EXPORTERS = {
    "svm_linear": _svm_params,
    "svm_rbf": _svm_params,
    "random_forest": _forest_params,
    "mlp": _mlp_params,
    "lstm": _lstm_params,
}

_RESTORERS = {
    "svm_linear": _svm_restore,
    "svm_rbf": _svm_restore,
    "random_forest": _forest_restore,
    "mlp": _mlp_restore,
    "lstm": _lstm_restore,
}


def model_to_dict(model: TrainedModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "family": model.family,
        "spec": asdict(model.spec),
        "report": asdict(model.report),
        "pca": None if model.pca is None else pca_to_dict(model.pca),
        "params": _EXPORTERS[model.family](model),
    }


def model_from_dict(raw: dict) -> TrainedModel:
    try:
        if raw.get("format") != FORMAT_NAME:
            raise ParseError(
                f"not a model file (format={raw.get('format')!r})"
            )
        if raw.get("version") != FORMAT_VERSION:
            raise ParseError(f"unsupported model version {raw.get('version')}")
        family = raw["family"]
        if family not in _RESTORERS:
            raise ParseError(f"unknown model family {family!r}")
        spec = ClassifierSpec(**raw["spec"])
        report = TrainingReport(**raw["report"])
        model = _RESTORERS[family](spec, report, raw["params"])
        if raw.get("pca") is not None:
            model.pca = pca_from_dict(raw["pca"])
        return model
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad model record: {exc}") from exc


def save_model(path: str | Path, model: TrainedModel) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path: str | Path) -> TrainedModel:
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ParseError(f"{path}: model file must hold a JSON object")
    return model_from_dict(raw)
