"""JSON forms of instruments, POVMs, measurement models and gate implementations.

Matrices use ``operators.encode_matrix``; containers are plain dicts so
fixtures stay readable and diff-able.
"""

import json
from pathlib import Path
from typing import Any, Dict, Union

import numpy as np

from measknow.config import DEFAULT_CONFIG, NumericConfig
from measknow.errors import InvalidMatrix
from measknow.gate_audit import GateImplementation
from measknow.instruments import POVM, KrausInstrument, MeasurementModel
from measknow.operators import DensityOperator, Observable, decode_matrix, encode_matrix


def _field(data: Dict[str, Any], key: str, kind: str) -> Any:
    try:
        return data[key]
    except (KeyError, TypeError) as e:
        raise InvalidMatrix(f"{kind} encoding is missing '{key}'.") from e


def instrument_to_dict(instr: KrausInstrument) -> Dict[str, Any]:
    return {
        "type": "instrument",
        "outcomes": list(instr.outcomes),
        "kraus": [[encode_matrix(k) for k in ops] for ops in instr.kraus_sets],
    }


def instrument_from_dict(data: Dict[str, Any], config: NumericConfig = DEFAULT_CONFIG) -> KrausInstrument:
    labels = tuple(float(a) for a in _field(data, "outcomes", "Instrument"))
    sets = tuple(tuple(decode_matrix(k) for k in ops) for ops in _field(data, "kraus", "Instrument"))
    return KrausInstrument(labels, sets, config=config)


def povm_to_dict(povm: POVM) -> Dict[str, Any]:
    return {
        "type": "povm",
        "outcomes": list(povm.outcomes),
        "effects": [encode_matrix(e) for e in povm.effects],
    }


def povm_from_dict(data: Dict[str, Any], config: NumericConfig = DEFAULT_CONFIG) -> POVM:
    return POVM(
        tuple(float(a) for a in _field(data, "outcomes", "POVM")),
        tuple(decode_matrix(e) for e in _field(data, "effects", "POVM")),
        config=config,
    )


def model_to_dict(model: MeasurementModel) -> Dict[str, Any]:
    return {
        "type": "model",
        "system_dim": model.system_dim,
        "ancilla_dim": model.ancilla_dim,
        "ancilla_state": encode_matrix(model.ancilla_state.matrix),
        "unitary": encode_matrix(model.unitary),
        "meter": encode_matrix(model.meter.matrix),
    }


def model_from_dict(data: Dict[str, Any], config: NumericConfig = DEFAULT_CONFIG) -> MeasurementModel:
    return MeasurementModel(
        system_dim=int(_field(data, "system_dim", "Model")),
        ancilla_dim=int(_field(data, "ancilla_dim", "Model")),
        ancilla_state=DensityOperator(decode_matrix(_field(data, "ancilla_state", "Model")), config=config),
        unitary=decode_matrix(_field(data, "unitary", "Model")),
        meter=Observable(decode_matrix(_field(data, "meter", "Model")), label="M", config=config),
        config=config,
    )


def implementation_to_dict(impl: GateImplementation) -> Dict[str, Any]:
    return {"type": "gate", **impl.to_dict()}


def implementation_from_dict(data: Dict[str, Any], config: NumericConfig = DEFAULT_CONFIG) -> GateImplementation:
    xi = decode_matrix(_field(data, "ancilla_vector", "Gate implementation"))
    charge = data.get("charge")
    return GateImplementation(
        ancilla_dim=int(_field(data, "ancilla_dim", "Gate implementation")),
        unitary=decode_matrix(_field(data, "unitary", "Gate implementation")),
        ancilla_vector=np.asarray(xi).reshape(-1),
        config=config,
        charge=None if charge is None else decode_matrix(charge),
    )


_DECODERS = {
    "instrument": instrument_from_dict,
    "povm": povm_from_dict,
    "model": model_from_dict,
    "gate": implementation_from_dict,
}


def _infer_type(data: Any) -> Any:
    if not isinstance(data, dict):
        return None
    if "type" in data:
        return data["type"]
    for kind, key in (("instrument", "kraus"), ("povm", "effects"), ("gate", "ancilla_vector"), ("model", "meter")):
        if key in data:
            return kind
    return None


def load_object(path: Union[str, Path], config: NumericConfig = DEFAULT_CONFIG) -> Any:
    """Read a JSON file and decode it by its ``"type"`` field, or by its keys when absent."""
    with open(path, "r", encoding="utf-8") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise InvalidMatrix(f"{path} is not valid JSON: {e}") from e
    kind = _infer_type(data)
    if kind not in _DECODERS:
        raise InvalidMatrix(f"{path} has unknown object type {kind!r}; expected one of {sorted(_DECODERS)}.")
    return _DECODERS[kind](data, config=config)


def save_object(obj: Any, path: Union[str, Path]) -> None:
    encoders = {
        KrausInstrument: instrument_to_dict,
        POVM: povm_to_dict,
        MeasurementModel: model_to_dict,
        GateImplementation: implementation_to_dict,
    }
    encoder = encoders.get(type(obj))
    if encoder is None:
        raise TypeError(f"No JSON encoding for {type(obj).__name__}.")
    with open(path, "w", encoding="utf-8") as f:
        json.dump(encoder(obj), f, indent=2, sort_keys=True)
