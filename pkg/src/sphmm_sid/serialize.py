"""JSON containers for trained models.

Floats are written with Python's shortest round-trip repr, so reading a
file back reproduces every parameter bit for bit, and writing the same
model twice gives byte-identical files.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .hmm.chmm1 import Chmm1Model
from .hmm.chmm2 import Chmm2Model
from .hmm.gmm import GaussianMixture
from .sphmm import SupraMapping, SupraModel

FORMAT_VERSION = 1
BUNDLE_KIND = "speaker-model-bundle"
INDEX_NAME = "index.json"


class SerializationError(ValueError):
    pass


def _array(a) -> dict:
    a = np.asarray(a)
    if a.dtype == bool:
        return {"dtype": "bool", "shape": list(a.shape), "data": [int(x) for x in a.ravel()]}
    return {"dtype": "float64", "shape": list(a.shape),
            "data": [float(x) for x in a.astype(np.float64).ravel()]}


def _from_array(d) -> np.ndarray:
    try:
        dtype = {"bool": bool, "float64": np.float64}[d["dtype"]]
        return np.array(d["data"], dtype=dtype).reshape(d["shape"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SerializationError(f"malformed array entry: {exc}") from None


def _gmms(gmms) -> list:
    return [{"weights": _array(g.weights), "means": _array(g.means),
             "variances": _array(g.variances)} for g in gmms]


def _from_gmms(items) -> list:
    return [GaussianMixture(_from_array(g["weights"]), _from_array(g["means"]),
                            _from_array(g["variances"])) for g in items]


def chmm2_to_dict(model: Chmm2Model) -> dict:
    return {"n_states": model.n_states, "mask": _array(model.mask), "v": _array(model.v),
            "trans3": _array(model.trans3), "emissions": _gmms(model.emissions)}


def chmm2_from_dict(d) -> Chmm2Model:
    model = Chmm2Model(_from_array(d["v"]), _from_array(d["trans3"]),
                       _from_gmms(d["emissions"]), _from_array(d["mask"]))
    if model.n_states != d["n_states"] or len(model.emissions) != model.n_states:
        raise SerializationError("n_states does not match the stored parameters")
    return model


def supra_to_dict(model: SupraModel) -> dict:
    base = model.base
    return {"n_states": base.n_states, "normalize": model.normalize, "mask": _array(base.mask),
            "pi": _array(base.pi), "trans": _array(base.trans),
            "emissions": _gmms(base.emissions)}


def supra_from_dict(d) -> SupraModel:
    base = Chmm1Model(_from_array(d["pi"]), _from_array(d["trans"]),
                      _from_gmms(d["emissions"]), _from_array(d["mask"]))
    if base.n_states != d["n_states"]:
        raise SerializationError("n_states does not match the stored parameters")
    return SupraModel(base, bool(d["normalize"]))


def bundle_to_dict(bundle) -> dict:
    return {
        "kind": BUNDLE_KIND,
        "version": FORMAT_VERSION,
        "speaker": bundle.speaker,
        "sentence": bundle.sentence,
        "gender": bundle.gender,
        "train_log_likelihood": float(bundle.train_log_likelihood),
        "chmm2": chmm2_to_dict(bundle.chmm2),
        "supra": supra_to_dict(bundle.supra),
        "mapping": [sorted(g) for g in bundle.mapping.groups],
    }


def bundle_from_dict(d):
    from .recognizer import SpeakerModel

    if d.get("kind") != BUNDLE_KIND:
        raise SerializationError(f"not a model bundle (kind={d.get('kind')!r})")
    if d.get("version") != FORMAT_VERSION:
        raise SerializationError(f"unsupported bundle version {d.get('version')!r}")
    try:
        return SpeakerModel(
            speaker=int(d["speaker"]),
            sentence=int(d["sentence"]),
            chmm2=chmm2_from_dict(d["chmm2"]),
            supra=supra_from_dict(d["supra"]),
            mapping=SupraMapping(tuple(d["mapping"])),
            gender=d.get("gender", ""),
            train_log_likelihood=float(d["train_log_likelihood"]),
        )
    except KeyError as exc:
        raise SerializationError(f"bundle is missing field {exc}") from None


def dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"


def _load_json(path: Path):
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SerializationError(f"{path}: invalid JSON ({exc})") from None


def save_bundle(bundle, path) -> Path:
    path = Path(path)
    path.write_text(dumps(bundle_to_dict(bundle)), encoding="utf-8")
    return path


def load_bundle(path):
    return bundle_from_dict(_load_json(path))


def bundle_filename(speaker: int, sentence: int) -> str:
    return f"s{speaker:02d}_t{sentence}.json"


def save_registry(registry, out_dir, config=None) -> Path:
    """Write one file per bundle plus an index; returns the index path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for (spk, sent), bundle in sorted(registry.entries.items()):
        name = bundle_filename(spk, sent)
        save_bundle(bundle, out_dir / name)
        files.append({"speaker": spk, "sentence": sent, "file": name})
    index = {"kind": "model-store", "version": FORMAT_VERSION, "bundles": files,
             "config": config or {}}
    path = out_dir / INDEX_NAME
    path.write_text(dumps(index), encoding="utf-8")
    return path


def load_registry(model_dir):
    """Read a model store written by :func:`save_registry`. Returns (registry, config)."""
    from .recognizer import SpeakerRegistry

    model_dir = Path(model_dir)
    index_path = model_dir / INDEX_NAME
    if not index_path.is_file():
        raise SerializationError(f"no {INDEX_NAME} in {model_dir}")
    index = _load_json(index_path)
    if index.get("version") != FORMAT_VERSION:
        raise SerializationError(f"unsupported model store version {index.get('version')!r}")
    registry = SpeakerRegistry()
    for item in index["bundles"]:
        bundle = load_bundle(model_dir / item["file"])
        if (bundle.speaker, bundle.sentence) != (item["speaker"], item["sentence"]):
            raise SerializationError(f"{item['file']}: bundle does not match its index entry")
        registry.add(bundle)
    return registry, index.get("config", {})
