"""Production predictor: persisted artifacts, per-call thread choice, dispatch.

Two files drive the runtime. The model file holds one routine's transformer
and regressor; the config file names the machine, the backend, the selected
family and which routines the runtime serves. Both are JSON; floats are
written in shortest round-trip form so loading reproduces them bit-exactly.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .backend import ArchitectureProfile, BackendError, CBLASBackend, SyntheticBackend
from .core import Precision, ProblemShape, Routine, parse_routine_name, routine_name
from .features import feature_names
from .models import Regressor
from .preprocess import FittedTransformer
from .sweep import SweepModel

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
MODEL_DIR_ENV = "ADSALA_MODEL_DIR"
MODEL_SUFFIX = ".model.json"


class ModelFormatError(ValueError):
    """A model or config file could not be parsed."""


class SchemaVersionError(ModelFormatError):
    pass


class UnknownRoutineError(KeyError):
    pass


class DispatchError(BackendError):
    """Backend failure during dispatch; ``nt`` is the thread count that was chosen."""

    def __init__(self, message, nt):
        super().__init__(message)
        self.nt = nt


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=False) + "\n"


def _loads(text: str, source: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"{source}: {exc.msg} at offset {exc.pos}") from None


@dataclass
class ModelArtifact:
    routine: Routine
    precision: Precision
    transformer: FittedTransformer
    regressor: Regressor
    nt_candidates: list
    metadata: dict = field(default_factory=dict)
    feature_names: tuple = ()
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        if not self.feature_names:
            self.feature_names = tuple(feature_names(self.routine))
        self.nt_candidates = sorted(int(t) for t in self.nt_candidates)

    @property
    def name(self) -> str:
        return routine_name(self.routine, self.precision)

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "routine": self.name,
            "precision": self.precision.name.lower(),
            "feature_names": list(self.feature_names),
            "transformer": self.transformer.to_dict(),
            "model": self.regressor.to_dict(),
            "nt_candidates": list(self.nt_candidates),
            "metadata": self.metadata,
        }

    def dumps(self) -> str:
        return _dumps(self.to_dict())

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_dict(cls, d: dict, source: str = "<model>", expected_digest: Optional[str] = None) -> "ModelArtifact":
        if not isinstance(d, dict):
            raise ModelFormatError(f"{source}: top level must be an object")
        version = d.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(f"{source}: unsupported schema_version {version!r}")
        try:
            routine, precision = parse_routine_name(d["routine"])
            names = tuple(d["feature_names"])
            transformer = FittedTransformer.from_dict(d["transformer"])
            regressor = Regressor.from_dict(d["model"])
            art = cls(routine, precision, transformer, regressor, list(d["nt_candidates"]),
                      dict(d.get("metadata", {})), names)
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"{source}: malformed model ({exc!r})") from None
        expected = tuple(feature_names(routine))
        if names != expected or tuple(transformer.input_features) != expected:
            raise ModelFormatError(f"{source}: feature names do not match {routine.name}")
        if regressor.n_features != len(transformer.kept_features):
            raise ModelFormatError(f"{source}: model/transformer feature count mismatch")
        digest = art.metadata.get("dataset_digest")
        if expected_digest is not None and digest != expected_digest:
            log.warning("%s: trained on dataset %s, expected %s", source, digest, expected_digest)
        return art

    @classmethod
    def load(cls, path, expected_digest: Optional[str] = None) -> "ModelArtifact":
        text = Path(path).read_text(encoding="utf-8")
        return cls.from_dict(_loads(text, str(path)), str(path), expected_digest)

    def sweep_model(self) -> SweepModel:
        return SweepModel(self.routine, self.transformer, self.regressor, self.nt_candidates)


@dataclass
class RuntimeConfig:
    machine_id: str
    selected_family: str
    routines: list
    models: dict = field(default_factory=dict)
    profile_path: Optional[str] = None
    blas_lib: Optional[str] = None
    cap_bytes: int = 500 * 2**20
    seed: int = 0
    t_eval_seconds: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"machine_id": self.machine_id}
        if self.profile_path is not None:
            d["profile_path"] = self.profile_path
        if self.blas_lib is not None:
            d["blas_lib"] = self.blas_lib
        d.update(cap_bytes=self.cap_bytes, seed=self.seed, selected_family=self.selected_family,
                 routines=list(self.routines), models=dict(self.models),
                 t_eval_seconds=dict(self.t_eval_seconds))
        return d

    def save(self, path) -> None:
        Path(path).write_text(_dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "RuntimeConfig":
        d = _loads(Path(path).read_text(encoding="utf-8"), str(path))
        try:
            return cls(machine_id=str(d["machine_id"]), selected_family=d["selected_family"],
                       routines=list(d["routines"]), models=dict(d.get("models", {})),
                       profile_path=d.get("profile_path"), blas_lib=d.get("blas_lib"),
                       cap_bytes=int(d.get("cap_bytes", 500 * 2**20)), seed=int(d.get("seed", 0)),
                       t_eval_seconds=dict(d.get("t_eval_seconds", {})))
        except (KeyError, TypeError, ValueError) as exc:
            raise ModelFormatError(f"{path}: malformed config ({exc!r})") from None

    def backend(self, base_dir=None):
        if self.profile_path:
            p = Path(self.profile_path)
            if not p.is_absolute() and base_dir is not None and not p.exists():
                p = Path(base_dir) / p
            return SyntheticBackend(ArchitectureProfile.load(p))
        return CBLASBackend(self.blas_lib)


class Predictor:
    """Loaded artifacts plus a one-entry memo of the last call.

    ``evaluations`` counts regressor sweeps. Set ``use_cache = False`` to force
    re-evaluation, or ``force_nt`` to bypass the model in :meth:`dispatch`.
    """

    def __init__(self, artifacts, config: Optional[RuntimeConfig] = None):
        self.config = config
        self._models = {}
        self.artifacts = {}
        for art in artifacts:
            key = (art.routine, art.precision)
            self.artifacts[key] = art
            self._models[key] = art.sweep_model()
        self.last_call = None
        self.evaluations = 0
        self.use_cache = True
        self.force_nt = None

    def reload(self, artifacts) -> None:
        self.__init__(artifacts, self.config)

    def _model(self, routine, precision) -> SweepModel:
        try:
            return self._models[(routine, precision)]
        except KeyError:
            raise UnknownRoutineError(routine_name(routine, precision)) from None

    def predicted_log_times(self, routine, precision, shape) -> np.ndarray:
        model = self._model(routine, precision)
        self.evaluations += 1
        return model.log_times(shape)

    def choose_threads(self, routine: Routine, precision: Precision, shape: ProblemShape) -> int:
        key = (routine, precision, shape)
        memo = self.last_call
        if self.use_cache and memo is not None and memo[0] == key:
            return memo[1]
        model = self._model(routine, precision)
        self.evaluations += 1
        nt = model.nt_candidates[int(np.argmin(model.log_times(shape)))]
        # key and value are stored together so racing readers never see a torn pair
        self.last_call = (key, nt)
        return nt

    def dispatch(self, backend, routine, precision, shape) -> tuple:
        nt = self.force_nt if self.force_nt is not None else self.choose_threads(routine, precision, shape)
        try:
            seconds = backend.execute(routine, precision, shape, nt)
        except BackendError as exc:
            raise DispatchError(f"{routine_name(routine, precision)} {shape} at nt={nt}: {exc}", nt) from exc
        return nt, seconds


def resolve_model_path(path=None) -> Path:
    env = os.environ.get(MODEL_DIR_ENV)
    if path is None:
        if not env:
            raise FileNotFoundError(f"no model path given and {MODEL_DIR_ENV} is unset")
        return Path(env)
    p = Path(path)
    if not p.exists() and env and not p.is_absolute():
        alt = Path(env) / p
        if alt.exists():
            return alt
    return p


def load(model_path=None, config_path=None) -> Predictor:
    """Materialise a Predictor from a model file (or directory) and a config file."""
    config = RuntimeConfig.load(config_path) if config_path is not None else None
    mpath = resolve_model_path(model_path)
    if mpath.is_dir():
        if config is not None and config.models:
            files = [mpath / config.models[r] for r in config.routines if r in config.models]
        else:
            files = sorted(mpath.glob("*" + MODEL_SUFFIX))
    else:
        files = [mpath]
    artifacts = [ModelArtifact.load(f) for f in files]
    if config is not None:
        have = {a.name for a in artifacts}
        for r in config.routines:
            if r not in have:
                raise UnknownRoutineError(f"config routine {r!r} not found in {mpath}")
        chosen = {a.regressor.family for a in artifacts}
        if config.selected_family not in chosen:
            log.warning("config selects %s but models hold %s", config.selected_family, sorted(chosen))
    return Predictor(artifacts, config)


def choose_threads(predictor: Predictor, routine, precision, shape) -> int:
    return predictor.choose_threads(routine, precision, shape)


def dispatch(predictor: Predictor, backend, routine, precision, shape) -> tuple:
    return predictor.dispatch(backend, routine, precision, shape)
