"""Run configuration: JSON in, validated model/params out.

Validation is two-layered: the bundled JSON Schema rejects unknown fields
and type errors with a field path, then model construction applies the
semantic checks the schema cannot express (dimension agreement, motion-type
conditional fields). Both layers raise the same error type, so the command
line maps every config problem to one exit code.
"""

from __future__ import annotations

import json
from importlib import resources

import jsonschema
import numpy as np

from .errors import ConfigurationError
from .filter import FilterParams
from .models import (
    BirthModel,
    ModelBundle,
    Region,
    make_cv_motion,
    make_position_sensor,
    make_static_motion,
    uniform_birth,
    validate_model,
)

SCHEMA_VERSION = 1


def _schema() -> dict:
    text = resources.files("bpmtf").joinpath("config.schema.json").read_text()
    return json.loads(text)


def validate_config(cfg: dict) -> None:
    validator = jsonschema.Draft202012Validator(_schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigurationError(err.message, path)


def load_config(source) -> dict:
    """Parse and validate a config from a path, file object, or dict."""
    if isinstance(source, dict):
        cfg = source
    elif hasattr(source, "read"):
        cfg = json.load(source)
    else:
        try:
            with open(source, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except FileNotFoundError:
            raise ConfigurationError("config file not found", str(source))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"invalid JSON: {e}", str(source))
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object", "<root>")
    validate_config(cfg)
    return cfg


def _require(section: dict, key: str, where: str):
    if key not in section:
        raise ConfigurationError("field is required by the configured motion type", f"{where}.{key}")
    return section[key]


def build_model(cfg: dict) -> ModelBundle:
    r = cfg["region"]
    region = Region(np.asarray(r["lower"], float), np.asarray(r["upper"], float), tuple(r["resolution"]))
    mo = cfg["motion"]
    dims = int(mo.get("dims", region.dim))
    if dims != region.dim:
        raise ConfigurationError(
            f"motion dims {dims} must equal region dimension {region.dim}", "motion.dims"
        )
    if mo["type"] == "cv":
        motion = make_cv_motion(
            dims=dims,
            dt=float(_require(mo, "dt", "motion")),
            accel_std=float(_require(mo, "accelStd", "motion")),
            survival=float(mo["survival"]),
        )
        velocity_std = float(_require(cfg["birth"], "velocityStd", "birth"))
        velocity_prior = velocity_std ** 2 * np.eye(dims)
    else:
        motion = make_static_motion(
            dims, noise_std=float(_require(mo, "noiseStd", "motion")), survival=float(mo["survival"])
        )
        velocity_prior = None
    se = cfg["sensor"]
    sensor = make_position_sensor(
        state_dim=motion.state_dim,
        position_dim=dims,
        noise_std=float(se["noiseStd"]),
        pd=float(se["detectionProb"]),
        clutter_rate=float(se["clutterRate"]),
    )
    birth = uniform_birth(region, float(cfg["birth"]["rate"]), velocity_prior)
    bundle = ModelBundle(region, motion, sensor, birth)
    validate_model(bundle)
    return bundle


def build_params(cfg: dict) -> FilterParams:
    f = cfg.get("filter", {})
    radius = f.get("gateThreshold")
    params = FilterParams(
        gate_prob=float(f.get("gateProbability", 0.999)),
        gate_radius=None if radius is None else float(radius),
        association=str(f.get("association", "lbp")),
        lbp_tol=float(f.get("lbpTolerance", 1e-6)),
        lbp_max_iter=int(f.get("lbpMaxIterations", 1000)),
        lbp_damping=float(f.get("lbpDamping", 0.0)),
        coalescence=bool(f.get("coalescence", True)),
        recycle_budget=float(f.get("recycleBudget", 0.05)),
        prune_threshold=float(f.get("pruneThreshold", 1e-4)),
        report_threshold=float(f.get("reportThreshold", 0.5)),
        max_components=int(f.get("maxComponents", 10)),
        merge_threshold=float(f.get("mergeThreshold", 0.1)),
    )
    try:
        params.validate()
    except Exception as e:
        raise ConfigurationError(str(e), "filter")
    return params


def filter_mode(cfg: dict) -> str:
    """The stepping variant the config asks for: "bpmtf" or "bp-member"."""
    return str(cfg.get("filter", {}).get("mode", "bpmtf"))


def cold_start(cfg: dict) -> bool:
    return bool(cfg.get("filter", {}).get("coldStart", False))


def sim_settings(cfg: dict) -> dict:
    if "sim" not in cfg:
        raise ConfigurationError("this command needs a sim section", "sim")
    s = cfg["sim"]
    initial = s.get("initialTargets")
    if isinstance(initial, list):
        initial = np.asarray(initial, dtype=float)
    return {"n_scans": int(s["nScans"]), "seed": int(s["seed"]), "initial_targets": initial}


def eval_settings(cfg: dict) -> dict:
    e = cfg.get("eval", {})
    return {
        "ospa_cutoff": float(e.get("ospaCutoff", 10.0)),
        "ospa_order": float(e.get("ospaOrder", 1.0)),
        "calibration_radius": float(e.get("calibrationRadius", 5.0)),
    }


def default_config() -> dict:
    """The standard benchmark scenario, expressed as a config document."""
    return {
        "schemaVersion": SCHEMA_VERSION,
        "region": {"lower": [-100.0, -100.0], "upper": [100.0, 100.0], "resolution": [40, 40]},
        "motion": {"type": "cv", "dims": 2, "dt": 1.0, "accelStd": 0.2, "survival": 0.99},
        "sensor": {"noiseStd": 1.0, "detectionProb": 0.9, "clutterRate": 10.0},
        "birth": {"rate": 0.1, "velocityStd": 0.5},
        "filter": {},
        "sim": {"nScans": 100, "seed": 1234, "initialTargets": 10},
        "eval": {"ospaCutoff": 10.0, "ospaOrder": 1.0, "calibrationRadius": 5.0},
    }
