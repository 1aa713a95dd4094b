"""End-to-end experiment: split, base model, error observations, fit, sweep.

Every stage reads its inputs from, and writes its outputs to, the run's
output directory, so running the stages one by one produces the same files
as :func:`run_pipeline`.

Output files
------------
``s1.csv``, ``s2.csv``, ``s3.csv``
    Base-training, error-observation and evaluation samples.
``base_model.rules``
    The base rule set in the text format of :mod:`abstain_gp.rules`.
``errors_all.csv``, ``errors.csv``
    Error bits of the base model on all of S2, and the subsample the error
    model is trained on.
``error_model.npz`` / ``error_model.json``
    Saved GP fit or logistic fit. ``standardizer.json`` accompanies it when
    inputs are standardised.
``sweep.csv``, ``sweep.json``
    One row per threshold pair.
``decisions.csv``
    Per-point base prediction, posterior summary and verdict on S3 under the
    single policy ``(mean_threshold, var_threshold)``.
``manifest.json``
    Config hash, seed, library versions and per-stage status.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import platform
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, baseline, gp
from . import data as dmod
from .abstain import VAR_DISABLED, ThresholdPolicy, Verdict
from .errors import AbstainGPError, ConfigError, DataError, NotConvergedError
from .evaluation import decisions_for, sweep
from .kernel import KernelSpec
from .rules import LearnerConfig, RuleClassifier, learn_rules, load_rules, save_rules

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

STAGES = ("split", "train-base", "errors", "fit", "sweep")
# independent sampling streams derived from the run seed
_STREAM_S1, _STREAM_S2, _STREAM_S3, _STREAM_META = range(4)


def _grid(spec, name):
    if isinstance(spec, dict):
        try:
            vals = np.linspace(float(spec["start"]), float(spec["stop"]),
                               int(spec["num"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: expected start/stop/num ({exc})") from None
        return [float(v) for v in vals]
    if not isinstance(spec, (list, tuple)) or not spec:
        raise ConfigError(f"{name} must be a non-empty list or a start/stop/num table")
    return [parse_threshold(v, name) for v in spec]


def parse_threshold(v, name):
    if isinstance(v, str) and v.lower() in ("max", "disabled", "off"):
        return VAR_DISABLED
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{name}: bad threshold {v!r}") from None


@dataclass
class RunConfig:
    dataset: str
    seed: int
    output_dir: str = "out"
    label_column: str = "class"
    positive_value: str = "4"
    features: list[str] | None = None
    base_region: list[str] = field(default_factory=list)
    meta_region: list[str] = field(default_factory=list)
    test_region: list[str] = field(default_factory=list)
    base_fraction: float = 0.5
    meta_fraction: float = 0.5
    test_fraction: float = 0.5
    base_model: str = "learn"
    rules_file: str | None = None
    min_precision: float = 0.9
    max_conditions: int = 3
    error_model: str = "gp"
    variance: float = 3.0
    length_scale: float = 0.1
    jitter: float | None = None
    tol: float = 1e-6
    max_iter: int = 50
    max_points: int = gp.DEFAULT_MAX_POINTS
    meta_train_size: int | None = 500
    standardize: bool = False
    mean_grid: list = field(default_factory=lambda: {"start": 0.0, "stop": 5.0, "num": 51})
    var_grid: list = field(default_factory=lambda: ["max"])
    mean_threshold: float = 1.0
    var_threshold: float = 3.0
    flip: bool = True

    def __post_init__(self):
        if self.seed is None or isinstance(self.seed, bool) or not isinstance(self.seed, int):
            raise ConfigError("seed is mandatory and must be an integer")
        if self.base_model not in ("learn", "rules-file"):
            raise ConfigError(f"base_model must be 'learn' or 'rules-file', got {self.base_model!r}")
        if self.base_model == "rules-file" and not self.rules_file:
            raise ConfigError("base_model 'rules-file' needs rules_file")
        if self.error_model not in ("gp", "logistic"):
            raise ConfigError(f"error_model must be 'gp' or 'logistic', got {self.error_model!r}")
        for name in ("base_region", "meta_region", "test_region"):
            val = getattr(self, name)
            if isinstance(val, str):
                setattr(self, name, [val])
        if self.meta_train_size is not None and self.meta_train_size < 1:
            raise ConfigError("meta_train_size must be >= 1")
        self.mean_grid = _grid(self.mean_grid, "mean_grid")
        self.var_grid = _grid(self.var_grid, "var_grid")
        self.var_threshold = parse_threshold(self.var_threshold, "var_threshold")
        self.kernel_spec()
        self.policy()
        for frac in (self.base_fraction, self.meta_fraction, self.test_fraction):
            if not 0 < frac <= 1:
                raise ConfigError(f"sample fractions must lie in (0, 1], got {frac}")

    @classmethod
    def from_mapping(cls, mapping, base_dir=None) -> RunConfig:
        mapping = dict(mapping)
        kernel = mapping.pop("kernel", None)
        if isinstance(kernel, dict):
            for key in ("variance", "length_scale", "jitter"):
                if key in kernel:
                    mapping[key] = kernel[key]
        learner = mapping.pop("learner", None)
        if isinstance(learner, dict):
            mapping.update(learner)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "dataset" not in mapping or "seed" not in mapping:
            raise ConfigError("config needs 'dataset' and 'seed'")
        if base_dir is not None:
            for key in ("dataset", "rules_file", "output_dir"):
                if mapping.get(key):
                    p = Path(mapping[key])
                    mapping[key] = str(p if p.is_absolute() else Path(base_dir) / p)
        try:
            return cls(**mapping)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self):
        return dataclasses.asdict(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.variance, self.length_scale, self.jitter)

    def policy(self) -> ThresholdPolicy:
        return ThresholdPolicy(self.mean_threshold, self.var_threshold, self.flip)

    def stream_seed(self, stream: int) -> int:
        child = np.random.SeedSequence(self.seed).spawn(4)[stream]
        return int(child.generate_state(1, dtype=np.uint64)[0])

    @property
    def out(self) -> Path:
        return Path(self.output_dir)


def load_config(path, overrides=None) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".toml":
            mapping = tomllib.loads(text)
        else:
            mapping = json.loads(text)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    mapping.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.from_mapping(mapping, base_dir=path.parent)


# --- stages ---------------------------------------------------------------

def _load_dataset(cfg: RunConfig) -> dmod.LabeledDataset:
    ds = dmod.load_csv(cfg.dataset, cfg.label_column, cfg.positive_value)
    if cfg.features:
        ds = ds.select_features(cfg.features)
    return ds


def _region(ds, predicates):
    for text in predicates:
        ds = dmod.region_filter(ds, dmod.RegionPredicate.parse(text))
    return ds


def _load_split(cfg, name):
    return dmod.load_csv(cfg.out / f"{name}.csv", "label", "1")


def stage_split(cfg: RunConfig):
    ds = _load_dataset(cfg)
    cfg.out.mkdir(parents=True, exist_ok=True)
    plan = (("s1", cfg.base_region, cfg.base_fraction, _STREAM_S1),
            ("s2", cfg.meta_region, cfg.meta_fraction, _STREAM_S2),
            ("s3", cfg.test_region, cfg.test_fraction, _STREAM_S3))
    sizes = {}
    for name, region, frac, stream in plan:
        part = _region(ds, region)
        if len(part) == 0:
            raise DataError(f"region {region} of {name} selects no rows")
        part = dmod.sample_fraction(part, frac, cfg.stream_seed(stream))
        dmod.write_csv(part, cfg.out / f"{name}.csv")
        sizes[name] = len(part)
    return {"rows": len(ds), "sizes": sizes}


def _base_classifier(cfg):
    names = _load_split(cfg, "s1").feature_names
    return RuleClassifier(load_rules(cfg.out / "base_model.rules"), names)


def stage_train_base(cfg: RunConfig):
    s1 = _load_split(cfg, "s1")
    if cfg.base_model == "rules-file":
        model = load_rules(cfg.rules_file)
    else:
        model = learn_rules(s1, LearnerConfig(cfg.min_precision, cfg.max_conditions))
    RuleClassifier(model, s1.feature_names)  # schema check
    save_rules(model, cfg.out / "base_model.rules")
    return {"rules": len(model.rules)}


def stage_errors(cfg: RunConfig):
    s2 = _load_split(cfg, "s2")
    obs = dmod.make_error_observations(s2, _base_classifier(cfg))
    dmod.write_error_csv(obs, cfg.out / "errors_all.csv")
    size = len(obs) if cfg.meta_train_size is None else cfg.meta_train_size
    if size > len(obs):
        raise DataError(
            f"meta_train_size {size} exceeds the {len(obs)} available error observations")
    picked = dmod.sample_size(dmod.LabeledDataset(obs.inputs, obs.errors, obs.feature_names),
                              size, cfg.stream_seed(_STREAM_META))
    train = dmod.ErrorObservations(picked.features, picked.labels, picked.feature_names)
    dmod.write_error_csv(train, cfg.out / "errors.csv")
    return {"available": len(obs), "used": len(train),
            "error_rate": float(np.mean(train.errors))}


def _standardizer_path(cfg):
    return cfg.out / "standardizer.json"


def _model_path(cfg):
    return cfg.out / ("error_model.npz" if cfg.error_model == "gp" else "error_model.json")


def stage_fit(cfg: RunConfig):
    obs = dmod.load_error_csv(cfg.out / "errors.csv")
    if cfg.standardize:
        scaler = dmod.Standardizer.fit(obs.inputs)
        _standardizer_path(cfg).write_text(json.dumps(scaler.to_dict()) + "\n",
                                           encoding="utf-8")
        obs = dmod.ErrorObservations(scaler.transform(obs.inputs), obs.errors,
                                     obs.feature_names)
    if cfg.error_model == "gp":
        fit = gp.fit_laplace(obs, cfg.kernel_spec(), cfg.tol, cfg.max_iter,
                             cfg.max_points)
        if not fit.converged:
            raise NotConvergedError(
                f"Laplace fit did not converge in {cfg.max_iter} iterations")
        gp.save_fit(fit, _model_path(cfg))
        return {"iterations": fit.iterations, "jitter": fit.spec.jitter,
                "log_marginal_likelihood": gp.log_marginal_likelihood(fit)}
    fit = baseline.fit_logistic(obs)
    if not fit.converged:
        raise NotConvergedError("logistic fit did not converge")
    baseline.save_logistic(fit, _model_path(cfg))
    return {"iterations": fit.iterations}


def _load_error_model(cfg):
    path = _model_path(cfg)
    model = gp.load_fit(path) if cfg.error_model == "gp" else baseline.load_logistic(path)
    transform = None
    if cfg.standardize:
        scaler = dmod.Standardizer.from_dict(
            json.loads(_standardizer_path(cfg).read_text(encoding="utf-8")))
        transform = scaler.transform
    return model, transform


def stage_sweep(cfg: RunConfig):
    s3 = _load_split(cfg, "s3")
    base = _base_classifier(cfg)
    model, transform = _load_error_model(cfg)
    result = sweep(base, model, s3, cfg.mean_grid, cfg.var_grid, cfg.flip, transform)
    result.write(cfg.out / "sweep.csv", cfg.out / "sweep.json")
    decisions = decisions_for(base, model, s3.features, cfg.policy(), transform)
    with (cfg.out / "decisions.csv").open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*s3.feature_names, "label", "base_pred", "logit_mean",
                    "logit_var", "error_rate", "verdict", "final_label"])
        for row, lab, d in zip(s3.features, s3.labels, decisions):
            w.writerow([repr(float(v)) for v in row]
                       + [int(lab), d.base_pred, repr(d.summary.logit_mean),
                          repr(d.summary.logit_var), repr(d.summary.error_rate),
                          str(d.verdict),
                          "" if d.final_label is None else d.final_label])
    accepted = sum(d.verdict is not Verdict.ABSTAIN for d in decisions)
    return {"rows": len(result.rows), "test_points": len(s3),
            "policy_coverage": accepted / len(s3)}


_STAGE_FUNCS = {
    "split": stage_split,
    "train-base": stage_train_base,
    "errors": stage_errors,
    "fit": stage_fit,
    "sweep": stage_sweep,
}


class StageError(AbstainGPError):
    """A pipeline stage failed; keeps the exit code of the underlying error."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)


def _manifest_path(cfg):
    return cfg.out / "manifest.json"


def _versions():
    import scipy
    return {"abstain_gp": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "scipy": scipy.__version__}


def _update_manifest(cfg, stage, status, detail):
    path = _manifest_path(cfg)
    manifest = {}
    if path.is_file():
        try:
            manifest = json.loads(path.read_text(encoding="utf-8"))
        except ValueError:
            manifest = {}
    if manifest.get("config_hash") != cfg.digest():
        manifest = {"stages": {}}
    manifest.update({"config_hash": cfg.digest(), "seed": cfg.seed,
                     "prng": "numpy PCG64 via SeedSequence(seed).spawn(4)",
                     "config": cfg.to_dict(), "versions": _versions()})
    manifest["stages"][stage] = {"status": status, **detail}
    manifest["partial"] = any(s["status"] != "ok" for s in manifest["stages"].values()) \
        or set(manifest["stages"]) != set(STAGES)
    cfg.out.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n",
                    encoding="utf-8")


def run_stage(cfg: RunConfig, stage: str):
    """Run one named stage, recording its outcome in the manifest."""
    func = _STAGE_FUNCS[stage]
    try:
        detail = func(cfg)
    except AbstainGPError as exc:
        _update_manifest(cfg, stage, "failed", {"error": str(exc)})
        raise StageError(stage, exc) from exc
    except (OSError, ValueError, np.linalg.LinAlgError) as exc:
        _update_manifest(cfg, stage, "failed", {"error": str(exc)})
        err = DataError(str(exc))
        raise StageError(stage, err) from exc
    _update_manifest(cfg, stage, "ok", {"result": detail})
    log.info("stage %s: %s", stage, detail)
    return detail


def check_inputs(cfg: RunConfig) -> None:
    missing = [p for p in (cfg.dataset, cfg.rules_file)
               if p is not None and not Path(p).is_file()]
    if cfg.base_model != "rules-file" and cfg.rules_file in missing:
        missing.remove(cfg.rules_file)
    if missing:
        raise ConfigError(f"missing input files: {missing}")


def run_pipeline(cfg: RunConfig) -> dict:
    """Run every stage in order; returns the per-stage summaries."""
    check_inputs(cfg)
    return {stage: run_stage(cfg, stage) for stage in STAGES}
