"""Run configuration: strict JSON schema with field-path error messages.

Unknown keys are rejected; every field is validated before a run starts.
``switch_freq`` accepts null (or the string "inf") for a projector that is
set once at step 0 and never refreshed again.
"""

import json
from dataclasses import dataclass, fields

from ..errors import ConfigError

TASKS = ("linear-regression", "mlp-classification")
OPTIMIZERS = (
    "sgd", "adam", "galore-adam", "galore-adafactor", "lora-adam",
    "galore-adam-8bit",
)
RHOS = ("adam", "identity")
SWITCH_POLICIES = ("carry", "reset", "rotate")
LR_SCHEDULES = ("constant", "warmup-cosine")

_DEFAULT_DIMS = {
    "linear-regression": [8, 8],
    "mlp-classification": [16, 16, 16, 4],
}


@dataclass(frozen=True)
class RunConfig:
    task: str
    optimizer: str
    steps: int
    eta: float
    seed: int = 0
    dims: tuple = ()
    rank: int = 4
    switch_freq: int = 200  # None means: initialize once, never switch
    alpha: float = 0.25
    batch_size: int = 32
    dataset_size: int = 256
    rho: str = "adam"
    switch_policy: str = "carry"
    per_layer_updates: bool = False
    lr_schedule: str = "constant"
    log_every: int = 10
    track_layer: int = 0
    lora_alpha: float = 32.0
    out_dir: str = None

    @property
    def depth(self):
        return len(self.dims) - 1

    def replace(self, **kw):
        d = self.as_dict()
        d.update(kw)
        return RunConfig(**d)

    def as_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def canonical_json(self):
        d = self.as_dict()
        d["dims"] = list(d["dims"])
        return json.dumps(d, sort_keys=True)


def _want(value, types, path):
    if types is int and isinstance(value, bool):
        raise ConfigError(f"{path}: expected int, got bool")
    if not isinstance(value, types):
        tname = types.__name__ if isinstance(types, type) else "number"
        raise ConfigError(f"{path}: expected {tname}, got {type(value).__name__}")
    return value


def _positive_int(value, path):
    _want(value, int, path)
    if value < 1:
        raise ConfigError(f"{path}: must be >= 1, got {value}")
    return value


def _positive_float(value, path):
    _want(value, (int, float), path)
    if not value > 0:
        raise ConfigError(f"{path}: must be > 0, got {value}")
    return float(value)


def _choice(value, options, path):
    if value not in options:
        raise ConfigError(f"{path}: must be one of {', '.join(options)}; got {value!r}")
    return value


def validate_config(raw):
    """Validate a plain dict into a RunConfig; raises ConfigError."""
    if not isinstance(raw, dict):
        raise ConfigError("config: expected a JSON object")
    known = {f.name for f in fields(RunConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{key}: unknown field")
    for req in ("task", "optimizer", "steps", "eta"):
        if req not in raw:
            raise ConfigError(f"{req}: required field is missing")

    task = _choice(raw["task"], TASKS, "task")
    optimizer = _choice(raw["optimizer"], OPTIMIZERS, "optimizer")
    steps = _positive_int(raw["steps"], "steps")
    eta = _positive_float(raw["eta"], "eta")

    seed = _want(raw.get("seed", 0), int, "seed")
    if not 0 <= seed < 2 ** 64:
        raise ConfigError("seed: outside the unsigned 64-bit range")

    dims = raw.get("dims", _DEFAULT_DIMS[task])
    if (not isinstance(dims, list) or len(dims) < 2
            or any(not isinstance(d, int) or isinstance(d, bool) or d < 1 for d in dims)):
        raise ConfigError("dims: expected a list of >= 2 positive ints")

    rank = _positive_int(raw.get("rank", 4), "rank")

    sf = raw.get("switch_freq", 200)
    if sf == "inf":
        sf = None
    if sf is not None:
        sf = _positive_int(sf, "switch_freq")

    alpha = _positive_float(raw.get("alpha", 0.25), "alpha")
    dataset_size = _positive_int(raw.get("dataset_size", 256), "dataset_size")
    batch_size = _positive_int(raw.get("batch_size", 32), "batch_size")
    if batch_size > dataset_size:
        raise ConfigError(
            f"batch_size: {batch_size} exceeds dataset_size {dataset_size}"
        )

    rho = _choice(raw.get("rho", "adam"), RHOS, "rho")
    switch_policy = _choice(
        raw.get("switch_policy", "carry"), SWITCH_POLICIES, "switch_policy"
    )
    per_layer = _want(raw.get("per_layer_updates", False), bool, "per_layer_updates")
    lr_schedule = _choice(
        raw.get("lr_schedule", "constant"), LR_SCHEDULES, "lr_schedule"
    )
    log_every = _positive_int(raw.get("log_every", 10), "log_every")

    track_layer = _want(raw.get("track_layer", 0), int, "track_layer")
    if not 0 <= track_layer < len(dims) - 1:
        raise ConfigError(
            f"track_layer: {track_layer} outside [0, {len(dims) - 2}]"
        )

    lora_alpha = _positive_float(raw.get("lora_alpha", 32.0), "lora_alpha")

    out_dir = raw.get("out_dir")
    if out_dir is not None:
        _want(out_dir, str, "out_dir")

    return RunConfig(
        task=task, optimizer=optimizer, steps=steps, eta=eta, seed=seed,
        dims=tuple(dims), rank=rank, switch_freq=sf, alpha=alpha,
        batch_size=batch_size, dataset_size=dataset_size, rho=rho,
        switch_policy=switch_policy, per_layer_updates=per_layer,
        lr_schedule=lr_schedule, log_every=log_every, track_layer=track_layer,
        lora_alpha=lora_alpha, out_dir=out_dir,
    )


def load_config(path):
    """Read and validate a JSON run config from disk."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config: file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"config: invalid JSON: {e}")
    return validate_config(raw)
