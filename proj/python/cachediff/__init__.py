"""Feature and guidance caching for diffusion sampling.

Configs are plain dicts mirroring the experiment JSON document; any key left
out keeps its default. Reports come back as dicts of the report JSON.
"""

import json

from . import _cachediff as _core
from ._cachediff import (
    SCHEMA_VERSION,
    STRATEGIES,
    CfgBias,
    ConfigError,
    NumericError,
    ShapeError,
    center_shift,
    center_unshift,
    dynamic_reuse,
    enhancement_weights,
    fft2,
    ifft2,
    make_masks,
    mse,
    psnr,
    reconstruct_uncond,
    record_bias,
    split_frequency,
    ssim,
    switch_timestep,
    w_of,
)

__all__ = [
    "SCHEMA_VERSION",
    "STRATEGIES",
    "CfgBias",
    "ConfigError",
    "Model",
    "NumericError",
    "ShapeError",
    "ablate",
    "build_plan",
    "center_shift",
    "center_unshift",
    "compare",
    "default_config",
    "dynamic_reuse",
    "enhancement_weights",
    "fft2",
    "ifft2",
    "make_masks",
    "mse",
    "plan_csv",
    "psnr",
    "reconstruct_uncond",
    "record_bias",
    "run",
    "sample",
    "split_frequency",
    "ssim",
    "strip_timing",
    "sweep",
    "switch_timestep",
    "w_of",
    "write_report",
]


def _dump(config):
    return json.dumps(config or {}, allow_nan=False)


def _load(text):
    return json.loads(text)


def default_config():
    return json.loads(_core.default_config())


def build_plan(steps, strategy="fastercache", config=None):
    return _core.build_plan(steps, strategy, _dump(config))


def plan_csv(steps, strategy="fastercache", config=None):
    return _core.plan_csv(steps, strategy, _dump(config))


class Model:
    """Noise predictor built from a config (analytic world or tiny DiT)."""

    def __init__(self, config=None):
        self._model = _core.Model(_dump(config))

    @property
    def name(self):
        return self._model.name

    @property
    def layer_count(self):
        return self._model.layer_count

    def predict(self, x_t, t, condition):
        """Returns (eps, macs)."""
        return self._model.predict(x_t, t, condition)

    def mac_breakdown(self, shape):
        return self._model.mac_breakdown(list(shape))


def sample(config=None, strategy=None):
    return _core.sample(_dump(config), strategy or "")


def run(config=None):
    return _load(_core.run(_dump(config)))


def ablate(config=None):
    return _load(_core.ablate(_dump(config)))


def compare(config, strategies):
    return _load(_core.compare(_dump(config), list(strategies)))


def sweep(config, parameter, values):
    return _load(_core.sweep(_dump(config), parameter, [float(v) for v in values]))


def write_report(report, directory, stem):
    return _core.write_report(json.dumps(report), str(directory), stem)


def strip_timing(report):
    return _load(_core.strip_timing(json.dumps(report)))
