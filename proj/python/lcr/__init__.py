"""Python bindings for the LSTM-CrossRWKV video model core."""

from . import _lcr
from ._lcr import (
    ConfigError,
    DimensionError,
    NonFiniteError,
    VideoSample,
    adaptive_canny,
    decay_from_omega,
    make_tube_mask,
    motion_name,
    otsu_threshold,
    preset_names,
    reference_variants,
    render_video,
    run_oracles,
    wkv_bidirectional,
    wkv_bruteforce,
    wkv_recurrent,
)

__all__ = [
    "ConfigError",
    "DimensionError",
    "Model",
    "NonFiniteError",
    "VideoSample",
    "adaptive_canny",
    "decay_from_omega",
    "make_tube_mask",
    "motion_name",
    "otsu_threshold",
    "param_breakdown",
    "param_count",
    "preset_config",
    "preset_names",
    "reference_variants",
    "render_video",
    "run_oracles",
    "train",
    "wkv_bidirectional",
    "wkv_bruteforce",
    "wkv_recurrent",
]


def _kv(values):
    # the core reads key = value text; bools are spelled true/false
    out = {}
    for key, value in (values or {}).items():
        out[key] = str(value).lower() if isinstance(value, bool) else str(value)
    return out


def preset_config(name):
    return dict(_lcr.preset_config(name))


def param_count(config):
    return _lcr.param_count(_kv(config))


def param_breakdown(config):
    return dict(_lcr.param_breakdown(_kv(config)))


class Model:
    """Thin wrapper that accepts plain Python values in configs."""

    def __init__(self, config=None, seed=0, *, preset=None, _core=None):
        if _core is not None:
            self._core = _core
        elif preset is not None:
            base = _lcr.preset_config(preset)
            base.update(_kv(config))
            self._core = _lcr.Model(base, seed)
        else:
            self._core = _lcr.Model(_kv(config), seed)

    @classmethod
    def load(cls, path):
        return cls(_core=_lcr.Model.load(str(path)))

    def save(self, path):
        self._core.save(str(path))

    @property
    def config(self):
        return dict(self._core.config)

    def parameter_count(self):
        return self._core.parameter_count()

    def parameters(self):
        return self._core.parameters()

    def forward(self, video):
        return self._core.forward(video)

    __call__ = forward

    def stream(self, frames):
        return self._core.stream(list(frames))


def train(model, config=None, samples=800):
    """Trains `model` in place; returns (step, loss, train_acc, val_acc) rows."""
    return _lcr.train(model._core, _kv(config), samples)
