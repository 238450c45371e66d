"""
JSON configuration files

A config file is one JSON object with optional sections:

    {
      "modem":    {"rate_kbps": 6, "scheme": "css", ...},
      "channel":  {"codec": {"frame_ms": 20, "bitrate_kbps": 64},
                   "network": {"loss_prob": 0.0}, "snr_db": null, "gain": 1.0},
      "train":    {"epochs": 50, "noise": {"mean_px": 5, "std_px": 2}},
      "corpus":   {"n_frames": 1000, "seed": 0},
      "pipeline": {"detector": "detector.json", "predictor": "predictor.json"}
    }

Sections map onto the frozen config dataclasses; unknown keys are reported
with a warning and ignored.
"""
from dataclasses import fields
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union
import json
import logging

from .channel import ChannelConfig, CodecSchedule, ExternalCodec, NetworkModel
from .corpus import SyntheticCorpusConfig, create_corpus_config
from .errors import ConfigError
from .modem import ModemConfig, create_modem_config
from .pipeline import PipelineConfig
from .trainer import NoiseInjection, TrainConfig, create_train_config

logger = logging.getLogger(__name__)

SECTIONS = ("modem", "channel", "train", "corpus", "pipeline")


def load_config(filepath: Optional[Union[str, Path]]) -> Dict[str, Dict[str, Any]]:
    """
    Read a config file into {section: dict}; None yields empty sections

    Raises:
        ConfigError: unreadable JSON or a section that is not an object
    """
    config: Dict[str, Dict[str, Any]] = {name: {} for name in SECTIONS}
    if filepath is None:
        return config
    try:
        with open(filepath, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config {filepath}: {e}") from e
    if not isinstance(doc, dict):
        raise ConfigError(f"{filepath}: top level must be a JSON object")
    for name, section in doc.items():
        if name not in SECTIONS:
            logger.warning("Unknown config section '%s'", name)
            continue
        if not isinstance(section, dict):
            raise ConfigError(f"{filepath}: section '{name}' must be a JSON object")
        config[name] = dict(section)
    return config


def merge(section: Mapping[str, Any], **overrides) -> Dict[str, Any]:
    """Section values overridden by every non-None keyword"""
    out = dict(section)
    out.update({k: v for k, v in overrides.items() if v is not None})
    return out


def modem_config(section: Mapping[str, Any]) -> ModemConfig:
    """`rate_kbps` selects a preset; other keys override ModemConfig fields"""
    params = dict(section)
    rate = params.pop("rate_kbps", None)
    if rate is not None:
        return ModemConfig.from_preset(rate, **params)
    return create_modem_config(**params)


def codec_from(value: Any) -> Union[CodecSchedule, ExternalCodec, None]:
    """
    Codec entry: "identity"/null, {"frame_ms", "bitrate_kbps"},
    {"segments": [...]}, a list of segments, or {"external": command}
    """
    if value is None or value == "identity":
        return None
    if isinstance(value, list):
        return CodecSchedule.from_list(value)
    if not isinstance(value, dict):
        raise ConfigError(f"cannot interpret codec setting {value!r}")
    if "external" in value:
        return ExternalCodec(str(value["external"]), value.get("timeout", 120.0))
    if "segments" in value:
        return CodecSchedule.from_list(value["segments"])
    return CodecSchedule.from_list([value])


def _build(cls, params: Mapping[str, Any], label: str):
    """Instantiate a config dataclass, warning about unknown keys"""
    known = {f.name for f in fields(cls)}
    for key in sorted(set(params) - known):
        logger.warning("Unknown %s config parameter '%s'", label, key)
    return cls(**{k: v for k, v in params.items() if k in known})


def channel_config(section: Mapping[str, Any]) -> ChannelConfig:
    params = dict(section)
    known = {"codec", "network", "snr_db", "gain", "seed"}
    for key in sorted(set(params) - known):
        logger.warning("Unknown channel config parameter '%s'", key)
    codec = codec_from(params["codec"]) if "codec" in params else CodecSchedule()
    network = _build(NetworkModel, params.get("network", {}), "network")
    return ChannelConfig(
        codec=codec,
        network=network,
        snr_db=params.get("snr_db"),
        gain=float(params.get("gain", 1.0)),
        seed=params.get("seed"),
    )


def train_config(section: Mapping[str, Any]) -> TrainConfig:
    params = dict(section)
    noise = params.pop("noise", None)
    if isinstance(noise, dict):
        params["noise"] = _build(NoiseInjection, {
            k: tuple(v) if k == "canvas" else v for k, v in noise.items()
        }, "noise")
    return create_train_config(**params)


def corpus_config(section: Mapping[str, Any]) -> SyntheticCorpusConfig:
    return create_corpus_config(**section)


PIPELINE_PATHS = ("input", "output", "detector", "predictor")


def pipeline_config(section: Mapping[str, Any], **fields_) -> PipelineConfig:
    """
    Pipeline section plus already-built fields (modem, channel, corpus, ...)

    Path entries become Paths and `canvas` a tuple; `rate_kbps` in `fields_`
    wins over the section.
    """
    params = dict(section)
    params.update({k: v for k, v in fields_.items() if v is not None})
    for key in PIPELINE_PATHS:
        if params.get(key) is not None:
            params[key] = Path(params[key])
    if params.get("canvas") is not None:
        params["canvas"] = tuple(params["canvas"])
    return _build(PipelineConfig, params, "pipeline")
