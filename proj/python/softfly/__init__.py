"""Delayed flapping-wing hover control: simulator, demonstrations, BC, PPO and evaluation."""

import json as _json

from ._core import *  # noqa: F401,F403
from ._core import Config as _Config


def config(overrides=None, path=None):
    """Build a Config from defaults, an optional JSON file and a nested dict of overrides."""
    cfg = _Config.load(path) if path else _Config()
    if overrides:
        doc = _json.loads(cfg.to_json())
        for section, values in overrides.items():
            if isinstance(values, dict):
                doc.setdefault(section, {}).update(values)
            else:
                doc[section] = values
        cfg = _Config.from_json(_json.dumps(doc))
    return cfg
