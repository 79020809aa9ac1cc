"""Instance-discrimination graph contrastive learning for link prediction."""

from ._core import *  # noqa: F401,F403
from ._core import ExperimentConfig


def config_from_dict(values: dict) -> ExperimentConfig:
    """Config with the given keys overridden; keys use the config file names."""
    lines = []
    for key, value in values.items():
        if isinstance(value, bool):
            value = "true" if value else "false"
        elif isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return ExperimentConfig.parse("\n".join(lines) + "\n")


def config_to_dict(config: ExperimentConfig) -> dict:
    out = {}
    for line in config.to_text().splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out
