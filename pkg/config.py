import os
from dataclasses import dataclass, field, fields
from typing import Dict, List, Optional

from dotenv import dotenv_values, load_dotenv

from xling.errors import ConfigError

load_dotenv()


class Config:
    SEED = int(os.environ.get('XLING_SEED', '13'))
    LOG_LEVEL = os.environ.get('XLING_LOG_LEVEL', 'INFO')
    LOG_FILE = os.environ.get('XLING_LOG_FILE')
    OUTPUT_DIR = os.environ.get('XLING_OUTPUT_DIR', 'out')


PATH_KEYS = (
    'embeddings', 'source_embeddings', 'target_embeddings', 'dictionary',
    'test_dictionary', 'corpus', 'train_corpus', 'dev_corpus',
    'gold_corpus', 'pred_corpus', 'model', 'alignment', 'input',
)


@dataclass
class RunConfig:
    """Everything one CLI command needs; built from defaults, env, file, flags"""
    seed: int = Config.SEED
    output_dir: str = Config.OUTPUT_DIR

    # paths
    embeddings: Optional[str] = None
    source_embeddings: Optional[str] = None
    target_embeddings: Optional[str] = None
    dictionary: Optional[str] = None
    test_dictionary: Optional[str] = None
    corpus: Optional[str] = None
    train_corpus: Optional[str] = None
    dev_corpus: Optional[str] = None
    gold_corpus: Optional[str] = None
    pred_corpus: Optional[str] = None
    model: Optional[str] = None
    alignment: Optional[str] = None
    input: Optional[str] = None
    output: Optional[str] = None

    entity_types: List[str] = field(default_factory=lambda: ['PER', 'LOC', 'ORG', 'MISC'])
    metric_mode: str = 'entity'
    embed_limit: Optional[int] = None

    # alignment
    align_method: str = 'svd'
    sgd_lr: float = 0.1
    sgd_epochs: int = 50
    heldout_fraction: float = 0.2
    transpose_alignment: bool = False

    # tagger (TrainConfig fields, prefixed)
    train_epochs: int = 10
    train_learning_rate: float = 0.01
    train_grad_clip: float = 5.0
    train_hidden_units: int = 256
    train_num_layers: int = 1
    train_shuffle: bool = True
    constrained: bool = False

    # skip-gram (SkipgramConfig fields, prefixed)
    sg_dim: int = 300
    sg_window: int = 5
    sg_negatives: int = 5
    sg_noise_exponent: float = 0.75
    sg_epochs: int = 5
    sg_learning_rate: float = 0.025
    sg_ngram_min: int = 3
    sg_ngram_max: int = 4
    sg_ngram_brackets: bool = False

    def paths(self) -> Dict[str, str]:
        """Input paths that are set"""
        return {key: getattr(self, key) for key in PATH_KEYS if getattr(self, key)}


_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


def _coerce(name: str, raw: str, current):
    """Convert a config-file string to the type of the field's current value"""
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            if raw.lower() in _TRUE:
                return True
            if raw.lower() in _FALSE:
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, list):
            return [item.strip() for item in raw.split(',') if item.strip()]
        if name == 'embed_limit':
            return int(raw) if raw else None
        return raw or None
    except ValueError:
        raise ConfigError(f"invalid value for '{name}': {raw!r}")


def load_run_config(path: Optional[str] = None, overrides: Optional[Dict] = None) -> RunConfig:
    """Defaults, then the key=value file at `path`, then non-None overrides"""
    run_config = RunConfig()
    known = {f.name for f in fields(RunConfig)}

    if path:
        if not os.path.isfile(path):
            raise ConfigError(f'config file not found: {path}')
        for key, value in dotenv_values(path).items():
            name = key.strip().lower()
            if name not in known:
                raise ConfigError(f"unknown config key '{key}' in {path}")
            setattr(run_config, name, _coerce(name, value or '', getattr(run_config, name)))

    for name, value in (overrides or {}).items():
        if value is None:
            continue
        if name not in known:
            raise ConfigError(f"unknown option '{name}'")
        setattr(run_config, name, value)

    return run_config
