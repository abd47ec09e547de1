# Validation and input checking module
# Checks run configuration before any compute starts: paths, fractions, numeric settings

import os
from typing import Dict, List, Tuple

from config import RunConfig

REQUIRED_PATHS: Dict[str, Tuple[str, ...]] = {
    'embed-train': ('corpus',),
    'align': ('source_embeddings', 'target_embeddings', 'dictionary'),
    'train': ('embeddings', 'train_corpus'),
    'tag': ('model', 'embeddings', 'input'),
    'eval': ('gold_corpus',),
}

OPTIONAL_PATHS: Dict[str, Tuple[str, ...]] = {
    'embed-train': (),
    'align': ('test_dictionary',),
    'train': ('dev_corpus', 'model', 'alignment'),
    'tag': ('alignment',),
    'eval': ('pred_corpus', 'model', 'embeddings', 'alignment'),
}


class ValidationResult:
    def __init__(self, is_valid: bool, errors: List[str] = None, warnings: List[str] = None):
        self.is_valid = is_valid
        self.errors = errors or []
        self.warnings = warnings or []


def validate_paths(run_config: RunConfig, command: str) -> ValidationResult:
    """Required inputs are set and exist; optional inputs exist when set"""
    errors = []
    warnings = []

    for key in REQUIRED_PATHS[command]:
        path = getattr(run_config, key)
        if not path:
            errors.append(f"Missing required input '{key}'")
        elif not (key == 'input' and path == '-') and not os.path.isfile(path):
            errors.append(f"Input '{key}' not found: {path}")

    for key in OPTIONAL_PATHS[command]:
        path = getattr(run_config, key)
        if path and not os.path.isfile(path):
            errors.append(f"Input '{key}' not found: {path}")

    if command == 'eval' and not run_config.pred_corpus:
        if not (run_config.model and run_config.embeddings):
            errors.append("Evaluation needs 'pred_corpus' or both 'model' and 'embeddings'")
    if command == 'eval' and not run_config.model:
        warnings.append("No model given; ROC curves need marginals and will be skipped")

    return ValidationResult(len(errors) == 0, errors, warnings)


def validate_fraction(name: str, value: float) -> ValidationResult:
    errors = []
    if not 0.0 < value < 1.0:
        errors.append(f"'{name}' must be strictly between 0 and 1, got {value}")
    return ValidationResult(len(errors) == 0, errors)


def validate_settings(run_config: RunConfig) -> ValidationResult:
    """Numeric and enumerated settings"""
    errors = []
    warnings = []

    if run_config.seed < 0:
        errors.append(f"'seed' must be non-negative, got {run_config.seed}")
    if run_config.metric_mode not in ('entity', 'token'):
        errors.append(f"'metric_mode' must be entity or token, got {run_config.metric_mode!r}")
    if run_config.align_method not in ('svd', 'sgd'):
        errors.append(f"'align_method' must be svd or sgd, got {run_config.align_method!r}")
    if run_config.embed_limit is not None and run_config.embed_limit < 1:
        errors.append(f"'embed_limit' must be at least 1, got {run_config.embed_limit}")
    if not run_config.entity_types:
        errors.append("'entity_types' must name at least one type")

    positive = ('sgd_lr', 'train_learning_rate', 'train_grad_clip', 'train_hidden_units', 'train_num_layers',
                'sg_dim', 'sg_window', 'sg_learning_rate')
    for name in positive:
        if getattr(run_config, name) <= 0:
            errors.append(f"'{name}' must be positive, got {getattr(run_config, name)}")
    for name in ('sgd_epochs', 'train_epochs', 'sg_negatives', 'sg_epochs'):
        if getattr(run_config, name) < 0:
            errors.append(f"'{name}' must be non-negative, got {getattr(run_config, name)}")

    heldout = validate_fraction('heldout_fraction', run_config.heldout_fraction)
    errors += heldout.errors

    if run_config.train_hidden_units > 1024:
        warnings.append(f"hidden size {run_config.train_hidden_units} will make training slow")
    if not 0.0 <= run_config.sg_noise_exponent <= 1.0:
        errors.append(f"'sg_noise_exponent' must lie in [0, 1], got {run_config.sg_noise_exponent}")
    if 0 < run_config.sg_ngram_max < run_config.sg_ngram_min:
        errors.append('sg_ngram_min exceeds sg_ngram_max')
    if run_config.sg_ngram_min <= 0 or run_config.sg_ngram_max <= 0:
        warnings.append('subword n-grams are disabled')

    return ValidationResult(len(errors) == 0, errors, warnings)


def validate_run_config(run_config: RunConfig, command: str) -> ValidationResult:
    """Everything a command checks before it reads a single input"""
    if command not in REQUIRED_PATHS:
        return ValidationResult(False, [f"Unknown command '{command}'"])
    paths = validate_paths(run_config, command)
    settings = validate_settings(run_config)
    errors = paths.errors + settings.errors
    return ValidationResult(len(errors) == 0, errors, paths.warnings + settings.warnings)
