"""
xling command-line interface

Subcommands run one pipeline stage each: train word embeddings, fit the
cross-lingual alignment, train the BiLSTM-CRF tagger, tag raw text (zero-shot
through an alignment map), and evaluate tagged output.

Every command validates its inputs before computing, writes outputs through a
temporary file, and on failure prints a single line on standard error:

    error: kind=<ErrorClass> code=<n> message=<text>
"""

import csv
import io
import json
import logging
import math
import os
import sys
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Tuple

import click
import numpy as np

from config import RunConfig, load_run_config
from utils import atomic_write, derive_seed, format_real, read_text_lines, setup_logger, split_blocks
from validation import validate_run_config
from xling import align, corpus, embed, evaluation, tagger
from xling.errors import ConfigError, XlingError

logger = logging.getLogger('xling.cli')

EMBEDDINGS_FILE = 'embeddings.vec'
NGRAMS_SUFFIX = '.ngrams'
ALIGNMENT_FILE = 'alignment.txt'
ALIGNMENT_REPORT = 'alignment.json'
MODEL_FILE = 'model.xtg'
LOSS_FILE = 'loss.csv'
ROC_FILE = 'roc.svg'


def _fail(error: Exception) -> None:
    code = getattr(error, 'exit_code', 2)
    kind = type(error).__name__
    message = ' '.join(str(error).split())
    click.echo(f'error: kind={kind} code={code} message={message}', err=True)
    sys.exit(code)


def _prepare(ctx: click.Context, command: str, overrides: Dict) -> RunConfig:
    """Load and validate the run configuration for one command"""
    options = ctx.obj or {}
    merged = dict(overrides)
    merged['seed'] = options.get('seed')
    run_config = load_run_config(options.get('config_path'), merged)

    result = validate_run_config(run_config, command)
    for warning in result.warnings:
        logger.warning(warning)
    if not result.is_valid:
        raise ConfigError('; '.join(result.errors))

    logger.info('%s: seed %d, output dir %s', command, run_config.seed, run_config.output_dir)
    return run_config


def _run(ctx: click.Context, command: str, overrides: Dict, body) -> None:
    try:
        body(_prepare(ctx, command, overrides))
    except (XlingError, OSError, UnicodeDecodeError) as e:
        _fail(e)


def _output_path(run_config: RunConfig, name: str) -> str:
    return os.path.join(run_config.output_dir, name)


def _write_text(path: str, text: str) -> None:
    atomic_write(path, text)
    logger.info('wrote %s', path)


def _loss_csv(header: Sequence[str], values: Sequence[float], first_epoch: int = 0) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for epoch, value in enumerate(values, start=first_epoch):
        writer.writerow([epoch, format_real(value)])
    return buffer.getvalue()


def _load_store(path: str, run_config: RunConfig) -> embed.EmbeddingStore:
    ngram_path = path + NGRAMS_SUFFIX
    ngram_lines = read_text_lines(ngram_path) if os.path.isfile(ngram_path) else None
    store = embed.load_embeddings(read_text_lines(path), run_config.embed_limit, ngram_lines)
    if store.ngram_table is not None and run_config.sg_ngram_min > 0 and run_config.sg_ngram_max > 0:
        store = replace(store, ngram_min=run_config.sg_ngram_min, ngram_max=run_config.sg_ngram_max,
                        ngram_brackets=run_config.sg_ngram_brackets)
    logger.info('loaded %d vectors (dim %d) from %s', len(store), store.dim, path)
    return store


def _load_alignment(run_config: RunConfig) -> Optional[align.AlignmentMap]:
    if not run_config.alignment:
        return None
    return align.load_alignment(read_text_lines(run_config.alignment), run_config.transpose_alignment)


def _scheme(run_config: RunConfig) -> corpus.LabelScheme:
    return corpus.LabelScheme(tuple(run_config.entity_types))


def _load_corpus(path: str, scheme: corpus.LabelScheme) -> List[corpus.LabeledSequence]:
    sequences = corpus.parse_conll(read_text_lines(path), scheme)
    logger.info('read %d sentences from %s', len(sequences), path)
    return sequences


def _load_model(path: str, scheme: Optional[corpus.LabelScheme] = None) -> tagger.TaggerModel:
    """Without a scheme the one stored in the model file is used"""
    with open(path, 'rb') as f:
        model = tagger.load_model(f.read(), scheme)
    logger.info('loaded %s model with entity types %s', model.version, ','.join(model.scheme.entity_types))
    return model


@click.group()
@click.option('--config', 'config_path', type=click.Path(), default=None,
              help='key=value run configuration file')
@click.option('--seed', type=int, default=None, help='run seed (overrides config)')
@click.option('--log-level', default=None,
              type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'], case_sensitive=False))
@click.pass_context
def cli(ctx, config_path, seed, log_level):
    """Cross-lingual named-entity recognition toolkit"""
    setup_logger('xling', log_level)
    ctx.obj = {'config_path': config_path, 'seed': seed}


# ---------------------------------------------------------------------------
# embed-train

@cli.command('embed-train')
@click.option('--corpus', 'corpus_path', type=click.Path(), help='plain text, one sentence per line')
@click.option('--output-dir', default=None)
@click.option('--dim', type=int, default=None)
@click.option('--epochs', type=int, default=None)
@click.option('--window', type=int, default=None)
@click.option('--negatives', type=int, default=None)
@click.pass_context
def embed_train(ctx, corpus_path, output_dir, dim, epochs, window, negatives):
    """Train skip-gram embeddings with negative sampling and subword n-grams"""
    overrides = {'corpus': corpus_path, 'output_dir': output_dir, 'sg_dim': dim, 'sg_epochs': epochs,
                 'sg_window': window, 'sg_negatives': negatives}
    _run(ctx, 'embed-train', overrides, cmd_embed_train)


def cmd_embed_train(run_config: RunConfig) -> None:
    sentences = [line.split() for line in read_text_lines(run_config.corpus) if line.strip()]
    config = embed.SkipgramConfig(
        dim=run_config.sg_dim, window=run_config.sg_window, negatives=run_config.sg_negatives,
        noise_exponent=run_config.sg_noise_exponent, epochs=run_config.sg_epochs,
        learning_rate=run_config.sg_learning_rate, ngram_min=run_config.sg_ngram_min,
        ngram_max=run_config.sg_ngram_max, ngram_brackets=run_config.sg_ngram_brackets,
        seed=derive_seed(run_config.seed, 'skipgram'))
    store, model = embed.train_skipgram(sentences, config)

    vectors, ngrams = io.StringIO(), io.StringIO()
    embed.save_embeddings(store, vectors, ngrams)
    path = _output_path(run_config, EMBEDDINGS_FILE)
    _write_text(path, vectors.getvalue())
    if store.ngram_table is not None:
        _write_text(path + NGRAMS_SUFFIX, ngrams.getvalue())
    _write_text(_output_path(run_config, LOSS_FILE), _loss_csv(('epoch', 'mean_objective'), model.history, first_epoch=1))
    click.echo(f'{len(store)} vectors of dimension {store.dim} written to {path}')


# ---------------------------------------------------------------------------
# align

@cli.command('align')
@click.option('--source-embeddings', type=click.Path())
@click.option('--target-embeddings', type=click.Path())
@click.option('--dictionary', type=click.Path(), help='target<TAB>source pairs')
@click.option('--test-dictionary', type=click.Path(), default=None)
@click.option('--method', type=click.Choice(['svd', 'sgd']), default=None)
@click.option('--output-dir', default=None)
@click.pass_context
def align_command(ctx, source_embeddings, target_embeddings, dictionary, test_dictionary, method, output_dir):
    """Fit the map that moves target embeddings into the source space"""
    overrides = {'source_embeddings': source_embeddings, 'target_embeddings': target_embeddings,
                 'dictionary': dictionary, 'test_dictionary': test_dictionary,
                 'align_method': method, 'output_dir': output_dir}
    _run(ctx, 'align', overrides, cmd_align)


def _split_heldout(pairs: List[Tuple[str, str]], fraction: float,
                   seed: int) -> Tuple[List[Tuple[str, str]], List[Tuple[str, str]]]:
    held = math.floor(len(pairs) * fraction)
    if held == 0 or held == len(pairs):
        logger.warning('dictionary of %d pairs is too small to hold out %.2f of it', len(pairs), fraction)
        return pairs, []
    order = np.random.default_rng(seed).permutation(len(pairs))
    return [pairs[i] for i in order[held:]], [pairs[i] for i in order[:held]]


def cmd_align(run_config: RunConfig) -> None:
    source = _load_store(run_config.source_embeddings, run_config)
    target = _load_store(run_config.target_embeddings, run_config)
    pairs = align.read_dictionary(read_text_lines(run_config.dictionary))

    if run_config.test_dictionary:
        train_pairs, test_pairs = pairs, align.read_dictionary(read_text_lines(run_config.test_dictionary))
    else:
        train_pairs, test_pairs = _split_heldout(pairs, run_config.heldout_fraction,
                                                 derive_seed(run_config.seed, 'heldout'))

    dictionary = align.build_dictionary(train_pairs, target, source)
    if run_config.align_method == 'sgd':
        alignment = align.fit_sgd(dictionary, run_config.sgd_lr, run_config.sgd_epochs,
                                  derive_seed(run_config.seed, 'align-sgd'))
    else:
        alignment = align.fit_orthogonal(dictionary)

    diagnostics = dict(alignment.diagnostics)
    for k in (1, 5):
        try:
            diagnostics[f'precision_at_{k}'] = align.translation_precision(alignment, test_pairs, target, source, k)
        except XlingError as e:
            logger.warning('precision@%d not computed: %s', k, e)
            diagnostics[f'precision_at_{k}'] = None

    buffer = io.StringIO()
    align.save_alignment(alignment, buffer)
    _write_text(_output_path(run_config, ALIGNMENT_FILE), buffer.getvalue())
    report = json.dumps(diagnostics, indent=2, sort_keys=True) + '\n'
    _write_text(_output_path(run_config, ALIGNMENT_REPORT), report)
    click.echo(report, nl=False)


# ---------------------------------------------------------------------------
# train

@cli.command('train')
@click.option('--embeddings', type=click.Path())
@click.option('--train-corpus', type=click.Path())
@click.option('--dev-corpus', type=click.Path(), default=None)
@click.option('--model', type=click.Path(), default=None, help='resume from this model')
@click.option('--alignment', type=click.Path(), default=None)
@click.option('--epochs', type=int, default=None)
@click.option('--hidden-units', type=int, default=None)
@click.option('--constrained/--unconstrained', default=None, help='hard IOB transition mask')
@click.option('--output-dir', default=None)
@click.pass_context
def train_command(ctx, embeddings, train_corpus, dev_corpus, model, alignment, epochs, hidden_units,
                  constrained, output_dir):
    """Train the BiLSTM-CRF tagger on a source-language corpus"""
    overrides = {'embeddings': embeddings, 'train_corpus': train_corpus, 'dev_corpus': dev_corpus,
                 'model': model, 'alignment': alignment, 'train_epochs': epochs,
                 'train_hidden_units': hidden_units, 'constrained': constrained, 'output_dir': output_dir}
    _run(ctx, 'train', overrides, cmd_train)


def cmd_train(run_config: RunConfig) -> None:
    scheme = _scheme(run_config)
    store = _load_store(run_config.embeddings, run_config)
    alignment = _load_alignment(run_config)
    sequences = _load_corpus(run_config.train_corpus, scheme)
    resume = _load_model(run_config.model, scheme) if run_config.model else None

    config = tagger.TrainConfig(
        epochs=run_config.train_epochs, learning_rate=run_config.train_learning_rate,
        grad_clip=run_config.train_grad_clip, hidden_units=run_config.train_hidden_units,
        num_layers=run_config.train_num_layers, seed=derive_seed(run_config.seed, 'tagger'),
        shuffle=run_config.train_shuffle, constrained=run_config.constrained)
    model, trace = tagger.train(sequences, store, scheme, config, model=resume, alignment=alignment)

    if run_config.dev_corpus:
        dev = _load_corpus(run_config.dev_corpus, scheme)
        predicted = [labels for labels, _ in tagger.tag_corpus(model, store, alignment, [s.tokens for s in dev])]
        report = evaluation.score_entities(dev, predicted, scheme, run_config.metric_mode)
        logger.info('dev %s-level F1 %.4f', run_config.metric_mode, report.average.f1)

    atomic_write(_output_path(run_config, MODEL_FILE), tagger.save_model(model))
    _write_text(_output_path(run_config, LOSS_FILE), _loss_csv(('epoch', 'loss'), trace))
    click.echo(f'initial loss {format_real(trace[0])}, final loss {format_real(trace[-1])}')


# ---------------------------------------------------------------------------
# tag

@cli.command('tag')
@click.option('--model', type=click.Path())
@click.option('--embeddings', type=click.Path())
@click.option('--alignment', type=click.Path(), default=None, help='map target vectors into source space')
@click.option('--input', 'input_path', default=None, help="token-per-line text, '-' for standard input")
@click.option('--output', default=None, help='CoNLL output path (standard output when omitted)')
@click.pass_context
def tag_command(ctx, model, embeddings, alignment, input_path, output):
    """Tag token-per-line text (blank line between sentences)"""
    overrides = {'model': model, 'embeddings': embeddings, 'alignment': alignment,
                 'input': input_path, 'output': output}
    _run(ctx, 'tag', overrides, cmd_tag)


def cmd_tag(run_config: RunConfig) -> None:
    model = _load_model(run_config.model)
    scheme = model.scheme
    store = _load_store(run_config.embeddings, run_config)
    alignment = _load_alignment(run_config)
    sentences = [[line.split()[0] for line in block] for block in split_blocks(read_text_lines(run_config.input))]

    tagged = []
    for tokens, (labels, _) in zip(sentences, tagger.tag_corpus(model, store, alignment, sentences)):
        tagged.append(corpus.LabeledSequence(tuple(tokens), tuple(int(t) for t in labels)))
    text = corpus.serialize_conll(tagged, scheme)
    logger.info('tagged %d sentences', len(tagged))

    if run_config.output:
        _write_text(run_config.output, text)
    else:
        click.echo(text, nl=False)


# ---------------------------------------------------------------------------
# eval

@cli.command('eval')
@click.option('--gold-corpus', type=click.Path())
@click.option('--pred-corpus', type=click.Path(), default=None)
@click.option('--model', type=click.Path(), default=None)
@click.option('--embeddings', type=click.Path(), default=None)
@click.option('--alignment', type=click.Path(), default=None)
@click.option('--mode', type=click.Choice(['entity', 'token']), default=None, help='mode echoed to stdout')
@click.option('--output-dir', default=None)
@click.pass_context
def eval_command(ctx, gold_corpus, pred_corpus, model, embeddings, alignment, mode, output_dir):
    """Score predictions against gold; write reports for both modes and ROC curves"""
    overrides = {'gold_corpus': gold_corpus, 'pred_corpus': pred_corpus, 'model': model,
                 'embeddings': embeddings, 'alignment': alignment, 'metric_mode': mode,
                 'output_dir': output_dir}
    _run(ctx, 'eval', overrides, cmd_eval)


def cmd_eval(run_config: RunConfig) -> None:
    model = None
    if run_config.model and run_config.embeddings:
        model = _load_model(run_config.model)
    scheme = model.scheme if model is not None else _scheme(run_config)
    gold = _load_corpus(run_config.gold_corpus, scheme)
    results = None
    if model is not None:
        store = _load_store(run_config.embeddings, run_config)
        results = tagger.tag_corpus(model, store, _load_alignment(run_config), [s.tokens for s in gold])

    if run_config.pred_corpus:
        predicted = [s.tags for s in _load_corpus(run_config.pred_corpus, scheme)]
    else:
        predicted = [labels for labels, _ in results]
    marginal_rows = [marg for _, marg in results] if results is not None else None

    for mode in evaluation.MODES:
        report = evaluation.score_entities(gold, predicted, scheme, mode)
        for fmt, suffix in (('table', 'txt'), ('csv', 'csv'), ('json', 'json')):
            atomic_write(_output_path(run_config, f'report-{mode}.{suffix}'), evaluation.emit_report(report, fmt))
        logger.info('%s-level micro F1 %.4f', mode, report.average.f1)
        if mode == run_config.metric_mode:
            click.echo(evaluation.emit_report(report, 'table').decode('utf-8'), nl=False)

    if marginal_rows is not None:
        curves = evaluation.class_roc_curves(gold, marginal_rows, scheme)
        if curves:
            atomic_write(_output_path(run_config, ROC_FILE), evaluation.emit_roc_plot(list(curves.items())))
        else:
            logger.warning('no class has both positive and negative tokens; %s not written', ROC_FILE)


if __name__ == '__main__':
    cli()
