import os
import sys
import unittest

import numpy as np

# Add project root to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from test_config import TestConfig, TestHelpers
from xling import align, evaluation, synthetic, tagger
from xling.corpus import LabelScheme, validate_iob
from xling.crf import iob_transition_mask
from xling.errors import ConfigError, ModelFormatError, ModelVersionError, ShapeError, TrainingError


class BaseTaggerTest(unittest.TestCase):
    """Base test class with a small synthetic world and a few sentences"""

    CONFIG = dict(epochs=4, learning_rate=0.05, hidden_units=4, seed=2)

    def setUp(self):
        self.world = TestHelpers.small_world()
        self.sentences = synthetic.make_sentences(self.world, 30, seed=5)
        self.config = tagger.TrainConfig(**self.CONFIG)


class TestEmbedSequence(unittest.TestCase):

    def setUp(self):
        self.store = TestHelpers.make_store(['a', 'b'], [[3.0, 4.0], [0.0, 2.0]])

    def test_rows_are_unit_length(self):
        xs = tagger.embed_sequence(self.store, None, ['a', 'b'])
        np.testing.assert_allclose(xs, [[0.6, 0.8], [0.0, 1.0]])

    def test_unknown_token_is_zero(self):
        xs = tagger.embed_sequence(self.store, None, ['zzz'])
        np.testing.assert_array_equal(xs, [[0.0, 0.0]])

    def test_alignment_applied(self):
        alignment = align.AlignmentMap(W=np.array([[0.0, -1.0], [1.0, 0.0]]))
        xs = tagger.embed_sequence(self.store, alignment, ['a'])
        np.testing.assert_allclose(xs, [[-0.8, 0.6]])

    def test_alignment_dimension_checked(self):
        with self.assertRaises(ShapeError):
            tagger.embed_sequence(self.store, align.AlignmentMap(W=np.eye(3)), ['a'])


class TestModelGradients(unittest.TestCase):
    """Gradients of the whole BiLSTM-CRF against central differences"""

    def test_finite_differences(self):
        scheme = LabelScheme(('PER',))
        for seed in range(4):
            for num_layers in (1, 2):
                config = tagger.TrainConfig(hidden_units=2, seed=seed, num_layers=num_layers)
                model = tagger.init_model(scheme, 3, config)
                rng = np.random.default_rng([seed, 70])
                model.crf.transitions[:] = rng.normal(size=model.crf.transitions.shape)
                xs = rng.normal(size=(4, 3))
                tags = (1, 2, 0, 1)
                _, grads = tagger._sentence_gradients(model, xs, tags)

                def f():
                    return -tagger.sentence_loss(model, xs, tags)

                for analytic, array in zip(grads, model.arrays()):
                    numeric = TestHelpers.numeric_gradient(f, array, TestConfig.GRADIENT_STEP)
                    self.assertLess(TestHelpers.relative_error(analytic, numeric), TestConfig.GRADIENT_TOL)


class TestTraining(BaseTaggerTest):

    def test_loss_decreases(self):
        model, trace = tagger.train(self.sentences, self.world.store, self.world.scheme, self.config)
        self.assertEqual(len(trace), self.config.epochs + 1)
        self.assertLess(trace[-1], trace[0])
        self.assertAlmostEqual(trace[-1], tagger.corpus_loss(model, self.sentences, self.world.store), places=10)

    def test_deterministic(self):
        model_a, trace_a = tagger.train(self.sentences, self.world.store, self.world.scheme, self.config)
        model_b, trace_b = tagger.train(self.sentences, self.world.store, self.world.scheme, self.config)
        self.assertEqual(trace_a, trace_b)
        self.assertEqual(tagger.save_model(model_a), tagger.save_model(model_b))

    def test_resume_copies_model(self):
        model, _ = tagger.train(self.sentences, self.world.store, self.world.scheme, self.config)
        snapshot = tagger.save_model(model)
        resumed, trace = tagger.train(self.sentences, self.world.store, self.world.scheme, self.config, model=model)
        self.assertEqual(tagger.save_model(model), snapshot)
        self.assertNotEqual(tagger.save_model(resumed), snapshot)
        self.assertAlmostEqual(trace[0], tagger.corpus_loss(model, self.sentences, self.world.store), places=10)

    def test_zero_epochs(self):
        config = tagger.TrainConfig(**dict(self.CONFIG, epochs=0))
        model, trace = tagger.train(self.sentences, self.world.store, self.world.scheme, config)
        self.assertEqual(len(trace), 1)
        initial = tagger.init_model(self.world.scheme, self.world.store.dim, config)
        for a, b in zip(model.arrays(), initial.arrays()):
            np.testing.assert_array_equal(a, b)

    def test_learns_small_training_set(self):
        world = synthetic.make_source_world(7, vocab_size=100, dim=16)
        sentences = synthetic.make_sentences(world, 10, seed=8)
        config = tagger.TrainConfig(epochs=30, learning_rate=0.1, hidden_units=8, seed=1)
        model, _ = tagger.train(sentences, world.store, world.scheme, config)

        predicted = [labels for labels, _ in tagger.tag_corpus(model, world.store, None, [s.tokens for s in sentences])]
        report = evaluation.score_entities(sentences, predicted, world.scheme)
        self.assertGreaterEqual(report.average.f1, 0.95)
        exact = sum(tuple(int(t) for t in labels) == s.tags for labels, s in zip(predicted, sentences))
        self.assertGreaterEqual(exact, 9)

    def test_non_finite_loss(self):
        vectors = np.array(self.world.store.vectors)
        vectors[self.world.store.index[self.sentences[0].tokens[0]]] = np.nan
        store = TestHelpers.make_store(self.world.store.vocab, vectors)
        with np.errstate(all='ignore'):
            with self.assertRaises(TrainingError) as ctx:
                tagger.train(self.sentences, store, self.world.scheme, self.config)
        self.assertEqual(ctx.exception.exit_code, 4)
        self.assertEqual(ctx.exception.epoch, 1)

    def test_empty_corpus(self):
        with self.assertRaises(ShapeError):
            tagger.train([], self.world.store, self.world.scheme, self.config)

    def test_invalid_config(self):
        with self.assertRaises(ConfigError):
            tagger.TrainConfig(learning_rate=0.0)
        with self.assertRaises(ConfigError):
            tagger.TrainConfig(hidden_units=0)


class TestTagging(BaseTaggerTest):

    def setUp(self):
        super().setUp()
        self.model, _ = tagger.train(self.sentences, self.world.store, self.world.scheme, self.config)

    def test_output_shapes(self):
        tokens = self.sentences[0].tokens
        labels, marg = tagger.tag(self.model, self.world.store, None, tokens)
        self.assertEqual(len(labels), len(tokens))
        self.assertEqual(marg.shape, (len(tokens), self.world.scheme.size))
        np.testing.assert_allclose(marg.sum(axis=1), 1.0, atol=1e-10)

    def test_unknown_tokens_still_tagged(self):
        labels, _ = tagger.tag(self.model, self.world.store, None, ['never', 'seen'])
        self.assertEqual(len(labels), 2)

    def test_empty_sentence(self):
        with self.assertRaises(ShapeError):
            tagger.tag(self.model, self.world.store, None, [])

    def test_store_dimension_checked(self):
        with self.assertRaises(ShapeError):
            tagger.tag(self.model, TestHelpers.make_store(['a'], [[1.0, 0.0]]), None, ['a'])

    def test_all_zero_model_tags_outside(self):
        model = tagger.init_model(self.world.scheme, self.world.store.dim, self.config)
        for array in model.arrays():
            array[...] = 0.0
        labels, _ = tagger.tag(model, self.world.store, None, self.sentences[0].tokens)
        self.assertEqual(list(labels), [0] * len(self.sentences[0].tokens))

    def test_rotated_store_through_alignment_matches_source(self):
        target = synthetic.make_target_world(self.world, synthetic.random_orthogonal(self.world.store.dim, 21))
        dictionary = align.build_dictionary(synthetic.dictionary_pairs(self.world), target.store, self.world.store)
        alignment = align.fit_orthogonal(dictionary)
        for sentence, translated in zip(self.sentences, synthetic.translate(self.sentences)):
            source_labels, _ = tagger.tag(self.model, self.world.store, None, sentence.tokens)
            target_labels, _ = tagger.tag(self.model, target.store, alignment, translated.tokens)
            self.assertEqual(list(target_labels), list(source_labels))

    def test_constrained_decoding(self):
        config = tagger.TrainConfig(**dict(self.CONFIG, constrained=True))
        model, _ = tagger.train(self.sentences, self.world.store, self.world.scheme, config)
        rng = np.random.default_rng(3)
        vocab = self.world.store.vocab
        for _ in range(20):
            tokens = [vocab[i] for i in rng.integers(0, len(vocab), size=8)]
            labels, _ = tagger.tag(model, self.world.store, None, tokens)
            self.assertEqual(validate_iob(labels, self.world.scheme), [])


class TestModelFile(BaseTaggerTest):

    def setUp(self):
        super().setUp()
        self.model, _ = tagger.train(self.sentences[:5], self.world.store, self.world.scheme,
                                     tagger.TrainConfig(**dict(self.CONFIG, epochs=1)))
        self.data = tagger.save_model(self.model)

    def test_header(self):
        self.assertTrue(self.data.startswith(b'xling-tagger v1\n'))

    def test_round_trip_is_bit_exact(self):
        loaded = tagger.load_model(self.data, self.world.scheme)
        self.assertEqual(tagger.save_model(loaded), self.data)
        for a, b in zip(loaded.arrays(), self.model.arrays()):
            np.testing.assert_array_equal(a, b)
        tokens = self.sentences[0].tokens
        self.assertEqual(list(tagger.tag(loaded, self.world.store, None, tokens)[0]),
                         list(tagger.tag(self.model, self.world.store, None, tokens)[0]))

    def test_constrained_mask_restored(self):
        model = tagger.init_model(self.world.scheme, self.world.store.dim,
                                  tagger.TrainConfig(hidden_units=3, constrained=True))
        loaded = tagger.load_model(tagger.save_model(model))
        allowed, _ = iob_transition_mask(self.world.scheme.tag_set)
        self.assertTrue(loaded.crf.constrained)
        np.testing.assert_array_equal(loaded.crf.allowed, allowed)

    def test_stacked_layers_round_trip(self):
        model = tagger.init_model(self.world.scheme, self.world.store.dim,
                                  tagger.TrainConfig(hidden_units=3, num_layers=2))
        data = tagger.save_model(model)
        self.assertEqual(tagger.save_model(tagger.load_model(data)), data)

    def test_unknown_version(self):
        with self.assertRaises(ModelVersionError):
            tagger.load_model(self.data.replace(b'xling-tagger v1', b'xling-tagger v2', 1))

    def test_bad_manifest(self):
        header, _, rest = self.data.partition(b'\n')
        _, _, body = rest.partition(b'\n')
        with self.assertRaises(ModelFormatError):
            tagger.load_model(header + b'\n{"embed_dim": 3}\n' + body)

    def test_truncated(self):
        with self.assertRaises(ModelFormatError):
            tagger.load_model(self.data[:-8])

    def test_trailing_bytes(self):
        with self.assertRaises(ModelFormatError):
            tagger.load_model(self.data + b'\0' * 8)

    def test_scheme_mismatch(self):
        with self.assertRaises(ShapeError):
            tagger.load_model(self.data, LabelScheme(('PER',)))
        with self.assertRaises(ShapeError):
            tagger.load_model(self.data, LabelScheme(('PER', 'LOC', 'MISC')))


if __name__ == '__main__':
    unittest.main()
