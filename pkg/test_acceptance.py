"""
End-to-end acceptance experiments.

These train real models and take minutes, so they only run when
RUN_SLOW_TESTS=true is set in the environment.
"""

import os
import sys
import unittest

import numpy as np

# Add project root to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from test_config import TestConfig
from xling import align, embed, synthetic


class BaseAcceptanceTest(unittest.TestCase):
    """Base class for slow acceptance tests"""

    def setUp(self):
        if not TestConfig.RUN_SLOW_TESTS:
            self.skipTest("Slow acceptance tests disabled. Set RUN_SLOW_TESTS=true to enable")


class TestZeroShotTransfer(BaseAcceptanceTest):
    """A source-trained tagger transfers to a rotated language only through the alignment"""

    @classmethod
    def setUpClass(cls):
        cls.reports = None
        if TestConfig.RUN_SLOW_TESTS:
            from demo import run_transfer_experiment
            cls.reports = run_transfer_experiment()

    def test_source_tagger_learns(self):
        self.assertGreaterEqual(self.reports['source'].average.f1, 0.90)

    def test_unaligned_target_fails(self):
        self.assertLessEqual(self.reports['target-unaligned'].average.f1, 0.15)

    def test_aligned_target_matches_source(self):
        self.assertAlmostEqual(self.reports['target-aligned'].average.f1, self.reports['source'].average.f1,
                               delta=0.05)


class TestOrthogonalFitAtScale(BaseAcceptanceTest):
    """The closed-form fit stays orthogonal and is never beaten by projected SGD"""

    def test_random_dictionaries(self):
        for trial in range(50):
            d = (4, 16, 64)[trial % 3]
            rng = np.random.default_rng([trial, 30])
            X = rng.normal(size=(3 * d, d))
            Y = X @ synthetic.random_orthogonal(d, trial).T + 0.1 * rng.normal(size=(3 * d, d))
            pairs = align.DictionaryPairs.from_vectors(X, Y)

            exact = align.fit_orthogonal(pairs)
            self.assertLessEqual(align.orthogonality_error(exact), TestConfig.ORTHOGONALITY_TOL, msg=f'trial {trial}')
            sgd = align.fit_sgd(pairs, lr=0.05, epochs=20, seed=trial)
            projected = align.procrustes_objective(align.nearest_orthogonal(sgd.W), pairs)
            self.assertGreaterEqual(align.procrustes_objective(exact.W, pairs) + 1e-9, projected,
                                    msg=f'trial {trial}')


def topic_corpus(seed, sentences=1000):
    """Sentences drawn from one of two disjoint vocabularies"""
    rng = np.random.default_rng(seed)
    topics = [[f'a{i}' for i in range(20)], [f'b{i}' for i in range(20)]]
    corpus = []
    for _ in range(sentences):
        words = topics[int(rng.integers(2))]
        corpus.append([words[int(j)] for j in rng.integers(0, len(words), size=int(rng.integers(4, 9)))])
    return corpus


class TestSkipgramSanity(BaseAcceptanceTest):
    """Training raises the objective on held-out pairs and separates the two topics, for every seed"""

    def test_ten_seeds(self):
        for seed in range(10):
            corpus = topic_corpus(seed)
            config = embed.SkipgramConfig(dim=16, window=2, negatives=4, epochs=2, learning_rate=0.05,
                                          ngram_min=0, ngram_max=0, seed=seed)
            vocab, counts = embed.build_vocab(corpus)
            untrained = embed.init_skipgram(vocab, counts, config)
            probes = embed.build_probe_set(corpus, untrained, 500, seed)

            store, model = embed.train_skipgram(corpus, config)
            self.assertGreater(embed.probe_objective(model, probes), embed.probe_objective(untrained, probes),
                               msg=f'seed {seed}')

            vectors = {w: embed.lookup(store, w) for w in store.vocab}
            same = np.mean([embed.cosine(vectors[f'a{i}'], vectors[f'a{i + 1}']) for i in range(19)])
            across = np.mean([embed.cosine(vectors[f'a{i}'], vectors[f'b{i}']) for i in range(20)])
            self.assertGreater(same, across, msg=f'seed {seed}')


if __name__ == '__main__':
    unittest.main()
