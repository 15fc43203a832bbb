import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from core.exceptions import SchemaMismatchError, TrainingError

from .domain import Dataset, DecisionTree, LearnerConfig, TreeEnsembleModel
from .services import (
    cross_validate,
    feature_importance,
    load_model,
    model_bytes,
    predict,
    read_dataset_tsv,
    save_model,
    stratified_group_folds,
    train,
    train_test_split,
    write_dataset_tsv,
)


def separable(n_per_class=10, groups_per_example=1):
    """Negatives in [0, 1), positives in [2, 3) on both features."""
    data = Dataset(('a', 'b'))
    for label in (0, 1):
        base = 2.0 * label
        for i in range(n_per_class):
            value = base + i / (n_per_class + 1)
            group = f"g{label}-{i // groups_per_example}"
            data.add([value, value + 0.05], label, group=group, key=f"e{label}-{i:03d}")
    return data


def stump(value):
    return DecisionTree(feature=[-1], threshold=[0.0], left=[-1], right=[-1], value=[value])


CONFIG = LearnerConfig(n_trees=15, max_depth=8, seed=7)


class TrainTest(SimpleTestCase):

    def test_separable_data_is_fit_exactly(self):
        data = separable()
        model = train(data, CONFIG)
        predicted = [predict(model, row)[0] for row in data.rows]
        self.assertEqual(predicted, data.labels)

    def test_same_seed_gives_identical_bytes(self):
        data = separable()
        self.assertEqual(model_bytes(train(data, CONFIG)), model_bytes(train(data, CONFIG)))

    def test_example_order_does_not_matter(self):
        data = separable()
        shuffled = data.subset(reversed(range(len(data))))
        self.assertEqual(model_bytes(train(data, CONFIG)), model_bytes(train(shuffled, CONFIG)))

    def test_single_class_is_rejected(self):
        data = Dataset(('a',))
        for i in range(5):
            data.add([float(i)], 1)
        with self.assertRaises(TrainingError):
            train(data, CONFIG)

    def test_one_example_of_a_class_is_rejected(self):
        data = Dataset(('a',))
        for i in range(5):
            data.add([float(i)], 0)
        data.add([9.0], 1)
        with self.assertRaises(TrainingError):
            train(data, CONFIG)


class PredictTest(SimpleTestCase):

    def model(self, values):
        return TreeEnsembleModel(
            schema=('a',), trees=[stump(v) for v in values], seed=0, config={}, importances=[0.0]
        )

    def test_unanimous_trees_score_one(self):
        self.assertEqual(predict(self.model([1.0, 1.0, 0.75]), [0.3]), (1, 1.0))

    def test_half_the_votes_is_positive(self):
        self.assertEqual(predict(self.model([1.0, 0.0]), [0.3]), (1, 0.5))

    def test_arity_mismatch(self):
        with self.assertRaises(SchemaMismatchError):
            predict(self.model([1.0]), [0.1, 0.2])

    def test_schema_names_are_checked(self):
        with self.assertRaises(SchemaMismatchError):
            self.model([1.0]).check_schema(('b',))

    def test_saved_model_predicts_identically(self):
        data = separable()
        model = train(data, CONFIG)
        with tempfile.TemporaryDirectory() as tmp:
            path = save_model(model, Path(tmp) / 'model.json')
            loaded = load_model(path)
            self.assertEqual(path.read_bytes(), model_bytes(loaded))
        points = [[0.5, 0.5], [1.5, 1.5], [2.5, 2.6]]
        self.assertEqual(
            [predict(model, x) for x in points], [predict(loaded, x) for x in points]
        )


class FeatureImportanceTest(SimpleTestCase):

    def test_constant_feature_gets_nothing(self):
        data = Dataset(('signal', 'constant'))
        for i in range(12):
            data.add([float(i % 2), 3.0], i % 2, key=f"k{i:02d}")
        importance = feature_importance(train(data, CONFIG))
        self.assertEqual(importance['constant'], 0.0)
        self.assertAlmostEqual(importance['signal'], 1.0)

    def test_label_feature_dominates_noise(self):
        rng = np.random.default_rng(3)
        data = Dataset(('noise_a', 'signal', 'noise_b'))
        for i in range(40):
            label = i % 2
            data.add([rng.random(), float(label), rng.random()], label, key=f"k{i:02d}")
        importance = feature_importance(train(data, CONFIG))
        self.assertGreater(importance['signal'], importance['noise_a'])
        self.assertGreater(importance['signal'], importance['noise_b'])
        self.assertTrue(all(v >= 0 for v in importance.values()))
        self.assertAlmostEqual(sum(importance.values()), 1.0)


class CrossValidationTest(SimpleTestCase):

    def test_separable_data_scores_perfectly(self):
        report = cross_validate(separable(), folds=5, config=CONFIG)
        self.assertEqual(report.mean('accuracy'), 1.0)
        self.assertEqual(report.summary['accuracy']['std'], 0.0)
        self.assertEqual(len(report.per_fold), 5)

    def test_folds_partition_examples(self):
        data = separable()
        folds = stratified_group_folds(data, 5, seed=1)
        flat = sorted(i for fold in folds for i in fold)
        self.assertEqual(flat, list(range(len(data))))

    def test_groups_stay_together(self):
        data = separable(n_per_class=12, groups_per_example=2)
        folds = stratified_group_folds(data, 3, seed=1)
        fold_of = {}
        for k, fold in enumerate(folds):
            for i in fold:
                fold_of.setdefault(data.groups[i], set()).add(k)
        self.assertTrue(all(len(ks) == 1 for ks in fold_of.values()))

    def test_folds_are_stratified(self):
        data = separable()
        for fold in stratified_group_folds(data, 5, seed=1):
            self.assertEqual(sorted(data.labels[i] for i in fold), [0, 0, 1, 1])

    def test_too_few_groups(self):
        with self.assertRaises(TrainingError):
            stratified_group_folds(separable(n_per_class=3), 5, seed=1)

    def test_train_test_split_keeps_groups_apart(self):
        data = separable(n_per_class=10, groups_per_example=2)
        train_part, test_part = train_test_split(data, 0.2, seed=4)
        self.assertEqual(len(train_part) + len(test_part), len(data))
        self.assertFalse(set(train_part.groups) & set(test_part.groups))
        self.assertEqual(sorted(set(test_part.labels)), [0, 1])


class DatasetFileTest(SimpleTestCase):

    def test_tsv_keeps_keys_groups_and_labels(self):
        data = separable(n_per_class=3)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'data.tsv'
            write_dataset_tsv(data, path)
            loaded = read_dataset_tsv(path)
        self.assertEqual(loaded.schema, ('a', 'b'))
        self.assertEqual(loaded.rows, data.rows)
        self.assertEqual(loaded.labels, data.labels)
        self.assertEqual(loaded.keys, data.keys)
        self.assertEqual(loaded.groups, data.groups)

    def test_plain_tsv_without_keys(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'plain.tsv'
            path.write_text("x\ty\tlabel\n0.5\t1\t0\n2\t3\t1\n", encoding="utf-8")
            loaded = read_dataset_tsv(path)
        self.assertEqual(loaded.schema, ('x', 'y'))
        self.assertEqual(loaded.labels, [0, 1])
        self.assertEqual(loaded.keys, ['0', '1'])

    def test_select_reorders_columns(self):
        data = Dataset(('a', 'b', 'c'))
        data.add([1, 2, 3], 1)
        self.assertEqual(data.select(['c', 'a']).rows, [(3.0, 1.0)])
        with self.assertRaises(SchemaMismatchError):
            data.select(['z'])
