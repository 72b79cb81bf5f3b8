import math

import numpy as np
import pytest

from spamvision import svm
from spamvision.dataset import LabeledSet
from spamvision.errors import InvalidArgument, ShapeError

from helpers import (
    box_and_balance,
    grid_decision,
    grid_search_svm,
    kkt_violation,
    separable_four_points,
)


def two_point_set():
    return LabeledSet(x=np.array([[-1.0], [1.0]]), y=np.array([0, 1]))


def xor_set():
    return LabeledSet(
        x=np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]]),
        y=np.array([0, 0, 1, 1]),
    )


def blob_set(seed=4, n=20):
    rng = np.random.default_rng(seed)
    neg = rng.normal(loc=(-2, -2), scale=0.5, size=(n, 2))
    pos = rng.normal(loc=(2, 2), scale=0.5, size=(n, 2))
    return LabeledSet(x=np.vstack([neg, pos]), y=np.array([0] * n + [1] * n))


class TestKernel:
    def test_rbf_self_similarity(self):
        spec = svm.KernelSpec("rbf", gamma=0.7)
        assert svm.kernel_eval([1.0, 2.0], [1.0, 2.0], spec) == 1.0

    def test_linear_dot(self):
        assert svm.kernel_eval([1.0, 2.0], [3.0, 4.0], svm.KernelSpec("linear")) == 11.0

    def test_rbf_hand_value(self):
        spec = svm.KernelSpec("rbf", gamma=0.5)
        got = svm.kernel_eval([0.0, 0.0], [1.0, 1.0], spec)
        assert got == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            svm.kernel_eval([1.0], [1.0, 2.0], svm.KernelSpec("linear"))

    def test_bad_gamma_rejected(self):
        with pytest.raises(InvalidArgument):
            svm.KernelSpec("rbf", gamma=0.0)


class TestSmoTrain:
    def test_two_point_max_margin(self):
        model = svm.smo_train(two_point_set(), svm.KernelSpec("linear"), c=10.0, seed=0)
        w = svm.linear_weights(model)
        assert w == pytest.approx([1.0], abs=1e-2)
        assert model.bias == pytest.approx(0.0, abs=1e-2)
        assert model.support_vectors.shape[0] == 2
        assert svm.decision(model, np.array([0.0])) == pytest.approx(0.0, abs=1e-2)

    def test_xor_rbf_separates(self):
        data = xor_set()
        model = svm.smo_train(data, svm.KernelSpec("rbf", gamma=1.0), c=1.0, seed=0)
        scores = svm.decision_batch(model, data.x)
        assert np.mean((scores >= 0) == (data.y == 1)) == 1.0

    def test_xor_linear_cannot_separate(self):
        data = xor_set()
        model = svm.smo_train(data, svm.KernelSpec("linear"), c=1.0, seed=0)
        scores = svm.decision_batch(model, data.x)
        assert np.mean((scores >= 0) == (data.y == 1)) <= 0.75

    def test_single_class_rejected(self):
        data = LabeledSet(x=np.zeros((3, 2)), y=np.array([1, 1, 1]))
        with pytest.raises(InvalidArgument):
            svm.smo_train(data, svm.KernelSpec("linear"))

    def test_deterministic_given_seed(self):
        data = blob_set()
        spec = svm.KernelSpec("rbf", gamma=0.5)
        a = svm.smo_train(data, spec, seed=3)
        b = svm.smo_train(data, spec, seed=3)
        assert np.array_equal(a.duals, b.duals)
        assert a.bias == b.bias

    @pytest.mark.parametrize(
        "data,spec,c",
        [
            (two_point_set(), svm.KernelSpec("linear"), 10.0),
            (xor_set(), svm.KernelSpec("rbf", gamma=1.0), 1.0),
            (separable_four_points(11), svm.KernelSpec("linear"), 5.0),
            (blob_set(), svm.KernelSpec("rbf", gamma=0.5), 1.0),
        ],
    )
    def test_box_balance_and_kkt(self, data, spec, c):
        tol = 1e-3
        model = svm.smo_train(data, spec, c=c, tol=tol, seed=0)
        box, balance = box_and_balance(model)
        assert box <= 1e-12
        assert balance <= 1e-6
        assert kkt_violation(model, data.x, data.y, tol) <= 1e-9

    @pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
    def test_matches_grid_search_oracle(self, seed):
        data = separable_four_points(seed)
        c = 5.0
        model = svm.smo_train(data, svm.KernelSpec("linear"), c=c, tol=1e-4, seed=0)
        alphas, bias = grid_search_svm(data.x, data.y, c)
        probes = list(data.x) + [np.zeros(2)]
        for probe in probes:
            oracle = grid_decision(alphas, bias, data.x, data.y, probe)
            got = svm.decision(model, probe)
            assert got == pytest.approx(oracle, abs=5e-2)

    def test_duplicated_points_leave_decision_unchanged(self):
        data = two_point_set()
        doubled = LabeledSet(
            x=np.vstack([data.x, data.x]), y=np.concatenate([data.y, data.y])
        )
        base = svm.smo_train(data, svm.KernelSpec("linear"), c=10.0, seed=0)
        dup = svm.smo_train(doubled, svm.KernelSpec("linear"), c=10.0, seed=0)
        for probe in np.linspace(-2, 2, 9):
            got = svm.decision(dup, np.array([probe]))
            assert got == pytest.approx(svm.decision(base, np.array([probe])), abs=1e-3)


class TestDecision:
    def test_boundary_point(self):
        model = svm.smo_train(two_point_set(), svm.KernelSpec("linear"), c=10.0, seed=0)
        assert svm.decision(model, np.array([0.0])) == pytest.approx(0.0, abs=1e-2)

    def test_free_support_vectors_sit_on_margin(self):
        data = separable_four_points(3)
        tol = 1e-3
        model = svm.smo_train(data, svm.KernelSpec("linear"), c=5.0, tol=tol, seed=0)
        free = np.abs(model.duals) < model.c - tol
        assert free.any()
        for sv, dual in zip(model.support_vectors[free], model.duals[free]):
            y = 1.0 if dual > 0 else -1.0
            assert abs(svm.decision(model, sv) - y) <= 10 * tol

    def test_empty_support_vectors_return_bias(self):
        model = svm.SvmModel(
            support_vectors=np.zeros((0, 3)),
            duals=np.zeros(0),
            bias=0.25,
            kernel=svm.KernelSpec("linear"),
            c=1.0,
        )
        assert svm.decision(model, np.array([1.0, 2.0, 3.0])) == 0.25

    def test_shape_mismatch(self):
        model = svm.smo_train(two_point_set(), svm.KernelSpec("linear"), c=1.0, seed=0)
        with pytest.raises(ShapeError):
            svm.decision(model, np.array([1.0, 2.0]))


def test_serialization_round_trip():
    data = blob_set(seed=9)
    model = svm.smo_train(data, svm.KernelSpec("rbf", gamma=0.4), c=1.0, seed=0)
    clone = svm.svm_from_dict(svm.svm_to_dict(model))
    probes = np.linspace(-3, 3, 7)
    for px in probes:
        point = np.array([px, -px])
        assert svm.decision(clone, point) == svm.decision(model, point)
