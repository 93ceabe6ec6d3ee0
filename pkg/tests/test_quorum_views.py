import numpy as np
import pytest

from modules.core_types import Tag, writer
from modules.errors import InvalidInputError
from modules.quorum import build_majority, build_matrix
from modules.quorum_views import (
    AwaitAcks, ReturnTag, TagView, ViewClass, classify, iterative_analyze, unravel,
)


def t(ts, w=1):
    return Tag(ts, writer(w))


@pytest.fixture
def majority4():
    # 下标 0 对应 {0,1,2}
    return build_majority(4)


class TestClassify:
    def test_uniform_is_view1(self, majority3):
        view = TagView.of(0, {0: t(5), 1: t(5)})
        assert classify(majority3, view) is ViewClass.VIEW1

    def test_single_holder_is_view2(self, majority4):
        view = TagView.of(0, {0: t(5), 1: t(4), 2: t(4)})
        assert classify(majority4, view) is ViewClass.VIEW2

    def test_covered_intersection_is_view3(self, majority4):
        view = TagView.of(0, {0: t(5), 1: t(5), 2: t(4)})
        assert classify(majority4, view) is ViewClass.VIEW3

    def test_missing_server(self, majority4):
        with pytest.raises(InvalidInputError):
            classify(majority4, TagView.of(0, {0: t(5), 1: t(5)}))

    def test_bad_index(self, majority3):
        with pytest.raises(InvalidInputError):
            classify(majority3, TagView.of(9, {0: t(1), 1: t(1)}))

    def test_all_equal_view1_everywhere(self):
        for qs in (build_majority(5), build_matrix(3, 3), build_matrix(4, 4)):
            for index, q in enumerate(qs.quorums):
                view = TagView.of(index, {s: t(3) for s in q})
                assert classify(qs, view) is ViewClass.VIEW1

    def test_lone_holder_with_wide_intersections_is_view2(self):
        qs = build_matrix(3, 3)
        q = qs[0]
        holder = min(q)
        view = TagView.of(0, {s: t(2) if s == holder else t(1) for s in q})
        assert classify(qs, view) is ViewClass.VIEW2


class TestIterative:
    def test_view1_returns_max(self, majority3):
        view = TagView.of(0, {0: t(5, 2), 1: t(5, 2)}, {0: "v5", 1: "v5"})
        decision = iterative_analyze(majority3, view)
        assert isinstance(decision, ReturnTag)
        assert decision == ReturnTag(t(5, 2), "v5")

    def test_view3_awaits(self, majority4):
        view = TagView.of(0, {0: t(5, 2), 1: t(5, 2), 2: t(4, 1)})
        assert iterative_analyze(majority4, view) == AwaitAcks()

    def test_view2_then_view1(self, majority4):
        view = TagView.of(0, {0: t(5, 2), 1: t(4, 1), 2: t(4, 1)})
        decision = iterative_analyze(majority4, view)
        assert isinstance(decision, ReturnTag)
        assert decision.tag == t(4, 1)
        steps = list(unravel(majority4, view))
        assert [s.view for s in steps] == [ViewClass.VIEW2, ViewClass.VIEW1]
        assert steps[1].remaining == {1, 2}

    def test_terminates_within_quorum_size(self):
        rng = np.random.default_rng(11)
        for qs in (build_majority(4), build_majority(5), build_matrix(3, 3), build_matrix(4, 4)):
            for _ in range(100):
                index = int(rng.integers(len(qs)))
                q = qs[index]
                tags = {s: t(int(rng.integers(0, 4)), int(rng.integers(1, 3))) for s in q}
                steps = list(unravel(qs, TagView.of(index, tags)))
                assert 1 <= len(steps) <= len(q)
                assert steps[-1].view in (ViewClass.VIEW1, ViewClass.VIEW3)
