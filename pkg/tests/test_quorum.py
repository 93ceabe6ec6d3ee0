import json

import numpy as np
import pytest

from modules.errors import InvalidInputError, InvalidParameterError
from modules.quorum import (
    build_majority, build_matrix, build_quorum_system, build_square_matrix, contains_quorum,
    first_contained_quorum, from_lists, has_live_quorum, load_quorum_file, relay_destinations,
    validate,
)


class TestMajority:
    def test_three_servers(self):
        qs = build_majority(3)
        assert list(qs.quorums) == [{0, 1}, {0, 2}, {1, 2}]

    def test_single_server(self):
        assert list(build_majority(1).quorums) == [{0}]

    def test_five_servers(self):
        qs = build_majority(5)
        assert len(qs) == 10
        assert all(len(q) == 3 for q in qs.quorums)

    def test_zero_rejected(self):
        with pytest.raises(InvalidParameterError):
            build_majority(0)


class TestMatrix:
    def test_three_by_three(self):
        qs = build_matrix(3, 3)
        assert len(qs) == 9
        assert all(len(q) == 5 for q in qs.quorums)
        assert qs[0] == {0, 1, 2, 3, 6}

    def test_one_by_one(self):
        assert list(build_matrix(1, 1).quorums) == [{0}]

    def test_four_by_four(self):
        qs = build_matrix(4, 4)
        assert len(qs) == 16
        assert all(len(q) == 7 for q in qs.quorums)

    def test_zero_dimension(self):
        with pytest.raises(InvalidParameterError):
            build_matrix(0, 3)

    def test_square_required(self):
        with pytest.raises(InvalidParameterError):
            build_square_matrix(10)


class TestValidate:
    @pytest.mark.parametrize("qs", [build_majority(3), build_majority(4), build_matrix(5, 5), build_matrix(2, 3)])
    def test_generated_systems_valid(self, qs):
        assert validate(qs)

    def test_disjoint_pair(self):
        with pytest.raises(InvalidParameterError):
            from_lists([[1], [2]])

    def test_empty_quorum_rejected(self):
        with pytest.raises(InvalidParameterError):
            from_lists([[], [0]])


class TestQueries:
    def test_first_contained(self, majority3):
        assert first_contained_quorum(majority3, {0, 1}) == 0
        assert first_contained_quorum(majority3, {0}) is None

    def test_matrix_scan(self, matrix9):
        responders = {0, 1, 2, 3, 6, 8}
        assert first_contained_quorum(matrix9, responders) == 0

    def test_monotone(self, matrix9):
        rng = np.random.default_rng(3)
        for _ in range(200):
            responders = set(rng.choice(9, size=rng.integers(0, 10), replace=False).tolist())
            if contains_quorum(matrix9, responders):
                extra = responders | {int(rng.integers(9))}
                assert contains_quorum(matrix9, extra)

    def test_relay_destinations(self, majority3, matrix9):
        assert relay_destinations(majority3, 0) == {0, 1, 2}
        assert relay_destinations(matrix9, 4) == set(range(9))
        assert relay_destinations(build_matrix(1, 1), 0) == {0}

    def test_relay_destinations_contain_self(self):
        qs = build_matrix(4, 4)
        for s in range(16):
            assert s in relay_destinations(qs, s)

    def test_relay_destinations_unknown_server(self, majority3):
        with pytest.raises(InvalidInputError):
            relay_destinations(majority3, 7)

    def test_live_quorum(self, majority3):
        assert has_live_quorum(majority3, frozenset({2}))
        assert not has_live_quorum(majority3, frozenset({0, 1}))

    def test_build_by_kind(self):
        assert len(build_quorum_system("majority", 4)) == 4
        assert len(build_quorum_system("matrix", 16)) == 16
        with pytest.raises(InvalidParameterError):
            build_quorum_system("grid", 9)


def test_load_quorum_file(tmp_path):
    path = tmp_path / "quorums.json"
    path.write_text(json.dumps([[0, 1], [0, 2], [1, 2]]), encoding="utf-8")
    qs = load_quorum_file(path)
    assert qs.universe == {0, 1, 2}
    assert len(qs) == 3
