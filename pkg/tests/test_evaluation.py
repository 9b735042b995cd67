"""Retrieval metrics against hand values and the pure-python oracle."""

from fractions import Fraction

import numpy as np
import pytest

from centerpolar.data import DataSet, LabeledSample
from centerpolar.encoder import EncoderModel, Layer
from centerpolar.evaluation import (
    evaluate,
    map_at_r,
    r_precision,
    rank_neighbors,
    recall_at_k,
)
from centerpolar.geometry import DegenerateVectorError
from centerpolar.tensor import Tensor

from metric_oracle import (
    oracle_leave_one_out,
    oracle_map_at_r,
    oracle_map_at_r_exact,
    oracle_r_precision,
    oracle_r_precision_exact,
    oracle_recall_at_k,
)


def identity_model(dim):
    return EncoderModel(
        [
            Layer(
                weight=Tensor(np.eye(dim), requires_grad=True),
                bias=Tensor(np.zeros(dim), requires_grad=True),
                activation="identity",
            )
        ]
    )


def line_dataset(positions, labels, domain="probe", ids=None):
    ds = DataSet()
    if ids is None:
        ids = range(len(positions))
    for sid, pos, lab in zip(ids, positions, labels):
        ds.add(
            LabeledSample(
                id=sid, features=np.array([float(pos)]), class_id=lab, domain_tag=domain
            )
        )
    return ds


class TestMetricHandValues:
    def test_recall_hit_and_miss(self):
        ranked = [1, 1, 3, 5]
        assert recall_at_k(ranked, 3, 2) == 0.0
        assert recall_at_k(ranked, 3, 3) == 1.0
        assert recall_at_k(ranked, 1, 1) == 1.0

    def test_r_precision_three_of_four(self):
        assert r_precision([1, 1, 0, 1, 0], 1, 4) == 0.75

    def test_map_two_relevant_at_ranks_one_and_three(self):
        # hits at ranks 1 and 3, R = 2: only the rank-1 hit lands in the
        # top R, contributing 1/1, so MAP is 1/2
        assert map_at_r([1, 0, 1, 0], 1, 2) == 0.5

    def test_map_three_relevant_at_ranks_two_three_five(self):
        got = map_at_r([0, 1, 1, 0, 1], 1, 3)
        expected = 0.0
        expected += 1 / 2
        expected += 2 / 3
        assert got == expected / 3
        assert abs(got - float(Fraction(7, 18))) < 1e-15

    @pytest.mark.parametrize("fn", [recall_at_k, r_precision, map_at_r])
    @pytest.mark.parametrize("k", [0, -1, 5])
    def test_rank_cutoff_out_of_range(self, fn, k):
        with pytest.raises(ValueError):
            fn([1, 1, 0, 0], 1, k)


class TestRankNeighbors:
    def test_single_item_gallery(self):
        assert list(rank_neighbors([0.0, 0.0], [[1.0, 1.0]])) == [0]

    def test_orders_by_distance(self):
        gallery = [[2.0], [1.0], [3.0]]
        assert list(rank_neighbors([0.0], gallery)) == [1, 0, 2]

    def test_ties_break_by_id(self):
        gallery = [[1.0, 0.0], [1.0, 0.0]]
        assert list(rank_neighbors([0.0, 0.0], gallery)) == [0, 1]
        assert list(rank_neighbors([0.0, 0.0], gallery, gallery_ids=[9, 4])) == [1, 0]

    def test_dim_mismatch(self):
        with pytest.raises(ValueError, match="gallery shape"):
            rank_neighbors([0.0, 0.0], [[1.0, 2.0, 3.0]])


class TestAgainstOracle:
    def test_exhaustive_small_galleries(self):
        # every relevance configuration up to gallery size 8, bit for bit
        for n in range(1, 9):
            for mask in range(2**n):
                rel = [(mask >> i) & 1 == 1 for i in range(n)]
                ranked = [1 if r else 0 for r in rel]
                for k in range(1, n + 1):
                    assert recall_at_k(ranked, 1, k) == oracle_recall_at_k(rel, k)
                R = sum(rel)
                if R == 0:
                    continue
                rp = r_precision(ranked, 1, R)
                assert rp == oracle_r_precision(rel)
                assert rp == float(oracle_r_precision_exact(rel))
                mp = map_at_r(ranked, 1, R)
                assert mp == oracle_map_at_r(rel)
                assert abs(mp - float(oracle_map_at_r_exact(rel))) < 1e-12

    def test_recall_monotone_and_map_bounded_by_rp(self):
        gen = np.random.default_rng(0)
        for _ in range(1000):
            n = int(gen.integers(2, 21))
            rel = gen.integers(0, 2, size=n).astype(bool).tolist()
            ranked = [1 if r else 0 for r in rel]
            prev = 0.0
            for k in range(1, n + 1):
                cur = recall_at_k(ranked, 1, k)
                assert cur >= prev
                prev = cur
            R = sum(rel)
            if R:
                assert map_at_r(ranked, 1, R) <= r_precision(ranked, 1, R) + 1e-12

    def test_leave_one_out_random_data_matches(self):
        # integer-valued features keep both distance computations exact, so
        # the rankings and the means agree bit for bit
        gen = np.random.default_rng(7)
        X = gen.integers(-5, 6, size=(30, 4)).astype(np.float64)
        labels = gen.integers(0, 3, size=30).tolist()
        ids = [2 * i + 5 for i in range(30)]
        ds = DataSet()
        for sid, row, lab in zip(ids, X, labels):
            ds.add(LabeledSample(id=sid, features=row, class_id=lab, domain_tag="d"))
        report = evaluate(identity_model(4), {"d": ds})
        _rows, means = oracle_leave_one_out(
            [row.tolist() for row in X], labels, ids, recall_ks=(1, 2)
        )
        m = report.domains["d"]
        assert m.recall_at[1] == means["recall_at"][1]
        assert m.recall_at[2] == means["recall_at"][2]
        assert m.r_precision == means["r_precision"]
        assert m.map_at_r == means["map_at_r"]
        assert m.skipped_zero_relevant == means["skipped_zero_relevant"]


class TestTenSampleTable:
    # two classes on a line: 0,1,2,3,9 labeled 0 and 10..14 labeled 1;
    # the class-0 outlier at 9 retrieves only wrong-class neighbors
    POSITIONS = [0, 1, 2, 3, 9, 10, 11, 12, 13, 14]
    LABELS = [0, 0, 0, 0, 0, 1, 1, 1, 1, 1]

    def _report(self):
        ds = line_dataset(self.POSITIONS, self.LABELS)
        return evaluate(identity_model(1), {"probe": ds})

    def test_recall_means(self):
        m = self._report().domains["probe"]
        assert m.recall_at[1] == 0.8
        assert m.recall_at[2] == 0.9

    def test_r_precision_mean(self):
        assert self._report().domains["probe"].r_precision == 0.85

    def test_map_mean(self):
        # per-query values: queries 0-3 and 7-9 retrieve perfectly, the
        # outlier gets 0, query 5 gets (1/2 + 2/3 + 3/4)/4, query 6 gets 11/16
        q5 = 0.0
        q5 += 1 / 2
        q5 += 2 / 3
        q5 += 3 / 4
        q5 /= 4
        vals = [1.0, 1.0, 1.0, 1.0, 0.0, q5, 11 / 16, 1.0, 1.0, 1.0]
        m = self._report().domains["probe"]
        assert m.map_at_r == sum(vals) / 10
        assert abs(m.map_at_r - float(Fraction(49, 60))) < 1e-15

    def test_no_queries_skipped(self):
        m = self._report().domains["probe"]
        assert m.queries == 10
        assert m.skipped_zero_relevant == 0

    def test_matches_oracle_per_query(self):
        vectors = [[float(p)] for p in self.POSITIONS]
        rows, _means = oracle_leave_one_out(vectors, self.LABELS, list(range(10)))
        by_id = {sid: (rp, mp) for sid, _r, rp, mp in rows}
        assert by_id[4] == (0.0, 0.0)
        assert by_id[5][0] == 0.75
        assert abs(by_id[5][1] - float(Fraction(23, 48))) < 1e-15
        assert by_id[6] == (0.75, 0.6875)


class TestEvaluate:
    def test_two_samples_same_class(self):
        ds = line_dataset([0.0, 1.0], [7, 7])
        report = evaluate(identity_model(1), {"d": ds}, recall_ks=(1,))
        m = report.domains["d"]
        assert m.recall_at[1] == 1.0
        assert m.r_precision == 1.0
        assert m.map_at_r == 1.0
        assert m.skipped_zero_relevant == 0

    def test_two_samples_different_classes(self):
        ds = line_dataset([0.0, 1.0], [0, 1])
        report = evaluate(identity_model(1), {"d": ds}, recall_ks=(1,))
        m = report.domains["d"]
        assert m.recall_at[1] == 0.0
        assert m.r_precision == 0.0  # no scoreable queries
        assert m.map_at_r == 0.0
        assert m.skipped_zero_relevant == 2

    def test_singleton_class_skipped_but_counted_in_recall(self):
        ds = line_dataset([0.0, 1.0, 10.0, 11.0, 100.0], [0, 0, 1, 1, 2])
        report = evaluate(identity_model(1), {"d": ds}, recall_ks=(1,))
        m = report.domains["d"]
        assert m.skipped_zero_relevant == 1
        assert m.recall_at[1] == 0.8  # the singleton query misses
        assert m.r_precision == 1.0  # the other four retrieve perfectly
        assert m.map_at_r == 1.0

    def test_average_over_domains(self):
        perfect = line_dataset([0.0, 1.0], [7, 7], domain="a")
        hopeless = line_dataset([0.0, 1.0], [0, 1], domain="b", ids=(10, 11))
        report = evaluate(
            identity_model(1), {"a": perfect, "b": hopeless}, recall_ks=(1,)
        )
        assert report.average.recall_at[1] == 0.5
        assert report.average.queries == 4
        assert report.query_count == 4

    def test_recall_ks_deduplicated_and_sorted(self):
        ds = line_dataset([0.0, 1.0, 2.0], [0, 0, 0])
        report = evaluate(identity_model(1), {"d": ds}, recall_ks=(2, 1, 2))
        assert sorted(report.domains["d"].recall_at) == [1, 2]

    def test_geodesic_ranks_by_angle(self):
        # (10,0) ties with the query direction, (1.2,0.5) is nearer in
        # euclidean terms but angularly farther
        pts = [[1.0, 0.0], [10.0, 0.0], [1.2, 0.5]]
        ds = DataSet()
        for i, (row, lab) in enumerate(zip(pts, [0, 0, 1])):
            ds.add(
                LabeledSample(
                    id=i, features=np.array(row), class_id=lab, domain_tag="d"
                )
            )
        model = identity_model(2)
        eu = evaluate(model, {"d": ds}, recall_ks=(1,), metric="euclidean")
        geo = evaluate(model, {"d": ds}, recall_ks=(1,), metric="geodesic")
        assert eu.domains["d"].recall_at[1] == 0.0
        assert geo.domains["d"].recall_at[1] == pytest.approx(2 / 3, abs=1e-15)
        assert eu.metric == "euclidean"
        assert geo.metric == "geodesic"

    def test_geodesic_rejects_zero_embedding(self):
        ds = line_dataset([0.0, 1.0, 2.0], [0, 0, 0], ids=(3, 4, 5))
        with pytest.raises(DegenerateVectorError, match="sample 3"):
            evaluate(identity_model(1), {"d": ds}, recall_ks=(1,), metric="geodesic")

    def test_bad_metric_name(self):
        ds = line_dataset([0.0, 1.0], [0, 0])
        with pytest.raises(ValueError, match="metric"):
            evaluate(identity_model(1), {"d": ds}, metric="cosine")

    def test_empty_tests_rejected(self):
        with pytest.raises(ValueError, match="no test sets"):
            evaluate(identity_model(1), {})

    def test_tiny_domain_rejected(self):
        ds = line_dataset([0.0], [0])
        with pytest.raises(ValueError, match="at least 2"):
            evaluate(identity_model(1), {"d": ds})

    def test_recall_k_exceeding_gallery_rejected(self):
        ds = line_dataset([0.0, 1.0, 2.0], [0, 0, 0])
        with pytest.raises(ValueError, match="exceeds gallery"):
            evaluate(identity_model(1), {"d": ds}, recall_ks=(3,))


class TestReportShapes:
    def _report(self):
        ds = line_dataset([0.0, 1.0, 10.0, 11.0], [0, 0, 1, 1])
        return evaluate(identity_model(1), {"probe": ds})

    def test_to_dict(self):
        d = self._report().to_dict()
        assert set(d) == {"domains", "average", "query_count", "metric"}
        assert set(d["domains"]) == {"probe"}
        dom = d["domains"]["probe"]
        assert set(dom) == {
            "recall_at",
            "r_precision",
            "map_at_r",
            "queries",
            "skipped_zero_relevant",
        }
        assert list(dom["recall_at"]) == ["1", "2"]  # JSON-friendly keys

    def test_to_text(self):
        text = self._report().to_text()
        assert "domain" in text
        assert "average" in text
        assert "R@1" in text
        assert text.endswith("\n")
