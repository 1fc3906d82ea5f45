import pytest

from mtlab.evaluation import edit_distance, cpwer_single, cpwer, format_report


def test_edit_distance_basics():
    assert edit_distance([], [])[0] == 0
    assert edit_distance([1, 2, 3], [1, 2, 3])[0] == 0
    assert edit_distance([1, 2, 3], [])[0] == 3
    assert edit_distance([], [1, 2])[0] == 2
    d, sub, ins, dele = edit_distance([1, 2, 3], [1, 9, 3])
    assert (d, sub, ins, dele) == (1, 1, 0, 0)
    d, sub, ins, dele = edit_distance([1, 2], [1, 2, 3])
    assert (d, ins) == (1, 1)
    d, sub, ins, dele = edit_distance([1, 2, 3], [1, 3])
    assert (d, dele) == (1, 1)


def test_edit_distance_breakdown_sums():
    import random
    rnd = random.Random(0)
    for _ in range(100):
        r = [rnd.randrange(1, 5) for _ in range(rnd.randrange(0, 8))]
        h = [rnd.randrange(1, 5) for _ in range(rnd.randrange(0, 8))]
        d, sub, ins, dele = edit_distance(r, h)
        assert d == sub + ins + dele
        assert len(r) - dele + ins == len(h) - sub + sub  # length bookkeeping


def test_edit_distance_triangle_inequality():
    import random
    rnd = random.Random(1)
    for _ in range(50):
        a, b, c = ([rnd.randrange(1, 4) for _ in range(rnd.randrange(0, 6))]
                   for _ in range(3))
        dab = edit_distance(a, b)[0]
        dbc = edit_distance(b, c)[0]
        dac = edit_distance(a, c)[0]
        assert dac <= dab + dbc


def test_edit_distance_symmetry_of_distance():
    assert edit_distance([1, 2, 3], [2, 3])[0] == \
        edit_distance([2, 3], [1, 2, 3])[0]


def test_cpwer_picks_best_permutation():
    refs = [[1, 2, 3], [4, 5]]
    hyps = [[4, 5], [1, 2, 3]]   # swapped slots: zero errors
    r = cpwer_single(refs, hyps)
    assert r.n_errors == 0 and r.cpwer == 0.0
    assert r.permutation == (1, 0)


def test_cpwer_hypothesis_order_invariant():
    refs = [[1, 2, 3], [4, 5]]
    hyps = [[1, 2], [4, 5, 6]]
    a = cpwer_single(refs, hyps)
    b = cpwer_single(refs, hyps[::-1])
    assert a.n_errors == b.n_errors


def test_cpwer_slot_padding():
    # 2 refs, 1 hyp slot: missing speaker counts as deletions
    r = cpwer_single([[1, 2], [3]], [[1, 2]])
    assert r.n_errors == 1 and r.n_del == 1
    # 1 ref, 2 hyp slots: spurious speaker counts as insertions
    r = cpwer_single([[1, 2]], [[1, 2], [7, 8]])
    assert r.n_errors == 2 and r.n_ins == 2


def test_cpwer_empty_edge_cases():
    assert cpwer_single([[]], [[]]).cpwer == 0.0
    assert cpwer_single([[]], [[1]]).cpwer == float("inf")
    with pytest.raises(ValueError):
        cpwer_single([[]] * 5, [[]] * 5)


def test_corpus_cpwer_pools_counts():
    refs = [[[1, 2]], [[3, 4, 5]]]
    hyps = [[[1, 9]], [[3, 4, 5]]]
    r = cpwer(refs, hyps)
    assert r.n_errors == 1 and r.n_ref_tokens == 5
    assert r.cpwer == pytest.approx(0.2)
    assert len(r.per_sample) == 2
    with pytest.raises(ValueError):
        cpwer(refs, hyps[:1])


def test_format_report_missing_cells():
    res = cpwer([[[1, 2]]], [[[1, 2]]])
    text, payload = format_report([("sys-a", {"1spk": res, "2spk": None})])
    assert "sys-a" in text and "-" in text
    import json
    rec = json.loads(payload)[0]
    assert rec["2spk"] is None
    assert rec["1spk"]["cpwer"] == 0.0
