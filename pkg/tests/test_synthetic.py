import numpy as np

from hypkg.synthetic import binary_tree_kg, chain


def test_chain():
    assert chain(3) == [("e0", "next", "e1"), ("e1", "next", "e2")]


def test_tree_sizes():
    ds = binary_tree_kg()
    assert ds.n_entities == 127
    assert sorted(ds.base_relations) == ["childOf", "siblingOf"]
    # 127 nodes: sum of depths = 642 ancestor pairs, 63 sibling pairs -> 126 directed
    total = len(ds.train_raw) + len(ds.valid) + len(ds.test)
    assert total == 642 + 126


def test_heldout_siblings_have_reverse_in_train():
    ds = binary_tree_kg()
    sib = ds.base_relations.index("siblingOf")
    train = set(map(tuple, ds.train_raw.tolist()))
    held = [t for t in np.concatenate([ds.valid, ds.test]).tolist() if t[1] == sib]
    assert held and all((t, sib, h) in train for h, _, t in held)


def test_child_of_is_transitive_closure():
    ds = binary_tree_kg(depth=3)
    rel = ds.base_relations.index("childOf")
    rows = np.concatenate([ds.train_raw, ds.valid, ds.test])
    got = {ds.decode([r])[0][::2] for r in rows.tolist() if r[1] == rel}
    want = set()
    for i in range(1, 15):
        a = i
        while a:
            a = (a - 1) // 2
            want.add((f"n{i}", f"n{a}"))
    assert got == want


def test_seeded():
    a, b = binary_tree_kg(seed=4), binary_tree_kg(seed=4)
    assert np.array_equal(a.test, b.test) and not np.array_equal(a.test, binary_tree_kg(seed=5).test)
