"""Small synthetic knowledge graphs used by tests and experiment scripts."""

import numpy as np

from hypkg.data import Dataset


def chain(n=5, relation="next"):
    """Path e0 -> e1 -> ... as name triples."""
    return [(f"e{i}", relation, f"e{i + 1}") for i in range(n - 1)]


def binary_tree_kg(depth=6, holdout=0.1, valid_fraction=0.05, seed=0):
    """Balanced binary tree with an anti-symmetric and a symmetric relation.

    Nodes are heap-ordered (parent of i is (i - 1) // 2), so depth 6 gives
    127 nodes. ``childOf`` holds (descendant, ancestor) for every ancestor,
    i.e. the transitive closure of the parent edge. ``siblingOf`` holds both
    directions of every sibling pair.

    ``holdout`` of each relation goes to test and ``valid_fraction`` to valid.
    For ``siblingOf`` only one direction of a pair is ever held out, so the
    reverse triple stays in train and the held-out one is recoverable only by
    symmetry.
    """
    rng = np.random.default_rng(seed)
    n = 2 ** (depth + 1) - 1
    name = [f"n{i}" for i in range(n)]

    child_of = []
    for i in range(1, n):
        a = (i - 1) // 2
        while True:
            child_of.append((name[i], "childOf", name[a]))
            if a == 0:
                break
            a = (a - 1) // 2
    pairs = [(2 * k + 1, 2 * k + 2) for k in range(n // 2)]

    order = rng.permutation(len(child_of))
    n_test = round(holdout * len(child_of))
    n_valid = round(valid_fraction * len(child_of))
    test = [child_of[i] for i in order[:n_test]]
    valid = [child_of[i] for i in order[n_test : n_test + n_valid]]
    train = [child_of[i] for i in order[n_test + n_valid :]]

    n_sib = 2 * len(pairs)
    n_test_s = round(holdout * n_sib)
    n_valid_s = round(valid_fraction * n_sib)
    porder = rng.permutation(len(pairs))
    for rank, p in enumerate(porder):
        a, b = pairs[p]
        if rng.random() < 0.5:
            a, b = b, a
        fwd, rev = (name[a], "siblingOf", name[b]), (name[b], "siblingOf", name[a])
        train.append(fwd)
        if rank < n_test_s:
            test.append(rev)
        elif rank < n_test_s + n_valid_s:
            valid.append(rev)
        else:
            train.append(rev)
    return Dataset.from_triples(train, valid, test)
