"""Triple-file ingestion, inverse-relation augmentation and the filter index."""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hypkg.errors import DomainError, ParseError

log = logging.getLogger(__name__)

INVERSE_MARKER = "⁻¹"
SPLITS = ("train", "valid", "test")


def read_triples(path):
    """Read ``head<TAB>relation<TAB>tail`` lines; blank lines are skipped."""
    triples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError(path, lineno, f"expected 3 tab-separated fields, got {len(parts)}")
            if INVERSE_MARKER in parts[1]:
                raise ParseError(path, lineno, f"relation name contains reserved marker {INVERSE_MARKER!r}")
            triples.append(tuple(parts))
    return triples


def augment_with_inverses(triples, n_base):
    """Append (t, r + n_base, h) for every (h, r, t); refuses inverse ids on input."""
    triples = np.asarray(triples, dtype=np.int64).reshape(-1, 3)
    if triples.size and triples[:, 1].max() >= n_base:
        raise DomainError("split already contains inverse relations")
    inverse = np.stack([triples[:, 2], triples[:, 1] + n_base, triples[:, 0]], axis=1)
    return np.concatenate([triples, inverse])


@dataclass
class Dataset:
    """Integer-encoded knowledge graph.

    ``train`` holds raw triples followed by their inverses; ``valid`` and
    ``test`` hold raw triples only. Relation ``r + n_base_relations`` is the
    inverse of ``r``.
    """

    entities: list
    base_relations: list
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    filter_index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.entity_ids = {e: i for i, e in enumerate(self.entities)}
        self.relation_ids = {r: i for i, r in enumerate(self.relations)}
        if not self.filter_index:
            self.filter_index = build_filter_index(self)

    @property
    def relations(self):
        return list(self.base_relations) + [r + INVERSE_MARKER for r in self.base_relations]

    @property
    def n_entities(self):
        return len(self.entities)

    @property
    def n_base_relations(self):
        return len(self.base_relations)

    @property
    def n_relations(self):
        return 2 * len(self.base_relations)

    @property
    def train_raw(self):
        return self.train[: len(self.train) // 2]

    def split(self, name):
        return {"train": self.train_raw, "valid": self.valid, "test": self.test}[name]

    def inverse(self, r):
        return (np.asarray(r) + self.n_base_relations) % self.n_relations

    def decode(self, triples):
        """Map id triples back to name triples."""
        rel = self.relations
        return [(self.entities[h], rel[r], self.entities[t]) for h, r, t in np.asarray(triples).reshape(-1, 3)]

    def tails(self, h, r):
        return self.filter_index.get((int(h), int(r)), _EMPTY)

    @classmethod
    def from_triples(cls, train, valid=(), test=()):
        """Build from lists of (head, relation, tail) name triples."""
        entities, relations = {}, {}
        for split in (train, valid, test):
            for h, r, t in split:
                if INVERSE_MARKER in r:
                    raise DomainError(f"relation name {r!r} contains reserved marker {INVERSE_MARKER!r}")
                entities.setdefault(h, len(entities))
                relations.setdefault(r, len(relations))
                entities.setdefault(t, len(entities))

        def encode(split):
            arr = np.array([(entities[h], relations[r], entities[t]) for h, r, t in split], dtype=np.int64)
            return arr.reshape(-1, 3)

        return cls(
            entities=list(entities),
            base_relations=list(relations),
            train=augment_with_inverses(encode(train), len(relations)),
            valid=encode(valid),
            test=encode(test),
        )

    def dump_dictionaries(self, directory):
        """Write ``entities.tsv`` and ``relations.tsv`` as ``name<TAB>id`` lines."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for fname, names in (("entities.tsv", self.entities), ("relations.tsv", self.relations)):
            with open(directory / fname, "w", encoding="utf-8") as fh:
                fh.writelines(f"{n}\t{i}\n" for i, n in enumerate(names))


_EMPTY = np.zeros(0, dtype=np.int64)


def _split_path(directory, name):
    for ext in (".tsv", ".txt"):
        p = Path(directory) / f"{name}{ext}"
        if p.exists():
            return p
    raise FileNotFoundError(f"no {name}.tsv in {directory}")


def load_dataset(directory):
    """Load train/valid/test triple files from ``directory``.

    Ids follow first appearance across train, then valid, then test.
    ``.txt`` files are accepted when the ``.tsv`` name is absent.
    """
    splits = [read_triples(_split_path(directory, name)) for name in SPLITS]
    ds = Dataset.from_triples(*splits)
    log.info(
        "loaded %s: %d entities, %d relations, %d/%d/%d triples",
        directory,
        ds.n_entities,
        ds.n_base_relations,
        len(ds.train_raw),
        len(ds.valid),
        len(ds.test),
    )
    return ds


def build_filter_index(dataset):
    """Map (h, r) -> sorted array of every true tail, inverse forms included."""
    n_base = dataset.n_base_relations
    parts = [dataset.train] + [augment_with_inverses(s, n_base) for s in (dataset.valid, dataset.test)]
    allt = np.unique(np.concatenate(parts), axis=0) if any(len(p) for p in parts) else np.zeros((0, 3), np.int64)
    index = {}
    if not len(allt):
        return index
    keys = allt[:, :2]
    breaks = np.flatnonzero(np.any(keys[1:] != keys[:-1], axis=1)) + 1
    for chunk in np.split(allt, breaks):
        index[(int(chunk[0, 0]), int(chunk[0, 1]))] = chunk[:, 2].copy()
    return index
