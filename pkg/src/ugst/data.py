"""Datasets: portable on-disk format, synthetic block-model generator, splits.

The portable directory format (all UTF-8, LF endings, no headers):

    meta.json      {"name": str, "num_nodes": int, "num_classes": int,
                    "feature_dim": int}
    edges.tsv      one edge per line, "u<TAB>v", 0-based, undirected
                   (either orientation accepted; duplicates allowed)
    features.csv   num_nodes lines of feature_dim comma-separated reals
    labels.csv     num_nodes lines, one integer class per line
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataFormatError, StructureError
from .graph import Graph

FILES = ("meta.json", "edges.tsv", "features.csv", "labels.csv")


@dataclass(frozen=True)
class Dataset:
    graph: Graph
    features: np.ndarray   # |V| x d
    labels: np.ndarray     # |V| ints in [0, num_classes)
    num_classes: int
    name: str = ""

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        n = self.graph.num_nodes
        if feats.ndim != 2 or feats.shape[0] != n:
            raise StructureError(f"features must be {n} x d")
        if not np.all(np.isfinite(feats)):
            raise StructureError("features contain non-finite values")
        if labels.shape != (n,):
            raise StructureError(f"labels must have length {n}")
        if n and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise StructureError(f"labels must lie in [0, {self.num_classes})")
        if len(np.unique(labels)) != self.num_classes:
            raise StructureError("every class must occur at least once")
        feats.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass(frozen=True)
class Split:
    """Disjoint labeled / validation / test / unlabeled-train masks over V."""

    labeled: np.ndarray
    val: np.ndarray
    test: np.ndarray
    unlabeled: np.ndarray

    def __post_init__(self):
        masks = [self.labeled, self.val, self.test, self.unlabeled]
        n = len(masks[0])
        for m in masks:
            if np.asarray(m).dtype != bool or len(m) != n:
                raise StructureError("split masks must be equal-length boolean arrays")
        total = sum(m.astype(int) for m in masks)
        if not np.all(total == 1):
            raise StructureError("split masks must partition the node set")
        if not self.labeled.any():
            raise StructureError("labeled mask must be non-empty")
        for m in masks:
            m.setflags(write=False)


@dataclass(frozen=True)
class SbmParams:
    num_blocks: int
    nodes_per_block: int
    p_in: float
    p_out: float
    feature_dim: int
    signal_strength: float = 1.0
    noise_std: float = 1.0

    def __post_init__(self):
        if self.num_blocks < 1 or self.nodes_per_block < 1 or self.feature_dim < 1:
            raise StructureError("num_blocks, nodes_per_block, feature_dim must be >= 1")
        if not 0.0 <= self.p_out <= self.p_in <= 1.0:
            raise StructureError("need 0 <= p_out <= p_in <= 1")
        if self.noise_std < 0:
            raise StructureError("noise_std must be >= 0")


def generate_sbm(params: SbmParams, seed: int) -> Dataset:
    """Planted-community random graph with block-coded noisy features.

    Block b occupies nodes [b*npb, (b+1)*npb); labels are block ids.
    Edge {u, v} appears with probability p_in inside a block, p_out
    across blocks. Features are signal_strength on coordinate
    (b mod feature_dim) plus N(0, noise_std^2) noise. Deterministic
    given ``seed``: edges are drawn first, then feature noise.
    """
    rng = np.random.default_rng(seed)
    k, npb = params.num_blocks, params.nodes_per_block
    n = k * npb
    labels = np.repeat(np.arange(k), npb)
    iu, ju = np.triu_indices(n, k=1)
    p_edge = np.where(labels[iu] == labels[ju], params.p_in, params.p_out)
    keep = rng.random(len(iu)) < p_edge
    edges = np.stack([iu[keep], ju[keep]], axis=1)
    means = np.zeros((k, params.feature_dim))
    means[np.arange(k), np.arange(k) % params.feature_dim] = params.signal_strength
    feats = means[labels] + rng.normal(0.0, params.noise_std, size=(n, params.feature_dim))
    name = f"sbm-b{k}x{npb}-pin{params.p_in}-pout{params.p_out}-seed{seed}"
    return Dataset(
        graph=Graph(n, edges), features=feats, labels=labels,
        num_classes=k, name=name,
    )


def sample_split(
    dataset: Dataset,
    labeled_fraction: float,
    val_fraction: float,
    test_fraction: float,
    seed: int,
) -> Split:
    """Stratified labeled sample plus uniform validation/test draws.

    Labeled quota per class follows the largest-remainder rule on
    labeled_fraction * class_size, with every class guaranteed at least
    one node; validation and test are drawn uniformly from the rest.
    """
    for f in (labeled_fraction, val_fraction, test_fraction):
        if f <= 0:
            raise StructureError("all split fractions must be positive")
    if labeled_fraction + val_fraction + test_fraction >= 1.0:
        raise StructureError("split fractions must sum to less than 1")
    n = dataset.num_nodes
    c = dataset.num_classes
    labels = dataset.labels
    total_labeled = int(round(labeled_fraction * n))
    if total_labeled < c:
        raise StructureError(
            f"labeled fraction {labeled_fraction} yields {total_labeled} nodes, "
            f"fewer than the {c} classes it must cover"
        )
    class_nodes = [np.flatnonzero(labels == cls) for cls in range(c)]
    exact = np.array([labeled_fraction * len(idx) for idx in class_nodes])
    alloc = np.maximum(np.floor(exact).astype(int), 1)
    alloc = np.minimum(alloc, [len(idx) for idx in class_nodes])
    remainder = exact - np.floor(exact)
    # largest-remainder top-up / trim toward the target total
    while alloc.sum() < total_labeled:
        order = np.lexsort((np.arange(c), -remainder))
        for cls in order:
            if alloc[cls] < len(class_nodes[cls]):
                alloc[cls] += 1
                remainder[cls] -= 1.0
                break
        else:
            raise StructureError("cannot reach labeled quota: classes exhausted")
    while alloc.sum() > total_labeled:
        order = np.lexsort((np.arange(c), remainder))
        for cls in order:
            if alloc[cls] > 1:
                alloc[cls] -= 1
                remainder[cls] += 1.0
                break
        else:
            raise StructureError(
                "labeled fraction too small to cover all classes"
            )

    rng = np.random.default_rng(seed)
    labeled = np.zeros(n, dtype=bool)
    for cls in range(c):
        chosen = rng.choice(class_nodes[cls], size=alloc[cls], replace=False)
        labeled[chosen] = True

    rest = np.flatnonzero(~labeled)
    val_count = int(round(val_fraction * n))
    test_count = int(round(test_fraction * n))
    if val_count + test_count > len(rest):
        raise StructureError("val + test fractions exceed the unlabeled pool")
    perm = rng.permutation(rest)
    val = np.zeros(n, dtype=bool)
    test = np.zeros(n, dtype=bool)
    val[perm[:val_count]] = True
    test[perm[val_count:val_count + test_count]] = True
    unlabeled = ~(labeled | val | test)
    return Split(labeled=labeled, val=val, test=test, unlabeled=unlabeled)


# ---------------------------------------------------------------------------
# portable directory format
# ---------------------------------------------------------------------------

def save_dataset(dataset: Dataset, directory: str | Path) -> None:
    """Write the four-file portable format; floats keep full precision."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "name": dataset.name,
        "num_nodes": dataset.num_nodes,
        "num_classes": dataset.num_classes,
        "feature_dim": dataset.feature_dim,
    }
    (directory / "meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    with open(directory / "edges.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for u, v in dataset.graph.edges:
            fh.write(f"{u}\t{v}\n")
    with open(directory / "features.csv", "w", encoding="utf-8", newline="\n") as fh:
        for row in dataset.features:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    with open(directory / "labels.csv", "w", encoding="utf-8", newline="\n") as fh:
        for y in dataset.labels:
            fh.write(f"{y}\n")


def load_dataset(directory: str | Path) -> Dataset:
    """Load and validate a portable dataset directory."""
    directory = Path(directory)
    for name in FILES:
        if not (directory / name).is_file():
            raise DataFormatError(f"missing dataset file: {directory / name}")

    try:
        meta = json.loads((directory / "meta.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"meta.json is not valid JSON: {exc}") from exc
    for key in ("name", "num_nodes", "num_classes", "feature_dim"):
        if key not in meta:
            raise DataFormatError(f"meta.json missing key {key!r}")
    n = int(meta["num_nodes"])
    c = int(meta["num_classes"])
    d = int(meta["feature_dim"])

    edges = []
    for lineno, line in enumerate(_lines(directory / "edges.tsv"), start=1):
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataFormatError(f"edges.tsv line {lineno}: expected 'u<TAB>v'")
        try:
            u, v = int(parts[0]), int(parts[1])
        except ValueError as exc:
            raise DataFormatError(f"edges.tsv line {lineno}: non-integer endpoint") from exc
        if not (0 <= u < n and 0 <= v < n):
            raise DataFormatError(
                f"edges.tsv line {lineno}: endpoint out of range [0, {n})"
            )
        if u == v:
            raise DataFormatError(f"edges.tsv line {lineno}: self-loop {u}")
        edges.append((u, v))

    feat_rows = []
    for lineno, line in enumerate(_lines(directory / "features.csv"), start=1):
        parts = line.split(",")
        if len(parts) != d:
            raise DataFormatError(
                f"features.csv line {lineno}: expected {d} values, got {len(parts)}"
            )
        try:
            feat_rows.append([float(x) for x in parts])
        except ValueError as exc:
            raise DataFormatError(f"features.csv line {lineno}: non-numeric value") from exc
    if len(feat_rows) != n:
        raise DataFormatError(
            f"features.csv has {len(feat_rows)} rows, meta.json says {n} nodes"
        )

    labels = []
    for lineno, line in enumerate(_lines(directory / "labels.csv"), start=1):
        try:
            y = int(line)
        except ValueError as exc:
            raise DataFormatError(f"labels.csv line {lineno}: non-integer label") from exc
        if not 0 <= y < c:
            raise DataFormatError(
                f"labels.csv line {lineno}: label {y} out of range [0, {c})"
            )
        labels.append(y)
    if len(labels) != n:
        raise DataFormatError(
            f"labels.csv has {len(labels)} rows, meta.json says {n} nodes"
        )

    try:
        return Dataset(
            graph=Graph(n, np.array(edges, dtype=np.int64).reshape(-1, 2)),
            features=np.array(feat_rows, dtype=np.float64).reshape(n, d),
            labels=np.array(labels, dtype=np.int64),
            num_classes=c,
            name=str(meta["name"]),
        )
    except StructureError as exc:
        raise DataFormatError(f"dataset in {directory} is inconsistent: {exc}") from exc


def _lines(path: Path):
    text = path.read_text(encoding="utf-8")
    for line in text.split("\n"):
        if line:
            yield line
