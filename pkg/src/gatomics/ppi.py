"""STRING-style edge-list parsing and the feature-to-node channel mapping.

Edge lists are 3-column TSV (``protein1  protein2  combined_score``) with a
header row. Scores may be probabilities in [0, 1] or STRING-style integers
in 0-999; if any score exceeds 1 the whole file is treated as the latter and
divided by 1000. Feature maps are 2-column TSV ``feature_id  gene_symbol``
with a header; the optional node file lists one node ID per line, no header.

Node features get 2 channels per omics layer: the mean of the node's mapped
features in that layer, and a presence flag (1 if at least one feature
mapped). Features whose gene symbol is missing from the graph are dropped
and counted.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class EdgeListFormatError(ValueError):
    """An edge-list or map file violated its format contract."""


@dataclass
class PpiGraph:
    node_ids: list                 # ordered unique symbols
    edges: np.ndarray              # (m, 2) index pairs, i < j, no self-edges
    scores: np.ndarray             # confidence per edge, in [0, 1]
    index: dict = field(init=False)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if len(set(self.node_ids)) != len(self.node_ids):
            raise ValueError("duplicate node IDs")
        if self.edges.shape[0] != self.scores.shape[0]:
            raise ValueError("edges and scores disagree")
        n = len(self.node_ids)
        if self.edges.size:
            if self.edges.min() < 0 or self.edges.max() >= n:
                raise ValueError("edge index out of range")
            if np.any(self.edges[:, 0] == self.edges[:, 1]):
                raise ValueError("self-edges are not stored")
            if len({(int(i), int(j)) for i, j in self.edges}) != self.edges.shape[0]:
                raise ValueError("duplicate edges")
        self.index = {nid: i for i, nid in enumerate(self.node_ids)}

    @property
    def n_nodes(self):
        return len(self.node_ids)

    @property
    def n_edges(self):
        return self.edges.shape[0]


@dataclass
class NodeFeatureSpec:
    """Which dataset features feed which node channels.

    ``assignment[node][layer]`` lists the dataset feature indices aggregated
    (by mean) into that node's channel for that layer; channel ``2k`` is the
    layer-k mean and channel ``2k+1`` the presence flag.
    """

    layer_names: list
    assignment: list               # per node: list per layer of feature index lists
    unmapped_features: list        # dropped dataset feature indices

    @property
    def channels_per_node(self):
        return 2 * len(self.layer_names)


def parse_edge_list(path, score_threshold=0.7, node_file=None):
    """Build an undirected graph from a scored edge list.

    Self-edges are dropped, reciprocal duplicates collapse to one undirected
    edge keeping the maximum score, and only edges with score >= threshold
    survive. The node set is the endpoints of surviving edges plus any nodes
    from the optional node file; node order is lexicographic.
    """
    if not (0.0 <= score_threshold <= 1.0):
        raise ValueError(f"score threshold must lie in [0, 1], got {score_threshold}")
    raw = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cells = line.split("\t")
            if lineno == 1 and cells[0].strip().lower() in ("protein1", "node1"):
                continue
            if len(cells) != 3:
                raise EdgeListFormatError(
                    f"{path}: line {lineno}: expected 3 tab-separated columns, "
                    f"got {len(cells)}")
            p1, p2, score_text = (c.strip() for c in cells)
            if not p1 or not p2:
                raise EdgeListFormatError(f"{path}: line {lineno}: empty protein ID")
            try:
                score = float(score_text)
            except ValueError:
                raise EdgeListFormatError(
                    f"{path}: line {lineno}: unparseable score {score_text!r}") from None
            if score < 0.0:
                raise EdgeListFormatError(f"{path}: line {lineno}: negative score")
            raw.append((p1, p2, score))

    if raw and max(score for _, _, score in raw) > 1.0:
        raw = [(p1, p2, score / 1000.0) for p1, p2, score in raw]

    best = {}
    n_self = 0
    for p1, p2, score in raw:
        if p1 == p2:
            n_self += 1
            continue
        key = (p1, p2) if p1 < p2 else (p2, p1)
        if score > best.get(key, -1.0):
            best[key] = score
    if n_self:
        log.warning("%s: dropped %d self-edge row(s)", path, n_self)

    kept = {key: score for key, score in best.items() if score >= score_threshold}
    nodes = set()
    for p1, p2 in kept:
        nodes.add(p1)
        nodes.add(p2)
    if node_file is not None:
        with open(node_file, encoding="utf-8") as fh:
            nodes.update(line.strip() for line in fh if line.strip())
    node_ids = sorted(nodes)
    index = {nid: i for i, nid in enumerate(node_ids)}
    pairs = sorted(kept)
    edges = np.array([[index[p1], index[p2]] for p1, p2 in pairs],
                     dtype=np.int64).reshape(-1, 2)
    # store with i < j in index space
    edges = np.sort(edges, axis=1)
    scores = np.array([kept[pair] for pair in pairs])
    return PpiGraph(node_ids, edges, scores)


def load_feature_map(path):
    """Read the feature_id -> gene_symbol TSV (with header)."""
    mapping = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            cells = line.split("\t")
            if lineno == 1 and cells[0].strip().lower() == "feature_id":
                continue
            if len(cells) != 2:
                raise EdgeListFormatError(
                    f"{path}: line {lineno}: expected 2 tab-separated columns")
            fid, gene = cells[0].strip(), cells[1].strip()
            if fid in mapping:
                raise EdgeListFormatError(
                    f"{path}: line {lineno}: duplicate feature ID {fid!r}")
            mapping[fid] = gene
    return mapping


def map_features_to_nodes(graph, feature_to_gene, feature_ids, feature_layers):
    """Assign dataset features to node channels via their gene symbols.

    Features without a map entry, or whose gene is absent from the graph,
    land in ``unmapped_features`` (and a count is logged). Each mapped
    feature contributes to exactly one node, in its own layer's channel.
    """
    layer_names = []
    for name in feature_layers:
        if name not in layer_names:
            layer_names.append(name)
    layer_idx = {name: k for k, name in enumerate(layer_names)}
    assignment = [[[] for _ in layer_names] for _ in range(graph.n_nodes)]
    unmapped = []
    for f, (fid, layer) in enumerate(zip(feature_ids, feature_layers)):
        gene = feature_to_gene.get(fid)
        node = graph.index.get(gene) if gene is not None else None
        if node is None:
            unmapped.append(f)
            continue
        assignment[node][layer_idx[layer]].append(f)
    if unmapped:
        log.warning("dropping %d feature(s) with no gene symbol in the graph",
                    len(unmapped))
    return NodeFeatureSpec(layer_names, assignment, unmapped)


def build_edge_index(graph):
    """Directed edge index: both directions of every edge plus one self-loop
    per node, sorted by (destination, source). Length is 2*|E| + |V|."""
    n = graph.n_nodes
    src = np.concatenate([graph.edges[:, 0], graph.edges[:, 1], np.arange(n)])
    dst = np.concatenate([graph.edges[:, 1], graph.edges[:, 0], np.arange(n)])
    order = np.lexsort((src, dst))
    return src[order], dst[order]


def build_sample_graph_inputs(values, spec, graph):
    """Per-sample node-feature grids plus the shared directed edge index.

    ``values`` is the integrated (samples x features) grid. Returns
    ``(feats, edge_src, edge_dst)`` with ``feats`` of shape
    (samples, nodes, 2 * n_layers).
    """
    values = np.asarray(values, dtype=np.float64)
    n_samples = values.shape[0]
    d = spec.channels_per_node
    feats = np.zeros((n_samples, graph.n_nodes, d))
    for node, per_layer in enumerate(spec.assignment):
        for k, feat_idx in enumerate(per_layer):
            if feat_idx:
                feats[:, node, 2 * k] = values[:, feat_idx].mean(axis=1)
                feats[:, node, 2 * k + 1] = 1.0
    edge_src, edge_dst = build_edge_index(graph)
    return feats, edge_src, edge_dst


def unmapped_values(values, spec):
    """Raw columns of the features the mapping dropped, sample-aligned.

    The optional alternative to dropping unmapped features outright: this
    (samples x n_unmapped) grid can be appended to the model's post-readout
    vector (`extra` in the model API).
    """
    values = np.asarray(values, dtype=np.float64)
    return values[:, spec.unmapped_features]
