"""Deterministic synthetic multi-omics corpus with planted class structure.

The stand-in world: nodes (genes) are partitioned into one community per
class and wired by a stochastic block model; informative features map onto
the community of "their" class and shift that class's mean by
``signal_strength * noise_sd`` in latent space. mRNA/miRNA layers emit
count-like values ``2**x - 1`` (so ``log2(count + 1)`` recovers the latent
value exactly); methylation emits logistic-squashed beta values strictly
inside (0, 1). Which classes each layer carries is configurable, which is
how the complementary preset starves every single-layer model of most of
the signal.

Everything (graph, labels, values, file bytes) is a pure function of the
seed.
"""

import json
import math
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

LAYER_NAMES = ("mrna", "mirna", "methylation")

# logistic argument clip: keeps emitted beta values strictly inside (0, 1)
# even after 9-significant-digit formatting
_SQUASH_LIMIT = 12.0
_MRNA_LOG_BASE = 6.0


@dataclass
class SynthConfig:
    n_samples: int = 400
    n_classes: int = 4
    nodes: int = 60
    p_intra: float = 0.15
    p_inter: float = 0.02
    features_per_layer: tuple = (120, 60, 80)
    informative_fraction: float = 0.2
    signal_strength: float = 4.0
    noise_sd: float = 1.0
    layer_classes: tuple | None = None  # classes each layer carries; None = all
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.n_samples < self.n_classes:
            raise ValueError("need at least one sample per class")
        if self.nodes < self.n_classes:
            raise ValueError("need at least one node per class community")
        for p in (self.p_intra, self.p_inter):
            if not (0.0 <= p <= 1.0):
                raise ValueError("edge probabilities must lie in [0, 1]")
        self.features_per_layer = tuple(int(f) for f in self.features_per_layer)
        if len(self.features_per_layer) != 3 or min(self.features_per_layer) < 1:
            raise ValueError("features_per_layer must give 3 positive counts")
        if not (0.0 <= self.informative_fraction <= 1.0):
            raise ValueError("informative fraction must lie in [0, 1]")
        if self.signal_strength < 0.0 or self.noise_sd <= 0.0:
            raise ValueError("signal strength must be >= 0 and noise sd > 0")
        if self.layer_classes is None:
            self.layer_classes = tuple(tuple(range(self.n_classes))
                                       for _ in LAYER_NAMES)
        else:
            self.layer_classes = tuple(tuple(int(c) for c in cs)
                                       for cs in self.layer_classes)
            if len(self.layer_classes) != 3:
                raise ValueError("layer_classes must list classes for 3 layers")
            for cs in self.layer_classes:
                if any(c < 0 or c >= self.n_classes for c in cs):
                    raise ValueError("layer_classes references an unknown class")


def complementary_preset(seed):
    """The multi-omics synergy preset: 8 classes whose signal is split
    across layers (3 carried classes each, all 8 covered, one overlap), so
    no single layer can separate more than 3 of them.

    Edge probabilities are tuned to the sparse regime of real
    protein-interaction exports (average incident degree near 1.3), which
    leaves most aggregation to the self-loops, as in the real pipeline.
    """
    return SynthConfig(
        n_samples=2000,
        n_classes=8,
        nodes=200,
        p_intra=0.04,
        p_inter=0.002,
        features_per_layer=(600, 300, 400),
        informative_fraction=0.2,
        signal_strength=6.0,
        noise_sd=1.0,
        layer_classes=((0, 1, 2), (3, 4, 5), (6, 7, 0)),
        seed=seed,
    )


def class_names(n_classes):
    """Class 0 is the normal group (the two-group contrast anchor)."""
    return ["Normal"] + [f"Tumor{c:02d}" for c in range(1, n_classes)]


def _community_of(node, nodes, n_classes):
    return node * n_classes // nodes


def generate(config, out_dir):
    """Write the full synthetic corpus into ``out_dir``.

    Emits three omics matrices, a label file, a STRING-style edge list
    (integer scores in 750-999, exercising the 0-999 auto-scaling), the
    feature -> gene map, and a ground-truth manifest. Returns a dict of
    paths keyed by artifact name.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(config.seed)
    n, k_classes, n_nodes = config.n_samples, config.n_classes, config.nodes

    genes = [f"G{v:04d}" for v in range(n_nodes)]
    communities = np.array([_community_of(v, n_nodes, k_classes)
                            for v in range(n_nodes)])

    # stochastic block model, undirected, no self-edges, no duplicates
    iu, ju = np.triu_indices(n_nodes, k=1)
    p_edge = np.where(communities[iu] == communities[ju],
                      config.p_intra, config.p_inter)
    keep = rng.random(iu.size) < p_edge
    edge_i, edge_j = iu[keep], ju[keep]
    edge_scores = rng.integers(750, 1000, size=edge_i.size)

    sample_ids = [f"S{s:05d}" for s in range(n)]
    names = class_names(k_classes)
    target = np.arange(n) % k_classes  # balanced: counts differ by <= 1

    delta = config.signal_strength * config.noise_sd
    manifest_layers = {}
    paths = {}
    map_rows = []

    for layer_idx, layer in enumerate(LAYER_NAMES):
        n_feat = config.features_per_layer[layer_idx]
        carried = config.layer_classes[layer_idx]
        n_inform = int(round(config.informative_fraction * n_feat))
        if carried and n_inform > 0:
            n_inform = max(n_inform, len(carried))
        if n_inform > n_feat:
            raise ValueError(f"layer {layer}: more informative features "
                             f"({n_inform}) than features ({n_feat})")
        feature_ids = [f"{layer}_f{i:05d}" for i in range(n_feat)]

        shift = np.zeros((n_feat, n))
        informative = []
        for i in range(n_inform if carried else 0):
            cls = carried[i % len(carried)]
            community_nodes = np.flatnonzero(communities == cls)
            gene = genes[int(rng.choice(community_nodes))]
            shift[i, target == cls] = delta
            informative.append({"feature_id": feature_ids[i],
                                "class": names[cls], "gene": gene})
            map_rows.append((feature_ids[i], gene))
        # a slice of the noise features also maps to (random) genes; the
        # rest stay absent from the map and exercise the unmapped path
        for i in range(n_inform if carried else 0, n_feat):
            if rng.random() < 0.3:
                map_rows.append((feature_ids[i], genes[int(rng.integers(n_nodes))]))

        latent = shift + rng.normal(0.0, config.noise_sd, size=(n_feat, n))
        if layer == "methylation":
            squashed = np.clip(latent, -_SQUASH_LIMIT, _SQUASH_LIMIT)
            values = 1.0 / (1.0 + np.exp(-squashed))
        else:
            values = np.exp2(_MRNA_LOG_BASE + latent) - 1.0

        path = out_dir / f"{layer}.csv"
        _write_matrix(path, feature_ids, sample_ids, values)
        paths[layer] = path
        manifest_layers[layer] = {
            "n_features": n_feat,
            "carried_classes": [names[c] for c in carried],
            "informative": informative,
        }

    paths["labels"] = out_dir / "labels.csv"
    with open(paths["labels"], "w", encoding="utf-8") as fh:
        fh.write("sample_id,label\n")
        for sid, t in zip(sample_ids, target):
            fh.write(f"{sid},{names[t]}\n")

    paths["edges"] = out_dir / "edges.tsv"
    with open(paths["edges"], "w", encoding="utf-8") as fh:
        fh.write("protein1\tprotein2\tcombined_score\n")
        for i, j, s in zip(edge_i, edge_j, edge_scores):
            fh.write(f"{genes[i]}\t{genes[j]}\t{s}\n")

    # full gene universe: keeps isolated genes (frequent in the sparse
    # regime) as graph nodes instead of dropping their features
    paths["nodes"] = out_dir / "nodes.txt"
    with open(paths["nodes"], "w", encoding="utf-8") as fh:
        for gene in genes:
            fh.write(gene + "\n")

    paths["feature_map"] = out_dir / "feature_map.tsv"
    with open(paths["feature_map"], "w", encoding="utf-8") as fh:
        fh.write("feature_id\tgene_symbol\n")
        for fid, gene in map_rows:
            fh.write(f"{fid}\t{gene}\n")

    manifest = {
        "config": asdict(config),
        "classes": names,
        "communities": {gene: int(c) for gene, c in zip(genes, communities)},
        "n_edges": int(edge_i.size),
        "signal_separation": delta,
        "layers": manifest_layers,
    }
    paths["manifest"] = out_dir / "manifest.json"
    with open(paths["manifest"], "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
    return paths


def _write_matrix(path, feature_ids, sample_ids, values):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("feature_id," + ",".join(sample_ids) + "\n")
        for fid, row in zip(feature_ids, values):
            fh.write(fid + "," + ",".join(f"{v:.9g}" for v in row) + "\n")
