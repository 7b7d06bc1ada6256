#!/usr/bin/env python3
"""Convert a PyTorch Geometric Planetoid dataset (Cora, Citeseer, Pubmed)
into the dataset directory format this project consumes.

Usage:
    python scripts/convert_planetoid.py Cora data/cora
    python scripts/convert_planetoid.py Citeseer data/citeseer
    python scripts/convert_planetoid.py Pubmed data/pubmed

Requires `torch_geometric` (which downloads the raw data on first use).
Uses the official public splits; nodes outside train/val/test are tagged
`none`. Note that the edge counts quoted in the literature for these graphs
count citation-list rows; after undirected deduplication Cora has 5278
unique edges, not 5429.
"""

import json
import os
import sys


def main():
    if len(sys.argv) != 3:
        sys.exit(__doc__)
    name, out_dir = sys.argv[1], sys.argv[2]

    from torch_geometric.datasets import Planetoid

    dataset = Planetoid(root=os.path.join("data", "_pyg"), name=name)
    data = dataset[0]
    n = data.num_nodes
    os.makedirs(out_dir, exist_ok=True)

    with open(os.path.join(out_dir, "meta.json"), "w") as f:
        json.dump(
            {
                "num_nodes": n,
                "num_classes": dataset.num_classes,
                "feature_dim": data.num_node_features,
                "task": "transductive",
            },
            f,
            indent=2,
        )
        f.write("\n")

    edges = set()
    src, dst = data.edge_index.tolist()
    for u, v in zip(src, dst):
        if u != v:
            edges.add((min(u, v), max(u, v)))
    with open(os.path.join(out_dir, "edges.tsv"), "w") as f:
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\n")

    x = data.x.tolist()
    with open(os.path.join(out_dir, "features.tsv"), "w") as f:
        for row in x:
            f.write("\t".join(f"{v:g}" for v in row) + "\n")

    with open(os.path.join(out_dir, "labels.tsv"), "w") as f:
        for y in data.y.tolist():
            f.write(f"{y}\n")

    train = data.train_mask.tolist()
    val = data.val_mask.tolist()
    test = data.test_mask.tolist()
    with open(os.path.join(out_dir, "splits.tsv"), "w") as f:
        for i in range(n):
            if train[i]:
                f.write("train\n")
            elif val[i]:
                f.write("val\n")
            elif test[i]:
                f.write("test\n")
            else:
                f.write("none\n")

    print(f"{name}: {n} nodes, {len(edges)} undirected edges -> {out_dir}")


if __name__ == "__main__":
    main()
