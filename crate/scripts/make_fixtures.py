#!/usr/bin/env python3
"""Generate the desk-scale dataset fixtures under fixtures/.

All graphs use the dataset directory format described in the README:
meta.json, edges.tsv, features.tsv, labels.tsv, splits.tsv.

Fixtures are deterministic: rerunning this script reproduces them byte for
byte. The karate fixture is the Zachary karate club (a real 34-node graph,
labels = the two factions); the sbm* fixtures are stochastic block models
with noisy one-hot-ish features.
"""

import json
import os

import networkx as nx
import numpy as np

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "fixtures")


def write_dataset(name, task, edges, features, labels, splits, num_classes):
    d = os.path.join(ROOT, name)
    os.makedirs(d, exist_ok=True)
    n, dim = features.shape
    assert len(labels) == n and len(splits) == n
    for c in range(num_classes):
        assert any(l == c and s == "train" for l, s in zip(labels, splits)), (
            f"{name}: class {c} missing from train"
        )
    with open(os.path.join(d, "meta.json"), "w") as f:
        json.dump(
            {
                "num_nodes": n,
                "num_classes": num_classes,
                "feature_dim": dim,
                "task": task,
            },
            f,
            indent=2,
        )
        f.write("\n")
    with open(os.path.join(d, "edges.tsv"), "w") as f:
        for u, v in sorted(set((min(u, v), max(u, v)) for u, v in edges if u != v)):
            f.write(f"{u}\t{v}\n")
    with open(os.path.join(d, "features.tsv"), "w") as f:
        for row in features:
            f.write("\t".join(f"{x:.4f}" for x in row) + "\n")
    with open(os.path.join(d, "labels.tsv"), "w") as f:
        for l in labels:
            f.write(f"{l}\n")
    with open(os.path.join(d, "splits.tsv"), "w") as f:
        for s in splits:
            f.write(f"{s}\n")
    print(f"{name}: n={n} m={sum(1 for _ in open(os.path.join(d, 'edges.tsv')))} "
          f"classes={num_classes} dim={dim}")


def assign_splits(rng, labels, num_classes, train_per_class, val_total):
    n = len(labels)
    splits = ["test"] * n
    order = rng.permutation(n)
    taken = set()
    for c in range(num_classes):
        picked = [i for i in order if labels[i] == c][:train_per_class]
        for i in picked:
            splits[i] = "train"
            taken.add(i)
    rest = [i for i in order if i not in taken]
    for i in rest[:val_total]:
        splits[i] = "val"
    return splits


def karate():
    g = nx.karate_club_graph()
    labels = [0 if g.nodes[i]["club"] == "Mr. Hi" else 1 for i in g.nodes]
    n = g.number_of_nodes()
    # features: rows of A + I (who you touch says who you are)
    feats = np.eye(n, dtype=float)
    for u, v in g.edges:
        feats[u, v] = 1.0
        feats[v, u] = 1.0
    rng = np.random.default_rng(7)
    splits = assign_splits(rng, labels, 2, train_per_class=4, val_total=10)
    write_dataset("karate", "transductive", list(g.edges), feats, labels, splits, 2)


def sbm(name, task, seed, block_size, blocks, p_in, p_out, dim, noise,
        train_per_class, val_total):
    rng = np.random.default_rng(seed)
    n = block_size * blocks
    labels = [i // block_size for i in range(n)]
    edges = []
    for u in range(n):
        for v in range(u + 1, n):
            p = p_in if labels[u] == labels[v] else p_out
            if rng.random() < p:
                edges.append((u, v))
    feats = rng.normal(0.0, noise, size=(n, dim))
    for i in range(n):
        feats[i, labels[i]] += 1.0
    splits = assign_splits(rng, labels, blocks, train_per_class, val_total)
    write_dataset(name, task, edges, feats, labels, splits, blocks)


def main():
    karate()
    sbm("sbm60", "transductive", seed=11, block_size=20, blocks=3,
        p_in=0.30, p_out=0.02, dim=12, noise=0.45,
        train_per_class=4, val_total=18)
    sbm("sbm200", "transductive", seed=23, block_size=50, blocks=4,
        p_in=0.12, p_out=0.01, dim=16, noise=0.50,
        train_per_class=6, val_total=60)
    sbm("sbm80i", "inductive", seed=31, block_size=20, blocks=4,
        p_in=0.25, p_out=0.02, dim=8, noise=0.40,
        train_per_class=10, val_total=20)


if __name__ == "__main__":
    main()
