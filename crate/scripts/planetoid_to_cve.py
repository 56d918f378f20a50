#!/usr/bin/env python3
"""Convert Cora/CiteSeer/PubMed into the directory layout read by cve-gnn.

Two input formats are understood:

  planetoid  the pickled ``ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}``
             files. Produces the usual public split: 20 labeled nodes per
             class for training, the next 500 nodes for validation and the
             1000 listed test nodes.
  linqs      ``<name>.content`` / ``<name>.cites`` with arbitrary paper ids.
             Ids are remapped to 0..n-1 in order of first appearance in the
             content file and the mapping is written to ``node_ids.tsv``.
             The split is drawn with ``--seed``: 20 per class / 500 / 1000.

Features are row-normalized unless ``--raw-features`` is given.

    python3 scripts/planetoid_to_cve.py planetoid path/to/raw cora data/cora
    python3 scripts/planetoid_to_cve.py linqs path/to/citeseer citeseer data/citeseer
"""

import argparse
import pickle
import random
import struct
import sys
from collections import defaultdict
from pathlib import Path

import numpy as np
import scipy.sparse as sp


def row_normalize(x):
    sums = np.asarray(x.sum(axis=1)).ravel().astype(np.float64)
    inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums != 0)
    return sp.diags(inv) @ x


def load_planetoid(raw, name):
    def obj(suffix):
        with open(raw / f"ind.{name}.{suffix}", "rb") as f:
            return pickle.load(f, encoding="latin1")

    x, y, tx, ty, allx, ally, graph = (obj(s) for s in ("x", "y", "tx", "ty", "allx", "ally", "graph"))
    test_index = [int(line) for line in (raw / f"ind.{name}.test.index").read_text().split()]
    test_sorted = sorted(test_index)

    # Some test indices (CiteSeer) have no node attached; give them empty rows.
    lo, hi = test_sorted[0], test_sorted[-1]
    full = hi - lo + 1
    if full != len(test_sorted):
        tx_ext = sp.lil_matrix((full, tx.shape[1]))
        tx_ext[np.array(test_sorted) - lo, :] = tx
        tx = tx_ext
        ty_ext = np.zeros((full, ty.shape[1]))
        ty_ext[np.array(test_sorted) - lo, :] = ty
        ty = ty_ext

    features = sp.vstack((allx, tx)).tolil()
    features[test_index, :] = features[test_sorted, :]
    onehot = np.vstack((ally, ty))
    onehot[test_index, :] = onehot[test_sorted, :]

    n = features.shape[0]
    labels = [int(np.argmax(row)) if row.sum() > 0 else None for row in onehot]
    edges = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))

    train = list(range(len(y)))
    val = list(range(len(y), len(y) + 500))
    test = [v for v in test_sorted if labels[v] is not None]
    return features.tocsr(), labels, sorted(edges), train, val, test, None


def load_linqs(raw, name, seed):
    ids, rows, classes = [], [], []
    class_ids = {}
    for line in (raw / f"{name}.content").read_text().splitlines():
        parts = line.split()
        if not parts:
            continue
        ids.append(parts[0])
        rows.append([float(t) for t in parts[1:-1]])
        classes.append(class_ids.setdefault(parts[-1], len(class_ids)))
    index = {pid: i for i, pid in enumerate(ids)}
    if len(index) != len(ids):
        sys.exit(f"{name}.content: duplicate paper ids")

    edges, dropped = set(), 0
    for line in (raw / f"{name}.cites").read_text().splitlines():
        parts = line.split()
        if len(parts) != 2:
            continue
        a, b = parts
        if a not in index or b not in index:
            dropped += 1
            continue
        u, v = index[a], index[b]
        if u != v:
            edges.add((min(u, v), max(u, v)))
    if dropped:
        print(f"dropped {dropped} citations to papers without content", file=sys.stderr)

    rng = random.Random(seed)
    order = list(range(len(ids)))
    rng.shuffle(order)
    per_class = defaultdict(int)
    train = []
    for v in order:
        if per_class[classes[v]] < 20:
            per_class[classes[v]] += 1
            train.append(v)
    chosen = set(train)
    rest = [v for v in order if v not in chosen]
    val, test = sorted(rest[:500]), sorted(rest[500:1500])
    return sp.csr_matrix(np.array(rows)), classes, sorted(edges), sorted(train), val, test, ids


def write(out, features, labels, edges, train, val, test, ids):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "edges.tsv", "w") as f:
        f.write("# u\tv\n")
        for u, v in edges:
            f.write(f"{u}\t{v}\n")
    dense = np.asarray(features.todense(), dtype="<f4")
    with open(out / "features.bin", "wb") as f:
        f.write(b"GNNF" + struct.pack("<II", *dense.shape))
        f.write(dense.tobytes(order="C"))
    with open(out / "labels.tsv", "w") as f:
        for v, c in enumerate(labels):
            if c is not None:
                f.write(f"{v}\t{c}\n")
    for fname, nodes in (("train.txt", train), ("val.txt", val), ("test.txt", test)):
        (out / fname).write_text("".join(f"{v}\n" for v in nodes))
    if ids is not None:
        with open(out / "node_ids.tsv", "w") as f:
            for v, pid in enumerate(ids):
                f.write(f"{v}\t{pid}\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("format", choices=("planetoid", "linqs"))
    ap.add_argument("raw", type=Path, help="directory holding the source files")
    ap.add_argument("name", help="dataset name used in the source file names, e.g. cora")
    ap.add_argument("out", type=Path)
    ap.add_argument("--seed", type=int, default=0, help="split seed for the linqs format")
    ap.add_argument("--raw-features", action="store_true", help="skip row normalization")
    args = ap.parse_args()

    if args.format == "planetoid":
        features, labels, edges, train, val, test, ids = load_planetoid(args.raw, args.name)
    else:
        features, labels, edges, train, val, test, ids = load_linqs(args.raw, args.name, args.seed)
    if not args.raw_features:
        features = row_normalize(features)
    write(args.out, sp.csr_matrix(features), labels, edges, train, val, test, ids)
    n_classes = len({c for c in labels if c is not None})
    print(
        f"wrote {args.out}: {features.shape[0]} nodes, {len(edges)} edges, {features.shape[1]} features, "
        f"{n_classes} classes, split {len(train)}/{len(val)}/{len(test)}"
    )


if __name__ == "__main__":
    main()
