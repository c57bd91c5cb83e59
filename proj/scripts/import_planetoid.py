#!/usr/bin/env python3
"""Convert public node-classification dumps into the kdst dataset format.

Two dump families are supported:

  * Planetoid pickles (cora, citeseer, pubmed): the eight ind.<name>.*
    files from github.com/kimiyoung/planetoid (data/ directory).
  * CPF npz dumps (amazon_electronics_photo, ms_academic_cs,
    ms_academic_phy): the .npz files from github.com/shchur/gnn-benchmark
    (data/npz), as used by the CPF line of work.

Output directory layout (consumed by `kdst` and load_graph):
  meta.json       {"n_nodes": N, "n_feats": D, "n_classes": K}
  features.bin    N*D little-endian float32, row-major
  labels.bin      N little-endian int32
  edges.tsv       one "u<TAB>v" per undirected edge, u < v, no dups/self-loops

Usage:
  python3 scripts/import_planetoid.py --planetoid-dir /path/to/planetoid/data \
      --name cora --out data/cora
  python3 scripts/import_planetoid.py --npz /path/to/amazon_electronics_photo.npz \
      --out data/photo
"""

import argparse
import json
import pickle
import struct
import sys
from pathlib import Path

import numpy as np

EXPECTED = {
    # name: (nodes, feats, classes, undirected edges)
    "cora": (2708, 1433, 7, 5278),
    "citeseer": (3327, 3703, 6, 4614),
    "pubmed": (19717, 500, 3, 44324),
    "photo": (7650, 745, 8, 119081),
    "cs": (18333, 6805, 15, 81894),
    "physics": (34493, 8415, 5, 247962),
}


def _read_pickle(path: Path):
    with open(path, "rb") as handle:
        return pickle.load(handle, encoding="latin1")


def load_planetoid(root: Path, name: str):
    """Reassemble the node ordering used by the Planetoid splits."""
    objects = {}
    for suffix in ("x", "y", "tx", "ty", "allx", "ally", "graph"):
        objects[suffix] = _read_pickle(root / f"ind.{name}.{suffix}")
    test_idx = np.loadtxt(root / f"ind.{name}.test.index", dtype=np.int64)
    test_sorted = np.sort(test_idx)

    allx = np.asarray(objects["allx"].todense(), dtype=np.float32)
    tx = np.asarray(objects["tx"].todense(), dtype=np.float32)
    ally = np.asarray(objects["ally"], dtype=np.float32)
    ty = np.asarray(objects["ty"], dtype=np.float32)

    if name == "citeseer":
        # Some citeseer test nodes are isolated and absent from tx/ty; pad
        # the gap with zero rows so vstack positions line up with node ids.
        full_len = int(test_sorted.max() - test_sorted.min() + 1)
        tx_full = np.zeros((full_len, tx.shape[1]), dtype=np.float32)
        tx_full[test_sorted - test_sorted.min()] = tx
        ty_full = np.zeros((full_len, ty.shape[1]), dtype=np.float32)
        ty_full[test_sorted - test_sorted.min()] = ty
        tx, ty = tx_full, ty_full

    features = np.vstack([allx, tx])
    labels_onehot = np.vstack([ally, ty])
    # Rows for the test block arrive in sorted-id order; move them to the
    # positions the test.index file dictates.
    features[test_idx, :] = features[test_sorted, :]
    labels_onehot[test_idx, :] = labels_onehot[test_sorted, :]

    labels = labels_onehot.argmax(axis=1).astype(np.int32)
    edges = set()
    for u, nbrs in objects["graph"].items():
        for v in nbrs:
            if u == v:
                continue
            edges.add((min(int(u), int(v)), max(int(u), int(v))))
    return features.astype(np.float32), labels, sorted(edges)


def load_npz(path: Path):
    """CPF-style npz dump: CSR adjacency + CSR or dense attributes."""
    with np.load(path, allow_pickle=True) as loader:
        data = dict(loader)
    from scipy.sparse import csr_matrix

    adj = csr_matrix(
        (data["adj_data"], data["adj_indices"], data["adj_indptr"]),
        shape=tuple(data["adj_shape"]),
    )
    if "attr_data" in data:
        attrs = csr_matrix(
            (data["attr_data"], data["attr_indices"], data["attr_indptr"]),
            shape=tuple(data["attr_shape"]),
        )
        features = np.asarray(attrs.todense(), dtype=np.float32)
    else:
        features = np.asarray(data["attr_matrix"], dtype=np.float32)
    labels = np.asarray(data["labels"], dtype=np.int32)

    coo = adj.tocoo()
    edges = set()
    for u, v in zip(coo.row, coo.col):
        if u == v:
            continue
        edges.add((min(int(u), int(v)), max(int(u), int(v))))
    return features, labels, sorted(edges)


def write_dataset(out_dir: Path, features, labels, edges):
    n, d = features.shape
    k = int(labels.max()) + 1
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "meta.json", "w") as handle:
        json.dump({"n_nodes": n, "n_feats": d, "n_classes": k}, handle, indent=2)
        handle.write("\n")
    features.astype("<f4").tofile(out_dir / "features.bin")
    labels.astype("<i4").tofile(out_dir / "labels.bin")
    with open(out_dir / "edges.tsv", "w") as handle:
        for u, v in edges:
            handle.write(f"{u}\t{v}\n")
    return n, d, k, len(edges)


def main():
    parser = argparse.ArgumentParser(description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--planetoid-dir", type=Path,
                        help="directory holding the ind.<name>.* files")
    parser.add_argument("--name", choices=["cora", "citeseer", "pubmed"],
                        help="planetoid dataset name")
    parser.add_argument("--npz", type=Path, help="CPF-style .npz dump")
    parser.add_argument("--out", type=Path, required=True, help="output dataset directory")
    parser.add_argument("--expect", choices=sorted(EXPECTED),
                        help="check the imported shapes against this dataset's published ones")
    parser.add_argument("--no-check", action="store_true",
                        help="skip the shape check even when --name is given")
    args = parser.parse_args()

    if args.planetoid_dir and args.name:
        features, labels, edges = load_planetoid(args.planetoid_dir, args.name)
        expect_key = args.expect or args.name
    elif args.npz:
        features, labels, edges = load_npz(args.npz)
        expect_key = args.expect
    else:
        parser.error("need either --planetoid-dir with --name, or --npz")

    n, d, k, e = write_dataset(args.out, features, labels, edges)
    print(f"wrote {args.out}: N={n} D={d} K={k} edges={e}")

    if expect_key and not args.no_check:
        exp = EXPECTED[expect_key]
        got = (n, d, k, e)
        if got != exp:
            print(f"shape check FAILED: expected N,D,K,E={exp}, got {got}", file=sys.stderr)
            return 1
        print(f"shape check OK against published {expect_key} dimensions")
    return 0


if __name__ == "__main__":
    sys.exit(main())
