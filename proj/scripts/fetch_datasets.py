#!/usr/bin/env python3
"""Fetch the Cora and Citeseer citation datasets into ./data.

Both datasets ship inside the `pgl` wheel on PyPI, which is reachable through
ordinary package mirrors. Cora is copied as-is (content/cites format, read by
`vclanc --planetoid-dir`). Citeseer ships as planetoid pickles and is converted
to the native three-file TSV format (`edges.tsv`, `features.tsv`, `labels.tsv`).

Usage: python3 scripts/fetch_datasets.py [--out data] [--wheel path.whl]
"""

import argparse
import glob
import os
import pickle
import shutil
import subprocess
import sys
import tempfile
import zipfile

PGL_WHEEL = "pgl==2.2.6"


def download_wheel(workdir):
    subprocess.run(
        [sys.executable, "-m", "pip", "download", "--no-deps", "--only-binary=:all:",
         "--python-version", "3.10", "--platform", "manylinux1_x86_64",
         PGL_WHEEL, "-d", workdir],
        check=True)
    wheels = glob.glob(os.path.join(workdir, "pgl-*.whl"))
    if not wheels:
        raise SystemExit("pgl wheel not found after download")
    return wheels[0]


def extract(wheel, workdir):
    with zipfile.ZipFile(wheel) as z:
        members = [n for n in z.namelist()
                   if n.startswith("pgl/data/cora/") or n.startswith("pgl/data/citeseer/")]
        z.extractall(workdir, members)
    return os.path.join(workdir, "pgl", "data")


def write_cora(src, out):
    dst = os.path.join(out, "cora")
    os.makedirs(dst, exist_ok=True)
    for name in ("cora.content", "cora.cites", "README"):
        shutil.copyfile(os.path.join(src, "cora", name), os.path.join(dst, name))


def load_pickle(path):
    with open(path, "rb") as f:
        return pickle.load(f, encoding="latin1")


def write_citeseer(src, out):
    base = os.path.join(src, "citeseer", "ind.citeseer.")
    allx, ally = load_pickle(base + "allx"), load_pickle(base + "ally")
    tx, ty = load_pickle(base + "tx"), load_pickle(base + "ty")
    graph = load_pickle(base + "graph")
    with open(base + "test.index") as f:
        test_index = [int(line) for line in f if line.strip()]

    n_nodes = max(max(graph), max(test_index)) + 1
    n_attrs = allx.shape[1]
    n_classes = ally.shape[1]

    # Rows of allx/ally are nodes 0..len(allx)-1; rows of tx/ty map to test_index.
    # Test ids missing from test_index are isolated nodes without features or labels.
    feats = {}
    labels = {}
    allx = allx.tocsr()
    tx = tx.tocsr()
    for i in range(allx.shape[0]):
        feats[i] = sorted(allx.indices[allx.indptr[i]:allx.indptr[i + 1]].tolist())
        if ally[i].sum() > 0:
            labels[i] = int(ally[i].argmax())
    for row, node in enumerate(test_index):
        feats[node] = sorted(tx.indices[tx.indptr[row]:tx.indptr[row + 1]].tolist())
        if ty[row].sum() > 0:
            labels[node] = int(ty[row].argmax())

    edges = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u != v:
                edges.add((min(u, v), max(u, v)))

    dst = os.path.join(out, "citeseer")
    os.makedirs(dst, exist_ok=True)
    with open(os.path.join(dst, "edges.tsv"), "w") as f:
        f.write(f"#nodes\t{n_nodes}\n")
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\n")
    with open(os.path.join(dst, "features.tsv"), "w") as f:
        f.write(f"#nodes\t{n_nodes}\n#attrs\t{n_attrs}\n")
        for node in sorted(feats):
            for a in feats[node]:
                f.write(f"{node}\t{a}\n")
    with open(os.path.join(dst, "labels.tsv"), "w") as f:
        f.write(f"#nodes\t{n_nodes}\n#clusters\t{n_classes}\n")
        for node in sorted(labels):
            f.write(f"{node}\t{labels[node]}\n")
    print(f"citeseer: {n_nodes} nodes, {len(edges)} edges, {n_attrs} attrs, "
          f"{len(labels)} labelled, {n_classes} classes")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    ap.add_argument("--wheel", help="use an already downloaded pgl wheel")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)
    with tempfile.TemporaryDirectory() as tmp:
        wheel = args.wheel or download_wheel(tmp)
        src = extract(wheel, tmp)
        write_cora(src, args.out)
        write_citeseer(src, args.out)
    print(f"datasets written to {os.path.abspath(args.out)}")


if __name__ == "__main__":
    main()
