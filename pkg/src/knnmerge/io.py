"""File formats: fvecs/ivecs vectors, sparse itemset text, graph and
adjacency binaries, and hierarchy directories.

fvecs/ivecs follow the texmex convention: each record is a little-endian
int32 dimension followed by that many float32 (fvecs) or int32 (ivecs)
values. Sparse datasets are text, one record per line of space-separated
ascending decimal ids.

Graph files carry a magic, n, k and the metric tag, then exactly k
(int32 id, float32 dist) pairs per vertex, short lists padded with
(-1, +inf). Adjacency files carry per-vertex degree-prefixed id lists.
Subset membership travels in sidecar ivecs files referenced from JSON
manifests, keeping disjointness checkable.
"""

from __future__ import annotations

import json
import os
import struct

import numpy as np

from .core import Dataset, Metric
from .graph import KnnGraph

GRAPH_MAGIC = b"KNNG"
ADJ_MAGIC = b"KADJ"

_PAIR_DTYPE = np.dtype([("id", "<i4"), ("dist", "<f4")])


def write_fvecs(path, vectors) -> None:
    vectors = np.ascontiguousarray(vectors, dtype="<f4")
    n, d = vectors.shape
    out = np.empty((n, d + 1), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = vectors.view("<i4")
    out.tofile(path)


def read_fvecs(path) -> np.ndarray:
    raw = np.fromfile(path, dtype="<i4")
    if raw.size == 0:
        return np.empty((0, 0), dtype=np.float32)
    d = int(raw[0])
    if d <= 0 or raw.size % (d + 1):
        raise ValueError(f"{path} is not a valid fvecs file")
    mat = raw.reshape(-1, d + 1)
    if not np.all(mat[:, 0] == d):
        raise ValueError(f"{path} has inconsistent record dimensions")
    return mat[:, 1:].copy().view("<f4")


def write_ivecs(path, rows) -> None:
    rows = np.ascontiguousarray(rows, dtype="<i4")
    n, d = rows.shape
    out = np.empty((n, d + 1), dtype="<i4")
    out[:, 0] = d
    out[:, 1:] = rows
    out.tofile(path)


def read_ivecs(path) -> np.ndarray:
    raw = np.fromfile(path, dtype="<i4")
    if raw.size == 0:
        return np.empty((0, 0), dtype=np.int32)
    d = int(raw[0])
    if d <= 0 or raw.size % (d + 1):
        raise ValueError(f"{path} is not a valid ivecs file")
    mat = raw.reshape(-1, d + 1)
    if not np.all(mat[:, 0] == d):
        raise ValueError(f"{path} has inconsistent record dimensions")
    return mat[:, 1:].copy()


def write_sparse_text(path, dataset: Dataset) -> None:
    if dataset.kind != "sparse":
        raise ValueError("write_sparse_text needs a sparse dataset")
    with open(path, "w") as fh:
        for i in range(dataset.n):
            fh.write(" ".join(str(int(v)) for v in dataset.record(i)))
            fh.write("\n")


def read_sparse_text(path, universe: int | None = None) -> Dataset:
    records = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            records.append([int(tok) for tok in line.split()])
    return Dataset.from_itemsets(records, universe=universe)


def load_dataset(path, metric: Metric) -> Dataset:
    """Dense fvecs or sparse text, chosen by the metric's dataset kind."""
    if Metric(metric).for_dense:
        return Dataset.from_dense(read_fvecs(path))
    return read_sparse_text(path)


def save_graph(path, graph: KnnGraph) -> None:
    with open(path, "wb") as fh:
        fh.write(GRAPH_MAGIC)
        fh.write(struct.pack("<III", graph.n, graph.k, int(graph.metric)))
        rows = np.empty((graph.n, graph.k), dtype=_PAIR_DTYPE)
        rows["id"] = graph.ids
        rows["dist"] = graph.dists.astype(np.float32)
        rows.tofile(fh)


def load_graph(path, member_ids=None) -> KnnGraph:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != GRAPH_MAGIC:
            raise ValueError(f"{path} is not a graph file")
        n, k, tag = struct.unpack("<III", fh.read(12))
        rows = np.fromfile(fh, dtype=_PAIR_DTYPE, count=n * k)
    if rows.size != n * k:
        raise ValueError(f"{path} is truncated")
    rows = rows.reshape(n, k)
    if member_ids is None:
        member_ids = np.arange(n, dtype=np.int64)
    graph = KnnGraph(member_ids, k, Metric(tag))
    if graph.n != n:
        raise ValueError("member id list does not match the stored graph")
    graph.ids = rows["id"].astype(np.int32)
    graph.dists = rows["dist"].astype(np.float64)
    graph.sizes = (graph.ids >= 0).sum(axis=1).astype(np.int32)
    graph.dists[graph.ids < 0] = np.inf
    return graph


def save_member_ids(path, member_ids) -> None:
    ids = np.asarray(member_ids, dtype=np.int64).reshape(1, -1)
    if ids.size == 0:
        open(path, "wb").close()  # empty id set: empty file
        return
    write_ivecs(path, ids)


def load_member_ids(path) -> np.ndarray:
    return read_ivecs(path).reshape(-1).astype(np.int64)


def save_adjacency(path, adjacency) -> None:
    with open(path, "wb") as fh:
        fh.write(ADJ_MAGIC)
        fh.write(struct.pack("<I", adjacency.n))
        degrees = np.diff(adjacency.indptr).astype("<i4")
        for r in range(adjacency.n):
            fh.write(struct.pack("<I", int(degrees[r])))
            adjacency.neighbors[
                adjacency.indptr[r]:adjacency.indptr[r + 1]
            ].astype("<i4").tofile(fh)


def load_adjacency(path, member_ids=None):
    from .diversify import LayerAdjacency

    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != ADJ_MAGIC:
            raise ValueError(f"{path} is not an adjacency file")
        (n,) = struct.unpack("<I", fh.read(4))
        body = np.fromfile(fh, dtype="<i4")
    indptr = np.zeros(n + 1, dtype=np.int64)
    chunks = []
    pos = 0
    for r in range(n):
        if pos >= body.size:
            raise ValueError(f"{path} is truncated")
        deg = int(body[pos])
        pos += 1
        chunks.append(body[pos:pos + deg])
        indptr[r + 1] = indptr[r] + deg
        pos += deg
    neighbors = (
        np.concatenate(chunks).astype(np.int32)
        if chunks else np.empty(0, dtype=np.int32)
    )
    if member_ids is None:
        member_ids = np.arange(n, dtype=np.int64)
    return LayerAdjacency(np.asarray(member_ids, dtype=np.int64), indptr,
                          neighbors)


# -- hierarchy directories ---------------------------------------------------


def _layer_names(index: int) -> tuple[str, str, str]:
    return (
        f"layer_{index}.knng",
        f"layer_{index}.ids.ivecs",
        f"layer_{index}.kadj",
    )


def save_hierarchy_layer(directory, hierarchy, index: int) -> None:
    os.makedirs(directory, exist_ok=True)
    layer = hierarchy.layers[index]
    gname, iname, aname = _layer_names(index)
    save_member_ids(os.path.join(directory, iname), layer.member_ids)
    if layer.graph is not None:
        path = os.path.join(directory, gname)
        save_graph(path, layer.graph)
        layer.path = path
    if layer.adjacency is not None:
        save_adjacency(os.path.join(directory, aname), layer.adjacency)


def save_hierarchy_manifest(directory, hierarchy) -> None:
    os.makedirs(directory, exist_ok=True)
    layers = []
    for t, layer in enumerate(hierarchy.layers):
        gname, iname, aname = _layer_names(t)
        layers.append(
            {
                "size": int(layer.size),
                "ids": iname,
                "graph": gname,
                "adjacency": aname if layer.adjacency is not None else None,
            }
        )
    manifest = {
        "k": int(hierarchy.k),
        "metric": Metric(hierarchy.metric).name,
        "layer_sizes": [int(s) for s in hierarchy.layer_sizes],
        "layers": layers,
    }
    with open(os.path.join(directory, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)


def save_hierarchy(directory, hierarchy) -> None:
    """Write every layer (graph, member ids, adjacency if present)."""
    for t in range(len(hierarchy.layers)):
        layer = hierarchy.layers[t]
        if layer.graph is None and layer.path is not None:
            layer.graph = hierarchy.layer_graph(t)
            save_hierarchy_layer(directory, hierarchy, t)
            layer.graph = None
        else:
            save_hierarchy_layer(directory, hierarchy, t)
    save_hierarchy_manifest(directory, hierarchy)


def load_hierarchy(directory, lazy: bool = True):
    """Hierarchy from a manifest directory; graphs load lazily by default."""
    from .merge import Hierarchy, HierarchyLayer

    with open(os.path.join(directory, "manifest.json")) as fh:
        manifest = json.load(fh)
    hierarchy = Hierarchy(layers=[], k=int(manifest["k"]),
                          metric=Metric.from_name(manifest["metric"]))
    for entry in manifest["layers"]:
        member_ids = load_member_ids(os.path.join(directory, entry["ids"]))
        layer = HierarchyLayer(member_ids=member_ids)
        gpath = os.path.join(directory, entry["graph"])
        if os.path.exists(gpath):
            layer.path = gpath
            if not lazy:
                layer.graph = load_graph(gpath, member_ids=member_ids)
        if entry.get("adjacency"):
            apath = os.path.join(directory, entry["adjacency"])
            if os.path.exists(apath):
                layer.adjacency = load_adjacency(apath, member_ids=member_ids)
        hierarchy.layers.append(layer)
    return hierarchy


def write_manifest(path, params: dict) -> None:
    """Sidecar JSON recording the full parameters of a produced artifact."""
    with open(path, "w") as fh:
        json.dump(params, fh, indent=2, sort_keys=True, default=str)
