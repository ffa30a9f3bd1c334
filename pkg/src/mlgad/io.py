"""Reading and writing graphs on disk.

Single-graph directories hold ``edges.tsv`` (u, v[, label]), ``features.tsv``
(node id then features) and optionally ``node_labels.tsv`` (node id, label).
Multi-graph files are JSON lines with ``nodes``, ``edges`` and optional
``node_labels`` / ``graph_label``. All ids are 0-based.
"""
from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import DomainError
from .graph_core import UNLABELED, Graph


def atomic_write_text(path, text: str) -> None:
    """Write `text` to `path` through a temp file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _rows(path: Path) -> list[list[str]]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                out.append(line.split())
    return out


def read_graph_dir(path) -> Graph:
    path = Path(path)
    feat_rows = _rows(path / "features.tsv")
    n = len(feat_rows)
    feats = np.zeros((n, len(feat_rows[0]) - 1 if feat_rows else 1))
    for row in feat_rows:
        i = int(row[0])
        if not 0 <= i < n:
            raise DomainError(f"feature row for node {i} out of range")
        feats[i] = [float(v) for v in row[1:]]

    edges, elabels = [], {}
    for row in _rows(path / "edges.tsv"):
        u, v = int(row[0]), int(row[1])
        edges.append((u, v))
        if len(row) > 2:
            elabels[(min(u, v), max(u, v))] = int(row[2])

    labels = None
    label_file = path / "node_labels.tsv"
    if label_file.exists():
        labels = np.full(n, UNLABELED, dtype=np.int64)
        for row in _rows(label_file):
            i = int(row[0])
            if not 0 <= i < n:
                raise DomainError(f"label for node {i} out of range")
            labels[i] = int(row[1])
    return Graph.from_edges(n, edges, feats, labels, elabels or None)


def write_graph_dir(graph: Graph, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    elab = graph.edge_label_array()
    lines = []
    for (u, v), lab in zip(graph.edges.tolist(), elab.tolist()):
        lines.append(f"{u}\t{v}\t{lab}" if lab != UNLABELED else f"{u}\t{v}")
    atomic_write_text(path / "edges.tsv", "\n".join(lines) + "\n")
    feat_lines = [
        "\t".join([str(i)] + [repr(float(x)) for x in row])
        for i, row in enumerate(graph.features.tolist())
    ]
    atomic_write_text(path / "features.tsv", "\n".join(feat_lines) + "\n")
    if graph.node_labels is not None:
        lab_lines = [f"{i}\t{lab}" for i, lab in enumerate(graph.node_labels.tolist())
                     if lab != UNLABELED]
        atomic_write_text(path / "node_labels.tsv", "\n".join(lab_lines) + "\n")


def graph_to_record(graph: Graph) -> dict:
    rec = {"nodes": graph.features.tolist(), "edges": graph.edges.tolist()}
    if graph.node_labels is not None:
        rec["node_labels"] = graph.node_labels.tolist()
    if graph.graph_label is not None:
        rec["graph_label"] = int(graph.graph_label)
    return rec


def graph_from_record(rec: dict) -> Graph:
    feats = np.asarray(rec["nodes"], dtype=np.float64)
    if feats.ndim == 1:
        feats = feats[:, None]
    return Graph.from_edges(len(feats), rec.get("edges", []), feats,
                            rec.get("node_labels"), None, rec.get("graph_label"))


def read_graphs_jsonl(path) -> list[Graph]:
    graphs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                graphs.append(graph_from_record(json.loads(line)))
            except (KeyError, json.JSONDecodeError) as exc:
                raise DomainError(f"{path}:{lineno}: {exc}") from exc
    return graphs


def write_graphs_jsonl(graphs: Iterable[Graph], path) -> None:
    text = "".join(json.dumps(graph_to_record(g)) + "\n" for g in graphs)
    atomic_write_text(path, text)


def read_any(path) -> list[Graph]:
    """A directory is one graph; anything else is read as JSON lines."""
    path = Path(path)
    if path.is_dir():
        return [read_graph_dir(path)]
    return read_graphs_jsonl(path)
