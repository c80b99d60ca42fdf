"""Pipeline description documents: YAML in, runnable graph out.

A document names its sources (CSV files described by their own sidecar
documents), the processing stages, the wiring, the sinks, and which
measures the run must conserve.  Keys that YAML would quietly turn into
booleans (on, yes, no) are avoided in the format.
"""

from __future__ import annotations

import yaml

from .exprs import decode_expr, decode_pred
from .ops import AggSpec
from .pipeline import (
    AggregateNode,
    DedupNode,
    ErrorizeNode,
    JoinNode,
    MapNode,
    Node,
    PartitionNode,
    PipelineGraph,
    ProjectNode,
    RenameNode,
    StripTagsNode,
    TaggedUnionNode,
    TeeNode,
    UntagNode,
)


def load_doc(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise ValueError(f"{path}: a pipeline document is a mapping")
    for key in ("sources", "sinks"):
        if key not in doc:
            raise ValueError(f"{path}: missing {key!r} section")
    return doc


def source_files(doc: dict) -> dict:
    """Source name -> CSV file name, in document order."""
    out = {}
    for name, entry in doc["sources"].items():
        if not isinstance(entry, dict) or "file" not in entry:
            raise ValueError(f"source {name!r} needs a file entry")
        out[name] = entry["file"]
    return out


def _make_node(nd: dict) -> Node:
    op = nd.get("op")
    name = nd.get("name")
    if not op or not name:
        raise ValueError(f"every node needs op and name: {nd!r}")
    if op == "partition":
        return PartitionNode(name, decode_pred(nd["when"]),
                             bool(nd.get("rejected_to_errors", False)))
    if op == "tee":
        return TeeNode(name)
    if op == "tagged_union":
        return TaggedUnionNode(name, nd.get("label"))
    if op == "untag":
        return UntagNode(name)
    if op == "strip_tags":
        return StripTagsNode(name)
    if op == "project":
        return ProjectNode(name, tuple(nd["fields"]))
    if op == "rename":
        return RenameNode(name, dict(nd["map"]))
    if op == "dedup":
        return DedupNode(name)
    if op in ("fmap", "emap"):
        additions = {k: decode_expr(v) for k, v in nd["add"].items()}
        sems = dict(nd.get("sems") or {})
        units = dict(nd["units"]) if nd.get("units") else None
        return MapNode(name, additions, sems, kind=op, units=units)
    if op == "errorize":
        return ErrorizeNode(name, str(nd["reason"]))
    if op == "join":
        pairs = tuple(tuple(p) for p in nd.get("keys", ()))
        return JoinNode(name, pairs, bool(nd.get("missing_matches", False)))
    if op == "aggregate":
        specs = tuple(AggSpec(s["field"], s["op"]) for s in nd.get("specs", ()))
        return AggregateNode(name, tuple(nd.get("by", ())), specs)
    raise ValueError(f"unknown node op {op!r}")


def build_graph(doc: dict, schemas: dict) -> PipelineGraph:
    """Assemble the graph; schemas maps each source name to its schema."""
    g = PipelineGraph(str(doc.get("name", "pipeline")))
    for name in doc["sources"]:
        if name not in schemas:
            raise ValueError(f"no schema for source {name!r}")
        g.add_source(name, schemas[name])
    for c in doc.get("conservation", ()):
        g.add_conservation(c["scheme"], c.get("field"))
    for nd in doc.get("nodes", ()):
        node = _make_node(nd)
        g.add_node(node)
        # input wiring sugar: from: for the first port, or one key per port
        if "from" in nd:
            g.connect(str(nd["from"]), f"{node.name}.{node.in_ports[0]}")
        for port in node.in_ports:
            if port in nd:
                g.connect(str(nd[port]), f"{node.name}.{port}")
        for port, src in (nd.get("inputs") or {}).items():
            g.connect(str(src), f"{node.name}.{port}")
    for name, sd in doc["sinks"].items():
        sd = sd or {}
        g.add_sink(name, sd.get("kind", "report"), sd.get("report", "main"))
        if "from" in sd:
            g.connect(str(sd["from"]), name)
    for w in doc.get("wires", ()):
        g.connect(str(w["from"]), str(w["to"]))
    return g
