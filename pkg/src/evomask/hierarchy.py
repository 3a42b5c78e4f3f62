"""Binary similarity hierarchy over image patches.

Leaves ``0..N-1`` are patches in raster order. Node ``N + k`` is created by
the ``k``-th merge, which joins the active pair of maximal similarity; ties
go to the lexicographically smallest ``(min_id, max_id)``. A node's level is
one more than the larger level of its children, leaves are level 1.

Two linkages are supported:

``children-average``
    Internal-node similarity is the mean over child pairs, a leaf counting as
    its own single child. Incrementally: ``S(new, m) = (S(i, m) + S(j, m)) / 2``.
``leaf-average``
    Mean of leaf similarities over the cartesian product of the two spans,
    i.e. the leaf-count weighted mean of the children's rows.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import _kernel
from .attention import SimilarityMatrix
from .errors import AncestorPair, EmptyMatrix, FormatError, NegativeEntry, NotSymmetric, ValidationError

CHILDREN_AVERAGE = "children-average"
LEAF_AVERAGE = "leaf-average"
LINKAGES = (CHILDREN_AVERAGE, LEAF_AVERAGE)


@dataclass
class TreeNode:
    id: int
    level: int
    children: tuple[int, int] | None = None
    parent: int | None = None
    leaf_span: list[int] = field(default_factory=list)
    merge_similarity: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.children is None


@dataclass
class HierarchyTree:
    leaf_count: int
    nodes: list[TreeNode]
    root_id: int
    linkage: str = CHILDREN_AVERAGE

    @property
    def height(self) -> int:
        return self.nodes[self.root_id].level

    def merges(self) -> list[tuple[int, int]]:
        return [n.children for n in self.nodes[self.leaf_count :]]

    def is_ancestor(self, a: int, b: int) -> bool:
        """True when ``a`` is a proper ancestor of ``b``."""
        p = self.nodes[b].parent
        while p is not None:
            if p == a:
                return True
            p = self.nodes[p].parent
        return False

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HierarchyTree):
            return NotImplemented
        return (
            self.leaf_count == other.leaf_count
            and self.root_id == other.root_id
            and self.linkage == other.linkage
            and self.nodes == other.nodes
        )


def _as_matrix(S: SimilarityMatrix | np.ndarray) -> np.ndarray:
    values = S.values if isinstance(S, SimilarityMatrix) else S
    values = np.ascontiguousarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise NotSymmetric(f"similarity must be square, got shape {values.shape}")
    if values.shape[0] == 0:
        raise EmptyMatrix("similarity matrix has no tokens")
    if not np.isfinite(values).all():
        raise ValidationError("similarity contains non-finite entries")
    if not np.array_equal(values, values.T):
        raise NotSymmetric("similarity matrix is not exactly symmetric")
    if (values < 0).any():
        raise NegativeEntry("similarity matrix has negative entries")
    return values


def _check_linkage(linkage: str) -> None:
    if linkage not in LINKAGES:
        raise ValidationError(f"unknown linkage {linkage!r}; expected one of {LINKAGES}")


def tree_from_merges(
    n: int,
    merges: Sequence[Sequence[int]],
    merge_sims: Sequence[float] | None = None,
    linkage: str = CHILDREN_AVERAGE,
) -> HierarchyTree:
    """Assemble a tree from a merge sequence; ``merges[k]`` are the children of node ``n + k``."""
    nodes = [TreeNode(id=i, level=1, leaf_span=[i]) for i in range(n)]
    for k, (a, b) in enumerate(merges):
        a, b = int(a), int(b)
        new = n + k
        ca, cb = nodes[a], nodes[b]
        nodes.append(
            TreeNode(
                id=new,
                level=max(ca.level, cb.level) + 1,
                children=(a, b),
                leaf_span=sorted(ca.leaf_span + cb.leaf_span),
                merge_similarity=None if merge_sims is None else float(merge_sims[k]),
            )
        )
        ca.parent = new
        cb.parent = new
    return HierarchyTree(leaf_count=n, nodes=nodes, root_id=len(nodes) - 1, linkage=linkage)


def build_tree_with_cache(
    S: SimilarityMatrix | np.ndarray, linkage: str = CHILDREN_AVERAGE
) -> tuple[HierarchyTree, np.ndarray]:
    """Like :func:`build_tree`, also returning the node-pair similarity cache."""
    _check_linkage(linkage)
    values = _as_matrix(S)
    merges, sims, cache = _kernel.merge_loop(values, linkage == LEAF_AVERAGE)
    return tree_from_merges(values.shape[0], merges, sims, linkage), cache


def build_tree(S: SimilarityMatrix | np.ndarray, linkage: str = CHILDREN_AVERAGE) -> HierarchyTree:
    return build_tree_with_cache(S, linkage)[0]


def build_trees(
    matrices: Iterable[SimilarityMatrix | np.ndarray],
    linkage: str = CHILDREN_AVERAGE,
    workers: int | None = None,
) -> list[HierarchyTree]:
    """Build one tree per matrix; results are in input order whatever ``workers`` is."""
    matrices = list(matrices)
    if not workers or workers <= 1:
        return [build_tree(m, linkage) for m in matrices]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda m: build_tree(m, linkage), matrices))


def _recursive(values, children, spans, a, b, linkage):
    if linkage == LEAF_AVERAGE:
        return float(values[np.ix_(spans[a], spans[b])].mean())
    ca = children.get(a) or (a,)
    cb = children.get(b) or (b,)
    if len(ca) == 1 and len(cb) == 1:
        return float(values[a, b])
    total = 0.0
    for x in ca:
        for y in cb:
            total += _recursive(values, children, spans, x, y, linkage)
    return total / (len(ca) * len(cb))


def pair_similarity_recursive(
    tree: HierarchyTree,
    S: SimilarityMatrix | np.ndarray,
    a: int,
    b: int,
    linkage: str | None = None,
) -> float:
    """Similarity of nodes ``a`` and ``b`` evaluated from leaves, no cache.

    Children-average recurses into child pairs until both sides are leaves;
    leaf-average takes the plain mean over the two leaf spans.
    """
    linkage = linkage or tree.linkage
    _check_linkage(linkage)
    if a == b or tree.is_ancestor(a, b) or tree.is_ancestor(b, a):
        raise AncestorPair(f"nodes {a} and {b} are not disjoint subtrees")
    values = S.values if isinstance(S, SimilarityMatrix) else np.asarray(S, dtype=np.float64)
    children = {nd.id: nd.children for nd in tree.nodes if nd.children is not None}
    spans = {nd.id: nd.leaf_span for nd in tree.nodes}
    return _recursive(values, children, spans, a, b, linkage)


def build_tree_reference(S: SimilarityMatrix | np.ndarray, linkage: str = CHILDREN_AVERAGE) -> HierarchyTree:
    """Naive agglomeration that re-evaluates every active pair from leaves at every step.

    O(N^3) pair evaluations with no similarity cache; an oracle for
    :func:`build_tree`, not meant for production sizes.
    """
    _check_linkage(linkage)
    values = _as_matrix(S)
    n = values.shape[0]
    children: dict[int, tuple[int, int]] = {}
    spans: dict[int, list[int]] = {i: [i] for i in range(n)}
    active = list(range(n))
    merges, sims = [], []
    for k in range(n - 1):
        best, pair = -1.0, None
        for p, a in enumerate(active):
            for b in active[p + 1 :]:
                s = _recursive(values, children, spans, a, b, linkage)
                if s > best:
                    best, pair = s, (a, b)
        a, b = pair
        new = n + k
        children[new] = pair
        spans[new] = sorted(spans[a] + spans[b])
        merges.append(pair)
        sims.append(best)
        active = [x for x in active if x != a and x != b] + [new]
    return tree_from_merges(n, merges, sims, linkage)


def tree_height(tree: HierarchyTree) -> int:
    return tree.height


def frontier_cut(tree: HierarchyTree, h: int) -> list[int]:
    """Maximal nodes of level <= ``h``, ordered by their smallest leaf.

    Their leaf spans partition all patches.
    """
    if h < 1:
        raise ValidationError(f"depth {h} must be >= 1")
    nodes = tree.nodes
    cut = [
        nd.id
        for nd in nodes
        if nd.level <= h and (nd.parent is None or nodes[nd.parent].level > h)
    ]
    cut.sort(key=lambda i: nodes[i].leaf_span[0])
    return cut


# --- serialization -----------------------------------------------------------


def _sig6(x: float | None) -> float | None:
    return None if x is None else float(f"{x:.6g}")


def dumps_tree(tree: HierarchyTree) -> str:
    lines = [
        "{",
        f'  "leaf_count": {tree.leaf_count},',
        f'  "root_id": {tree.root_id},',
        f'  "height": {tree.height},',
        f'  "linkage": {json.dumps(tree.linkage)},',
        '  "nodes": [',
    ]
    body = []
    for nd in tree.nodes:
        obj = {
            "id": nd.id,
            "level": nd.level,
            "parent": nd.parent,
            "children": None if nd.children is None else list(nd.children),
            "leaf_span": nd.leaf_span,
            "merge_similarity": _sig6(nd.merge_similarity),
        }
        body.append("    " + json.dumps(obj))
    lines.append(",\n".join(body))
    lines += ["  ]", "}"]
    return "\n".join(lines) + "\n"


def loads_tree(text: str) -> HierarchyTree:
    try:
        doc = json.loads(text)
        n = int(doc["leaf_count"])
        nodes = [
            TreeNode(
                id=int(o["id"]),
                level=int(o["level"]),
                children=None if o["children"] is None else (int(o["children"][0]), int(o["children"][1])),
                parent=o["parent"],
                leaf_span=[int(i) for i in o["leaf_span"]],
                merge_similarity=o["merge_similarity"],
            )
            for o in doc["nodes"]
        ]
        tree = HierarchyTree(n, nodes, int(doc["root_id"]), doc.get("linkage", CHILDREN_AVERAGE))
        declared_height = int(doc["height"])
    except (ValueError, KeyError, TypeError, IndexError) as exc:
        raise FormatError(f"malformed tree document: {exc}") from exc
    if len(nodes) != 2 * n - 1 or any(nd.id != i for i, nd in enumerate(nodes)):
        raise FormatError("tree nodes must be numbered 0..2N-2 in order")
    if not 0 <= tree.root_id < len(nodes) or tree.height != declared_height:
        raise FormatError("tree root or height inconsistent with nodes")
    return tree


def save_tree(path: str | Path, tree: HierarchyTree) -> None:
    Path(path).write_text(dumps_tree(tree), encoding="utf-8")


def load_tree(path: str | Path) -> HierarchyTree:
    return loads_tree(Path(path).read_text(encoding="utf-8"))
