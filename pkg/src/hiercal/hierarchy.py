"""Rooted label hierarchies: parsing, traversal, and terminal shuffling.

A hierarchy is a tree whose leaves are the terminal labels of a flat
classifier, in a fixed order that is index-aligned with the positions of
the classifier's logit vector. Instances are immutable after construction
and safe to share across threads.
"""

from __future__ import annotations

import numpy as np


class HierarchyError(ValueError):
    """Invalid hierarchy file or structure."""


class LabelHierarchy:
    """Tree over a terminal label set plus internal super-class nodes.

    Parameters
    ----------
    terminals : sequence of str
        Leaf names in logit-vector order. Names must be unique and must
        not contain commas or tabs (they appear in CSV headers).
    parent : dict
        child -> parent mapping covering every node except the root.
    children : dict
        parent -> tuple of children, preserving the order in which edges
        were declared (this order is load-bearing for tree compression).
    """

    def __init__(self, terminals, parent, children):
        self.terminals = tuple(terminals)
        self.parent = dict(parent)
        self.children = {p: tuple(cs) for p, cs in children.items()}
        self._validate()
        self.index_of = {name: k for k, name in enumerate(self.terminals)}
        self._descendants = self._collect_descendants()

    # -- construction & validation -------------------------------------

    def _validate(self):
        if not self.terminals:
            raise HierarchyError("hierarchy has no terminal labels")
        if len(set(self.terminals)) != len(self.terminals):
            raise HierarchyError("duplicate terminal names in header")
        for name in self.terminals:
            if "," in name or "\t" in name:
                raise HierarchyError(
                    f"terminal name {name!r} may not contain commas or tabs"
                )

        nodes = set(self.parent) | set(self.children)
        for cs in self.children.values():
            nodes.update(cs)
        nodes.update(self.parent.values())
        if not nodes:
            raise HierarchyError("hierarchy has no edges")

        roots = nodes - set(self.parent)
        if not roots:
            raise HierarchyError("cycle detected: every node has a parent")
        if len(roots) > 1:
            raise HierarchyError(
                "multiple roots: " + ", ".join(sorted(roots))
            )
        self.root = roots.pop()

        # Reachability from the root; unreachable nodes sit on a cycle.
        seen = {self.root}
        stack = [self.root]
        while stack:
            node = stack.pop()
            for child in self.children.get(node, ()):
                if child in seen:
                    raise HierarchyError(f"cycle detected at node {child!r}")
                seen.add(child)
                stack.append(child)
        if seen != nodes:
            raise HierarchyError(
                "cycle detected: unreachable nodes "
                + ", ".join(sorted(nodes - seen))
            )

        leaves = {n for n in nodes if not self.children.get(n)}
        declared = set(self.terminals)
        missing = declared - leaves
        if missing:
            raise HierarchyError(
                "orphan terminals not present as leaves: "
                + ", ".join(sorted(missing))
            )
        extra = leaves - declared
        if extra:
            raise HierarchyError(
                "childless nodes not declared as terminals: "
                + ", ".join(sorted(extra))
            )

    def _collect_descendants(self):
        # Bottom-up accumulation of terminal indices under every node.
        out = {}

        def visit(node):
            if node in self.index_of and not self.children.get(node):
                idx = frozenset([self.index_of[node]])
            else:
                idx = frozenset().union(
                    *(visit(c) for c in self.children[node])
                )
            out[node] = idx
            return idx

        visit(self.root)
        return out

    # -- queries --------------------------------------------------------

    @property
    def n_terminals(self):
        return len(self.terminals)

    @property
    def nodes(self):
        return frozenset(self._descendants)

    def is_terminal(self, node):
        return node in self.index_of

    def ancestral_path(self, leaf):
        """Node names from a terminal up to the root, both inclusive."""
        if leaf not in self.index_of:
            raise HierarchyError(f"unknown terminal {leaf!r}")
        path = [leaf]
        while path[-1] != self.root:
            path.append(self.parent[path[-1]])
        return path

    def terminal_descendants(self, node):
        """Set of terminal names under ``node`` (itself if terminal)."""
        try:
            idx = self._descendants[node]
        except KeyError:
            raise HierarchyError(f"unknown node {node!r}") from None
        return frozenset(self.terminals[k] for k in idx)

    def descendant_indices(self, node):
        """Terminal indices under ``node`` as a frozenset."""
        try:
            return self._descendants[node]
        except KeyError:
            raise HierarchyError(f"unknown node {node!r}") from None

    # -- terminal shuffling ----------------------------------------------

    def permute_terminals(self, permutation):
        """Reattach terminals so position k is filled by terminal perm[k].

        The tree structure and the terminal order (logit alignment) are
        unchanged; only which leaf slot each terminal occupies moves.
        """
        perm = list(permutation)
        if sorted(perm) != list(range(self.n_terminals)):
            raise HierarchyError("not a permutation of the terminal indices")
        replace = {
            self.terminals[k]: self.terminals[perm[k]]
            for k in range(self.n_terminals)
        }
        parent = {
            replace.get(child, child): p for child, p in self.parent.items()
        }
        children = {
            p: tuple(replace.get(c, c) for c in cs)
            for p, cs in self.children.items()
        }
        return LabelHierarchy(self.terminals, parent, children)

    def shuffle_terminals(self, seed):
        """Seeded random permutation of the terminal positions."""
        rng = np.random.default_rng(seed)
        return self.permute_terminals(rng.permutation(self.n_terminals))

    # -- serialization ----------------------------------------------------

    def to_text(self):
        """Edge-list serialization; parses back to an equal hierarchy."""
        lines = ["terminals: " + ",".join(self.terminals)]
        stack = [self.root]
        while stack:
            node = stack.pop()
            for child in self.children.get(node, ()):
                lines.append(f"{child}\t{node}")
                stack.append(child)
        return "\n".join(lines) + "\n"

    def __eq__(self, other):
        if not isinstance(other, LabelHierarchy):
            return NotImplemented
        return (
            self.terminals == other.terminals
            and self.root == other.root
            and self.parent == other.parent
            and self.children == other.children
        )

    def __repr__(self):
        return (
            f"LabelHierarchy({len(self.terminals)} terminals, "
            f"{len(self.nodes)} nodes, root={self.root!r})"
        )


def parse_hierarchy(text):
    """Parse the plain-text hierarchy format into a LabelHierarchy.

    Line 1 is ``terminals: <comma-separated leaf names in logit order>``;
    each following non-empty line is ``child<TAB>parent``. Lines starting
    with ``#`` are comments. Internal node names may contain commas and
    spaces; terminal names may not contain commas.
    """
    lines = [
        ln for ln in (raw.strip() for raw in text.splitlines())
        if ln and not ln.startswith("#")
    ]
    if not lines or not lines[0].startswith("terminals:"):
        raise HierarchyError("missing 'terminals:' header line")
    terminals = [t.strip() for t in lines[0][len("terminals:"):].split(",")]
    if any(not t for t in terminals):
        raise HierarchyError("empty terminal name in header")

    parent = {}
    children = {}
    for ln in lines[1:]:
        if "\t" not in ln:
            raise HierarchyError(f"edge line without a tab: {ln!r}")
        child, _, par = ln.partition("\t")
        child, par = child.strip(), par.strip()
        if not child or not par:
            raise HierarchyError(f"empty node name in edge: {ln!r}")
        if child in parent:
            raise HierarchyError(f"duplicate edge for child {child!r}")
        parent[child] = par
        children.setdefault(par, []).append(child)
    return LabelHierarchy(terminals, parent, children)


def load_hierarchy(path):
    """Read and parse a hierarchy file."""
    with open(path, encoding="utf-8") as fh:
        return parse_hierarchy(fh.read())
