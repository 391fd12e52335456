"""Frame graph: a small registry of framed poses with path queries.

The cell keeps all calibration and observation transforms in one graph
rooted at the camera frame.  Edges are directed parent->child; queries
walk the undirected tree (inverting edges as needed) and compose along
the unique path.
"""

from __future__ import annotations

from collections import deque

from ..errors import FrameMismatch
from .pose import FrameId, FramedPose, compose, invert


class FrameGraph:
    def __init__(self):
        self._edges: dict[tuple[FrameId, FrameId], FramedPose] = {}
        self._adj: dict[FrameId, set[FrameId]] = {}

    def put(self, fp: FramedPose) -> None:
        """Insert or replace the edge parent->child."""
        if fp.parent == fp.child:
            raise FrameMismatch(f"self-edge on {fp.parent}")
        # drop a stale reverse edge so updates cannot create contradictions
        self._edges.pop((fp.child, fp.parent), None)
        self._edges[(fp.parent, fp.child)] = fp
        self._adj.setdefault(fp.parent, set()).add(fp.child)
        self._adj.setdefault(fp.child, set()).add(fp.parent)

    def has(self, parent: FrameId, child: FrameId) -> bool:
        return self._path(parent, child) is not None

    def query(self, parent: FrameId, child: FrameId) -> FramedPose:
        """Pose of ``child`` in ``parent``, composed along the connecting path."""
        path = self._path(parent, child)
        if path is None:
            raise FrameMismatch(f"no path from {parent} to {child}")
        out: FramedPose | None = None
        for a, b in zip(path[:-1], path[1:]):
            fp = self._edges.get((a, b))
            step = fp if fp is not None else invert(self._edges[(b, a)])
            out = step if out is None else compose(out, step)
        if out is None:  # parent == child
            from .pose import Pose
            return FramedPose.constant(parent, child, Pose.identity())
        return out

    def _path(self, src: FrameId, dst: FrameId) -> list[FrameId] | None:
        if src == dst:
            return [src]
        if src not in self._adj or dst not in self._adj:
            return None
        prev: dict[FrameId, FrameId] = {src: src}
        queue = deque([src])
        while queue:
            node = queue.popleft()
            for nxt in self._adj[node]:
                if nxt in prev:
                    continue
                prev[nxt] = node
                if nxt == dst:
                    path = [dst]
                    while path[-1] != src:
                        path.append(prev[path[-1]])
                    return path[::-1]
                queue.append(nxt)
        return None

    def frames(self) -> list[FrameId]:
        return sorted(self._adj, key=lambda f: f.tag())
