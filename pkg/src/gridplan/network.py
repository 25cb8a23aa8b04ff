"""DC power flow machinery: PTDF construction and flow evaluation.

The PTDF entry (l, n) is the MW flow induced on line l by injecting 1 MW at
node n and withdrawing it at the slack node, under the usual DC assumptions.
It is computed by reducing the network susceptance matrix at the slack node
and solving for the voltage angles of unit injections.  Line expansion does
not change the PTDF (it depends on reactances only), it only widens limits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from gridplan.model import Line


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class PtdfMatrix:
    """Dense |L| x |N| map from nodal injections to line flows.

    The column of the slack node is identically zero.  Row order follows the
    line list handed to :func:`build_ptdf`.
    """

    entries: np.ndarray
    slack_node: int
    line_ids: tuple[str, ...]

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        e.flags.writeable = False
        object.__setattr__(self, "entries", e)

    @property
    def num_nodes(self) -> int:
        return self.entries.shape[1]


def build_ptdf(lines: Sequence[Line], num_nodes: int, slack: int) -> PtdfMatrix:
    """Compute the PTDF matrix from line reactances.

    Parallel lines between the same node pair are merged into one equivalent
    corridor (susceptances add) for the angle solve; each original line then
    carries its susceptance share of the corridor flow.

    Raises :class:`NetworkError` if the network is disconnected or the
    reduced susceptance matrix is singular.
    """
    if not (0 <= slack < num_nodes):
        raise NetworkError(f"slack node {slack} outside 0..{num_nodes - 1}")
    for line in lines:
        if line.reactance <= 0:
            raise NetworkError(f"line {line.id}: reactance must be > 0")

    b = np.array([1.0 / line.reactance for line in lines])
    frm = np.array([line.from_node for line in lines], dtype=int)
    to = np.array([line.to_node for line in lines], dtype=int)

    # Nodal susceptance matrix (graph Laplacian weighted by susceptance);
    # parallel corridors merge automatically through accumulation.
    B = np.zeros((num_nodes, num_nodes))
    np.add.at(B, (frm, frm), b)
    np.add.at(B, (to, to), b)
    np.add.at(B, (frm, to), -b)
    np.add.at(B, (to, frm), -b)

    keep = [i for i in range(num_nodes) if i != slack]
    if not _connected(num_nodes, frm, to):
        raise NetworkError("network is not connected")
    B_red = B[np.ix_(keep, keep)]

    # Angles for a unit injection at each non-slack node.
    try:
        theta_red = np.linalg.solve(B_red, np.eye(len(keep)))
    except np.linalg.LinAlgError as exc:
        raise NetworkError("reduced susceptance matrix is singular") from exc

    theta = np.zeros((num_nodes, num_nodes))  # (node, injection-node)
    theta[np.ix_(keep, keep)] = theta_red

    entries = (b[:, None] * (theta[frm, :] - theta[to, :]))
    entries[:, slack] = 0.0
    return PtdfMatrix(entries=entries, slack_node=slack, line_ids=tuple(l.id for l in lines))


def line_flows(ptdf: PtdfMatrix, injections: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Flows per line for balanced nodal injections.

    ``injections`` has shape (|N|,) or (|N|, T).  Each column must sum to
    (approximately) zero: the PTDF presumes a balanced system, so an
    imbalance beyond ``tol`` times the injection scale is an error.
    """
    inj = np.asarray(injections, dtype=float)
    squeeze = inj.ndim == 1
    if squeeze:
        inj = inj[:, None]
    if inj.shape[0] != ptdf.num_nodes:
        raise NetworkError(f"expected {ptdf.num_nodes} nodal injections, got {inj.shape[0]}")
    scale = np.abs(inj).sum(axis=0)
    bad = np.abs(inj.sum(axis=0)) > tol * np.maximum(scale, 1.0)
    if bad.any():
        t = int(np.argmax(bad))
        raise NetworkError(f"injections at step {t} sum to {inj.sum(axis=0)[t]:.3e}, not zero")
    flows = ptdf.entries @ inj
    return flows[:, 0] if squeeze else flows


def _connected(num_nodes: int, frm: np.ndarray, to: np.ndarray) -> bool:
    adj: dict[int, set[int]] = {i: set() for i in range(num_nodes)}
    for f, t in zip(frm, to):
        adj[int(f)].add(int(t))
        adj[int(t)].add(int(f))
    seen = {0}
    stack = [0]
    while stack:
        for nxt in adj[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return len(seen) == num_nodes
