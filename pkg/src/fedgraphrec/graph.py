"""Server-side mathematics: co-interaction user graph, embedding smoothing, blending."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from fedgraphrec.data import InteractionDataset, PrivacyAssignment

# Above this adjacency density the per-round smoothing runs as a dense matmul,
# which is far faster than CSR at the near-complete graphs public users produce.
DENSE_DENSITY_CUTOFF = 0.05


@dataclass(eq=False)
class UserGraph:
    """Symmetric user-user co-interaction graph.

    ``adjacency[a, b]`` counts training items users a and b share, for users
    who opted into sharing; their diagonal is zero. Users who share nothing
    (non-sharing users, and sharing users with no co-interactions) carry a
    unit self-loop so degree normalization stays defined. ``normalized`` is
    filled by normalize().
    """

    adjacency: sp.csr_matrix
    normalized: sp.csr_matrix | None = None
    _dense_normalized: np.ndarray | None = field(default=None, repr=False)

    @property
    def num_users(self) -> int:
        return int(self.adjacency.shape[0])


def build_user_graph(dataset: InteractionDataset, tiers: PrivacyAssignment) -> UserGraph:
    """Co-interaction counts between sharing users' training sets.

    Reads train_items() only for sharing users; non-sharing users' rows stay
    empty apart from the unit self-loop.
    """
    num_users = int(tiers.is_public.size)
    if dataset.num_users != num_users:
        raise ValueError(
            f"dataset has {dataset.num_users} users but tiers cover {num_users}"
        )
    rows = []
    cols = []
    for u in tiers.public_users():
        items = np.asarray(dataset.train_items(int(u)), dtype=np.int64)
        rows.append(np.full(items.size, u, dtype=np.int64))
        cols.append(items)
    if rows:
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        incidence = sp.csr_matrix(
            (np.ones(r.size), (r, c)), shape=(num_users, dataset.num_items)
        )
        adjacency = (incidence @ incidence.T).tolil()
        adjacency.setdiag(0.0)
        adjacency = adjacency.tocsr()
        adjacency.eliminate_zeros()
    else:
        adjacency = sp.csr_matrix((num_users, num_users))

    degree = np.asarray(adjacency.sum(axis=1)).ravel()
    isolated = (degree == 0.0).astype(np.float64)
    if isolated.any():
        adjacency = (adjacency + sp.diags(isolated)).tocsr()
    return UserGraph(adjacency=adjacency)


def normalize(graph: UserGraph) -> UserGraph:
    """Fill graph.normalized with the symmetric degree normalization."""
    degree = np.asarray(graph.adjacency.sum(axis=1)).ravel()
    if (degree <= 0.0).any():
        raise ValueError("adjacency has a zero-degree row; self-loops are missing")
    inv_sqrt = sp.diags(1.0 / np.sqrt(degree))
    graph.normalized = (inv_sqrt @ graph.adjacency @ inv_sqrt).tocsr()
    graph._dense_normalized = None
    return graph


def propagate(
    graph: UserGraph, tables: np.ndarray, layers: int = 1, out: np.ndarray | None = None
) -> np.ndarray:
    """Average each user's table with its neighborhood, `layers` hops.

    Parameter-free and linear: one hop multiplies by the normalized
    adjacency. `tables` is (num_users, ...) with any trailing shape; `out`,
    when given, receives the result and must not alias `tables`.
    """
    if layers < 1:
        raise ValueError(f"layers must be >= 1, got {layers}")
    if graph.normalized is None:
        raise ValueError("graph is not normalized; call normalize() first")
    n = graph.num_users
    if tables.shape[0] != n:
        raise ValueError(f"tables cover {tables.shape[0]} users, graph has {n}")
    if out is not None:
        if out.shape != tables.shape:
            raise ValueError(f"out shape {out.shape} != tables shape {tables.shape}")
        if out is tables or np.shares_memory(out, tables):
            raise ValueError("out must not alias tables")

    flat = tables.reshape(n, -1)
    flat_out = out.reshape(n, -1) if out is not None else None
    mat = graph.normalized
    density = mat.nnz / max(n * n, 1)
    use_dense = density >= DENSE_DENSITY_CUTOFF and n > 64
    if use_dense and graph._dense_normalized is None:
        graph._dense_normalized = mat.toarray()

    current = flat
    for hop in range(layers):
        last = hop == layers - 1
        if use_dense:
            if last and flat_out is not None:
                np.matmul(graph._dense_normalized, current, out=flat_out)
                current = flat_out
            else:
                current = graph._dense_normalized @ current
        else:
            current = mat @ current
            if last and flat_out is not None:
                np.copyto(flat_out, current)
                current = flat_out
    if out is not None:
        return out
    return current.reshape(tables.shape)


def global_embedding(propagated: np.ndarray) -> np.ndarray:
    """Mean of the smoothed tables over users (fixed reduction order)."""
    if propagated.shape[0] == 0:
        raise ValueError("no user tables to average")
    return propagated.mean(axis=0)


def personalize(
    propagated: np.ndarray,
    global_table: np.ndarray,
    alpha: float,
    tiers: PrivacyAssignment,
    out: np.ndarray | None = None,
) -> np.ndarray:
    """Blend each sharing user's smoothed table with the global average.

    Sharing users get alpha * own + (1 - alpha) * global; everyone else gets
    the global table. `out` may alias `propagated`: each user's row is fully
    read before it is written, and the global table is precomputed.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    n = propagated.shape[0]
    if tiers.is_public.size != n:
        raise ValueError(f"tables cover {n} users, tiers cover {tiers.is_public.size}")
    if out is None:
        out = np.empty_like(propagated)
    elif out.shape != propagated.shape:
        raise ValueError(f"out shape {out.shape} != tables shape {propagated.shape}")

    # Row-at-a-time keeps peak memory flat at desk scale (no (N, M, d) temps).
    global_part = (1.0 - alpha) * global_table
    in_place = out is propagated
    for u in range(n):
        if tiers.is_public[u]:
            if in_place:
                out[u] *= alpha
            else:
                np.multiply(propagated[u], alpha, out=out[u])
            out[u] += global_part
        else:
            np.copyto(out[u], global_table)
    return out


@dataclass(eq=False)
class ServerState:
    """What the server derives from one round of uploads.

    Holds only item-embedding aggregates; client user vectors and MLP weights
    are structurally absent. ``propagated`` may alias the uploads buffer when
    smoothing is disabled.
    """

    propagated: np.ndarray
    global_table: np.ndarray


def server_update(
    graph: UserGraph | None,
    uploads: np.ndarray,
    tiers: PrivacyAssignment,
    *,
    layers: int = 1,
    use_graph: bool = True,
    global_from_public_only: bool = False,
    out: np.ndarray | None = None,
) -> ServerState:
    """One aggregation step over the stacked uploaded item tables."""
    if use_graph:
        if graph is None:
            raise ValueError("graph smoothing requested but no graph supplied")
        propagated = propagate(graph, uploads, layers=layers, out=out)
    else:
        propagated = uploads
    if global_from_public_only:
        public = tiers.public_users()
        if public.size == 0:
            raise ValueError("global_from_public_only needs at least one sharing user")
        acc = np.zeros(propagated.shape[1:], dtype=np.float64)
        for u in public:
            acc += propagated[u]
        global_table = acc / public.size
    else:
        global_table = global_embedding(propagated)
    return ServerState(propagated=propagated, global_table=global_table)


def same_structure(a: sp.csr_matrix, b: sp.csr_matrix) -> bool:
    """True when two sparse matrices hold identical entries."""
    if a.shape != b.shape:
        return False
    diff = (a != b)
    return diff.nnz == 0


def dump_triplets(graph: UserGraph, path, normalized: bool = False) -> int:
    """Write `user_a<TAB>user_b<TAB>weight` triplets (upper triangle).

    Returns the number of triplets written.
    """
    mat = graph.normalized if normalized else graph.adjacency
    if mat is None:
        raise ValueError("graph is not normalized; call normalize() first")
    coo = sp.triu(mat).tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("user_a\tuser_b\tweight\n")
        for idx in order:
            fh.write(f"{coo.row[idx]}\t{coo.col[idx]}\t{float(coo.data[idx])!r}\n")
    return int(coo.nnz)
