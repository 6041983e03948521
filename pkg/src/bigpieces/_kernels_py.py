"""Pure numpy implementation of the Lipschitz-pruning kernels."""
import numpy as np

_CHUNK = 1024


def _violation_block(base, height, rows, L2):
    db2 = np.zeros((len(rows), base.shape[0]))
    for d in range(base.shape[1]):
        t = base[rows, d][:, None] - base[None, :, d]
        db2 = db2 + t * t
    dh2 = np.zeros_like(db2)
    for d in range(height.shape[1]):
        t = height[rows, d][:, None] - height[None, :, d]
        dh2 = dh2 + t * t
    return dh2 > L2 * db2


def _violation_matrix(base, height, L):
    base = np.ascontiguousarray(base, dtype=np.float64)
    height = np.ascontiguousarray(height, dtype=np.float64)
    m = base.shape[0]
    adj = np.zeros((m, m), dtype=bool)
    for start in range(0, m, _CHUNK):
        rows = np.arange(start, min(start + _CHUNK, m))
        adj[rows] = _violation_block(base, height, rows, L * L)
    return adj


def lipschitz_prune(base, height, L):
    adj = _violation_matrix(base, height, L)
    m = adj.shape[0]
    deg = adj.sum(axis=1).astype(np.int64)
    alive = np.ones(m, dtype=bool)
    while m:
        best = int(np.argmax(deg))
        if deg[best] <= 0:
            break
        alive[best] = False
        deg[best] = 0
        nbrs = adj[best] & alive
        deg[nbrs] -= 1
    return alive


def count_violations(base, height, L):
    adj = _violation_matrix(base, height, L)
    return int(np.triu(adj, 1).sum())
