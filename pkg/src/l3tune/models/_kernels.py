"""Compiled inner loops: exact-greedy tree growth, ensemble and kNN prediction."""

import numpy as np
from numba import njit

_GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _splitmix64(state):
    state = state + _GOLDEN_GAMMA
    z = state
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return state, z ^ (z >> np.uint64(31))


@njit(cache=True)
def grow_tree(X, y, orders, max_depth, min_samples_leaf, lam, leaf_scale, n_sub, seed):
    """Breadth-first exact-greedy regression tree.

    ``orders[f]`` lists the row indices sorted by feature ``f``; node segments
    stay contiguous in every row of ``orders`` through stable partitioning.
    Split gain is S_L^2/(n_L+lam) + S_R^2/(n_R+lam) - S^2/(n+lam); leaf value is
    leaf_scale * S/(n+lam). Ties go to the lower feature index, then the lower
    threshold. Returns node arrays plus the leaf id of every training row.
    """
    n, d = X.shape
    orders = orders.copy()
    cap = 2 * n + 1
    if max_depth < 62:
        cap = min(cap, (1 << (max_depth + 1)) - 1)
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    q_start = np.empty(cap, np.int64)
    q_end = np.empty(cap, np.int64)
    q_depth = np.empty(cap, np.int64)
    row_leaf = np.empty(n, np.int64)
    goes_left = np.zeros(n, np.bool_)
    buf = np.empty(n, np.int64)
    feats = np.arange(d)
    chosen = np.empty(d, np.int64)
    state = np.uint64(seed)

    q_start[0] = 0
    q_end[0] = n
    q_depth[0] = 0
    n_nodes = 1
    node = 0
    while node < n_nodes:
        s = q_start[node]
        e = q_end[node]
        cnt = e - s
        total = 0.0
        ymin = np.inf
        ymax = -np.inf
        for i in range(s, e):
            v = y[orders[0, i]]
            total += v
            if v < ymin:
                ymin = v
            if v > ymax:
                ymax = v
        value[node] = leaf_scale * total / (cnt + lam)
        split = q_depth[node] < max_depth and cnt >= 2 * min_samples_leaf and ymin < ymax
        best_f = -1
        best_thr = 0.0
        if split:
            mean = total / cnt
            sse = 0.0
            for i in range(s, e):
                dv = y[orders[0, i]] - mean
                sse += dv * dv
            best_gain = 1e-12 * sse
            parent = total * total / (cnt + lam)
            if n_sub < d:
                for j in range(d):
                    feats[j] = j
                for j in range(n_sub):
                    state, z = _splitmix64(state)
                    pick = j + np.int64(z % np.uint64(d - j))
                    tmp = feats[j]
                    feats[j] = feats[pick]
                    feats[pick] = tmp
                for j in range(n_sub):
                    chosen[j] = feats[j]
                chosen[:n_sub].sort()
                m_feats = n_sub
            else:
                for j in range(d):
                    chosen[j] = j
                m_feats = d
            for jf in range(m_feats):
                f = chosen[jf]
                s_left = 0.0
                for i in range(s, e - 1):
                    r = orders[f, i]
                    s_left += y[r]
                    n_left = i - s + 1
                    n_right = cnt - n_left
                    if n_right < min_samples_leaf:
                        break
                    if n_left < min_samples_leaf:
                        continue
                    xv = X[r, f]
                    xn = X[orders[f, i + 1], f]
                    if xv < xn:
                        s_right = total - s_left
                        gain = s_left * s_left / (n_left + lam) + s_right * s_right / (n_right + lam) - parent
                        if gain > best_gain:
                            best_gain = gain
                            best_f = f
                            thr = 0.5 * (xv + xn)
                            if thr >= xn:
                                thr = xv
                            best_thr = thr
        if best_f < 0:
            for i in range(s, e):
                row_leaf[orders[0, i]] = node
            node += 1
            continue
        n_left = 0
        for i in range(s, e):
            r = orders[best_f, i]
            gl = X[r, best_f] <= best_thr
            goes_left[r] = gl
            if gl:
                n_left += 1
        for f in range(d):
            a = s
            b = 0
            for i in range(s, e):
                r = orders[f, i]
                if goes_left[r]:
                    orders[f, a] = r
                    a += 1
                else:
                    buf[b] = r
                    b += 1
            for i in range(b):
                orders[f, a + i] = buf[i]
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        q_start[n_nodes] = s
        q_end[n_nodes] = s + n_left
        q_depth[n_nodes] = q_depth[node] + 1
        q_start[n_nodes + 1] = s + n_left
        q_end[n_nodes + 1] = e
        q_depth[n_nodes + 1] = q_depth[node] + 1
        n_nodes += 2
        node += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], row_leaf)


@njit(cache=True)
def predict_trees(X, child, feature, threshold, value, roots, depths, base):
    """base + tree_1 + tree_2 + ... accumulated left to right, as during training.

    Nodes use the branchless layout: next = child[node] + (x > threshold); leaves
    point to themselves with an infinite threshold, so every tree is walked for
    exactly ``depths[t]`` steps. Rows advance level by level to overlap the
    dependent loads of independent rows.
    """
    n = X.shape[0]
    out = np.full(n, base)
    nodes = np.empty(n, np.int64)
    XT = X.T.copy()
    for t in range(roots.shape[0]):
        for i in range(n):
            nodes[i] = roots[t]
        for _ in range(depths[t]):
            for i in range(n):
                nd = nodes[i]
                nodes[i] = child[nd] + (XT[feature[nd], i] > threshold[nd])
        for i in range(n):
            out[i] += value[nodes[i]]
    return out


@njit(cache=True)
def knn_predict(train_X, train_y, Q, k):
    """Mean target of the k nearest rows (squared Euclidean, lower index wins ties)."""
    n, d = train_X.shape
    out = np.empty(Q.shape[0])
    best_d = np.empty(k)
    best_i = np.empty(k, np.int64)
    for q in range(Q.shape[0]):
        filled = 0
        for r in range(n):
            dist = 0.0
            for j in range(d):
                diff = Q[q, j] - train_X[r, j]
                dist += diff * diff
            if filled < k:
                pos = filled
                filled += 1
            elif dist < best_d[k - 1]:
                pos = k - 1
            else:
                continue
            while pos > 0 and best_d[pos - 1] > dist:
                best_d[pos] = best_d[pos - 1]
                best_i[pos] = best_i[pos - 1]
                pos -= 1
            best_d[pos] = dist
            best_i[pos] = r
        idx = np.sort(best_i[:k])
        acc = 0.0
        for j in range(k):
            acc += train_y[idx[j]]
        out[q] = acc / k
    return out


@njit(cache=True)
def enet_cd(G, c, alpha, l1_ratio, tol, max_sweeps, beta):
    """Covariance-form coordinate descent; returns (beta, sweeps, converged)."""
    d = G.shape[0]
    l1 = alpha * l1_ratio
    l2 = alpha * (1.0 - l1_ratio)
    for sweep in range(max_sweeps):
        max_delta = 0.0
        max_beta = 0.0
        for j in range(d):
            rho = c[j]
            for m in range(d):
                if m != j:
                    rho -= G[j, m] * beta[m]
            if rho > l1:
                new = (rho - l1) / (G[j, j] + l2)
            elif rho < -l1:
                new = (rho + l1) / (G[j, j] + l2)
            else:
                new = 0.0
            delta = abs(new - beta[j])
            if delta > max_delta:
                max_delta = delta
            beta[j] = new
            if abs(new) > max_beta:
                max_beta = abs(new)
        if max_delta <= tol * max(1.0, max_beta):
            return beta, sweep + 1, True
    return beta, max_sweeps, False
