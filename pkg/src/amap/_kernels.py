"""Compiled inner loops shared by the sampling and path modules.

Everything here works on flat numpy arrays with 0-based indices; the public
modules translate to and from the 1-based vertex labels.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def prufer_to_parent(seq, n_vertices):
    """Decode a Prüfer sequence into a parent array rooted at vertex 0.

    ``seq`` has length ``n_vertices - 2`` with entries in ``[0, n_vertices)``.
    Returns ``parent`` with ``parent[0] == -1``.
    """
    degree = np.ones(n_vertices, dtype=np.int64)
    for x in seq:
        degree[x] += 1
    adj_u = np.empty(n_vertices - 1, dtype=np.int64)
    adj_v = np.empty(n_vertices - 1, dtype=np.int64)
    # linear-time decoding: `ptr` scans for the smallest leaf, `leaf` may jump back
    ptr = 0
    while degree[ptr] != 1:
        ptr += 1
    leaf = ptr
    k = 0
    for x in seq:
        adj_u[k] = leaf
        adj_v[k] = x
        k += 1
        degree[x] -= 1
        if degree[x] == 1 and x < ptr:
            leaf = x
        else:
            ptr += 1
            while degree[ptr] != 1:
                ptr += 1
            leaf = ptr
    # the last edge joins `leaf` to the largest label
    adj_u[k] = leaf
    adj_v[k] = n_vertices - 1

    # orient towards vertex 0
    head = np.full(n_vertices, -1, dtype=np.int64)
    nxt = np.full(2 * (n_vertices - 1), -1, dtype=np.int64)
    to = np.empty(2 * (n_vertices - 1), dtype=np.int64)
    for e in range(n_vertices - 1):
        a = adj_u[e]
        b = adj_v[e]
        to[2 * e] = b
        nxt[2 * e] = head[a]
        head[a] = 2 * e
        to[2 * e + 1] = a
        nxt[2 * e + 1] = head[b]
        head[b] = 2 * e + 1
    parent = np.full(n_vertices, -2, dtype=np.int64)
    parent[0] = -1
    stack = np.empty(n_vertices, dtype=np.int64)
    top = 0
    stack[top] = 0
    top += 1
    while top > 0:
        top -= 1
        u = stack[top]
        e = head[u]
        while e != -1:
            w = to[e]
            if parent[w] == -2:
                parent[w] = u
                stack[top] = w
                top += 1
            e = nxt[e]
    return parent


@njit(cache=True)
def contour_from_image(image):
    """Depth-first contour of an acyclic image array (0-based, fixed points are roots).

    Components are visited in order of their root label, children in ascending
    label order. Returns the heights ``v(0..2n)`` and, for each up-step, the
    vertex entered (``-1`` on down-steps).
    """
    n = image.shape[0]
    child_count = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        if image[i] != i:
            child_count[image[i] + 1] += 1
    # CSR children lists; filling by ascending i keeps each list sorted
    start = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        start[i + 1] = start[i] + child_count[i + 1]
    fill = start.copy()
    kids = np.empty(max(start[n], 1), dtype=np.int64)
    for i in range(n):
        p = image[i]
        if p != i:
            kids[fill[p]] = i
            fill[p] += 1

    heights = np.zeros(2 * n + 1, dtype=np.int64)
    labels = np.full(2 * n, -1, dtype=np.int64)
    stack_v = np.empty(n, dtype=np.int64)
    stack_k = np.empty(n, dtype=np.int64)
    t = 0
    for r in range(n):
        if image[r] != r:
            continue
        top = 0
        stack_v[0] = r
        stack_k[0] = start[r]
        labels[t] = r
        heights[t + 1] = 1
        t += 1
        while top >= 0:
            u = stack_v[top]
            k = stack_k[top]
            if k < start[u + 1]:
                stack_k[top] = k + 1
                c = kids[k]
                top += 1
                stack_v[top] = c
                stack_k[top] = start[c]
                labels[t] = c
                heights[t + 1] = heights[t] + 1
                t += 1
            else:
                top -= 1
                heights[t + 1] = heights[t] - 1
                t += 1
    return heights, labels


@njit(cache=True)
def straddle_scan(values, h, s, a):
    """Locate the excursion of the piecewise-linear path above level ``a`` containing ``s``.

    ``values`` are samples at spacing ``h``. Returns ``(start, finish, top)``
    where ``top`` is the path maximum on ``[start, finish]``.
    """
    n = values.shape[0] - 1
    k = int(s / h)
    if k >= n:
        k = n - 1
    top = max(values[k], values[k + 1])
    # walk left from grid point k
    i = k
    while i > 0 and values[i] > a:
        if values[i] > top:
            top = values[i]
        i -= 1
    if values[i] > a:
        start = 0.0
    else:
        y0 = values[i]
        y1 = values[i + 1]
        start = h * (i + (a - y0) / (y1 - y0)) if y1 != y0 else h * (i + 1)
        if start > s:
            start = s
    j = k + 1
    while j < n and values[j] > a:
        if values[j] > top:
            top = values[j]
        j += 1
    if values[j] > a:
        finish = h * n
    else:
        y0 = values[j - 1]
        y1 = values[j]
        finish = h * (j - 1 + (y0 - a) / (y0 - y1)) if y0 != y1 else h * (j - 1)
        if finish < s:
            finish = s
    return start, finish, top


@njit(cache=True)
def straddle_batch(values, h, s_arr, a_arr):
    m = s_arr.shape[0]
    start = np.empty(m)
    finish = np.empty(m)
    top = np.empty(m)
    for q in range(m):
        st, fi, tp = straddle_scan(values, h, s_arr[q], a_arr[q])
        start[q] = st
        finish[q] = fi
        top[q] = tp
    return start, finish, top


@njit(cache=True)
def straddle_refined(values, seg_min, seg_max, h, s_arr, a_arr):
    """Straddle frames when each grid interval also carries its path minimum and maximum.

    An interval whose minimum lies below the level ends the excursion even
    if both grid values lie above it; the top is the largest interval maximum.
    """
    N = values.shape[0] - 1
    m = s_arr.shape[0]
    start = np.empty(m)
    finish = np.empty(m)
    top = np.empty(m)
    for q in range(m):
        s = s_arr[q]
        a = a_arr[q]
        k = min(int(s / h), N - 1)
        best = seg_max[k]
        # a dip inside the interval holding s is placed at its midpoint
        dip = values[k] > a and values[k + 1] > a and seg_min[k] < a
        mid = h * (k + 0.5)
        if dip and s >= mid:
            st = mid
        elif values[k] <= a:
            st = h * (k + (a - values[k]) / (values[k + 1] - values[k]))
        else:
            st = 0.0
            j = k - 1
            while j >= 0:
                if values[j] <= a:
                    st = h * (j + (a - values[j]) / (values[j + 1] - values[j]))
                    best = max(best, seg_max[j])
                    break
                if seg_min[j] < a:
                    st = h * (j + 0.5)
                    break
                best = max(best, seg_max[j])
                j -= 1
        if dip and s < mid:
            fi = mid
        elif values[k + 1] <= a:
            fi = h * (k + (values[k] - a) / (values[k] - values[k + 1]))
        else:
            fi = h * N
            j = k + 1
            while j < N:
                if values[j + 1] <= a:
                    fi = h * (j + (values[j] - a) / (values[j] - values[j + 1]))
                    best = max(best, seg_max[j])
                    break
                if seg_min[j] < a:
                    fi = h * (j + 0.5)
                    break
                best = max(best, seg_max[j])
                j += 1
        start[q] = st
        finish[q] = fi
        top[q] = best
    return start, finish, top
