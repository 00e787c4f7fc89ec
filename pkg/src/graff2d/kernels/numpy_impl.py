"""Pure-numpy reference implementations of the hot kernels.

Selected when GRAFF_NUMBA=0 or numba is unavailable. Same signatures and
algorithms as kernels.numba_impl; slower on the loop-heavy paths.
"""
import numpy as np

BIG = 1e30


def edt_sqdist(occ):
    """Exact squared Euclidean distance (in cells) to the nearest set cell.

    occ: 2D 0/1 array. Cells with no seed anywhere stay at >= BIG.
    Two-pass algorithm: vertical sweep, then per-row lower-envelope of
    parabolas over the squared vertical distances.
    """
    h, w = occ.shape
    g = np.where(occ != 0, 0.0, BIG)
    for i in range(1, h):
        g[i] = np.minimum(g[i], g[i - 1] + 1.0)
    for i in range(h - 2, -1, -1):
        g[i] = np.minimum(g[i], g[i + 1] + 1.0)
    gsq = np.where(g >= BIG, BIG, g * g)

    out = np.empty((h, w), dtype=np.float64)
    v = np.zeros(w + 1, dtype=np.int64)
    z = np.zeros(w + 2, dtype=np.float64)
    for i in range(h):
        f = gsq[i]
        k = 0
        v[0] = 0
        z[0] = -np.inf
        z[1] = np.inf
        for q in range(1, w):
            if f[q] >= BIG:
                continue
            s = _intersect(f, q, v[k])
            while s <= z[k]:
                k -= 1
                s = _intersect(f, q, v[k])
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        k = 0
        for q in range(w):
            while z[k + 1] < q:
                k += 1
            d = f[v[k]]
            out[i, q] = BIG if d >= BIG else (q - v[k]) ** 2 + d
    return out


def _intersect(f, q, p):
    if f[p] >= BIG:
        return -np.inf
    return ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p)


def chamfer_dist(a, b):
    """Symmetric mean nearest-neighbour distance between two point sets."""
    d = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def pairwise_dist(a, b):
    """All-pairs Euclidean distances, shape (len(a), len(b))."""
    return np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2))


def polygon_sdf(points, verts):
    """Signed distance from each point to a CCW simple polygon.

    Returns (sd, closest, normal): sd negative inside, closest boundary
    point, outward unit normal at that boundary point.
    """
    p = np.asarray(points, dtype=np.float64)
    a = np.asarray(verts, dtype=np.float64)
    b = np.roll(a, -1, axis=0)
    e = b - a                                    # (V,2)
    elen2 = np.maximum((e * e).sum(axis=1), 1e-30)

    diff = p[:, None, :] - a[None, :, :]         # (P,V,2)
    t = np.clip((diff * e[None, :, :]).sum(axis=2) / elen2[None, :], 0.0, 1.0)
    proj = a[None, :, :] + t[:, :, None] * e[None, :, :]
    d2 = ((p[:, None, :] - proj) ** 2).sum(axis=2)
    idx = d2.argmin(axis=1)
    rows = np.arange(len(p))
    closest = proj[rows, idx]
    dist = np.sqrt(d2[rows, idx])

    # even-odd crossing parity for the inside test (upward ray)
    ay, by = a[:, 1], b[:, 1]
    cond = (ay[None, :] > p[:, 1:2]) != (by[None, :] > p[:, 1:2])
    denom = np.where(np.abs(by - ay) < 1e-30, 1e-30, by - ay)
    xint = a[None, :, 0] + (p[:, 1:2] - ay[None, :]) * (b[:, 0] - a[:, 0])[None, :] / denom[None, :]
    inside = ((cond & (xint > p[:, 0:1])).sum(axis=1) % 2) == 1
    sd = np.where(inside, -dist, dist)

    normal = np.zeros_like(closest)
    far = dist > 1e-12
    normal[far] = (p[far] - closest[far]) / dist[far, None]
    normal[inside & far] *= -1.0
    if not far.all():
        # point on the boundary: use the owning edge's outward normal
        en = np.stack([e[:, 1], -e[:, 0]], axis=1)
        en /= np.sqrt(elen2)[:, None]
        normal[~far] = en[idx[~far]]
    return sd, closest, normal


def raster_polygon(verts_px, h, w):
    """Even-odd scanline fill of a polygon given in pixel coordinates.

    verts_px columns are (x=col, y=row); a cell (r, c) is set when its
    center (c+0.5, r+0.5) is inside.
    """
    out = np.zeros((h, w), dtype=np.uint8)
    a = np.asarray(verts_px, dtype=np.float64)
    b = np.roll(a, -1, axis=0)
    ay, by = a[:, 1], b[:, 1]
    for r in range(h):
        y = r + 0.5
        cross = (ay > y) != (by > y)
        if not cross.any():
            continue
        denom = by[cross] - ay[cross]
        xs = np.sort(a[cross, 0] + (y - ay[cross]) * (b[cross, 0] - a[cross, 0]) / denom)
        for k in range(0, len(xs) - 1, 2):
            c0 = int(np.ceil(xs[k] - 0.5))
            c1 = int(np.floor(xs[k + 1] - 0.5 - 1e-12))
            if c1 >= 0 and c0 <= w - 1:
                out[r, max(c0, 0):min(c1, w - 1) + 1] = 1
    return out


def raster_disks(pts_px, radius, h, w):
    """Set every cell whose center lies within `radius` of any point."""
    out = np.zeros((h, w), dtype=np.uint8)
    r2 = radius * radius
    for x, y in np.asarray(pts_px, dtype=np.float64):
        c0 = max(int(np.floor(x - radius - 0.5)), 0)
        c1 = min(int(np.ceil(x + radius - 0.5)), w - 1)
        r0 = max(int(np.floor(y - radius - 0.5)), 0)
        r1 = min(int(np.ceil(y + radius - 0.5)), h - 1)
        if c1 < c0 or r1 < r0:
            continue
        cc, rr = np.meshgrid(np.arange(c0, c1 + 1), np.arange(r0, r1 + 1))
        hit = (cc + 0.5 - x) ** 2 + (rr + 0.5 - y) ** 2 <= r2
        out[r0:r1 + 1, c0:c1 + 1] |= hit.astype(np.uint8)
    return out


def cone_feasible(wmat, target, tol=1e-9):
    """Feasibility of  W @ lam = target,  lam >= 0  (phase-1 simplex, Bland).

    wmat: (3, K) generator wrenches; target: (3,).
    """
    wmat = np.asarray(wmat, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64).copy()
    m, k = wmat.shape
    scale = max(1.0, float(np.abs(t).max()), float(np.abs(wmat).max()) if k else 1.0)
    eps = tol * scale

    tab = np.zeros((m, k + m + 1), dtype=np.float64)
    tab[:, :k] = wmat
    tab[:, k + m] = t
    for i in range(m):
        if tab[i, k + m] < 0.0:
            tab[i] = -tab[i]
        tab[i, k + i] = 1.0
    basis = np.arange(k, k + m)

    # reduced-cost row for minimizing the artificial sum
    z = np.zeros(k + m + 1)
    for i in range(m):
        z -= tab[i]
    for _ in range(400):
        enter = -1
        for j in range(k + m):
            if j not in basis and z[j] < -eps:
                enter = j
                break
        if enter < 0:
            break
        leave, best = -1, np.inf
        for i in range(m):
            if tab[i, enter] > eps:
                ratio = tab[i, k + m] / tab[i, enter]
                if ratio < best - 1e-15 or (abs(ratio - best) <= 1e-15 and (leave < 0 or basis[i] < basis[leave])):
                    best, leave = ratio, i
        if leave < 0:
            break  # unbounded entering column: cannot improve feasibility this way
        piv = tab[leave, enter]
        tab[leave] /= piv
        for i in range(m):
            if i != leave and tab[i, enter] != 0.0:
                tab[i] -= tab[i, enter] * tab[leave]
        z -= z[enter] * tab[leave]
        basis[leave] = enter
    resid = sum(tab[i, k + m] for i in range(m) if basis[i] >= k)
    return bool(resid <= max(eps, tol * scale))


def im2col(x, kh, kw, sh, sw, ph, pw):
    """Extract conv patches: (B,C,H,W) -> (B,OH,OW,C*kh*kw)."""
    b, c, h, w = x.shape
    if ph or pw:
        xp = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=x.dtype)
        xp[:, :, ph:ph + h, pw:pw + w] = x
    else:
        xp = x
    hp, wp = xp.shape[2], xp.shape[3]
    oh = (hp - kh) // sh + 1
    ow = (wp - kw) // sw + 1
    s = xp.strides
    shape = (b, c, oh, ow, kh, kw)
    strides = (s[0], s[1], s[2] * sh, s[3] * sw, s[2], s[3])
    patches = np.lib.stride_tricks.as_strided(xp, shape=shape, strides=strides)
    return np.ascontiguousarray(patches.transpose(0, 2, 3, 1, 4, 5)).reshape(b, oh, ow, c * kh * kw)


def col2im_add(cols, c, h, w, kh, kw, sh, sw, ph, pw):
    """Scatter-add conv patches back to input shape (backward of im2col)."""
    b, oh, ow, _ = cols.shape
    hp, wp = h + 2 * ph, w + 2 * pw
    xp = np.zeros((b, c, hp, wp), dtype=cols.dtype)
    patches = cols.reshape(b, oh, ow, c, kh, kw)
    for i in range(kh):
        for j in range(kw):
            xp[:, :, i:i + oh * sh:sh, j:j + ow * sw:sw] += patches[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return xp[:, :, ph:ph + h, pw:pw + w] if (ph or pw) else xp
