"""Numba-compiled hot kernels. Same contracts as kernels.numpy_impl."""
import numpy as np
from numba import njit

BIG = 1e30


@njit(cache=True)
def edt_sqdist(occ):
    h, w = occ.shape
    g = np.empty((h, w), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            g[i, j] = 0.0 if occ[i, j] != 0 else BIG
    for i in range(1, h):
        for j in range(w):
            if g[i - 1, j] + 1.0 < g[i, j]:
                g[i, j] = g[i - 1, j] + 1.0
    for i in range(h - 2, -1, -1):
        for j in range(w):
            if g[i + 1, j] + 1.0 < g[i, j]:
                g[i, j] = g[i + 1, j] + 1.0

    out = np.empty((h, w), dtype=np.float64)
    v = np.zeros(w + 1, dtype=np.int64)
    z = np.zeros(w + 2, dtype=np.float64)
    f = np.empty(w, dtype=np.float64)
    for i in range(h):
        for j in range(w):
            gv = g[i, j]
            f[j] = BIG if gv >= BIG else gv * gv
        k = 0
        v[0] = 0
        z[0] = -np.inf
        z[1] = np.inf
        for q in range(1, w):
            if f[q] >= BIG:
                continue
            while True:
                p = v[k]
                if f[p] >= BIG:
                    s = -np.inf
                else:
                    s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * q - 2.0 * p)
                if s <= z[k]:
                    k -= 1
                else:
                    break
            k += 1
            v[k] = q
            z[k] = s
            z[k + 1] = np.inf
        k = 0
        for q in range(w):
            while z[k + 1] < q:
                k += 1
            d = f[v[k]]
            out[i, q] = BIG if d >= BIG else (q - v[k]) * (q - v[k]) + d
    return out


@njit(cache=True)
def chamfer_dist(a, b):
    m = a.shape[0]
    n = b.shape[0]
    acc_a = 0.0
    for i in range(m):
        best = np.inf
        for j in range(n):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            d = dx * dx + dy * dy
            if d < best:
                best = d
        acc_a += np.sqrt(best)
    acc_b = 0.0
    for j in range(n):
        best = np.inf
        for i in range(m):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            d = dx * dx + dy * dy
            if d < best:
                best = d
        acc_b += np.sqrt(best)
    return acc_a / m + acc_b / n


@njit(cache=True)
def pairwise_dist(a, b):
    m = a.shape[0]
    n = b.shape[0]
    out = np.empty((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            dx = a[i, 0] - b[j, 0]
            dy = a[i, 1] - b[j, 1]
            out[i, j] = np.sqrt(dx * dx + dy * dy)
    return out


@njit(cache=True)
def polygon_sdf(points, verts):
    p_n = points.shape[0]
    v_n = verts.shape[0]
    sd = np.empty(p_n, dtype=np.float64)
    closest = np.empty((p_n, 2), dtype=np.float64)
    normal = np.empty((p_n, 2), dtype=np.float64)
    for ip in range(p_n):
        px = points[ip, 0]
        py = points[ip, 1]
        best = np.inf
        bx = 0.0
        by = 0.0
        bedge = 0
        crossings = 0
        for iv in range(v_n):
            ax = verts[iv, 0]
            ay = verts[iv, 1]
            jv = iv + 1 if iv + 1 < v_n else 0
            bx2 = verts[jv, 0]
            by2 = verts[jv, 1]
            ex = bx2 - ax
            ey = by2 - ay
            el2 = ex * ex + ey * ey
            if el2 < 1e-30:
                el2 = 1e-30
            t = ((px - ax) * ex + (py - ay) * ey) / el2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            cx = ax + t * ex
            cy = ay + t * ey
            dx = px - cx
            dy = py - cy
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
                bx = cx
                by = cy
                bedge = iv
            if (ay > py) != (by2 > py):
                denom = by2 - ay
                xint = ax + (py - ay) * ex / denom
                if xint > px:
                    crossings += 1
        dist = np.sqrt(best)
        inside = (crossings % 2) == 1
        closest[ip, 0] = bx
        closest[ip, 1] = by
        if dist > 1e-12:
            nx = (px - bx) / dist
            ny = (py - by) / dist
            if inside:
                nx = -nx
                ny = -ny
            normal[ip, 0] = nx
            normal[ip, 1] = ny
        else:
            jv = bedge + 1 if bedge + 1 < v_n else 0
            ex = verts[jv, 0] - verts[bedge, 0]
            ey = verts[jv, 1] - verts[bedge, 1]
            el = np.sqrt(ex * ex + ey * ey)
            normal[ip, 0] = ey / el
            normal[ip, 1] = -ex / el
        sd[ip] = -dist if inside else dist
    return sd, closest, normal


@njit(cache=True)
def raster_polygon(verts_px, h, w):
    out = np.zeros((h, w), dtype=np.uint8)
    v_n = verts_px.shape[0]
    xs = np.empty(v_n, dtype=np.float64)
    for r in range(h):
        y = r + 0.5
        k = 0
        for iv in range(v_n):
            ay = verts_px[iv, 1]
            jv = iv + 1 if iv + 1 < v_n else 0
            by = verts_px[jv, 1]
            if (ay > y) != (by > y):
                ax = verts_px[iv, 0]
                bx = verts_px[jv, 0]
                xs[k] = ax + (y - ay) * (bx - ax) / (by - ay)
                k += 1
        if k == 0:
            continue
        sub = np.sort(xs[:k])
        for m in range(0, k - 1, 2):
            c0 = int(np.ceil(sub[m] - 0.5))
            c1 = int(np.floor(sub[m + 1] - 0.5 - 1e-12))
            if c0 < 0:
                c0 = 0
            if c1 > w - 1:
                c1 = w - 1
            for c in range(c0, c1 + 1):
                out[r, c] = 1
    return out


@njit(cache=True)
def raster_disks(pts_px, radius, h, w):
    out = np.zeros((h, w), dtype=np.uint8)
    r2 = radius * radius
    for ip in range(pts_px.shape[0]):
        x = pts_px[ip, 0]
        y = pts_px[ip, 1]
        c0 = int(np.floor(x - radius - 0.5))
        c1 = int(np.ceil(x + radius - 0.5))
        r0 = int(np.floor(y - radius - 0.5))
        r1 = int(np.ceil(y + radius - 0.5))
        if c0 < 0:
            c0 = 0
        if r0 < 0:
            r0 = 0
        if c1 > w - 1:
            c1 = w - 1
        if r1 > h - 1:
            r1 = h - 1
        for r in range(r0, r1 + 1):
            for c in range(c0, c1 + 1):
                dx = c + 0.5 - x
                dy = r + 0.5 - y
                if dx * dx + dy * dy <= r2:
                    out[r, c] = 1
    return out


@njit(cache=True)
def cone_feasible(wmat, target, tol=1e-9):
    m = wmat.shape[0]
    k = wmat.shape[1]
    scale = 1.0
    for i in range(m):
        if abs(target[i]) > scale:
            scale = abs(target[i])
        for j in range(k):
            if abs(wmat[i, j]) > scale:
                scale = abs(wmat[i, j])
    eps = tol * scale

    ncol = k + m + 1
    tab = np.zeros((m, ncol), dtype=np.float64)
    for i in range(m):
        flip = -1.0 if target[i] < 0.0 else 1.0
        for j in range(k):
            tab[i, j] = flip * wmat[i, j]
        tab[i, k + m] = flip * target[i]
        tab[i, k + i] = 1.0
    basis = np.empty(m, dtype=np.int64)
    in_basis = np.zeros(k + m, dtype=np.uint8)
    for i in range(m):
        basis[i] = k + i
        in_basis[k + i] = 1

    z = np.zeros(ncol, dtype=np.float64)
    for i in range(m):
        for j in range(ncol):
            z[j] -= tab[i, j]

    for _ in range(400):
        enter = -1
        for j in range(k + m):
            if in_basis[j] == 0 and z[j] < -eps:
                enter = j
                break
        if enter < 0:
            break
        leave = -1
        best = np.inf
        for i in range(m):
            if tab[i, enter] > eps:
                ratio = tab[i, k + m] / tab[i, enter]
                if ratio < best - 1e-15 or (abs(ratio - best) <= 1e-15 and (leave < 0 or basis[i] < basis[leave])):
                    best = ratio
                    leave = i
        if leave < 0:
            break
        piv = tab[leave, enter]
        for j in range(ncol):
            tab[leave, j] /= piv
        for i in range(m):
            if i != leave and tab[i, enter] != 0.0:
                factor = tab[i, enter]
                for j in range(ncol):
                    tab[i, j] -= factor * tab[leave, j]
        zf = z[enter]
        for j in range(ncol):
            z[j] -= zf * tab[leave, j]
        in_basis[basis[leave]] = 0
        in_basis[enter] = 1
        basis[leave] = enter

    resid = 0.0
    for i in range(m):
        if basis[i] >= k:
            resid += tab[i, k + m]
    return resid <= (eps if eps > tol * scale else tol * scale)


@njit(cache=True)
def im2col(x, kh, kw, sh, sw, ph, pw):
    b, c, h, w = x.shape
    oh = (h + 2 * ph - kh) // sh + 1
    ow = (w + 2 * pw - kw) // sw + 1
    out = np.zeros((b, oh, ow, c * kh * kw), dtype=x.dtype)
    for ib in range(b):
        for oy in range(oh):
            iy0 = oy * sh - ph
            for ox in range(ow):
                ix0 = ox * sw - pw
                col = 0
                for ic in range(c):
                    for ky in range(kh):
                        iy = iy0 + ky
                        if iy < 0 or iy >= h:
                            col += kw
                            continue
                        for kx in range(kw):
                            ix = ix0 + kx
                            if 0 <= ix < w:
                                out[ib, oy, ox, col] = x[ib, ic, iy, ix]
                            col += 1
    return out


@njit(cache=True)
def col2im_add(cols, c, h, w, kh, kw, sh, sw, ph, pw):
    b, oh, ow, _ = cols.shape
    out = np.zeros((b, c, h, w), dtype=cols.dtype)
    for ib in range(b):
        for oy in range(oh):
            iy0 = oy * sh - ph
            for ox in range(ow):
                ix0 = ox * sw - pw
                col = 0
                for ic in range(c):
                    for ky in range(kh):
                        iy = iy0 + ky
                        if iy < 0 or iy >= h:
                            col += kw
                            continue
                        for kx in range(kw):
                            ix = ix0 + kx
                            if 0 <= ix < w:
                                out[ib, ic, iy, ix] += cols[ib, oy, ox, col]
                            col += 1
    return out
