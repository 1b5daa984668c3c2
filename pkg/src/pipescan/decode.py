"""Camera-to-projector correspondences from one image of the spot pattern.

The chain is: local-adaptive binarization -> connected-component spot
centroids -> lattice indexing (recovering integer grid coordinates for every
spot) -> per-anchor window occupancy -> codebook lookup with single-bit
error correction.

Lattice indexing is the invented part of this chain: spot images carry no
explicit grid, so the two shortest lattice generators are estimated by
integer-division voting over neighbor offsets, and indices are then grown
breadth-first from a central seed with locally refined basis vectors.
Windows whose site positions cannot be predicted confidently are skipped
rather than guessed.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .pattern import Codebook

DEFAULT_BINARIZE_WINDOW = 25
DEFAULT_BINARIZE_K = -0.2
DEFAULT_CELL_SIZE = (12.0, 8.0)   # (row pitch, col pitch) in projector px

# pipeline defaults: bright Gaussian spots on a darker background call for a
# positive k (threshold above the local mean; a negative k dips below the
# background in windows that catch only a sliver of spot energy and halos
# every spot), a pre-smoothing pass so pixel noise cannot cross the
# threshold on its own, and a floor on component size
PIPELINE_BINARIZE_WINDOW = 15
PIPELINE_BINARIZE_K = 4.0
PIPELINE_SMOOTH_SIGMA = 1.0
PIPELINE_MIN_AREA = 4


class LatticeAmbiguous(Exception):
    """Spot lattice directions could not be recovered."""


@dataclass
class Correspondence:
    """One decoded camera spot with its projector-pixel position."""

    cam_px: np.ndarray          # (x, y) sub-pixel centroid, camera image
    proj_px: np.ndarray         # (x, y) projector pixel of the pattern cell
    hamming_flips: int = 0
    pattern_pos: tuple[int, int] | None = None   # (row, col) window anchor

    def __post_init__(self):
        self.cam_px = np.asarray(self.cam_px, dtype=float)
        self.proj_px = np.asarray(self.proj_px, dtype=float)


@dataclass
class DecodeStats:
    n_components: int = 0
    n_spots: int = 0
    n_dropped_merged: int = 0
    n_dropped_conflict: int = 0
    n_windows_tried: int = 0
    n_decoded: int = 0
    n_corrected: int = 0
    n_rejected: int = 0


@dataclass
class SpotGrid:
    """Sub-pixel spot centroids indexed on the recovered integer lattice."""

    spots: dict[tuple[int, int], np.ndarray]   # (i, j) -> (x, y) centroid
    basis: np.ndarray                          # columns: col-step, row-step
    image_shape: tuple[int, int]               # (height, width)
    stats: DecodeStats = field(default_factory=DecodeStats)

    def __len__(self) -> int:
        return len(self.spots)

    def occupancy_word(self, anchor: tuple[int, int],
                       window: tuple[int, int]) -> int:
        """Window occupancy bits, row-major, MSB at the anchor site."""
        i0, j0 = anchor
        word = 0
        for di in range(window[0]):
            for dj in range(window[1]):
                word = (word << 1) | ((i0 + di, j0 + dj) in self.spots)
        return word


def binarize(image: np.ndarray, window: int = DEFAULT_BINARIZE_WINDOW,
             k: float = DEFAULT_BINARIZE_K) -> np.ndarray:
    """Local-adaptive threshold: ON iff intensity > mean + k * std.

    Mean and standard deviation are taken over a window x window
    neighborhood, clamped at the image boundary (``ndimage.uniform_filter``
    with nearest-edge handling).
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    img = np.asarray(image, dtype=np.float64)
    mean = ndimage.uniform_filter(img, size=window, mode="nearest")
    sq = ndimage.uniform_filter(img * img, size=window, mode="nearest")
    var = np.maximum(sq - mean * mean, 0.0)
    # the epsilon keeps exact ties (flat regions, where the filtered mean
    # equals the pixel up to rounding) strictly below the threshold
    eps = 1e-9 * max(1.0, float(np.abs(img).max(initial=0.0)))
    thresh = mean + k * np.sqrt(var) + eps
    return (img > thresh).astype(np.uint8)


def _spot_centroids(binary: np.ndarray, image: np.ndarray, stats: DecodeStats,
                    min_area: int = 1):
    """Connected components -> intensity-weighted centroids (x, y).

    Components touching the image border are fragments of spots whose
    centers may lie outside the frame; their centroids are biased, so they
    are discarded along with oversized (merged) and undersized (noise)
    components.
    """
    labels, n = ndimage.label(binary, structure=np.ones((3, 3), dtype=int))
    stats.n_components = int(n)
    if n == 0:
        return np.zeros((0, 2))
    areas = ndimage.sum_labels(np.ones_like(binary), labels,
                               index=np.arange(1, n + 1))
    big = areas >= min_area
    med_area = np.median(areas[big]) if big.any() else 1.0
    keep = big & (areas <= 3.0 * max(med_area, 1.0))
    stats.n_dropped_merged = int((big & ~keep).sum())
    border = np.unique(np.concatenate([
        labels[0], labels[-1], labels[:, 0], labels[:, -1]]))
    keep[border[border > 0] - 1] = False
    idx = np.arange(1, n + 1)[keep]
    if idx.size == 0:
        return np.zeros((0, 2))
    cy, cx = zip(*ndimage.center_of_mass(np.asarray(image, float),
                                         labels, index=idx))
    stats.n_spots = len(idx)
    return np.column_stack([cx, cy]).astype(float)


def _basis_score(u, v, offs, tol: float = 0.22) -> float:
    """How many local offsets are small integer combinations of (u, v).

    The coefficient bound penalizes half-pitch bases (coefficients double)
    and the fractional tolerance rejects doubled ones (odd steps land half
    way), so the consensus maximum sits at the true pitch pair.
    """
    M = np.column_stack([u, v])
    det = abs(np.linalg.det(M))
    lu, lv = np.hypot(*u), np.hypot(*v)
    if det < 0.25 * lu * lv or min(lu, lv) < 3.0:
        return -1.0
    ab = offs @ np.linalg.inv(M).T
    frac = np.abs(ab - np.round(ab)).max(axis=1)
    small = np.abs(np.round(ab)).max(axis=1) <= 4
    return float(((frac < tol) & small).sum()) + 1.0 / (lu + lv)


def _refine_basis(M: np.ndarray, offs: np.ndarray) -> np.ndarray:
    """Pull a rough basis onto the offset consensus by iterated refitting.

    Candidate generators built from offset differences inherit the local
    perspective gradient; assigning integer steps and least-squares
    refitting against all consistent offsets removes that bias.
    """
    for _ in range(3):
        ab = offs @ np.linalg.inv(M).T
        steps = np.round(ab)
        frac = np.abs(ab - steps).max(axis=1)
        keep = (frac < 0.25) & (np.abs(steps).max(axis=1) <= 4)
        if keep.sum() < 4:
            break
        fit, *_ = np.linalg.lstsq(steps[keep], offs[keep], rcond=None)
        M_new = fit.T
        if abs(np.linalg.det(M_new)) < 9.0:
            break
        if np.allclose(M_new, M, atol=1e-6):
            M = M_new
            break
        M = M_new
    return M


def _estimate_basis(pts: np.ndarray) -> np.ndarray:
    """Two lattice generators of the spot grid near its center.

    Offsets between spots in a small central cluster are integer
    combinations of the pitch vectors.  Candidate generator pairs are drawn
    from the shortest offsets and their pairwise differences (single-pitch
    steps never occur directly: isolated spots cannot occupy adjacent
    sites) and scored by consensus over all local offsets.
    """
    tree = cKDTree(pts)
    center = pts.mean(axis=0)
    seed = int(np.argmin(np.hypot(*(pts - center).T)))
    k = min(len(pts), 13)
    dist, idx = tree.query(pts[seed], k=k)
    cluster = pts[idx]
    offs = []
    for i in range(len(cluster)):
        for j in range(i + 1, len(cluster)):
            o = cluster[j] - cluster[i]
            if o[0] < 0 or (o[0] == 0 and o[1] < 0):
                o = -o
            offs.append(o)
    offs = np.asarray(offs)
    if len(offs) < 6:
        raise LatticeAmbiguous("too few spot pairs to estimate the lattice")
    norms = np.hypot(offs[:, 0], offs[:, 1])
    med = np.median(norms)
    offs = offs[norms <= 2.2 * med]
    # hypothesis pool: short offsets, their halves (even-step offsets halve
    # to unbiased single-pitch generators), and their differences
    base = offs[np.argsort(np.hypot(offs[:, 0], offs[:, 1]))[:12]]
    pool = list(base) + [b / 2.0 for b in base]
    for i in range(len(base)):
        for j in range(len(base)):
            if i == j:
                continue
            d = base[i] - base[j]
            if 3.0 <= np.hypot(*d) <= 1.4 * med:
                pool.append(d)
    pool.sort(key=lambda v: float(np.hypot(*v)))
    pool = pool[:36]
    scored = []
    for i in range(len(pool)):
        for j in range(i + 1, len(pool)):
            s = _basis_score(pool[i], pool[j], offs, tol=0.25)
            if s > 0:
                scored.append((s, i, j))
    if not scored:
        raise LatticeAmbiguous("no consistent lattice directions")
    scored.sort(key=lambda t: -t[0])
    best, best_score = None, 0.0
    for s, i, j in scored[:8]:
        M = _refine_basis(np.column_stack([pool[i], pool[j]]), offs)
        s2 = _basis_score(M[:, 0], M[:, 1], offs, tol=0.18)
        if s2 > best_score:
            best_score, best = s2, M
    if best is None:
        raise LatticeAmbiguous("no consistent lattice directions")
    u, v = best[:, 0], best[:, 1]
    # Gauss reduction to the two shortest generators
    for _ in range(8):
        if np.hypot(*u) < np.hypot(*v):
            u, v = v, u
        q = np.round(np.dot(u, v) / max(np.dot(v, v), 1e-12))
        u2 = u - q * v
        if np.hypot(*u2) >= np.hypot(*u) - 1e-9:
            break
        u = u2
    # order and orient: first column roughly +x, second roughly +y
    v1, v2 = (u, v) if abs(u[0]) >= abs(v[0]) else (v, u)
    if v1[0] < 0:
        v1 = -v1
    if v2[1] < 0:
        v2 = -v2
    return np.column_stack([v1, v2])   # maps (col steps, row steps) -> px


def _fit_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray | None:
    """DLT homography mapping src (N,2) -> dst (N,2), N >= 4."""
    def normalize(x):
        c = x.mean(axis=0)
        s = np.sqrt(2.0) / max(np.mean(np.linalg.norm(x - c, axis=1)), 1e-12)
        T = np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])
        return (x - c) * s, T

    s_n, Ts = normalize(np.asarray(src, float))
    d_n, Td = normalize(np.asarray(dst, float))
    rows = []
    for (x, y), (u, v) in zip(s_n, d_n):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    _, sv, vt = np.linalg.svd(np.asarray(rows))
    if sv[-2] < 1e-10:
        return None
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) < 1e-12:
        return None
    return H / H[2, 2]


def _bridge_gaps(pts, tree, index_of, pos_of, local_basis, conflicted):
    """Index spots beyond walking range of the indexed region.

    For each unindexed spot, a homography fit on the indexed spots around
    it (exact for a plane, locally accurate on curved surfaces) predicts a
    continuous lattice coordinate; near-integer predictions are committed
    so the breadth-first walk can continue from them.
    """
    added = []
    for q in range(len(pts)):
        if q in index_of or q in conflicted:
            continue
        # nearest indexed spot supplies the local scale
        dists, order = tree.query(pts[q], k=min(len(pts), 60))
        order = np.atleast_1d(order)
        anchor = next((int(i) for i in order if int(i) in index_of), None)
        if anchor is None:
            continue
        B = local_basis[anchor]
        r_local = 8.0 * max(np.hypot(*B[:, 0]), np.hypot(*B[:, 1]))
        nbr = [r for r in tree.query_ball_point(pts[q], r=r_local)
               if r in index_of]
        if len(nbr) < 6:
            continue
        src = pts[np.array(nbr)]
        dst = np.array([[index_of[r][1], index_of[r][0]] for r in nbr],
                       dtype=float)
        H = _fit_homography(src, dst)
        if H is None:
            continue
        v = H @ np.array([pts[q][0], pts[q][1], 1.0])
        if abs(v[2]) < 1e-12:
            continue
        ab = v[:2] / v[2]
        ra, rb = np.round(ab)
        ai, aj = index_of[anchor]
        if max(abs(rb - ai), abs(ra - aj)) > 8:
            continue
        if abs(ab[0] - ra) > 0.3 or abs(ab[1] - rb) > 0.3:
            continue
        qidx = (int(rb), int(ra))
        other = pos_of.get(qidx)
        if other is not None and other != q:
            continue
        index_of[q] = qidx
        pos_of[qidx] = q
        local_basis[q] = B
        added.append(q)
    return added


def extract_spots(binary: np.ndarray, image: np.ndarray | None = None,
                  min_area: int = 1) -> SpotGrid:
    """Spot centroids organized on the recovered integer lattice.

    ``image`` supplies intensities for sub-pixel weighting; the binary mask
    itself is used when omitted.  Components smaller than ``min_area``
    pixels are treated as noise.
    """
    binary = np.asarray(binary)
    if image is None:
        image = binary.astype(float)
    stats = DecodeStats()
    pts = _spot_centroids(binary, image, stats, min_area=min_area)
    if len(pts) == 0:
        return SpotGrid({}, np.eye(2), binary.shape, stats)
    if len(pts) == 1:
        return SpotGrid({(0, 0): pts[0]}, np.eye(2), binary.shape, stats)
    basis = _estimate_basis(pts)
    tree = cKDTree(pts)

    index_of = {}
    pos_of = {}
    local_basis = {}
    conflicted = set()
    seed = int(np.argmin(np.hypot(*(pts - pts.mean(axis=0)).T)))
    index_of[seed] = (0, 0)
    pos_of[(0, 0)] = seed
    local_basis[seed] = basis
    queue = [seed]
    qi = 0
    while qi < len(queue):
        p = queue[qi]
        qi += 1
        B = local_basis[p]
        try:
            binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            continue
        # short edges only: the lattice warps across the image, so a local
        # basis is trusted for at most two steps from its anchor
        r_local = 2.7 * max(np.hypot(*B[:, 0]), np.hypot(*B[:, 1]))
        near = tree.query_ball_point(pts[p], r=r_local)
        ip, jp = index_of[p]
        for q in near:
            if q == p:
                continue
            ab = binv @ (pts[q] - pts[p])
            ra, rb = np.round(ab)
            if max(abs(ra), abs(rb)) > 2:
                continue
            if abs(ab[0] - ra) > 0.22 or abs(ab[1] - rb) > 0.22:
                continue
            qidx = (int(ip + rb), int(jp + ra))
            if q in index_of:
                if index_of[q] != qidx:
                    conflicted.add(q)
                continue
            other = pos_of.get(qidx)
            if other is not None and other != q:
                conflicted.add(q)
                conflicted.add(other)
                continue
            index_of[q] = qidx
            pos_of[qidx] = q
            # refit the basis around q from its indexed neighbors so the
            # frontier tracks the perspective drift of the lattice
            nbr = [r for r in tree.query_ball_point(pts[q], r=1.2 * r_local)
                   if r in index_of and r != q]
            local_basis[q] = B
            if len(nbr) >= 3:
                didx = np.array([[index_of[r][1] - qidx[1],
                                  index_of[r][0] - qidx[0]] for r in nbr],
                                dtype=float)
                dpos = pts[np.array(nbr)] - pts[q]
                sol, *_ = np.linalg.lstsq(didx, dpos, rcond=None)
                newB = sol.T
                det_ratio = abs(np.linalg.det(newB)) / max(
                    abs(np.linalg.det(B)), 1e-12)
                if 0.3 < det_ratio < 3.0:
                    local_basis[q] = newB
            queue.append(q)
        if qi == len(queue):
            # bridge across holes wider than two steps: predict the lattice
            # coordinate of an unindexed spot from an affine fit over the
            # indexed spots around it, then resume the walk from there
            bridged = _bridge_gaps(pts, tree, index_of, pos_of, local_basis,
                                   conflicted)
            queue.extend(bridged)
    stats.n_dropped_conflict = len(conflicted)
    spots = {}
    for q, idx in index_of.items():
        if q not in conflicted:
            spots[idx] = pts[q]
    return SpotGrid(spots, basis, binary.shape, stats)


def _window_valid(grid: SpotGrid, anchor, window, margin=1.0):
    """Check the window's 36 predicted site positions are in the image.

    A local affine frame is fitted to the indexed spots in and around the
    window; empty sites are then predicted through it.  Windows whose frame
    cannot be fitted, fits poorly, or extends outside the image are skipped.
    """
    i0, j0 = anchor
    h, w = window
    pts_idx = []
    pts_xy = []
    for (i, j), xy in grid.spots.items():
        if i0 - 1 <= i <= i0 + h and j0 - 1 <= j <= j0 + w:
            pts_idx.append((j, i, 1.0))
            pts_xy.append(xy)
    if len(pts_idx) < 4:
        return False
    A = np.asarray(pts_idx, dtype=float)
    Y = np.asarray(pts_xy, dtype=float)
    sol, *_ = np.linalg.lstsq(A, Y, rcond=None)
    resid = A @ sol - Y
    pitch = min(np.hypot(*grid.basis[:, 0]), np.hypot(*grid.basis[:, 1]))
    if np.hypot(resid[:, 0], resid[:, 1]).max() > 0.35 * pitch:
        return False
    H, W = grid.image_shape
    for di in range(h):
        for dj in range(w):
            x, y = np.array([j0 + dj, i0 + di, 1.0]) @ sol
            if not (margin <= x <= W - 1 - margin
                    and margin <= y <= H - 1 - margin):
                return False
    return True


def decode_correspondences(grid: SpotGrid, codebook: Codebook,
                           cell_size=DEFAULT_CELL_SIZE,
                           allow_correction: bool = True,
                           stats: DecodeStats | None = None
                           ) -> list[Correspondence]:
    """Look up each spot-anchored window; emit decoded correspondences.

    Every indexed spot anchors one window (top-left site).  The window's
    occupancy word is matched in the codebook, exactly or with one corrected
    bit flip unless ``allow_correction`` is off.  The correspondence carries
    the anchor spot's camera centroid and the matched pattern cell center in
    projector pixels.
    """
    stats = stats if stats is not None else grid.stats
    window = codebook.window
    try:
        ch, cw = float(cell_size[0]), float(cell_size[1])
    except TypeError:
        ch = cw = float(cell_size)
    hits = []
    max_flips = None if allow_correction else 0
    for anchor in sorted(grid.spots):
        stats.n_windows_tried += 1
        if not _window_valid(grid, anchor, window):
            stats.n_rejected += 1
            continue
        word = grid.occupancy_word(anchor, window)
        hit = codebook.lookup(word, max_flips=max_flips)
        if hit is None:
            stats.n_rejected += 1
            continue
        hits.append((anchor, hit))
    # all windows view one periodic pattern, so the pattern position minus
    # the grid index is a single constant shift (columns modulo the pattern
    # width); windows that disagree with the consensus shift are corrupt
    ph = codebook.pattern.bits.shape[0]
    pw = codebook.pattern.bits.shape[1]
    votes: dict[tuple[int, int], int] = {}
    for (ai, aj), (row, col, flips) in hits:
        key = (row - ai, (col - aj) % pw)
        votes[key] = votes.get(key, 0) + 1
    consensus = max(votes, key=votes.get) if votes else None
    out = []
    for (ai, aj), (row, col, flips) in hits:
        if (row - ai, (col - aj) % pw) != consensus:
            stats.n_rejected += 1
            continue
        if flips:
            stats.n_corrected += 1
        stats.n_decoded += 1
        proj = np.array([(col + 0.5) * cw, (row + 0.5) * ch])
        out.append(Correspondence(cam_px=grid.spots[(ai, aj)].copy(),
                                  proj_px=proj, hamming_flips=flips,
                                  pattern_pos=(row, col)))
    return out


def decode_image(image: np.ndarray, codebook: Codebook,
                 cell_size=DEFAULT_CELL_SIZE,
                 window: int = PIPELINE_BINARIZE_WINDOW,
                 k: float = PIPELINE_BINARIZE_K,
                 smooth: float = PIPELINE_SMOOTH_SIGMA,
                 min_area: int = PIPELINE_MIN_AREA,
                 allow_correction: bool = True):
    """Full chain: smooth -> binarize -> extract -> decode.

    Returns ``(correspondences, stats)``.  ``smooth`` is the sigma of a
    Gaussian prefilter (0 disables it); centroids are still weighted by the
    original image so sub-pixel accuracy is unaffected.
    """
    image = np.asarray(image, dtype=np.float64)
    work = ndimage.gaussian_filter(image, smooth) if smooth > 0 else image
    mask = binarize(work, window=window, k=k)
    grid = extract_spots(mask, image, min_area=min_area)
    corrs = decode_correspondences(grid, codebook, cell_size=cell_size,
                                   allow_correction=allow_correction)
    return corrs, grid.stats


def save_correspondences(corrs, path) -> None:
    """Text lines: u_cam v_cam u_proj v_proj flips (6 fractional digits)."""
    with open(path, "w") as f:
        for c in corrs:
            f.write(f"{c.cam_px[0]:.6f} {c.cam_px[1]:.6f} "
                    f"{c.proj_px[0]:.6f} {c.proj_px[1]:.6f} "
                    f"{c.hamming_flips}\n")


def load_correspondences(path) -> list[Correspondence]:
    out = []
    with open(path) as f:
        for line in f:
            parts = line.split()
            if not parts:
                continue
            u, v, up, vp, flips = parts
            out.append(Correspondence(
                cam_px=np.array([float(u), float(v)]),
                proj_px=np.array([float(up), float(vp)]),
                hamming_flips=int(flips)))
    return out
