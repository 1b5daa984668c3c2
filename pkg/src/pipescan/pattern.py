"""Coded binary spot patterns: generation, verification, codebook lookup.

A pattern is a binary matrix whose ON cells become projected spots.  Every
window-sized sub-matrix ("codeword", read row-major with the MSB at the
window's top-left cell) identifies its own position in the pattern, which is
what makes single-shot decoding possible.

Constraint conventions used throughout this module:

* codebook codewords are the non-wrapping windows, anchored at
  ``rows 0..H-h``, ``cols 0..W-w``; the pairwise Hamming-distance floor and
  the minimum-weight floor apply to these;
* uniqueness is enforced over the non-wrapping windows *plus* the
  horizontally wrapping ones (anchor cols ``W-w+1..W-1``), so horizontal
  tiling cannot alias a codeword inside the disparity range;
* spot isolation (no two ON cells 8-adjacent) is checked on the torus, so it
  survives tiling in both directions.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class SearchExhausted(Exception):
    """Pattern search ran out of its node budget without a solution."""

    def __init__(self, attempts: int, message: str = ""):
        self.attempts = attempts
        super().__init__(message or f"search exhausted after {attempts} node expansions")


class DuplicateCodeword(Exception):
    """Two windows of a pattern share the same codeword."""


@dataclass(frozen=True)
class PatternConstraints:
    window: tuple[int, int] = (6, 6)          # (rows, cols)
    min_hamming: int = 3
    min_weight: int = 4
    isolated: bool = True

    def __post_init__(self):
        h, w = self.window
        if h < 1 or w < 1:
            raise ValueError("window must be positive")
        nbits = h * w
        if not (1 <= self.min_hamming <= nbits):
            raise ValueError("min_hamming out of range")
        if not (0 <= self.min_weight <= nbits):
            raise ValueError("min_weight out of range")


@dataclass
class BitPattern:
    """Binary pattern; ``bits`` is (H, W) uint8 of {0, 1}."""

    bits: np.ndarray
    constraints: PatternConstraints = field(default_factory=PatternConstraints)

    def __post_init__(self):
        self.bits = np.ascontiguousarray(np.asarray(self.bits), dtype=np.uint8)
        if self.bits.ndim != 2:
            raise ValueError("bits must be 2-D")
        if not np.isin(self.bits, (0, 1)).all():
            raise ValueError("bits must be 0/1")
        h, w = self.constraints.window
        if self.bits.shape[0] < h or self.bits.shape[1] < w:
            raise ValueError("pattern smaller than its window")

    @property
    def shape(self) -> tuple[int, int]:
        return self.bits.shape

    def density(self) -> float:
        return float(self.bits.mean())


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ConstraintReport:
    checks: list[CheckResult]
    n_codewords: int
    min_distance: int
    min_weight: int
    density: float

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __str__(self) -> str:
        lines = [f"codewords={self.n_codewords} min_distance={self.min_distance} "
                 f"min_weight={self.min_weight} density={self.density:.3f}"]
        for c in self.checks:
            lines.append(f"  [{'ok' if c.passed else 'FAIL'}] {c.name}"
                         + (f": {c.detail}" if c.detail else ""))
        return "\n".join(lines)


def read_window(pattern: BitPattern, row: int, col: int) -> int:
    """Codeword at anchor (row, col); columns wrap, rows do not."""
    h, w = pattern.constraints.window
    H, W = pattern.shape
    if not (0 <= row <= H - h):
        raise IndexError("window row out of range")
    cols = np.arange(col, col + w) % W
    word = 0
    for r in range(row, row + h):
        for c in cols:
            word = (word << 1) | int(pattern.bits[r, c])
    return word


def _window_words(pattern: BitPattern, include_wrap: bool) -> np.ndarray:
    """All window codewords as uint64, anchors in row-major order.

    Shape (H-h+1, W-w+1) without wrap, (H-h+1, W) with horizontal wrap.
    """
    h, w = pattern.constraints.window
    if h * w > 64:
        raise ValueError("window exceeds 64 bits; packed-word operations "
                         "support windows up to 64 cells")
    bits = pattern.bits
    if include_wrap:
        bits = np.concatenate([bits, bits[:, : w - 1]], axis=1)
    win = np.lib.stride_tricks.sliding_window_view(bits, (h, w))
    flat = win.reshape(win.shape[0], win.shape[1], h * w).astype(np.uint64)
    weights = (np.uint64(1) << np.arange(h * w - 1, -1, -1, dtype=np.uint64))
    return flat @ weights


def _min_pairwise_distance(words: np.ndarray, chunk: int = 512):
    """(min distance, index pair) over all distinct pairs of uint64 words."""
    n = len(words)
    best = None
    pair = (-1, -1)
    for start in range(0, n, chunk):
        block = words[start:start + chunk, None] ^ words[None, start + 1:]
        if block.size == 0:
            continue
        d = np.bitwise_count(block).astype(np.int64)
        # mask out self-and-repeated pairs: entry (i, j) compares words
        # start+i vs start+1+j; keep j >= i + start - start  <=>  global j > i
        rows = np.arange(start, min(start + chunk, n))[:, None]
        cols = np.arange(start + 1, n)[None, :]
        d[cols <= rows] = 64
        idx = np.unravel_index(np.argmin(d), d.shape)
        m = int(d[idx])
        if best is None or m < best:
            best = m
            pair = (int(rows[idx[0], 0]), int(cols[0, idx[1]]))
    return (64 if best is None else best), pair


def _isolation_violation(bits: np.ndarray):
    """First pair of 8-adjacent ON cells on the torus, or None."""
    on = bits.astype(bool)
    for di, dj in ((0, 1), (1, -1), (1, 0), (1, 1)):
        both = on & np.roll(on, (-di, -dj), axis=(0, 1))
        if both.any():
            i, j = np.argwhere(both)[0]
            H, W = bits.shape
            return (int(i), int(j)), (int((i + di) % H), int((j + dj) % W))
    return None


def verify_pattern(pattern: BitPattern) -> ConstraintReport:
    """Brute-force check of all pattern constraints.

    Uniqueness is verified over non-wrapping plus horizontally wrapping
    windows; the distance floor and the weight floor over the non-wrapping
    (codebook) windows; isolation on the torus.
    """
    cons = pattern.constraints
    h, w = cons.window
    H, W = pattern.shape
    all_words = _window_words(pattern, include_wrap=True).ravel()
    book_words = _window_words(pattern, include_wrap=False).ravel()

    checks = []

    uniq_vals, uniq_counts = np.unique(all_words, return_counts=True)
    dup_detail = ""
    if (uniq_counts > 1).any():
        dup_val = uniq_vals[np.argmax(uniq_counts > 1)]
        locs = np.argwhere(all_words.reshape(H - h + 1, W) == dup_val)
        dup_detail = (f"windows {tuple(locs[0])} and {tuple(locs[1])} "
                      f"identical")
    checks.append(CheckResult(
        "uniqueness (incl. horizontal wrap)", not dup_detail, dup_detail))

    min_d, (i, j) = _min_pairwise_distance(book_words)
    n_book_cols = W - w + 1

    def anchor(flat_idx):
        return divmod(flat_idx, n_book_cols)

    checks.append(CheckResult(
        "min_hamming", min_d >= cons.min_hamming,
        "" if min_d >= cons.min_hamming else
        f"windows {anchor(i)} and {anchor(j)} at distance {min_d}"))

    wts = np.bitwise_count(book_words).astype(int)
    min_wt = int(wts.min()) if wts.size else 0
    k = int(np.argmin(wts)) if wts.size else 0
    checks.append(CheckResult(
        "min_weight", min_wt >= cons.min_weight,
        "" if min_wt >= cons.min_weight else
        f"window {divmod(k, W - w + 1)} has weight {min_wt}"))

    if cons.isolated:
        viol = _isolation_violation(pattern.bits)
        checks.append(CheckResult(
            "isolation", viol is None,
            "" if viol is None else f"ON cells {viol[0]} and {viol[1]} are 8-adjacent"))
    else:
        checks.append(CheckResult("isolation", True, "not required"))

    return ConstraintReport(checks, n_codewords=book_words.size,
                            min_distance=min_d, min_weight=min_wt,
                            density=pattern.density())


class Codebook:
    """Codeword -> pattern position lookup with bounded error correction.

    Corrects up to ``(min_hamming - 1) // 2`` bit flips (one flip for the
    default distance-3 constraints).
    """

    def __init__(self, table: dict[int, tuple[int, int]], pattern: BitPattern):
        self._table = table
        self.pattern = pattern
        self.window = pattern.constraints.window
        self.nbits = self.window[0] * self.window[1]
        self.max_flips = (pattern.constraints.min_hamming - 1) // 2

    def __len__(self) -> int:
        return len(self._table)

    def __contains__(self, word: int) -> bool:
        return word in self._table

    def lookup(self, word: int, max_flips: int | None = None):
        """Return (row, col, flips) of the matching window, or None.

        ``max_flips`` caps error correction below the codebook's own bound
        (0 disables correction entirely).
        """
        budget = self.max_flips if max_flips is None else min(
            self.max_flips, max_flips)
        hit = self._table.get(word)
        if hit is not None:
            return hit[0], hit[1], 0
        if budget >= 1:
            found = None
            for b in range(self.nbits):
                hit = self._table.get(word ^ (1 << b))
                if hit is not None:
                    if found is not None and found != hit:
                        return None  # ambiguous; cannot occur at distance >= 3
                    found = hit
            if found is not None:
                return found[0], found[1], 1
        return None


def build_codebook(pattern: BitPattern) -> Codebook:
    """Codebook over all non-wrapping windows; raises DuplicateCodeword."""
    words = _window_words(pattern, include_wrap=False)
    table: dict[int, tuple[int, int]] = {}
    for r in range(words.shape[0]):
        for c in range(words.shape[1]):
            word = int(words[r, c])
            prev = table.get(word)
            if prev is not None:
                raise DuplicateCodeword(
                    f"windows {prev} and {(r, c)} share codeword {word:#x}")
            table[word] = (r, c)
    return Codebook(table, pattern)


def tile_pattern(pattern: BitPattern, out_height: int, out_width: int) -> BitPattern:
    """Tile the pattern periodically to (out_height, out_width) bits."""
    H, W = pattern.shape
    reps = (-(-out_height // H), -(-out_width // W))
    bits = np.tile(pattern.bits, reps)[:out_height, :out_width]
    return BitPattern(bits, pattern.constraints)


# --- generation -----------------------------------------------------------

def _no_adjacent_bit_values(nbits: int) -> list[int]:
    """All nbits-wide values with no two set bits adjacent."""
    return [v for v in range(1 << nbits) if not (v & (v << 1))]


def _sample_window_configs(rng, h: int, w: int, min_weight: int,
                           isolated: bool, n_samples: int) -> list[int]:
    """Random window configurations meeting weight (and flat isolation)."""
    out = []
    tries = 0
    cap = max(n_samples * 80, 2000)
    while len(out) < n_samples and tries < cap:
        tries += 1
        g = np.zeros((h, w), np.uint8)
        target = int(rng.integers(min_weight, max(min_weight, h * w // 4) + 2))
        for _ in range(max(target, 1)):
            for _attempt in range(20):
                y = int(rng.integers(0, h))
                x = int(rng.integers(0, w))
                if g[y, x]:
                    continue
                if isolated and g[max(0, y - 1):y + 2,
                                  max(0, x - 1):x + 2].any():
                    continue
                g[y, x] = 1
                break
        if int(g.sum()) >= min_weight:
            word = 0
            for y in range(h):
                for x in range(w):
                    word = (word << 1) | int(g[y, x])
            out.append(word)
    return out


class _UnitSearch:
    """Window-raster backtracking with conflict-directed backjumping.

    Decision units follow the window raster so each unit completes exactly
    one window: the first window is placed whole, the rest of the first band
    column-by-column, every later row left cells first then one cell per
    anchor.  When a unit exhausts its candidates the search jumps to the
    deepest unit implicated in the recorded failures instead of the
    chronologically previous one, which is what lets conflicts rooted in a
    different row be repaired directly.
    """

    def __init__(self, height: int, width: int, cons: PatternConstraints,
                 rng, zero_bias: float = 0.82):
        self.H, self.W = height, width
        self.h, self.w = cons.window
        self.cons = cons
        self.rng = rng
        self.zero_bias = zero_bias
        self.nbits = self.h * self.w
        self.NA = self.H - self.h + 1
        H, W, h, w = self.H, self.W, self.h, self.w

        units = []  # (kind, anchor_row, anchor_col, cells)
        for a in range(self.NA):
            for c in range(W - w + 1):
                if a == 0 and c == 0:
                    cells = [(y, x) for y in range(h) for x in range(w)]
                    units.append(("block", a, c, cells))
                elif a == 0:
                    cells = [(y, c + w - 1) for y in range(h)]
                    units.append(("vcol", a, c, cells))
                elif c == 0:
                    cells = [(a + h - 1, x) for x in range(w)]
                    units.append(("hrow", a, c, cells))
                else:
                    units.append(("cell", a, c, [(a + h - 1, c + w - 1)]))
            for c in range(W - w + 1, W):
                units.append(("check", a, c, []))
        self.units = units
        self.NU = len(units)
        self.cell_unit = {}
        for ui, (_, _, _, cells) in enumerate(units):
            for cell in cells:
                self.cell_unit[cell] = ui
        # word membership of each cell: (anchor_row, anchor_col, bit shift)
        self.containing = {}
        for y in range(H):
            for x in range(W):
                lst = []
                for a in range(max(0, y - h + 1), min(self.NA - 1, y) + 1):
                    for j in range(w):
                        c = (x - j) % W
                        lst.append((a, c,
                                    self.nbits - 1 - w * (y - a) - j))
                self.containing[(y, x)] = lst
        self.word_cells = {}
        for a in range(self.NA):
            for c in range(W):
                self.word_cells[(a, c)] = [
                    (a + dy, (c + dx) % W)
                    for dy in range(h) for dx in range(w)]
        self._col_vals_v = _no_adjacent_bit_values(h) if cons.isolated \
            else list(range(1 << h))
        self._col_vals_h = _no_adjacent_bit_values(w) if cons.isolated \
            else list(range(1 << w))
        self._first_words = _sample_window_configs(
            rng, h, w, cons.min_weight, cons.isolated, 1024)
        self._use_numpy_scan = self.nbits <= 64

    def _candidates(self, ui, need, gval=None):
        """Candidate values for a unit, given the completing window still
        needs ``need`` more ON cells to reach the weight floor.

        ``gval`` is a remembered value from the deepest earlier attempt; it
        is tried first (with some probability, to keep diversity) so each
        restart re-walks the best known prefix instead of starting cold.
        """
        rng = self.rng
        kind = self.units[ui][0]
        if kind == "block":
            idx = rng.permutation(len(self._first_words))[:600]
            cands = [self._first_words[i] for i in idx]
        elif kind == "vcol":
            cands = [v for v in self._col_vals_v if v.bit_count() >= need]
            rng.shuffle(cands)
        elif kind == "hrow":
            cands = [v for v in self._col_vals_h if v.bit_count() >= need]
            rng.shuffle(cands)
        elif kind == "cell":
            if need >= 2:
                return []          # weight floor unreachable
            if need == 1:
                return [1]
            cands = [0, 1] if rng.random() < self.zero_bias else [1, 0]
        else:
            return [0]  # check-only unit
        if gval is not None:
            p = self.guide_p_head if ui < self.guide_tail_from \
                else self.guide_p_tail
            if rng.random() < p:
                if gval in cands:
                    cands.remove(gval)
                    cands.insert(0, gval)
                elif kind == "block" \
                        and gval.bit_count() >= self.cons.min_weight:
                    cands.insert(0, gval)
        return cands

    def run(self, budget_left: int, guide: dict | None = None,
            guide_p: tuple = (0.97, 0.4), guide_tail_from: int = 0,
            best_to_beat: int = -1):
        """Return (bits | None, nodes_used, status, best_snapshot).

        ``best_snapshot`` is ``(frontier_unit, [(unit, value), ...])`` for
        the deepest prefix reached beyond ``best_to_beat``.  Guide values
        are preferred with probability ``guide_p[0]`` before unit
        ``guide_tail_from`` and ``guide_p[1]`` from it on, so the portion of
        the remembered prefix near its failure point is re-randomized much
        more aggressively than the settled head.
        """
        self.guide_p_head, self.guide_p_tail = guide_p
        self.guide_tail_from = guide_tail_from
        H, W, h, w = self.H, self.W, self.h, self.w
        cons = self.cons
        min_h, min_w = cons.min_hamming, cons.min_weight
        bits = np.zeros((H, W), np.uint8)
        words = [[0] * W for _ in range(self.NA)]
        stored = np.zeros(self.NA * W, np.uint64) if self._use_numpy_scan \
            else None
        stored_list: list[int] = []
        nstored = 0
        code_pos: list[tuple[int, int]] = []
        stored_map: dict[int, tuple[int, int]] = {}
        nodes = 0
        containing = self.containing
        units = self.units
        cell_unit = self.cell_unit

        def word_units(a, c, below):
            s = set()
            for cell in self.word_cells[(a, c)]:
                u = cell_unit.get(cell)
                if u is not None and u < below:
                    s.add(u)
            return s

        def place(ui, val):
            kind, a, c, cells = units[ui]
            placed = []
            nb = len(cells)
            for k, (y, x) in enumerate(cells):
                if (val >> (nb - 1 - k)) & 1:
                    bits[y, x] = 1
                    placed.append((y, x))
            for (y, x) in placed:
                for (aa, cc, sh) in containing[(y, x)]:
                    words[aa][cc] += 1 << sh
            return placed

        def unplace(placed):
            for (y, x) in placed:
                bits[y, x] = 0
                for (aa, cc, sh) in containing[(y, x)]:
                    words[aa][cc] -= 1 << sh

        def iso_conflict(placed):
            """Unit index of a blocking ON cell, or -1 if clean."""
            for (y, x) in placed:
                for dy in (-1, 0, 1):
                    yy = (y + dy) % H
                    for dx in (-1, 0, 1):
                        if dy == 0 and dx == 0:
                            continue
                        xx = (x + dx) % W
                        if bits[yy, xx] and (yy, xx) != (y, x):
                            return cell_unit[(yy, xx)]
            return -1

        def drop_stored(entry):
            nonlocal nstored
            v, is_code = entry
            del stored_map[v]
            if is_code:
                nstored -= 1
                if stored is None:
                    stored_list.pop()
                code_pos.pop()

        frames = []       # [unit, candidates, next_idx, placed, stored_entry]
        conflict: list[set] = [set() for _ in range(self.NU)]
        best_snapshot = None
        best_seen = best_to_beat

        def open_frame(ui):
            nonlocal best_snapshot, best_seen
            kind, a, c, _ = units[ui]
            need = 0
            if kind in ("vcol", "hrow", "cell"):
                need = min_w - words[a][c].bit_count()
            gval = guide.get(ui) if guide else None
            cands = self._candidates(ui, need, gval)
            if not cands:
                # weight floor unreachable: blame the window's earlier cells
                conflict[ui] = word_units(a, c, ui)
            else:
                conflict[ui] = set()
            if ui > best_seen:
                best_seen = ui
                best_snapshot = (ui, [(fr[0], fr[1][fr[2] - 1])
                                      for fr in frames])
            frames.append([ui, cands, 0, [], None])

        open_frame(0)
        while frames:
            frame = frames[-1]
            fui, cands, ci, placed, added = frame
            if placed:
                unplace(placed)
                frame[3] = []
            if added is not None:
                drop_stored(added)
                frame[4] = None
            if ci >= len(cands):
                cs = conflict[fui]
                frames.pop()
                if not cs:
                    target = frames[-1][0] if frames else -1
                else:
                    target = max(cs)
                if target < 0:
                    return None, nodes, "unsat", best_snapshot
                while frames and frames[-1][0] != target:
                    fr = frames.pop()
                    if fr[3]:
                        unplace(fr[3])
                    if fr[4] is not None:
                        drop_stored(fr[4])
                if not frames:
                    return None, nodes, "unsat", best_snapshot
                conflict[frames[-1][0]] |= (cs - {frames[-1][0]})
                continue
            val = cands[ci]
            frame[2] += 1
            nodes += 1
            if nodes > budget_left:
                return None, nodes, "budget", best_snapshot
            kind, a, c, cells = units[fui]
            placed = place(fui, val)
            frame[3] = placed
            if cons.isolated and placed:
                bad = iso_conflict(placed)
                if bad >= 0:
                    if bad != fui:
                        conflict[fui].add(bad)
                    continue
            # weight look-ahead: windows of this band completing within the
            # next w-1 units can each gain at most one ON cell per future
            # unit (cell units) or one column (first band)
            if kind in ("cell", "vcol") and min_w > 0:
                per_unit = 1 if kind == "cell" else h
                horizon_fail = False
                for k2 in range(1, w):
                    cc = c + k2
                    if cc > W - w:
                        break
                    if words[a][cc].bit_count() + k2 * per_unit < min_w:
                        conflict[fui] |= word_units(a, cc, fui)
                        horizon_fail = True
                        break
                if horizon_fail:
                    continue
            # the completed window for this unit
            v = words[a][c]
            is_code = kind != "check"
            fail = False
            if is_code:
                if v.bit_count() < min_w:
                    conflict[fui] |= word_units(a, c, fui)
                    fail = True
                elif nstored:
                    if stored is not None:
                        ds = np.bitwise_count(
                            stored[:nstored] ^ np.uint64(v))
                        jm = int(ds.argmin())
                        dmin = int(ds[jm])
                    else:
                        dmin, jm = self.nbits + 1, -1
                        for k2, u in enumerate(stored_list):
                            d = (u ^ v).bit_count()
                            if d < dmin:
                                dmin, jm = d, k2
                    if dmin < min_h:
                        aa, cc = code_pos[jm]
                        conflict[fui] |= word_units(a, c, fui)
                        conflict[fui] |= word_units(aa, cc, fui)
                        fail = True
                if not fail and v in stored_map:
                    aa, cc = stored_map[v]
                    conflict[fui] |= word_units(a, c, fui)
                    conflict[fui] |= word_units(aa, cc, fui)
                    fail = True
            else:
                if v in stored_map:
                    aa, cc = stored_map[v]
                    conflict[fui] |= word_units(a, c, fui)
                    conflict[fui] |= word_units(aa, cc, fui)
                    fail = True
            if fail:
                continue
            stored_map[v] = (a, c)
            if is_code:
                if stored is not None:
                    stored[nstored] = v
                else:
                    stored_list.append(v)
                code_pos.append((a, c))
                nstored += 1
            frame[4] = (v, is_code)
            nui = fui + 1
            if nui == self.NU:
                return bits.copy(), nodes, "solved", best_snapshot
            open_frame(nui)
        return None, nodes, "unsat", best_snapshot


def _luby(i: int) -> int:
    """Luby restart sequence (1-indexed): 1 1 2 1 1 2 4 1 1 2 ..."""
    k = 1
    while (1 << k) - 1 < i:
        k += 1
    if (1 << k) - 1 == i:
        return 1 << (k - 1)
    return _luby(i - (1 << (k - 1)) + 1)


class _RepairSearch:
    """Greedy seeding plus conflict-driven repair for large patterns.

    Constructive search stalls on large instances: the feasible patterns sit
    at moderate density (~0.16 for the default constraints) and infeasible
    prefixes are only discovered thousands of assignments later.  Repair
    search instead starts from a full candidate layout and removes the
    remaining violations (low-weight windows, close or duplicate codeword
    pairs) with local bit flips, evaluated exactly via incremental packed-
    word updates.  A node is one evaluated candidate flip.
    """

    def __init__(self, height: int, width: int, cons: PatternConstraints,
                 rng: np.random.Generator):
        self.H, self.W = height, width
        self.cons = cons
        self.h, self.w = cons.window
        self.rng = rng
        self.R = height - self.h + 1          # anchor rows
        self.Ccode = width - self.w + 1       # codeword anchor columns
        self.Call = width                     # anchor columns incl. wrap
        self.n_all = self.R * self.Call
        idx = np.arange(self.n_all)
        self.is_code = (idx % self.Call) < self.Ccode
        self.nodes = 0

    # -- layout ------------------------------------------------------------

    def _legal_add(self, bits, p, q):
        if bits[p, q]:
            return False
        if not self.cons.isolated:
            return True
        H, W = self.H, self.W
        for dp in (-1, 0, 1):
            for dq in (-1, 0, 1):
                if (dp or dq) and bits[(p + dp) % H, (q + dq) % W]:
                    return False
        return True

    def _seed_layout(self) -> np.ndarray:
        """Random layout that already meets the weight floor where it can."""
        bits = np.zeros((self.H, self.W), np.uint8)
        anchors = self.rng.permutation(self.n_all)
        for a in anchors:
            r, c = divmod(int(a), self.Call)
            rows = np.arange(r, r + self.h)
            cols = np.arange(c, c + self.w) % self.W
            deficit = self.cons.min_weight - int(bits[np.ix_(rows, cols)].sum())
            if deficit <= 0:
                continue
            cells = [(p, q) for p in rows for q in cols
                     if self._legal_add(bits, p, q)]
            self.rng.shuffle(cells)
            for p, q in cells[:deficit]:
                if self._legal_add(bits, p, q):
                    bits[p, q] = 1
        return bits

    # -- packed-word state ---------------------------------------------------

    def _build_state(self, bits):
        self.bits = bits
        pat = BitPattern(bits, self.cons)
        self.words = _window_words(pat, include_wrap=True).ravel()
        self.weights = np.bitwise_count(self.words).astype(np.int64)
        self.cnt = np.zeros(self.n_all, np.int64)
        self.wA = np.zeros(self.n_all)      # breakout weights, pair side
        self.wwin = np.ones(self.n_all)     # breakout weights, weight floor
        chunk = 256
        for s in range(0, self.n_all, chunk):
            rows = slice(s, min(s + chunk, self.n_all))
            d = np.bitwise_count(self.words[rows, None] ^ self.words[None, :])
            thr = np.where(self.is_code[rows, None] & self.is_code[None, :],
                           self.cons.min_hamming, 1)
            conf = d < thr
            conf[np.arange(rows.start, rows.stop) - s,
                 np.arange(rows.start, rows.stop)] = False
            self.cnt[rows] = conf.sum(axis=1)

    def _score(self) -> int:
        low = int((self.weights[self.is_code] < self.cons.min_weight).sum())
        return int(self.cnt.sum()) // 2 + low

    def _affected(self, p, q):
        """Anchor indices and xor masks for a flip at cell (p, q)."""
        anchors, masks = [], []
        nb = self.h * self.w
        for dr in range(self.h):
            r = p - dr
            if not (0 <= r < self.R):
                continue
            for dc in range(self.w):
                c = (q - dc) % self.W
                bitpos = nb - 1 - (dr * self.w + dc)
                anchors.append(r * self.Call + c)
                masks.append(np.uint64(1) << np.uint64(bitpos))
        return np.array(anchors), np.array(masks, dtype=np.uint64)

    def _eval_rows(self, A, words_A, ref):
        """Per-row conflict counts of ``words_A`` against ``ref``."""
        d = np.bitwise_count(words_A[:, None] ^ ref[None, :])
        thr = np.where(self.is_code[A, None] & self.is_code[None, :],
                       self.cons.min_hamming, 1)
        conf = d < thr
        conf[np.arange(len(A)), A] = False
        return conf

    def _pair_mass(self, conf, A):
        """Breakout-weighted count of the conflicting pairs in ``conf``.

        A pair (i, j) carries weight 1 + (wA[i] + wA[j]) / 2; pairs with
        both anchors in ``A`` appear twice in the row matrix, hence the
        half-count correction on the ``A`` columns.
        """
        rows = conf.sum(axis=1).astype(float)
        full = float(rows @ (1.0 + self.wA[A] / 2.0)
                     + (conf @ self.wA).sum() / 2.0)
        sub = conf[:, A]
        sub_rows = sub.sum(axis=1).astype(float)
        dup = float(sub_rows @ (1.0 + self.wA[A] / 2.0)
                    + (sub @ self.wA[A]).sum() / 2.0)
        return full - dup / 2.0

    def _flip_delta(self, p, q, apply=False):
        """Score change of flipping cell (p, q); optionally commit.

        Returns ``(true_delta, weighted_delta)``: the unweighted violation
        count change and the breakout-weighted change used for move choice.
        """
        self.nodes += 1
        A, masks = self._affected(p, q)
        old = self.words[A]
        new = old ^ masks
        conf_old = self._eval_rows(A, old, self.words)
        W_new = self.words.copy()
        W_new[A] = new
        conf_new = self._eval_rows(A, new, W_new)
        pairs_old = conf_old.sum() - conf_old[:, A].sum() / 2.0
        pairs_new = conf_new.sum() - conf_new[:, A].sum() / 2.0
        wpairs_old = self._pair_mass(conf_old, A)
        wpairs_new = self._pair_mass(conf_new, A)
        wt_old = self.weights[A]
        wt_new = np.bitwise_count(new).astype(np.int64)
        code = self.is_code[A]
        mw = self.cons.min_weight
        low_old = code & (wt_old < mw)
        low_new = code & (wt_new < mw)
        low_delta = int(low_new.sum()) - int(low_old.sum())
        wlow_delta = float(self.wwin[A][low_new].sum()
                           - self.wwin[A][low_old].sum())
        true_delta = (pairs_new - pairs_old) + low_delta
        weighted_delta = (wpairs_new - wpairs_old) + wlow_delta
        if apply:
            self.words[A] = new
            self.weights[A] = wt_new
            self.cnt += (conf_new.astype(np.int64)
                         - conf_old.astype(np.int64)).sum(axis=0)
            self.cnt[A] = conf_new.sum(axis=1)
            self.bits[p, q] ^= 1
        return true_delta, weighted_delta

    # -- repair loop ---------------------------------------------------------

    def _window_cells(self, a):
        r, c = divmod(int(a), self.Call)
        return [(p, q % self.W) for p in range(r, r + self.h)
                for q in range(c, c + self.w)]

    def _candidates(self, tabu, step):
        """Flip candidates drawn from one randomly chosen violation."""
        low = np.flatnonzero(self.is_code
                             & (self.weights < self.cons.min_weight))
        confl = np.flatnonzero(self.cnt > 0)
        if low.size == 0 and confl.size == 0:
            return []
        pick = self.rng.integers(low.size + confl.size)
        cells = []
        if pick < low.size:
            a = int(low[pick])
            cells = [(p, q) for p, q in self._window_cells(a)
                     if self._legal_add(self.bits, p, q)]
            if not cells:
                # saturated window: free a site by removing a nearby spot
                cells = [(p, q) for p, q in self._window_cells(a)
                         if self.bits[p, q]]
        else:
            i = int(confl[pick - low.size])
            conf_row = self._eval_rows(np.array([i]), self.words[i:i + 1],
                                       self.words)[0]
            partners = np.flatnonzero(conf_row)
            j = int(partners[self.rng.integers(partners.size)])
            for a in (i, j):
                for p, q in self._window_cells(a):
                    if self.bits[p, q] or self._legal_add(self.bits, p, q):
                        cells.append((p, q))
        cells = [c for c in cells if tabu.get(c, -1) < step]
        self.rng.shuffle(cells)
        return cells

    def run(self, node_budget: int, max_steps_stale: int = 3000):
        best_bits, best_score = None, None
        while self.nodes < node_budget:
            self._build_state(self._seed_layout())
            score = self._score()
            run_best = score
            stale = 0
            tabu: dict = {}
            step = 0
            while score > 0 and self.nodes < node_budget:
                step += 1
                cells = self._candidates(tabu, step)
                cand = cells[:12]
                deltas = [self._flip_delta(p, q) for p, q in cand]
                apply_k = None
                if deltas:
                    k = int(np.argmin(deltas))
                    if deltas[k] <= 0:
                        # downhill or plateau: always walk
                        apply_k = k
                    elif self.rng.random() < 0.12:
                        # occasional uphill kick to escape local minima
                        apply_k = int(self.rng.integers(len(cand)))
                if apply_k is None:
                    stale += 1
                    if stale > max_steps_stale:
                        break
                    continue
                p, q = cand[apply_k]
                self._flip_delta(p, q, apply=True)
                tabu[(p, q)] = step + 12
                score = self._score()
                if score < run_best:
                    run_best = score
                    stale = 0
                else:
                    stale += 1
                    if stale > max_steps_stale:
                        break
                if best_score is None or score < best_score:
                    best_score, best_bits = score, self.bits.copy()
            if score == 0:
                return self.bits, self.nodes, "solved"
        return best_bits, self.nodes, "budget"


def generate_pattern(height: int, width: int,
                     constraints: PatternConstraints | None = None,
                     seed: int = 0,
                     node_budget: int = 10_000_000,
                     restart_base: int = 400_000,
                     _trace: list | None = None) -> BitPattern:
    """Search for a pattern satisfying all constraints.

    Randomized greedy placement in window-raster order with
    conflict-directed backjumping.  Restarts follow a Luby schedule (node
    slices of ``restart_base * luby(i)``) sharing the overall
    ``node_budget``; each restart re-tries the deepest previously reached
    assignment prefix first, so progress accumulates across restarts while
    the randomized tail keeps exploring.  Raises :class:`SearchExhausted`
    when the budget runs out or the search space is proven empty.  Same
    arguments, same pattern.
    """
    cons = constraints or PatternConstraints()
    h, w = cons.window
    if height < h or width < w:
        raise ValueError("pattern smaller than its window")
    if height * width >= 1024:
        # large instances: conflict-driven repair (see _RepairSearch); the
        # constructive search below cannot identify deep infeasible prefixes
        # at this scale
        rng = np.random.default_rng(np.random.SeedSequence([seed]))
        search = _RepairSearch(height, width, cons, rng)
        bits, used, status = search.run(node_budget)
        if _trace is not None:
            _trace.append((0, used, status, -1))
        if status == "solved":
            return BitPattern(bits, cons)
        raise SearchExhausted(used)
    total = 0
    restart = 0
    biases = (0.82, 0.76, 0.87, 0.70, 0.92)
    guide = None
    best_frontier = -1
    destroy = 120          # prefix tail length that gets re-randomized
    stagnant = 0
    while total < node_budget:
        rng = np.random.default_rng(np.random.SeedSequence([seed, restart]))
        search = _UnitSearch(height, width, cons, rng,
                             zero_bias=biases[restart % len(biases)])
        left = min(_luby(restart + 1) * restart_base, node_budget - total)
        pat_bits, used, status, snap = search.run(
            left, guide=guide, best_to_beat=best_frontier,
            guide_tail_from=max(0, best_frontier - destroy))
        total += used
        if snap is not None and snap[0] > best_frontier:
            best_frontier = snap[0]
            guide = dict(snap[1])
            destroy = 120
            stagnant = 0
        else:
            stagnant += 1
            if stagnant % 6 == 0:
                destroy *= 2          # widen the re-randomized tail
                if destroy > 4 * (best_frontier + 1):
                    guide = None      # give up on this prefix entirely
                    best_frontier = -1
                    destroy = 120
        if _trace is not None:
            _trace.append((restart, used, status, best_frontier))
        if status == "solved":
            return BitPattern(pat_bits, cons)
        if status == "unsat":
            raise SearchExhausted(
                total, f"search space exhausted after {total} expansions; "
                       "constraints unsatisfiable at this size")
        restart += 1
    raise SearchExhausted(total)


# --- pattern file format ---------------------------------------------------

PATTERN_MAGIC = "P1"


def save_pattern(pattern: BitPattern, path) -> None:
    """Text bitmap: magic line, width/height line, 0/1 tokens row-major."""
    H, W = pattern.shape
    rows = [" ".join(str(int(b)) for b in row) for row in pattern.bits]
    with open(path, "w") as f:
        f.write(f"{PATTERN_MAGIC}\n{W} {H}\n")
        f.write("\n".join(rows) + "\n")


def load_pattern(path, constraints: PatternConstraints | None = None) -> BitPattern:
    with open(path) as f:
        tokens = f.read().split()
    if not tokens or tokens[0] != PATTERN_MAGIC:
        raise ValueError(f"not a pattern file (expected magic {PATTERN_MAGIC})")
    W, H = int(tokens[1]), int(tokens[2])
    data = tokens[3:]
    if len(data) != H * W:
        raise ValueError(f"expected {H * W} tokens, found {len(data)}")
    bits = np.array([int(t) for t in data], dtype=np.uint8).reshape(H, W)
    return BitPattern(bits, constraints or PatternConstraints())
