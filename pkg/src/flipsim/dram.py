"""Deterministic DRAM simulator.

Models geometry and addressing (single- and dual-channel page-to-row layouts),
cell storage, synthetic vulnerable-cell populations, templating, double- and
single-sided hammering with arbitrary aggressor data, and boot-time scrambling
that toggles flip directions without moving cells.

The address function is synthetic but documented: consecutive page groups
stripe across banks, each row holds ``row_bytes / in_row_page_size`` in-row
pages, and within a row bit column ``c`` stores bit ``c % 8`` of row byte
``c // 8``.
"""

from dataclasses import dataclass

import numpy as np

PAGE_BYTES = 4096
PAGE_BITS = PAGE_BYTES * 8

OWNER_FREE = 0
OWNER_ATTACKER = 1
OWNER_VICTIM = 2

# templating/search throughput constants observed on real hardware, used for
# wall-clock estimates only (never asserted as measurements)
FLIPS_PER_SECOND = 2.2
HAMMER_SECONDS_PER_ACTION = 0.19

DENSITY_FACTORS = {"dense": 1.0, "moderate": 0.1, "low": 0.01, "rare": 0.001}
DENSE_PER_BANK_RANGE = (35_000, 47_000)
FULL_SIZE_ROWS = 32768
FULL_SIZE_ROW_BYTES = 8192
SINGLE_SIDED_RATE = 0.0056   # ~(1876 + 1468) / 600K observed single-sided share
ONE_TO_ZERO_SHARE = 0.7

_CLUSTER_SIZES = np.array([1, 2, 3, 4])
_CLUSTER_PROBS = np.array([0.35, 0.35, 0.20, 0.10])


@dataclass(frozen=True)
class DramConfig:
    channels: int = 1
    dimms: int = 1
    banks_per_dimm: int = 16
    rows_per_bank: int = 32768
    row_bytes: int = 8192
    hammer_mode: str = "double"

    def __post_init__(self):
        if self.channels not in (1, 2):
            raise ValueError("channels must be 1 or 2")
        if self.hammer_mode not in ("double", "single"):
            raise ValueError("hammer_mode must be 'double' or 'single'")
        if self.row_bytes % self.in_row_page_size:
            raise ValueError("row_bytes must be a multiple of the in-row page size")

    @property
    def in_row_page_size(self):
        # single channel: whole 4 KiB pages in a row; dual: pages split evenly
        return PAGE_BYTES if self.channels == 1 else PAGE_BYTES // 2

    @property
    def banks(self):
        return self.dimms * self.banks_per_dimm

    @property
    def sets(self):
        return self.channels * self.banks

    @property
    def in_row_pages(self):
        return self.row_bytes // self.in_row_page_size

    @property
    def row_bits(self):
        return self.row_bytes * 8

    @property
    def total_bytes(self):
        return self.sets * self.rows_per_bank * self.row_bytes

    @property
    def total_pages(self):
        return self.total_bytes // PAGE_BYTES


def full_single():
    return DramConfig()


def full_dual():
    return DramConfig(channels=2)


def desk():
    """Tiny geometry for smoke tests: 2 banks x 256 rows x 8 KiB rows."""
    return DramConfig(banks_per_dimm=2, rows_per_bank=256)


def bench(hammer_mode="double"):
    """Acceptance-scale geometry: 16 banks x 1024 rows x 8 KiB rows.

    Big enough that a dense synthetic profile gives the search realistic bit
    offset coverage while templating still runs in seconds.
    """
    return DramConfig(rows_per_bank=1024, hammer_mode=hammer_mode)


class AddressFunction:
    """Bijection between (pfn, byte/bit offset) and (set, row, column)."""

    def __init__(self, config):
        self.config = config

    def page_segments(self, pfn):
        """In-row segments of a page: (set, row, row_byte_base, page_off, n)."""
        cfg = self.config
        if not (0 <= pfn < cfg.total_pages):
            raise IndexError(f"pfn {pfn} out of range")
        if cfg.channels == 1:
            ppr = cfg.in_row_pages
            g, h = divmod(pfn, ppr)
            s = g % cfg.sets
            row = g // cfg.sets
            return [(s, row, h * PAGE_BYTES, 0, PAGE_BYTES)]
        ipp = cfg.in_row_pages
        half = PAGE_BYTES // 2
        g, q = divmod(pfn, ipp)
        bank = g % cfg.banks
        row = g // cfg.banks
        return [(bank, row, q * half, 0, half),
                (cfg.banks + bank, row, q * half, half, half)]

    def bit_addr(self, pfn, bop):
        """(pfn, bop) -> (set, row, bit column)."""
        if not (0 <= bop < PAGE_BITS):
            raise IndexError(f"bop {bop} out of range")
        byte, bit = divmod(bop, 8)
        for s, row, base, off, n in self.page_segments(pfn):
            if off <= byte < off + n:
                return s, row, (base + byte - off) * 8 + bit
        raise AssertionError("unreachable")

    def byte_addr(self, pfn, byte_off):
        if not (0 <= byte_off < PAGE_BYTES):
            raise IndexError(f"byte offset {byte_off} out of range")
        for s, row, base, off, n in self.page_segments(pfn):
            if off <= byte_off < off + n:
                return s, row, base + byte_off - off
        raise AssertionError("unreachable")

    def cell_to_page(self, s, row, bitcol):
        """(set, row, bit column) -> (pfn, bop); inverse of :meth:`bit_addr`."""
        cfg = self.config
        byte, bit = divmod(bitcol, 8)
        if cfg.channels == 1:
            h, inner = divmod(byte, PAGE_BYTES)
            pfn = (row * cfg.sets + s) * cfg.in_row_pages + h
            return pfn, inner * 8 + bit
        half = PAGE_BYTES // 2
        q, inner = divmod(byte, half)
        channel, bank = divmod(s, cfg.banks)
        pfn = (row * cfg.banks + bank) * cfg.in_row_pages + q
        return pfn, (channel * half + inner) * 8 + bit

    def row_pfns(self, s, row):
        """Physical pages with bytes resident in this (set, row)."""
        cfg = self.config
        if cfg.channels == 1:
            g = row * cfg.sets + s
            return [g * cfg.in_row_pages + h for h in range(cfg.in_row_pages)]
        bank = s % cfg.banks
        g = row * cfg.banks + bank
        return [g * cfg.in_row_pages + q for q in range(cfg.in_row_pages)]

    def in_row_page_of(self, pfn, bop):
        """(set, row, first bit column, bit span) of the in-row page holding bop."""
        cfg = self.config
        byte = bop // 8
        for s, row, base, off, n in self.page_segments(pfn):
            if off <= byte < off + n:
                return s, row, base * 8, n * 8
        raise AssertionError("unreachable")

    def bit_addr_vec(self, pfn, bop):
        """Vectorized :meth:`bit_addr` over equal-length index arrays."""
        cfg = self.config
        pfn = np.asarray(pfn, dtype=np.int64)
        bop = np.asarray(bop, dtype=np.int64)
        if cfg.channels == 1:
            g, h = np.divmod(pfn, cfg.in_row_pages)
            sets = g % cfg.sets
            rows = g // cfg.sets
            bitcols = h * PAGE_BITS + bop
            return sets, rows, bitcols
        half_bits = PAGE_BITS // 2
        g, q = np.divmod(pfn, cfg.in_row_pages)
        bank = g % cfg.banks
        rows = g // cfg.banks
        channel = bop // half_bits
        sets = channel * cfg.banks + bank
        bitcols = q * half_bits + bop % half_bits
        return sets, rows, bitcols


# ---- scrambling hash -----------------------------------------------------------


def _splitmix64(x):
    z = (x + np.uint64(0x9E3779B97F4A7C15))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _keyed_uniform(sets, rows, bitcols, seed):
    """Deterministic per-cell uniform in [0, 1) keyed by location and seed."""
    seed_mix = (int(seed) * 0xD6E8FEB86659FD93) & 0xFFFFFFFFFFFFFFFF
    key = (sets.astype(np.uint64) * np.uint64(0x100000001B3)
           ^ rows.astype(np.uint64) * np.uint64(0x9E3779B1)
           ^ bitcols.astype(np.uint64)
           ^ np.uint64(seed_mix))
    return _splitmix64(key).astype(np.float64) / 2.0 ** 64


# ---- flip profile --------------------------------------------------------------


class FlipProfile:
    """Templating output: (pfn, bop, direction, probability) per flippable cell.

    Direction follows the target-bit mode convention: 0 means 1->0, 1 means
    0->1.
    """

    def __init__(self, pfn, bop, direction, probability):
        self.pfn = np.asarray(pfn, dtype=np.int64)
        self.bop = np.asarray(bop, dtype=np.int64)
        self.direction = np.asarray(direction, dtype=np.int8)
        self.probability = np.asarray(probability, dtype=np.float64)
        if not (len(self.pfn) == len(self.bop) == len(self.direction)
                == len(self.probability)):
            raise ValueError("profile columns differ in length")

    def __len__(self):
        return len(self.pfn)

    def sorted(self):
        order = np.lexsort((self.direction, self.bop, self.pfn))
        return FlipProfile(self.pfn[order], self.bop[order],
                           self.direction[order], self.probability[order])

    def subset(self, mask):
        return FlipProfile(self.pfn[mask], self.bop[mask],
                           self.direction[mask], self.probability[mask])

    def entries(self):
        for i in range(len(self)):
            yield (int(self.pfn[i]), int(self.bop[i]),
                   int(self.direction[i]), float(self.probability[i]))

    @classmethod
    def from_entries(cls, rows):
        rows = list(rows)
        if not rows:
            return cls.empty()
        pfn, bop, d, p = zip(*rows)
        return cls(pfn, bop, d, p)

    @classmethod
    def empty(cls):
        return cls([], [], [], [])

    def save_csv(self, path):
        with open(path, "w") as fh:
            fh.write("pfn,bop,direction,probability\n")
            for pfn, bop, d, p in self.entries():
                fh.write(f"{pfn},{bop},{d},{p!r}\n")
        return path

    @classmethod
    def load_csv(cls, path):
        with open(path) as fh:
            header = fh.readline().strip()
            if header != "pfn,bop,direction,probability":
                raise ValueError(f"unexpected profile header: {header}")
            data = np.loadtxt(fh, delimiter=",", dtype=np.float64, ndmin=2)
        if data.size == 0:
            return cls.empty()
        return cls(data[:, 0].astype(np.int64), data[:, 1].astype(np.int64),
                   data[:, 2].astype(np.int8), data[:, 3])


def sample_profile(profile, rate, seed):
    """Keep each entry independently with probability ``rate``."""
    if not (0.0 < rate <= 1.0):
        raise ValueError("rate must be in (0, 1]")
    if rate == 1.0:
        return profile.subset(np.ones(len(profile), dtype=bool))
    rng = np.random.default_rng(seed)
    return profile.subset(rng.random(len(profile)) < rate)


# ---- DRAM state ----------------------------------------------------------------


class DramState:
    """Cell array, vulnerable-cell set, owner map and hammering engine."""

    def __init__(self, config, cells=None, hammer_seed=0):
        self.config = config
        self.addr = AddressFunction(config)
        self._rows = {}
        self.owner = np.zeros(config.total_pages, dtype=np.int8)
        self.boot_seed = None
        self.toggle_probability = 0.5
        self._rng = np.random.default_rng(hammer_seed)
        self._hammer_seed = hammer_seed
        if cells is None:
            cells = _empty_cells()
        (self.cset, self.crow, self.cbitcol, self.cbase_dir,
         self.cprob, self.csscap) = cells
        self.ccur_dir = self.cbase_dir.copy()
        self._row_index = {}
        order = np.lexsort((self.cbitcol, self.crow, self.cset))
        for name in ("cset", "crow", "cbitcol", "cbase_dir", "ccur_dir",
                     "cprob", "csscap"):
            setattr(self, name, getattr(self, name)[order])
        boundaries = np.flatnonzero(np.diff(self.cset.astype(np.int64) * (2 ** 32)
                                            + self.crow)) + 1
        starts = np.concatenate(([0], boundaries))
        ends = np.concatenate((boundaries, [len(self.cset)]))
        for a, b in zip(starts, ends):
            if a < b:
                self._row_index[(int(self.cset[a]), int(self.crow[a]))] = (a, b)

    # ---- storage ----

    def row(self, s, r):
        if not (0 <= s < self.config.sets and 0 <= r < self.config.rows_per_bank):
            raise IndexError(f"row ({s}, {r}) out of range")
        key = (s, r)
        buf = self._rows.get(key)
        if buf is None:
            buf = np.zeros(self.config.row_bytes, dtype=np.uint8)
            self._rows[key] = buf
        return buf

    def write_page(self, pfn, data):
        data = np.frombuffer(bytes(data), dtype=np.uint8)
        if data.size != PAGE_BYTES:
            raise ValueError("pages are 4096 bytes")
        for s, r, base, off, n in self.addr.page_segments(pfn):
            self.row(s, r)[base:base + n] = data[off:off + n]

    def read_page(self, pfn):
        out = np.zeros(PAGE_BYTES, dtype=np.uint8)
        for s, r, base, off, n in self.addr.page_segments(pfn):
            out[off:off + n] = self.row(s, r)[base:base + n]
        return out.tobytes()

    def read_bit(self, pfn, bop):
        s, r, bitcol = self.addr.bit_addr(pfn, bop)
        byte, bit = divmod(bitcol, 8)
        return int(self.row(s, r)[byte] >> bit) & 1

    # ---- ownership ----

    def set_owner(self, pfns, owner):
        self.owner[np.asarray(list(pfns), dtype=np.int64)] = owner

    def attacker_pfns(self):
        return np.flatnonzero(self.owner == OWNER_ATTACKER)

    def row_owned_by(self, s, r, owner):
        return all(self.owner[p] == owner for p in self.addr.row_pfns(s, r))

    # ---- cells ----

    def cells_in_row(self, s, r):
        span = self._row_index.get((s, r))
        if span is None:
            return np.empty(0, dtype=np.int64)
        return np.arange(span[0], span[1], dtype=np.int64)

    def cell_count(self):
        return len(self.cset)

    def cell_lookup(self, pfn, bop):
        """Index of the vulnerable cell at (pfn, bop), or -1."""
        s, r, bitcol = self.addr.bit_addr(pfn, bop)
        idx = self.cells_in_row(s, r)
        hit = idx[self.cbitcol[idx] == bitcol]
        return int(hit[0]) if hit.size else -1

    # ---- hammering ----

    def hammer(self, s, victim_row, upper=None, lower=None):
        """One hammering action against ``(s, victim_row)``.

        ``upper``/``lower`` optionally overwrite the adjacent rows (victim_row
        - 1 / + 1) before activation.  A vulnerable cell flips iff its stored
        bit equals its current direction's source value, the aggressor bit(s)
        in the same column equal the complement, and (for probabilistic cells)
        a draw from the seeded stream passes.  Single-sided mode additionally
        requires the cell's single-sided-capable flag.  Returns flipped cell
        coordinates as (set, row, bitcol) triples.
        """
        cfg = self.config
        rows = cfg.rows_per_bank
        double = cfg.hammer_mode == "double"
        if double:
            if victim_row - 1 < 0 or victim_row + 1 >= rows:
                raise IndexError(
                    f"double-sided hammer needs both neighbors of row {victim_row}"
                )
            if upper is not None:
                self.row(s, victim_row - 1)[:] = np.frombuffer(bytes(upper),
                                                               dtype=np.uint8)
            if lower is not None:
                self.row(s, victim_row + 1)[:] = np.frombuffer(bytes(lower),
                                                               dtype=np.uint8)
            aggr_rows = [self.row(s, victim_row - 1), self.row(s, victim_row + 1)]
        else:
            aggr = victim_row + 1 if victim_row + 1 < rows else victim_row - 1
            if aggr < 0:
                raise IndexError("single-sided hammer needs one neighbor")
            content = upper if upper is not None else lower
            if content is not None:
                self.row(s, aggr)[:] = np.frombuffer(bytes(content), dtype=np.uint8)
            aggr_rows = [self.row(s, aggr)]

        idx = self.cells_in_row(s, victim_row)
        if idx.size == 0:
            return []
        victim = self.row(s, victim_row)
        bitcols = self.cbitcol[idx]
        bytes_, bits = np.divmod(bitcols, 8)
        stored = (victim[bytes_] >> bits) & 1
        source = (1 - self.ccur_dir[idx]).astype(np.uint8)  # dir 0: 1->0
        cond = stored == source
        for row_buf in aggr_rows:
            aggr_bits = (row_buf[bytes_] >> bits) & 1
            cond &= aggr_bits == (1 - stored)
        if not double:
            cond &= self.csscap[idx]
        probabilistic = cond & (self.cprob[idx] < 1.0)
        if probabilistic.any():
            draws = self._rng.random(int(probabilistic.sum()))
            passed = np.ones(idx.size, dtype=bool)
            passed[probabilistic] = draws < self.cprob[idx][probabilistic]
            cond &= passed
        flipped = idx[cond]
        for ci in flipped:
            byte, bit = divmod(int(self.cbitcol[ci]), 8)
            victim[byte] ^= np.uint8(1 << bit)
        return [(s, victim_row, int(self.cbitcol[ci])) for ci in flipped]

    # ---- scrambling ----

    def reboot(self, boot_seed, toggle_probability=None):
        """Re-key the scrambler: per-cell direction toggles, locations fixed.

        The toggle is a keyed hash of (cell location, boot seed), so rebooting
        twice with the same seed lands in the same state.
        """
        if toggle_probability is not None:
            self.toggle_probability = float(toggle_probability)
        self.boot_seed = boot_seed
        if self.cell_count() == 0:
            return
        u = _keyed_uniform(self.cset, self.crow, self.cbitcol, boot_seed)
        toggles = (u < self.toggle_probability).astype(np.int8)
        self.ccur_dir = (self.cbase_dir ^ toggles).astype(np.int8)

    def ground_truth_profile(self, pfns=None):
        """Current cells projected through the address map (test oracle aid)."""
        rows = []
        pfn_filter = set(int(p) for p in pfns) if pfns is not None else None
        for i in range(self.cell_count()):
            pfn, bop = self.addr.cell_to_page(int(self.cset[i]), int(self.crow[i]),
                                              int(self.cbitcol[i]))
            if pfn_filter is not None and pfn not in pfn_filter:
                continue
            rows.append((pfn, bop, int(self.ccur_dir[i]), float(self.cprob[i])))
        return FlipProfile.from_entries(sorted(rows))


def _empty_cells():
    return (np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int32),
            np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int8),
            np.empty(0, dtype=np.float64), np.empty(0, dtype=bool))


# ---- cell synthesis ------------------------------------------------------------


def synthesize_cells(config, density="dense", seed=0, one_to_zero=ONE_TO_ZERO_SHARE,
                     single_sided_rate=SINGLE_SIDED_RATE, probability=1.0):
    """Draw a vulnerable-cell population for ``config``.

    ``density`` is a preset name (dense / moderate / low / rare) or an explicit
    per-bank cell count.  The dense preset targets 35K-47K cells per bank at
    full geometry, scaled proportionally to the simulated row count and row
    size.  Cells cluster on pages (most vulnerable pages carry more than one
    cell) and split ~70/30 toward the 1->0 direction.
    """
    rng = np.random.default_rng(seed)
    if isinstance(density, str):
        try:
            factor = DENSITY_FACTORS[density]
        except KeyError:
            raise ValueError(f"unknown density preset {density!r}") from None
        scale = (config.rows_per_bank / FULL_SIZE_ROWS) * \
                (config.row_bytes / FULL_SIZE_ROW_BYTES) * config.channels
        per_bank = [rng.uniform(*DENSE_PER_BANK_RANGE) * scale * factor
                    for _ in range(config.banks)]
    else:
        per_bank = [float(density)] * config.banks
    capacity = config.rows_per_bank * config.row_bits * config.channels
    for t in per_bank:
        if t > capacity:
            raise ValueError(f"per-bank target {t:.0f} exceeds capacity {capacity}")

    addr = AddressFunction(config)
    all_pfn, all_bop = [], []
    pages_per_bank = config.rows_per_bank * config.in_row_pages
    for bank, target in enumerate(per_bank):
        target = int(round(target))
        if target <= 0:
            continue
        n_clusters = max(1, int(target / _CLUSTER_SIZES.dot(_CLUSTER_PROBS)) + 8)
        sizes = rng.choice(_CLUSTER_SIZES, size=n_clusters, p=_CLUSTER_PROBS)
        while sizes.sum() < target:
            sizes = np.concatenate([sizes, rng.choice(_CLUSTER_SIZES,
                                                      size=n_clusters,
                                                      p=_CLUSTER_PROBS)])
        keep = np.searchsorted(np.cumsum(sizes), target) + 1
        sizes = sizes[:keep]
        page_pick = rng.integers(0, pages_per_bank, size=len(sizes))
        if config.channels == 1:
            g = (page_pick // config.in_row_pages) * config.sets + bank
            pfns = g * config.in_row_pages + page_pick % config.in_row_pages
        else:
            g = (page_pick // config.in_row_pages) * config.banks + bank
            pfns = g * config.in_row_pages + page_pick % config.in_row_pages
        pfns = np.repeat(pfns, sizes)[:target + 16]
        bops = rng.integers(0, PAGE_BITS, size=len(pfns))
        key = pfns.astype(np.int64) * PAGE_BITS + bops
        _, first = np.unique(key, return_index=True)
        keep_mask = np.zeros(len(key), dtype=bool)
        keep_mask[first] = True
        pfns, bops = pfns[keep_mask][:target], bops[keep_mask][:target]
        all_pfn.append(pfns)
        all_bop.append(bops)

    if not all_pfn:
        return _empty_cells()
    pfn = np.concatenate(all_pfn)
    bop = np.concatenate(all_bop)
    n = len(pfn)
    sets, rowz, bitcols = addr.bit_addr_vec(pfn, bop)
    sets = sets.astype(np.int32)
    rowz = rowz.astype(np.int32)
    bitcols = bitcols.astype(np.int32)
    base_dir = (rng.random(n) >= one_to_zero).astype(np.int8)  # 0 => 1->0
    sscap = rng.random(n) < single_sided_rate
    if isinstance(probability, tuple):
        prob = rng.uniform(probability[0], probability[1], size=n)
    else:
        prob = np.full(n, float(probability))
    return sets, rowz, bitcols, base_dir, prob, sscap


def new_dram(config, density="dense", cell_seed=0, hammer_seed=1, **cell_kwargs):
    cells = synthesize_cells(config, density, cell_seed, **cell_kwargs)
    return DramState(config, cells, hammer_seed)


# ---- templating ----------------------------------------------------------------


def attacker_sandwich_rows(dram):
    """(set, row) pairs safe to template: the full 3-row window is attacker's."""
    cfg = dram.config
    out = []
    for s in range(cfg.sets):
        for r in range(1, cfg.rows_per_bank - 1):
            if all(dram.row_owned_by(s, rr, OWNER_ATTACKER)
                   for rr in (r - 1, r, r + 1)):
                out.append((s, r))
    return out


def template(dram, scan_rows=None, repeats=1):
    """Scan rows with both stripe polarities and record every observed flip.

    Only rows whose whole sandwich belongs to the attacker are scanned, so
    profiling never corrupts foreign memory.  Deterministic given the DRAM
    state; with per-cell probability 1 the result projects the ground-truth
    cell set exactly.
    """
    if scan_rows is None:
        scan_rows = attacker_sandwich_rows(dram)
    rows_arr = {}
    counts = {}
    row_bytes = dram.config.row_bytes
    for s, r in scan_rows:
        for direction, victim_fill, aggr_fill in ((1, 0x00, 0xFF), (0, 0xFF, 0x00)):
            aggr = np.full(row_bytes, aggr_fill, dtype=np.uint8).tobytes()
            for _ in range(repeats):
                dram.row(s, r)[:] = victim_fill
                for s_, r_, c in dram.hammer(s, r, upper=aggr, lower=aggr):
                    pfn, bop = dram.addr.cell_to_page(s_, r_, c)
                    key = (pfn, bop, direction)
                    counts[key] = counts.get(key, 0) + 1
    entries = [(pfn, bop, d, counts[(pfn, bop, d)] / repeats)
               for (pfn, bop, d) in sorted(counts)]
    return FlipProfile.from_entries(entries)


# ---- geometry files ------------------------------------------------------------


def save_geometry(config, path, seeds=None):
    lines = [
        f"channels = {config.channels}",
        f"dimms = {config.dimms}",
        f"banks = {config.banks_per_dimm}",
        f"rows = {config.rows_per_bank}",
        f"row_bytes = {config.row_bytes}",
        f"hammer_mode = {config.hammer_mode}",
    ]
    for key, val in (seeds or {}).items():
        lines.append(f"{key} = {val}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    return path


def load_geometry(path):
    values = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    config = DramConfig(
        channels=int(values.get("channels", 1)),
        dimms=int(values.get("dimms", 1)),
        banks_per_dimm=int(values.get("banks", 16)),
        rows_per_bank=int(values.get("rows", 32768)),
        row_bytes=int(values.get("row_bytes", 8192)),
        hammer_mode=values.get("hammer_mode", "double"),
    )
    seeds = {k: int(v) for k, v in values.items()
             if k not in {"channels", "dimms", "banks", "rows", "row_bytes",
                          "hammer_mode"}}
    return config, seeds
