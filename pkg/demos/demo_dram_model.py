"""Tour of the DRAM simulator: addressing, stripes, scrambling.

Shows how pages map to rows under the two channel layouts, why the stripe
pattern controls flips column by column, and what a reboot does to the flip
directions without moving any cell.
"""

import numpy as np

from flipsim.dram import (AddressFunction, DramConfig, DramState, desk,
                          full_dual, full_single, synthesize_cells, template,
                          OWNER_ATTACKER)

print("== page-to-row addressing ==")
for name, cfg in (("single channel", full_single()), ("dual channel", full_dual())):
    addr = AddressFunction(cfg)
    segs = addr.page_segments(6)
    print(f"{name}: page 6 lives at "
          + ", ".join(f"(bank-set {s}, row {r}, bytes {b}..{b + n - 1})"
                      for s, r, b, _, n in segs))
print("single channel packs two whole pages per row; dual channel splits "
      "each page across the two channels, four in-row pages per row")

print("\n== stripes flip exactly the targeted column ==")
cfg = DramConfig(banks_per_dimm=2, rows_per_bank=32)
cells = (np.array([0, 0], dtype=np.int32),        # set
         np.array([5, 5], dtype=np.int32),        # row
         np.array([100, 7000], dtype=np.int32),   # bit column
         np.array([1, 1], dtype=np.int8),         # both flip 0 -> 1
         np.array([1.0, 1.0]),
         np.array([False, False]))
state = DramState(cfg, cells)
state.row(0, 5)[:] = 0
solid = np.zeros(cfg.row_bytes, dtype=np.uint8)
stripe = solid.copy()
stripe[100 // 8] ^= 1 << (100 % 8)  # complement only bit column 100
flips = state.hammer(0, 5, upper=stripe.tobytes(), lower=stripe.tobytes())
print(f"two vulnerable cells in the row, stripe at column 100 only -> "
      f"flipped {[c for _, _, c in flips]} (cell 7000 untouched)")

print("\n== templating an attacker region ==")
state = DramState(desk(), synthesize_cells(desk(), "dense", seed=1))
state.set_owner(range(state.config.total_pages), OWNER_ATTACKER)
profile = template(state)
print(f"desk geometry, paper-proportional dense preset: {len(profile)} "
      f"flippable cells, {float((profile.direction == 0).mean()):.0%} 1->0")

print("\n== scrambling: reboots toggle direction, never location ==")
before = {(p, b): d for p, b, d, _ in profile.entries()}
state.reboot(boot_seed=42, toggle_probability=0.5)
after_profile = template(state)
after = {(p, b): d for p, b, d, _ in after_profile.entries()}
same_locations = set(before) == set(after)
toggled = sum(1 for k in before if before[k] != after[k])
print(f"locations unchanged: {same_locations}; "
      f"{toggled}/{len(before)} directions toggled by the reboot")
state.reboot(boot_seed=42, toggle_probability=0.5)
again = {(p, b): d for p, b, d, _ in template(state).entries()}
print(f"same boot seed reproduces the same directions: {again == after}")
