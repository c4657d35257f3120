"""A tour of the tag family: generation, rotations, and error-correcting lookup.

Run with ``python demos/01_codebook_tour.py``.
"""
# %% Generate a 16-bit family with minimum distance 5.
import numpy as np

from beamtag.codebook import (build_hash_table, complexity, decode_codeword,
                              family_min_distance, generate_lexicode, int_to_bits,
                              rotate_int)

family = generate_lexicode(4, 5, rng_seed=1)
print(f"{len(family.codewords)} codewords, min distance {family_min_distance(family)}")

# %% Each payload is a 4x4 grid, MSB at the top-left, 1 = white.
word = family.codewords[0]
print(np.array(list(int_to_bits(word, 16)), dtype=int).reshape(4, 4))
print("rectangles needed to paint it:", complexity(word, 4))

# %% The sensor sees the tag in one of four quarter-turns. The table holds all of them.
table = build_hash_table(family)
for k in range(4):
    seen = rotate_int(word, 4, k)
    r = decode_codeword(table, seen)
    print(f"k={k}: {int_to_bits(seen, 16)} -> id {r.tag_id}, k {r.rotation_k}")

# %% Up to two flipped bits are always corrected. Three are beyond the guarantee.
rng = np.random.default_rng(0)
for n_flips in range(4):
    noisy = rotate_int(word, 4, 3)
    for b in rng.choice(16, n_flips, replace=False):
        noisy ^= 1 << int(b)
    print(n_flips, "flips ->", decode_codeword(table, noisy))

# %% Cells with too few returns become unknown bits and cost nothing in distance.
print(decode_codeword(table, word ^ 0b11, unknown_mask=0b11))
