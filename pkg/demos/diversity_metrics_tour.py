"""Lexical diversity metrics on hand-picked token sequences.

Shows how MTLD, MATTR, the 0.1*MTLD + MATTR combination, and Distinct-n
rank responses of varying repetitiveness, and how select_response picks
the most diverse candidate.
"""

from latentchat.lexsel import (distinct_n, mattr, mtld, pooled_distinct_n,
                               select_response)

candidates = [
    "i love pizza pizza pizza pizza".split(),
    "i love pizza . i eat pizza all the time .".split(),
    "my favorite food is pizza and i also enjoy hiking .".split(),
]

print(f"{'mtld':>8} {'mattr':>8} {'combined':>9}  tokens")
for toks in candidates:
    m, a = mtld(toks), mattr(toks)
    print(f"{m:8.3f} {a:8.3f} {0.1 * m + a:9.3f}  {' '.join(toks)}")

idx, scores = select_response(candidates)
print(f"\nselect_response picks candidate {idx}: {' '.join(candidates[idx])}")

print(f"\nDistinct-1 over the pool: {distinct_n(candidates, 1):.3f}")
print(f"Distinct-2 over the pool: {distinct_n(candidates, 2):.3f}")
print("(per-response ratios of distinct n-grams, averaged over responses)")

copies = [candidates[1]] * 3
print(f"\nSame reply three times, per-response mean:   "
      f"{distinct_n(copies, 2):.3f}")
print(f"Same reply three times, pooled over the set: "
      f"{pooled_distinct_n(copies, 2):.3f}")
print("(pooling is what exposes a model that says the same thing everywhere)")
