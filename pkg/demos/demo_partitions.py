"""Set partitions and the Pitman-Yor partition prior.

Every clustering of n segments corresponds to one restricted growth string
(RGS): a label sequence that starts at 1 and never jumps more than one above
the running maximum.  There are exactly B_n of them (the Bell numbers), which
is what makes exhaustive scoring of all clusterings of a small tuple
feasible.
"""

import numpy as np

from probdiar import (CrpParams, bell_number, build_tables, canonicalize,
                      crp_log_prob, enumerate_rgs, fit_crp)
from probdiar.partitions import expected_cluster_count

# --- enumeration ---------------------------------------------------------

print("Bell numbers B_1..B_8:", [bell_number(n) for n in range(1, 9)])

print("\nAll partitions of 3 segments:")
for labels in enumerate_rgs(3):
    print("  ", labels)

print("\nArbitrary label sequences map onto a canonical RGS:")
for raw in ([7, 7, 2], [2, 1, 2, 1], ["b", "a", "b"]):
    print(f"   {raw!r:>18} -> {canonicalize(raw)}")

# --- the prior over partitions -------------------------------------------

# The Chinese restaurant process assigns each partition an exchangeable
# probability controlled by a concentration and a discount parameter.
params = CrpParams(concentration=1.0, discount=0.3)
print("\nCRP probabilities over partitions of 4 segments "
      f"(concentration={params.concentration}, discount={params.discount}):")
probs = [(labels, np.exp(crp_log_prob(labels, params)))
         for labels in enumerate_rgs(4)]
for labels, p in sorted(probs, key=lambda lp: -lp[1])[:5]:
    print(f"   p{labels} = {p:.4f}")
print(f"   ... total over all {bell_number(4)} partitions:",
      f"{sum(p for _, p in probs):.12f}")

# --- fitting the prior to a corpus ---------------------------------------

# Given that an average recording has about 3 speakers per 8 segments, find
# prior parameters whose expected cluster count matches.
fitted = fit_crp(8, 3.0)
print(f"\nfit_crp(8 segments, 3 expected speakers) -> {fitted}")
print("   expected cluster count under the fit:",
      f"{expected_cluster_count(8, fitted.concentration, fitted.discount):.4f}")

# The precomputed tables bundle the prior with the sparse subset matrices
# used for scoring (see demo_scoring.py).
tables = build_tables(8, fitted)
print(f"\ntables for octets: {tables.n_partitions} partitions x "
      f"{tables.n_subsets} nonempty subsets")
