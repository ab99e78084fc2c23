# coding: utf-8

# # Why sampling more branches finishes sooner
#
# A request that waits for the M-th fastest of N branches stops at the M-th
# order statistic of N independent lengths.  Holding M fixed and adding
# branches pushes that order statistic down.

# In[1]:

from fractions import Fraction

import numpy as np

from sartsim.orderstats import (cdf_order_stat, expected_order_stat_length,
                                monotonicity_gap, monte_carlo_cdf_grid, uniform_sampler)
from sartsim.workload import length_cdf


# The CDF of the M-th smallest of N draws, given the per-draw CDF value F:

# In[2]:

for N in (4, 6, 8, 12):
    print(N, np.round(cdf_order_stat(4, N, np.linspace(0, 1, 6)), 4))


# Compare against simulation for uniform draws.

# In[3]:

xs = np.linspace(0, 1, 11)
emp = monte_carlo_cdf_grid(4, 8, uniform_sampler, xs, 100_000, np.random.default_rng(0))
print(np.max(np.abs(emp - cdf_order_stat(4, 8, xs))))


# Adding one branch never hurts.  The gap is an exact rational here.

# In[4]:

print(monotonicity_gap(4, 8, Fraction(1, 3)))
print(min(monotonicity_gap(4, n, Fraction(k, 10)) for n in range(4, 16) for k in range(11)))


# Expected stopping length under a lognormal length model (median 8000 tokens).

# In[5]:

cdf = lambda L: length_cdf(L, 8000, 0.5, 256, 32768)
for N in (4, 6, 8, 16):
    print(N, round(expected_order_stat_length(4, N, cdf, 32768)))
