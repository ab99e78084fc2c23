# coding: utf-8

# # KV occupancy with and without pruning
#
# Resident tokens are sampled at every chunk boundary.  The area under the
# trace is the token-time the engine spends holding cache.

# In[1]:

import numpy as np

from sartsim.metrics import occupancy_area, occupancy_trace
from sartsim.scenario import canned
from sartsim.scheduler import PolicyConfig, simulate
from sartsim.workload import build_requests


# In[2]:

sc = canned("rate1_small").replace(num_requests=150)
reqs = build_requests(sc.seed, sc.arrival_rate, sc.horizon_ms, sc.workload, sc.num_requests)
pruned = simulate(reqs, sc.policy, sc.engine, sc.workload, sc.seed)
full = simulate(reqs, PolicyConfig.make("noprune", 8, M=4), sc.engine, sc.workload, sc.seed)


# In[3]:

for name, res in (("prune", pruned), ("no-prune", full)):
    trace = occupancy_trace(res.chunks)
    peak = max(s.resident_tokens for s in trace)
    q = np.mean([r.queuing_latency for r in res.records])
    print(f"{name:9s} area={occupancy_area(trace):.3e} peak={peak} mean queuing={q:.0f} ms")


# Per request, how often does pruning hold less cache over time?

# In[4]:

wins = [a.token_ms <= b.token_ms for a, b in zip(pruned.records, full.records)]
print(np.mean(wins))
