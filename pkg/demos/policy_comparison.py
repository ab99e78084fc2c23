# coding: utf-8

# # Tail latency and accuracy across policies
#
# Same arrivals, same branch outcomes, four policies.  Runs take a few
# seconds each.

# In[1]:

from sartsim.metrics import summarize
from sartsim.scenario import canned
from sartsim.scheduler import PolicyConfig, simulate
from sartsim.workload import build_requests


# In[2]:

sc = canned("rate1_small").replace(num_requests=200)
reqs = build_requests(sc.seed, sc.arrival_rate, sc.horizon_ms, sc.workload, sc.num_requests)

policies = {
    "vanilla": PolicyConfig.make("vanilla"),
    "self-consistency N=8": PolicyConfig.make("sc", 8),
    "sart N=8 M=4": sc.policy,
    "sart no-prune": PolicyConfig.make("noprune", 8, M=4),
}


# In[3]:

print(f"{'policy':24s} {'acc':>6s} {'p50':>9s} {'p97':>9s} {'p99':>9s}")
for name, pol in policies.items():
    s = summarize(simulate(reqs, pol, sc.engine, sc.workload, sc.seed).records)
    print(f"{name:24s} {s['accuracy']:6.3f} {s['e2e_p50']:9d} {s['e2e_p97']:9d} {s['e2e_p99']:9d}")
