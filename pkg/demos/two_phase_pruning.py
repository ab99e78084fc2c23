# coding: utf-8

# # Two-phase pruning on a single request
#
# Eight branches start together.  In the explore phase branches under the
# threshold are pruned, up to a cap.  The first completion sets a new
# threshold and the remaining branches are judged against it.

# In[1]:

from sartsim import EngineConfig, PolicyConfig, Request, Simulator, WorkloadConfig


# In[2]:

calib = WorkloadConfig()
engine = EngineConfig(B=64, T=400)
req = Request(0, 0, prompt_len=256, p_correct=0.7, length_median=6000, length_sigma=0.5)
sim = Simulator([req], PolicyConfig.make("sart", 8, M=4, alpha=0.5, beta=4), engine, calib,
                seed=3, trace=True)
res = sim.run()


# The event log shows every transition with its virtual time.

# In[3]:

for ev in res.events:
    print(ev)


# In[4]:

for b in sim.branches[0]:
    print(b.index, b.state.name, b.tokens_decoded, b.outcome.target_length,
          round(b.outcome.final_reward, 3))

rec = res.records[0]
print("chosen", rec.chosen_branch, "correct", rec.is_correct, "latency", rec.e2e_latency)
