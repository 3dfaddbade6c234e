#!/usr/bin/env python
# coding: utf-8

# # The piezo command
#
# The same workflow from a JSON configuration, driven through the command
# line entry point. Each call is equivalent to a shell invocation such as
# `piezo simulate pulse.json -o pulse_out`.

# In[1]:


import json
import tempfile
from pathlib import Path

from piezostab.cli import main

here = Path(__file__).resolve().parent
work = Path(tempfile.mkdtemp())
cfg = here / "pulse.json"


# Run the simulation and read back the summary.

# In[2]:


main(["simulate", str(cfg), "-o", str(work / "run")])
summary = json.loads((work / "run" / "summary.json").read_text())
for key in ("energy_0", "energy_T", "audit", "omega", "r_squared", "delta", "c_alpha", "decay_claim"):
    print(f"{key:12s} {summary[key]}")


# Structural checks on the assembled operators.

# In[3]:


main(["verify", str(cfg), "-o", str(work / "verify")])


# A parameter sweep over the feedback gain, one run per value.

# In[4]:


main(["sweep", str(cfg), "--param", "gainA", "--values", "0.25,1,4", "-o", str(work / "sweep")])
print((work / "sweep" / "sweep.csv").read_text())


# Continue the first run from its checkpoint to a later time.

# In[5]:


longer = json.loads(cfg.read_text())
longer["stepping"]["t_end"] = 8.0
(work / "longer.json").write_text(json.dumps(longer))
main(["resume", str(work / "run" / "final.state"), str(work / "longer.json"), "-o", str(work / "resumed")])
print(json.loads((work / "resumed" / "summary.json").read_text())["T"])


# Configuration mistakes are reported with suggestions and exit code 2.

# In[6]:


bad = json.loads(cfg.read_text())
bad["material"]["epsilon"] = bad["material"].pop("eps")
(work / "bad.json").write_text(json.dumps(bad))
print("exit code", main(["simulate", str(work / "bad.json")]))
