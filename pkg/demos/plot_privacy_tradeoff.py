"""
Privacy noise versus accuracy
=============================

Clients clip their update to norm ``clip_norm`` and add Gaussian noise
before sending it. More noise means a smaller per-round epsilon but a
noisier global model.
"""

from dataclasses import replace

from fedthreat.privacy import DpConfig, epsilon_report
from fedthreat.runner import ExperimentConfig, run

base = ExperimentConfig()
print("sigma   eps/round  eps total  accuracy")
for sigma in (0.0, 0.1, 0.3, 1.0, 3.0, 10.0):
    dp = DpConfig(sigma=sigma, enabled=True)
    rep = run(replace(base, dp=dp), write=False)
    eps = f"{epsilon_report(dp):9.3f}" if dp.active else "      inf"
    print(f"{sigma:5.1f}  {eps}  {rep.final.epsilon_total:9.1f}  {rep.final.accuracy:.4f}")

# The epsilon here uses the classical Gaussian bound with linear composition
# over rounds, so the totals are loose upper bounds.
