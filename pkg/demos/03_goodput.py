"""
Goodput with noisy feedback
===========================

Run the full slot simulation for the robust design and the two naive
baselines while the feedback symbol error rate grows. The naive uncoded
scheme's packet error rate tracks the feedback error rate. The robust
scheme stays under its 5% target, but at these settings its conservative
rates cost a lot of goodput.
"""

from robust_sdma.experiments import experiment_goodput_vs_ser
from robust_sdma.sim import SimConfig

ser = (0.0, 0.1, 0.2, 0.3)
sweeps = experiment_goodput_vs_ser(SimConfig(c_fb=8, trials=1000), ser=ser, snr_db=(20.0,))

schemes = sweeps[0].schemes
print(f"{'SER':>5} " + " ".join(f"{s:>22}" for s in schemes))
for q, sw in zip(ser, sweeps):
    cells = [f"{sw.goodput(s)[0]:6.3f} (PER {sw.per(s)[0]:.3f})" for s in schemes]
    print(f"{q:5.2f} " + " ".join(f"{c:>22}" for c in cells))
