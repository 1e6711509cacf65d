"""Compare jumps of the reliability optimum with jumps of the argmin of sigma_w.

Usage: python scripts/sigma_coincidence.py [ho|tls]
"""
import sys

import numpy as np

from aqoe import EngineConfig, WorkingSubstance
from aqoe.optimize import jump_sets_coincide, scan_tau

kind = sys.argv[1] if len(sys.argv) > 1 else "tls"
sub = WorkingSubstance("tls", 1.0) if kind == "tls" else WorkingSubstance()
taus = np.round(np.arange(0.1, 20.0 + 1e-9, 0.1), 10)
series = scan_tau(EngineConfig(substance=sub), taus, cooptimal_refine=False).series
circ = [d for d in series.discontinuities if d.curve == "r_circ"]
sigma = [d for d in series.discontinuities if d.curve == "r_sigma"]
print("r_circ jumps :", " ".join(f"{d.tau:.2f}({d.jump:+.3f})" for d in circ))
print("sigma_w jumps:", " ".join(f"{d.tau:.2f}({d.jump:+.3f})" for d in sigma))
for d in circ:
    near = [e for e in sigma if abs(e.tau - d.tau) <= 0.1 + 1e-12]
    print(f"  r_circ {d.tau:5.2f} -> {'matched' if near else 'no sigma_w jump within one step'}")
print("coincide within one step:", jump_sets_coincide(circ, sigma, 0.1))
