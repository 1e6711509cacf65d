"""Change in work output when the oscillator basis grows from 50 to 100 levels.

Shows that the finite-heat-stroke oscillator is limited by the hot-bath
Gibbs tail at beta_h omega2 = 0.2, and converged for colder baths.
"""
from aqoe import EngineConfig
from aqoe.cycle import statistics_finite

CASES = {
    "beta_h=0.1 beta_c=0.5": EngineConfig(),
    "beta_h=0.3 beta_c=1.0": EngineConfig(beta_h=0.3, beta_c=1.0),
}

for label, base in CASES.items():
    for tau_u in (5.0, 10.0, 15.0):
        cfg = base.with_(tau_u=tau_u, tau_b=10 * tau_u)
        a = statistics_finite(cfg).work_output
        b = statistics_finite(cfg.with_(n_cut=100)).work_output
        print(f"{label} tau_u={tau_u:5.1f}  work(50)={a:.10f}  work(100)={b:.10f}  "
              f"rel change={abs(a / b - 1):.2e}")
