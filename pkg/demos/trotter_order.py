"""Measure the order of the eight-factor product formula on a few random trig potentials.

Run with ``python3 demos/trotter_order.py``.
"""
from qsampleflow.suites import loglog_slope, trotter_errors, trotter_instances

log2dt = range(-6, -14, -1)
for i, model in enumerate(trotter_instances(3)):
    dts, errs = trotter_errors(model, 16, log2dt, 0.25)
    print(f"instance {i}: one-step errors from {errs[0]:.2e} down to {errs[-1]:.2e}, "
          f"log-log slope {loglog_slope(dts, errs):.3f}")

# A one-step error of order dt^2 would show slope 2 on these axes.
