"""
Several users on one receiver
=============================

With four users the receiver can either serve whoever currently has the
strongest channel, or let all of them transmit at once and try to decode
user 0 through the interference.
"""

from fsomimo.pipelines import ScenarioSpec, evaluate_ser

grid = [5, 15, 25]
cases = {
    "single user": ScenarioSpec(),
    "best of 4": ScenarioSpec(user_mode="multiuser_allocation", n_users=4),
    "4 interfering": ScenarioSpec(user_mode="multiuser_interference", n_users=4),
    "best of 4, EGC 2x2": ScenarioSpec(user_mode="multiuser_allocation", n_users=4, n_tx=2, n_rx=2),
}
print(" " * 20 + "".join(f"{g:>10} dB" for g in grid))
for label, spec in cases.items():
    curve = evaluate_ser(spec, None, grid, 50_000, seed=3, workers=4)
    print(f"{label:20s}" + "".join(f"{s:13.2e}" for s in curve.ser))
