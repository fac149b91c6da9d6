"""
Learning the constellation
==========================

A transmitter network maps each one-hot symbol to a point in the complex
plane, the batch of points is scaled to unit average energy, and a
receiver network decodes the faded, noisy sample.  Both are trained
together by pushing the receiver's loss gradient back through the channel
gain into the transmitter.
"""

import numpy as np

from fsomimo.pipelines import ScenarioSpec, TrainConfig, TrainedModels, evaluate_ser, train_end_to_end

spec = ScenarioSpec(modulation_order=4, detector="end_to_end_dnn")
tx, rx, report, const = train_end_to_end(spec, TrainConfig(train_es_n0_db=30.0, seed=0))

print("learned points:")
for k, p in enumerate(const.points):
    print(f"  {k}: {p.real:+.3f} {p.imag:+.3f}j   |p|={abs(p):.3f}  angle={np.degrees(np.angle(p)):+7.1f}")
print(f"energy {const.energy:.6f}, minimum distance {const.min_distance():.3f} (QPSK: {np.sqrt(2):.3f})")

curve = evaluate_ser(spec, TrainedModels(rx, tx), [10, 20, 30, 40], 50_000, seed=1)
print("SER:", " ".join(f"{s:.2e}" for s in curve.ser))
