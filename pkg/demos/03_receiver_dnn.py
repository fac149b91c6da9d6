"""
A blind neural detector
=======================

The receiver network sees only the combined sample as two real numbers
and never the channel gain.  We train it on 4-QAM over strong turbulence
and compare its error rate with maximum-likelihood detection that knows
the gain exactly.
"""

from fsomimo.pipelines import ScenarioSpec, TrainConfig, TrainedModels, evaluate_ser, train_receiver_dnn

spec = ScenarioSpec(modulation_order=4, detector="qam_dnn")
cfg = TrainConfig(train_es_n0_db=30.0, seed=0)
params, report = train_receiver_dnn(spec, cfg)
print(f"loss: first {report.losses[0]:.3f}, last {report.final:.3f} after {report.losses.size} iterations")

grid = [10, 20, 30, 40]
dnn = evaluate_ser(spec, TrainedModels(params), grid, 50_000, seed=1)
ml = evaluate_ser(ScenarioSpec(modulation_order=4), None, grid, 50_000, seed=1)
for p, q in zip(dnn.points, ml.points):
    print(f"{p.es_n0_db:4.0f} dB  dnn {p.ser:.2e} [{p.ci_low:.1e}, {p.ci_high:.1e}]   ml {q.ser:.2e}")
