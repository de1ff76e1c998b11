"""
Train a small two-layer model on generated single-supporting-fact stories
and look at which sentences the gates pick out.
"""
import tempfile
from pathlib import Path

import numpy as np

from qrn import data, synth, trainer
from qrn.cell import QrnConfig
from qrn.cli import trace_rows

root = Path(tempfile.mkdtemp())
synth.write_qa_dataset(root, tasks=(1,), n_train=1000, n_test=200, seed=0)
ds = data.load_qa_task(root, 1)
print(len(ds.train), len(ds.dev), len(ds.test), len(ds.vocab))
print(ds.train[0].context, ds.train[0].question, ds.train[0].answer)

# a freshly built model: z sits near sigmoid(2.5) = 0.92, r near 0.5
fresh = trainer.build_model(ds, QrnConfig(), trainer.TrainConfig(), seed=0)
print("\n".join(trace_rows(fresh, ds.test[0], human=True)))

# a few epochs are enough for this task
mc = QrnConfig(layers=2, hidden_size=50, use_reset_gate=True)
tc = trainer.TrainConfig(max_epochs=20, restarts=1, seed=0)
model, log = trainer.train(ds, mc, tc, on_epoch=lambda r, rec: print(rec.line()))
print("test error", trainer.evaluate(model, ds.test))

# after training, z should be large on the sentence that last moved the asked-about person
print("\n".join(trace_rows(model, ds.test[0], human=True)))

# the same numbers straight from the trace object
item = model.prepare([ds.test[0]])[0]
tr, pred, y_hat, q = model.trace(item)
print(tr.layers[0]["forward"]["z"][0, :, 0])
print(model.vocab.word(pred), np.linalg.norm(y_hat))
