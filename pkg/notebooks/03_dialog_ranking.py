"""
Response ranking for restaurant-booking dialogs. The output module predicts
the response word by word; each candidate is scored by the sum of its word
log-probabilities and the best one wins.
"""
import tempfile
from pathlib import Path

import numpy as np

from qrn import data, synth, trainer
from qrn.cell import QrnConfig
from qrn.encoding import tokenize
from qrn.heads import candidate_scores, compute_match

root = Path(tempfile.mkdtemp())
synth.write_dialog_dataset(root, n_train=200, n_test=50, seed=0)
ds = data.load_dialog_task(root, 1)
print(len(ds.candidates), "candidates")
print(ds.candidates[:8])

# one turn = prior utterances (context) + latest user utterance (question)
ex = ds.train[5]
print(ex.context)
print(ex.question, "->", ex.answer)

# match features: does a candidate share a word with the context / question?
m = compute_match([tokenize(c) for c in ds.candidates], [w for s in ex.context for w in tokenize(s)],
                  tokenize(ex.question))
print(m.matrix.sum(axis=0), "candidates touching context / question")

mc = QrnConfig(layers=2, hidden_size=50, use_reset_gate=True, head="dialog")
tc = trainer.TrainConfig(max_epochs=5, restarts=1, seed=0)
model, log = trainer.train(ds, mc, tc, on_epoch=lambda r, rec: print(rec.line()))
print("test error", trainer.evaluate(model, ds.test))

# scores for one turn, best five
item = model.prepare([ds.test[3]])[0]
y_hat = model.trace(item)[2]
scores = candidate_scores(y_hat, model.head, model.candidates)
for i in np.argsort(-scores, kind="stable")[:5]:
    print(f"{scores[i]:9.3f}  {ds.candidates[i]}")
print("gold:", ds.test[3].answer)
